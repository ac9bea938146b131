//! Deterministic verification of the generator calculus: the particle /
//! rescaled-pair generator identity, derivative soundness, perturbation
//! remainders, stationarity of the quartic law and the collapsing bounds.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::exec::Execution;
use crate::generator::{
    apply_g_sigma, apply_g_tilde_n, collapsing_inequality_check, g_tilde_decomposition, psi_partials,
    remainder_sup, sqrtn_ln_psi, CollapsingConstants, Fn2d, GeneratorPoint, Poly2, TestFunction,
};
use crate::limit::QuarticLaw;
use crate::model::{PhiModel, StarDensity};
use crate::particle::RescaledPath;
use crate::report::{all_pass, Check};
use crate::rng::{self, Domain};
use crate::stats::ls_slope;

pub const IDENTITY_TOL: f64 = 1e-8;
pub const DERIVATIVE_TOL: f64 = 1e-5;
pub const STATIONARITY_TOL: f64 = 1e-8;
pub const REMAINDER_SLOPE_TOL: f64 = -0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationConfig {
    /// System sizes for the identity and derivative checks.
    pub ns: Vec<usize>,
    pub sigma_sqs: Vec<f64>,
    /// Random configurations per (function, n, σ²) case.
    pub points: usize,
    pub seed: u64,
    /// Sizes for the remainder decay study.
    pub remainder_ns: Vec<usize>,
    /// Radius of the disk the remainder sup is taken over.
    pub remainder_k: f64,
    /// Grid points per axis for the remainder sup.
    pub grid_density: usize,
    /// Box half-width and smallest n for the collapsing bounds.
    pub collapsing_k: f64,
    pub collapsing_ns: Vec<usize>,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig {
            ns: vec![2, 10, 100],
            sigma_sqs: vec![0.5, 1.0, 2.0],
            points: 100,
            seed: 2024,
            remainder_ns: vec![16, 64, 256, 1024, 4096],
            remainder_k: 1.0,
            grid_density: 101,
            collapsing_k: 2.0,
            collapsing_ns: vec![64, 256, 1024],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub config: VerificationConfig,
    /// `(n, sup |G̃_nF_{n,f} − G_σf|)` per test function.
    pub remainder_sups: BTreeMap<String, Vec<(usize, f64)>>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// The two-argument functions the identity is checked on.
fn identity_functions() -> Vec<(String, Box<dyn Fn2d>)> {
    let mut v: Vec<(String, Box<dyn Fn2d>)> = Vec::new();
    for f in [
        TestFunction::monomial(1),
        TestFunction::monomial(2),
        TestFunction::monomial(3),
        TestFunction::sin(),
    ] {
        v.push((f.name().to_string(), Box::new(f)));
    }
    v.push(("y".into(), Box::new(Poly2::monomial(0, 1))));
    v.push(("xy".into(), Box::new(Poly2::monomial(1, 1))));
    v.push(("y^2".into(), Box::new(Poly2::monomial(0, 2))));
    v
}

/// Configuration of `n` coordinates `c · σ · N(0,1)` with `c ~ U(0.5, 1.5)`,
/// so that both `S̃` and `T̃` vary between draws.
fn random_configuration<R: Rng>(rng: &mut R, n: usize, sigma_sq: f64) -> Vec<f64> {
    let c: f64 = rng.random_range(0.5..1.5);
    let sd = c * sigma_sq.sqrt();
    (0..n).map(|_| sd * rng::standard_normal(rng)).collect()
}

fn case_rng(seed: u64, case: u64) -> rand_chacha::ChaCha8Rng {
    rng::stream(seed, Domain::Oracle, case, 0)
}

/// Relative error with the denominator floored at 1% of `scale`, so that
/// partials that happen to vanish do not blow the ratio up. When every
/// partial is zero the error is absolute.
fn rel_err(approx: f64, exact: f64, scale: f64) -> f64 {
    let floor = if scale > 0.0 { 1e-2 * scale } else { 1.0 };
    (approx - exact).abs() / exact.abs().max(floor)
}

fn identity_checks(cfg: &VerificationConfig, out: &mut Vec<Check>) -> Result<()> {
    let fs = identity_functions();
    let mut case = 0u64;
    for (name, f) in &fs {
        for &n in &cfg.ns {
            for &s2 in &cfg.sigma_sqs {
                case += 1;
                let mut r = case_rng(cfg.seed, case);
                let mut worst = 0.0f64;
                for _ in 0..cfg.points {
                    let c = random_configuration(&mut r, n, s2);
                    let p = GeneratorPoint::from_configuration(&c, s2)?;
                    let lhs = sqrtn_ln_psi(&c, f.as_ref(), s2);
                    let rhs = apply_g_tilde_n(f.as_ref(), &p)?;
                    worst = worst.max((lhs - rhs).abs());
                }
                out.push(Check::below(format!("identity/{name}/n={n}/sigma_sq={s2}"), worst, IDENTITY_TOL));
            }
        }
    }
    Ok(())
}

fn derivative_checks(cfg: &VerificationConfig, out: &mut Vec<Check>) -> Result<()> {
    let (h1, h2) = (1e-3, 1e-2);
    let fs = identity_functions();
    let mut case = 1000u64;
    for (name, f) in &fs {
        for &n in &cfg.ns {
            case += 1;
            let mut r = case_rng(cfg.seed, case);
            let s2 = 1.0;
            let psi = |z: &[f64]| {
                let p = GeneratorPoint::from_configuration(z, s2).expect("configuration in domain");
                f.partials(p.x, p.y).v
            };
            let mut worst = 0.0f64;
            for _ in 0..cfg.points.div_ceil(10) {
                let c = random_configuration(&mut r, n, s2);
                let an: Vec<(f64, f64)> = (0..n).map(|j| psi_partials(&c, j, f.as_ref(), s2)).collect();
                let s1 = an.iter().fold(0.0f64, |a, d| a.max(d.0.abs()));
                let s2n = an.iter().fold(0.0f64, |a, d| a.max(d.1.abs()));
                let base = psi(&c);
                for (j, &(d1, d2)) in an.iter().enumerate() {
                    let shifted = |h: f64| {
                        let mut z = c.clone();
                        z[j] += h;
                        psi(&z)
                    };
                    // Fourth-order central stencils.
                    let fd1 = (8.0 * (shifted(h1) - shifted(-h1)) - (shifted(2.0 * h1) - shifted(-2.0 * h1)))
                        / (12.0 * h1);
                    let fd2 = (16.0 * (shifted(h2) + shifted(-h2)) - (shifted(2.0 * h2) + shifted(-2.0 * h2))
                        - 30.0 * base)
                        / (12.0 * h2 * h2);
                    worst = worst.max(rel_err(fd1, d1, s1)).max(rel_err(fd2, d2, s2n));
                }
            }
            out.push(Check::below(format!("psi_partials/{name}/n={n}"), worst, DERIVATIVE_TOL));
        }
    }
    for &n in &cfg.ns {
        for &s2 in &cfg.sigma_sqs {
            case += 1;
            let mut r = case_rng(cfg.seed, case);
            let model = StarDensity::new(PhiModel::gaussian(s2)?, n)?;
            let mut worst = 0.0f64;
            for _ in 0..cfg.points.div_ceil(10) {
                let c = random_configuration(&mut r, n, s2);
                let g = model.grad_log_density(&c)?;
                let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                for j in 0..n {
                    let shifted = |h: f64| {
                        let mut z = c.clone();
                        z[j] += h;
                        model.log_density(&z)
                    };
                    let fd = (8.0 * (shifted(h1)? - shifted(-h1)?) - (shifted(2.0 * h1)? - shifted(-2.0 * h1)?))
                        / (12.0 * h1);
                    worst = worst.max(rel_err(fd, g[j], scale));
                }
            }
            out.push(Check::below(format!("grad_log_density/n={n}/sigma_sq={s2}"), worst, DERIVATIVE_TOL));
        }
    }
    Ok(())
}

fn decomposition_check(cfg: &VerificationConfig, out: &mut Vec<Check>) -> Result<()> {
    let mut r = case_rng(cfg.seed, 5000);
    let f = Poly2::new(vec![(1.0, 2, 1), (0.5, 3, 0), (-0.3, 0, 2), (0.2, 1, 1)]);
    let mut worst = 0.0f64;
    for &n in &cfg.remainder_ns {
        for _ in 0..cfg.points {
            let x: f64 = r.random_range(-2.0..2.0);
            let y: f64 = r.random_range(-0.9..0.9) * (n as f64).powf(0.25);
            let d = g_tilde_decomposition(&f, &GeneratorPoint::new(x, y, n, 1.0)?)?;
            worst = worst.max((d.exact - d.truncated - d.remainder).abs() / (1.0 + d.exact.abs()));
        }
    }
    out.push(Check::below("decomposition/exact=truncated+remainder", worst, IDENTITY_TOL));
    Ok(())
}

/// Sup of the perturbed remainder at each size, plus its decay.
pub fn remainder_study(cfg: &VerificationConfig, f: &TestFunction, exec: Execution) -> Result<Vec<(usize, f64)>> {
    cfg.remainder_ns
        .iter()
        .map(|&n| Ok((n, remainder_sup(f, n, cfg.remainder_k, 1.0, cfg.grid_density, exec)?)))
        .collect()
}

fn remainder_checks(
    cfg: &VerificationConfig,
    exec: Execution,
    out: &mut Vec<Check>,
    table: &mut BTreeMap<String, Vec<(usize, f64)>>,
) -> Result<()> {
    let constant = remainder_study(cfg, &TestFunction::constant(1.0), exec)?;
    let worst = constant.iter().fold(0.0f64, |a, &(_, v)| a.max(v));
    out.push(Check::at_most("remainder/1/sup", worst, 0.0));
    for f in [TestFunction::monomial(1), TestFunction::monomial(2)] {
        let sups = remainder_study(cfg, &f, exec)?;
        let non_finite = sups.iter().filter(|(_, v)| !v.is_finite()).count();
        out.push(Check::at_most(format!("remainder/{}/non_finite", f.name()), non_finite as f64, 0.0));
        let (first, last) = (sups[0].1, sups[sups.len() - 1].1);
        out.push(Check::below(format!("remainder/{}/last_over_first", f.name()), last / first, 1.0));
        let pts: Vec<(f64, f64)> = sups.iter().map(|&(n, v)| ((n as f64).ln(), v.ln())).collect();
        out.push(Check::at_most(
            format!("remainder/{}/loglog_slope", f.name()),
            ls_slope(&pts),
            REMAINDER_SLOPE_TOL,
        ));
        table.insert(f.name().to_string(), sups);
    }
    Ok(())
}

fn stationarity_checks(cfg: &VerificationConfig, out: &mut Vec<Check>) -> Result<()> {
    for &s2 in &cfg.sigma_sqs {
        let law = QuarticLaw::new(s2)?;
        let mut worst = 0.0f64;
        for k in 1..=4 {
            let f = TestFunction::monomial(k);
            worst = worst.max(law.expect(|x| apply_g_sigma(&f, x, s2), 1e-13).abs());
        }
        out.push(Check::below(format!("stationarity/sigma_sq={s2}"), worst, STATIONARITY_TOL));
    }
    Ok(())
}

fn collapsing_bound_checks(cfg: &VerificationConfig, out: &mut Vec<Check>) -> Result<()> {
    let n_min = *cfg.collapsing_ns.iter().min().unwrap_or(&64);
    let k = cfg.collapsing_k;
    let mut r = case_rng(cfg.seed, 6000);
    for &n in &cfg.collapsing_ns {
        let c = CollapsingConstants::new(n, k, 1.0, n_min, 3.0)?;
        let m = 10_000;
        let s: Vec<f64> = (0..m).map(|_| r.random_range(-k..k)).collect();
        let t: Vec<f64> = (0..m).map(|_| r.random_range(-k..k)).collect();
        let path = RescaledPath {
            n,
            sigma_sq: 1.0,
            seed: cfg.seed,
            replica: 0,
            times: (0..m).map(|i| i as f64).collect(),
            s_tilde: s,
            t_tilde: t,
            snapshots: None,
        };
        let rep = collapsing_inequality_check(&path, &c);
        out.push(Check::at_most(format!("collapsing_bounds/n={n}"), rep.violations() as f64, 0.0));
    }
    Ok(())
}

/// Runs every deterministic generator check.
pub fn verify_generators(cfg: &VerificationConfig, exec: Execution) -> Result<VerificationReport> {
    let mut checks = Vec::new();
    identity_checks(cfg, &mut checks)?;
    derivative_checks(cfg, &mut checks)?;
    decomposition_check(cfg, &mut checks)?;
    let mut remainder_sups = BTreeMap::new();
    remainder_checks(cfg, exec, &mut checks, &mut remainder_sups)?;
    stationarity_checks(cfg, &mut checks)?;
    collapsing_bound_checks(cfg, &mut checks)?;
    Ok(VerificationReport {
        config: cfg.clone(),
        remainder_sups,
        pass: all_pass(&checks),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_verification_passes_and_is_deterministic() {
        let cfg = VerificationConfig {
            ns: vec![2, 10],
            sigma_sqs: vec![1.0],
            points: 10,
            remainder_ns: vec![16, 256, 4096],
            grid_density: 21,
            ..VerificationConfig::default()
        };
        let a = verify_generators(&cfg, Execution::Sequential).unwrap();
        let failed: Vec<_> = a.checks.iter().filter(|c| !c.pass).collect();
        assert!(a.pass, "{failed:?}");
        let b = verify_generators(&cfg, Execution::ParallelWith { workers: 3 }).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
