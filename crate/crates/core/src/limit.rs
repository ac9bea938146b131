//! The critical limit SDE `dz = −z³/(2σ⁴) dt + dB`, `z(0) = 0`, and its
//! invariant law with density `(√2/σ) Γ(1/4)⁻¹ exp(−s⁴/(4σ⁴))`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::rng::{self, Domain};
use crate::special::{adaptive_simpson, gamma, GAMMA_QUARTER};

/// Beyond `±TRUNCATION·σ` the density is below `exp(−1024)`.
const TRUNCATION: f64 = 8.0;
const CDF_TOL: f64 = 1e-13;

#[inline]
pub fn limit_drift(z: f64, sigma_sq: f64) -> f64 {
    -z * z * z / (2.0 * sigma_sq * sigma_sq)
}

/// One EM step of the limit SDE with Brownian increment `db`.
#[inline]
pub fn em_step_limit(z: f64, dt: f64, db: f64, sigma_sq: f64) -> f64 {
    z + limit_drift(z, sigma_sq) * dt + db
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitRunConfig {
    pub sigma_sq: f64,
    pub dt: f64,
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub z0: f64,
    /// Keep every state of every replica (memory grows as replicas × steps).
    pub record_paths: bool,
    /// Diagnostic switch: `false` turns the Brownian forcing off.
    pub noise: bool,
    /// Each increment sums this many `N(0, dt/m)` draws (see the particle
    /// runner): runs at `dt` with `m = 2` and at `dt/2` share a Brownian path.
    pub brownian_refinement: u32,
}

impl LimitRunConfig {
    pub fn new(sigma_sq: f64, dt: f64, horizon: f64, replicas: usize, seed: u64) -> Self {
        LimitRunConfig {
            sigma_sq,
            dt,
            horizon,
            replicas,
            seed,
            z0: 0.0,
            record_paths: false,
            noise: true,
            brownian_refinement: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_sq > 0.0 && self.sigma_sq.is_finite()) {
            return Err(Error::contract("sigma_sq must be positive"));
        }
        if !(self.dt > 0.0 && self.dt < self.horizon && self.horizon.is_finite()) {
            return Err(Error::contract("need 0 < dt < horizon"));
        }
        if self.replicas == 0 {
            return Err(Error::contract("need at least one replica"));
        }
        if self.brownian_refinement == 0 {
            return Err(Error::contract("brownian_refinement must be >= 1"));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        ((self.horizon / self.dt).round() as u64).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitRun {
    /// `z(horizon)` per replica, in replica order.
    pub terminal: Vec<f64>,
    /// Full trajectories (including `z(0)`) when requested.
    pub paths: Option<Vec<Vec<f64>>>,
}

impl LimitRun {
    /// Single-column CSV with header `u_T`.
    pub fn write_terminal_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "u_T")?;
        for v in &self.terminal {
            writeln!(w, "{v:.16e}")?;
        }
        Ok(())
    }
}

fn limit_replica(config: &LimitRunConfig, replica: u64) -> Result<(f64, Option<Vec<f64>>)> {
    let mut rng = rng::stream(config.seed, Domain::LimitNoise, replica, 0);
    let steps = config.steps();
    let m = config.brownian_refinement;
    let sub_scale = (config.dt / m as f64).sqrt();
    let mut z = config.z0;
    let mut path = config.record_paths.then(|| {
        let mut v = Vec::with_capacity(steps as usize + 1);
        v.push(z);
        v
    });
    for step in 1..=steps {
        let db = if config.noise {
            sub_scale * (0..m).map(|_| rng::standard_normal(&mut rng)).sum::<f64>()
        } else {
            0.0
        };
        z = em_step_limit(z, config.dt, db, config.sigma_sq);
        if !z.is_finite() {
            return Err(Error::BlowUp { replica, step, prefix: None });
        }
        if let Some(p) = path.as_mut() {
            p.push(z);
        }
    }
    Ok((z, path))
}

pub fn simulate_limit(config: &LimitRunConfig) -> Result<LimitRun> {
    simulate_limit_with(config, Execution::Parallel)
}

pub fn simulate_limit_with(config: &LimitRunConfig, exec: Execution) -> Result<LimitRun> {
    config.validate()?;
    let out = exec::try_map_indexed(config.replicas, exec, |r| limit_replica(config, r as u64))?;
    let terminal = out.iter().map(|(z, _)| *z).collect();
    let paths = config
        .record_paths
        .then(|| out.into_iter().map(|(_, p)| p.unwrap_or_default()).collect());
    Ok(LimitRun { terminal, paths })
}

/// The invariant law of the limit SDE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuarticLaw {
    pub sigma_sq: f64,
}

impl QuarticLaw {
    pub fn new(sigma_sq: f64) -> Result<Self> {
        if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
            return Err(Error::contract("sigma_sq must be positive"));
        }
        Ok(QuarticLaw { sigma_sq })
    }

    fn sigma(&self) -> f64 {
        self.sigma_sq.sqrt()
    }

    pub fn pdf(&self, s: f64) -> f64 {
        quartic_pdf(s, self.sigma_sq)
    }

    /// `P(U ≤ s)` from the upper tail `∫_{|s|}^∞ q` (adaptive Simpson) and
    /// symmetry. Integrating the tail keeps small probabilities accurate.
    pub fn cdf(&self, s: f64) -> f64 {
        let cut = TRUNCATION * self.sigma();
        let a = s.abs().min(cut);
        let tail = adaptive_simpson(&|u| self.pdf(u), a, cut, CDF_TOL);
        if s >= 0.0 {
            1.0 - tail
        } else {
            tail
        }
    }

    /// `E[U^k]`: zero for odd `k`, `(√2σ)^k Γ((k+1)/4)/Γ(1/4)` for even `k`.
    pub fn moment(&self, k: u32) -> f64 {
        if k % 2 == 1 {
            return 0.0;
        }
        (2f64.sqrt() * self.sigma()).powi(k as i32) * gamma((k as f64 + 1.0) / 4.0) / GAMMA_QUARTER
    }

    /// Moments of orders 1..=6.
    pub fn moment_table(&self) -> BTreeMap<u32, f64> {
        (1..=6).map(|k| (k, self.moment(k))).collect()
    }

    /// `∫ g(s) q(s) ds` over the truncated support.
    pub fn expect<F: Fn(f64) -> f64>(&self, g: F, tol: f64) -> f64 {
        let cut = TRUNCATION * self.sigma();
        adaptive_simpson(&|s| g(s) * self.pdf(s), -cut, cut, tol)
    }
}

pub fn quartic_pdf(s: f64, sigma_sq: f64) -> f64 {
    let s2 = s * s;
    2f64.sqrt() / (sigma_sq.sqrt() * GAMMA_QUARTER) * (-s2 * s2 / (4.0 * sigma_sq * sigma_sq)).exp()
}

pub fn quartic_cdf_and_moments(sigma_sq: f64) -> Result<(QuarticLaw, BTreeMap<u32, f64>)> {
    let law = QuarticLaw::new(sigma_sq)?;
    Ok((law, law.moment_table()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refined_coarse_run_shares_the_fine_brownian_path() {
        // With a negligible drift both runs reduce to the same Brownian motion.
        let mut coarse = LimitRunConfig::new(1e6, 0.1, 2.0, 5, 3);
        coarse.brownian_refinement = 2;
        let fine = LimitRunConfig::new(1e6, 0.05, 2.0, 5, 3);
        let a = simulate_limit(&coarse).unwrap().terminal;
        let b = simulate_limit(&fine).unwrap().terminal;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9, "{x} {y}");
        }
    }

    #[test]
    fn drift_examples() {
        assert_eq!(limit_drift(0.0, 1.0), 0.0);
        assert_eq!(limit_drift(1.0, 1.0), -0.5);
        assert_eq!(limit_drift(-1.3, 2.0), -limit_drift(1.3, 2.0));
        assert!((em_step_limit(1.0, 0.1, 0.0, 1.0) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_from_origin_stays_put() {
        let mut c = LimitRunConfig::new(1.0, 0.01, 1.0, 3, 1);
        c.noise = false;
        c.record_paths = true;
        let run = simulate_limit(&c).unwrap();
        assert!(run.paths.unwrap().iter().all(|p| p.iter().all(|&z| z == 0.0)));
    }

    #[test]
    fn runs_are_reproducible() {
        let c = LimitRunConfig::new(1.0, 0.01, 2.0, 50, 9);
        let a = simulate_limit_with(&c, Execution::Sequential).unwrap();
        let b = simulate_limit_with(&c, Execution::ParallelWith { workers: 4 }).unwrap();
        assert_eq!(a, b);
        assert!(LimitRunConfig::new(1.0, 2.0, 1.0, 1, 0).validate().is_err());
    }

    #[test]
    fn replica_mean_is_centered() {
        let c = LimitRunConfig::new(1.0, 0.01, 10.0, 10_000, 21);
        let t = simulate_limit(&c).unwrap().terminal;
        let m = t.len() as f64;
        let mean = t.iter().sum::<f64>() / m;
        let var = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        assert!(mean.abs() < 3.0 * (var / m).sqrt());
    }

    #[test]
    fn density_values() {
        let peak = 2f64.sqrt() / GAMMA_QUARTER;
        assert!((quartic_pdf(0.0, 1.0) - peak).abs() < 1e-15);
        assert!((quartic_pdf(0.0, 4.0) - 0.5 * peak).abs() < 1e-15);
        // Rounded reference values.
        assert!((quartic_pdf(0.0, 1.0) - 0.390_062_4).abs() < 5e-7);
        assert!((quartic_pdf(0.0, 4.0) - 0.195_031_2).abs() < 5e-7);
        assert_eq!(quartic_pdf(-1.7, 1.3), quartic_pdf(1.7, 1.3));
    }

    #[test]
    fn density_normalizes_and_moments_match_quadrature() {
        for s2 in [0.5, 1.0, 2.0, 4.0] {
            let law = QuarticLaw::new(s2).unwrap();
            assert!((law.expect(|_| 1.0, 1e-14) - 1.0).abs() < 1e-10);
            for k in 1..=6u32 {
                let q = law.expect(|s| s.powi(k as i32), 1e-14);
                assert!((q - law.moment(k)).abs() < 1e-10, "σ²={s2} k={k}: {q} vs {}", law.moment(k));
            }
        }
        // Second moment scales as σ², not σ⁴.
        let m2 = QuarticLaw::new(1.0).unwrap().moment(2);
        assert!((m2 - 2.0 * gamma(0.75) / GAMMA_QUARTER).abs() < 1e-14);
        assert!((m2 - 0.675_978).abs() < 1e-6);
        assert!((QuarticLaw::new(3.0).unwrap().moment(2) - 3.0 * m2).abs() < 1e-12);
    }

    #[test]
    fn cdf_properties() {
        let law = QuarticLaw::new(1.0).unwrap();
        assert!((law.cdf(0.0) - 0.5).abs() < 1e-12);
        assert!(law.cdf(-8.0) < 1e-10);
        assert!(law.cdf(8.0) > 1.0 - 1e-10);
        let mut prev = 0.0;
        for i in -80..=80 {
            let c = law.cdf(i as f64 * 0.05);
            assert!(c >= prev);
            prev = c;
        }
        // Cross-check one interior value against a direct quadrature.
        let direct = adaptive_simpson(&|s| law.pdf(s), -8.0, 0.7, 1e-14);
        assert!((law.cdf(0.7) - direct).abs() < 1e-10);
    }
}
