//! Experiment runners. Each run writes its artifacts and a `report.json`
//! with per-check `{name, value, tolerance, pass}` into the output
//! directory. Output depends only on the config, never on the worker count.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::generator::{collapsing_inequality_check, martingale_residual, CollapsingConstants, TestFunction};
use crate::limit::{simulate_limit_with, LimitRunConfig, QuarticLaw};
use crate::model::{PhiModel, StarDensity};
use crate::particle::{simulate_replica, terminal_s_tilde, SdeRunConfig};
use crate::report::{all_pass, Check};
use crate::sampler::{importance_moments, sample_equilibrium_chains, EquilibriumSample, MalaConfig};
use crate::stats::{collapsing_scaling, ks_one_sample, ks_two_sample, mean, median, path_extrema, variance};
use crate::verify::{verify_generators, VerificationConfig};

pub const KS_A1_TOL: f64 = 0.08;
pub const KS_A2_TOL: f64 = 0.05;
pub const KS_A3_TOL: f64 = 0.02;
pub const KS_A4_TOL: f64 = 0.08;
pub const HALF_DT_SHIFT_TOL: f64 = 0.02;
pub const COLLAPSING_SLOPE_TOL: f64 = -0.05;
pub const MARTINGALE_VARIANCE_RATIO_TOL: f64 = 3.0;

/// Sampler layout: kept samples per chain, sweeps between kept samples, burn-in.
const CHAIN_LENGTH: usize = 200;
const THINNING: u64 = 100;
const BURN_IN: u64 = 5000;
/// Chains used to sample the equilibrium side of arrow A1.
const A1_CHAINS: usize = 50;
/// Limit-SDE replicas on the limit side of arrow A4.
const A4_LIMIT_REPLICAS: usize = 10_000;
/// System sizes of the martingale-residual study.
const MARTINGALE_NS: [usize; 2] = [64, 256];
/// Draws of the importance-sampling oracle at n = 4.
const ORACLE_DRAWS: usize = 400_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: Experiment,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub details: Value,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Report,
    pub files: Vec<PathBuf>,
}

/// What a runner hands back before anything is written.
struct Artifacts {
    checks: Vec<Check>,
    details: Value,
    files: Vec<(String, Vec<u8>)>,
}

/// `splitmix64(seed ⊕ tag)`: independent seeds for the parts of one run.
fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn column_csv(header: &str, values: &[f64]) -> Vec<u8> {
    let mut s = String::with_capacity(values.len() * 24 + header.len() + 1);
    s.push_str(header);
    s.push('\n');
    for v in values {
        s.push_str(&format!("{v:.16e}\n"));
    }
    s.into_bytes()
}

/// Creates `dir` and checks that a file can be written there.
fn probe_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".socdyn-write-probe");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

fn system_config(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<SdeRunConfig> {
    let mut sde = SdeRunConfig::new(n, PhiModel::gaussian(cfg.sigma_sq)?, cfg.horizon);
    sde.dt_natural = cfg.dt;
    sde.seed = seed;
    Ok(sde)
}

fn mala_config(n: usize, sigma_sq: f64, seed: u64) -> Result<MalaConfig> {
    let mut m = MalaConfig::new(StarDensity::new(PhiModel::gaussian(sigma_sq)?, n)?, CHAIN_LENGTH, seed);
    m.thinning = THINNING;
    m.burn_in = BURN_IN;
    Ok(m)
}

fn sampler_details(sample: &EquilibriumSample) -> Value {
    json!({
        "diagnostics": sample.diagnostics,
        "non_finite_proposals": sample.non_finite_proposals,
        "tuned_step_sizes": sample.step_sizes,
    })
}

fn run_arrow_a1(cfg: &ExperimentConfig, exec: Execution) -> Result<Artifacts> {
    let n = cfg.n[0];
    let system = terminal_s_tilde(&system_config(cfg, n, derive_seed(cfg.seed, 1))?, cfg.replicas, exec)?;
    let sample = sample_equilibrium_chains(&mala_config(n, cfg.sigma_sq, derive_seed(cfg.seed, 2))?, A1_CHAINS, exec)?;
    let gof = ks_two_sample(&system, &sample.samples)?;
    Ok(Artifacts {
        checks: vec![Check::below("ks_two_sample", gof.ks_statistic, KS_A1_TOL)],
        details: json!({ "gof": gof, "sampler": sampler_details(&sample) }),
        files: vec![
            ("system_terminal.csv".into(), column_csv("s_tilde", &system)),
            ("equilibrium_samples.csv".into(), column_csv("s_star_rescaled", &sample.samples)),
            ("diagnostics.json".into(), to_json(&sample.diagnostics)?),
            ("gof.json".into(), to_json(&gof)?),
        ],
    })
}

/// Per-chain means of `v^k`, their mean and its standard error.
fn chain_moment(samples: &[f64], chain_length: usize, k: i32) -> (f64, f64) {
    let means: Vec<f64> = samples
        .chunks(chain_length)
        .map(|c| c.iter().map(|v| v.powi(k)).sum::<f64>() / c.len() as f64)
        .collect();
    (mean(&means), (variance(&means) / means.len() as f64).sqrt())
}

fn run_arrow_a2(cfg: &ExperimentConfig, exec: Execution) -> Result<Artifacts> {
    let n = cfg.n[0];
    let law = QuarticLaw::new(cfg.sigma_sq)?;
    let sample = sample_equilibrium_chains(&mala_config(n, cfg.sigma_sq, derive_seed(cfg.seed, 1))?, cfg.replicas, exec)?;
    let gof = ks_one_sample(&sample.samples, |s| law.cdf(s))?;
    let mut checks = vec![Check::below("ks_one_sample", gof.ks_statistic, KS_A2_TOL)];

    // Small-n cross-check against importance sampling.
    let mut small = mala_config(4, cfg.sigma_sq, derive_seed(cfg.seed, 2))?;
    small.chain_length = 2000;
    small.thinning = 3;
    small.burn_in = 1000;
    let small_sample = sample_equilibrium_chains(&small, 32, exec)?;
    let oracle = importance_moments(4, cfg.sigma_sq, &[1, 2], ORACLE_DRAWS, derive_seed(cfg.seed, 3))?;
    let mut cross = BTreeMap::new();
    for (k, est) in &oracle {
        let (got, se) = chain_moment(&small_sample.samples, small.chain_length, *k as i32);
        let tol = 3.0 * (se * se + est.stderr * est.stderr).sqrt();
        checks.push(Check::at_most(format!("n4_moment_{k}_deviation"), (got - est.value).abs(), tol));
        cross.insert(*k, json!({ "sampler": got, "sampler_stderr": se, "oracle": est.value, "oracle_stderr": est.stderr }));
    }
    Ok(Artifacts {
        checks,
        details: json!({ "gof": gof, "sampler": sampler_details(&sample), "n4_cross_check": cross }),
        files: vec![
            ("samples.csv".into(), column_csv("s_star_rescaled", &sample.samples)),
            ("diagnostics.json".into(), to_json(&sample.diagnostics)?),
            ("gof.json".into(), to_json(&gof)?),
        ],
    })
}

/// Runs at `dt` (each increment the sum of two half-step draws) and at
/// `dt/2` on the same Brownian paths; returns `(coarse, fine)` terminals.
fn limit_pair(sigma_sq: f64, dt: f64, horizon: f64, replicas: usize, seed: u64, exec: Execution) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut coarse = LimitRunConfig::new(sigma_sq, dt, horizon, replicas, seed);
    coarse.brownian_refinement = 2;
    let fine = LimitRunConfig::new(sigma_sq, 0.5 * dt, horizon, replicas, seed);
    Ok((simulate_limit_with(&coarse, exec)?.terminal, simulate_limit_with(&fine, exec)?.terminal))
}

fn run_arrow_a3(cfg: &ExperimentConfig, exec: Execution) -> Result<Artifacts> {
    let law = QuarticLaw::new(cfg.sigma_sq)?;
    let (coarse, fine) = limit_pair(cfg.sigma_sq, cfg.dt, cfg.horizon, cfg.replicas, derive_seed(cfg.seed, 1), exec)?;
    let gof = ks_one_sample(&coarse, |s| law.cdf(s))?;
    let gof_fine = ks_one_sample(&fine, |s| law.cdf(s))?;
    let m2 = crate::stats::empirical_moments(&coarse, &[2])?[&2];
    let shift = (gof.ks_statistic - gof_fine.ks_statistic).abs();
    Ok(Artifacts {
        checks: vec![
            Check::below("ks_one_sample", gof.ks_statistic, KS_A3_TOL),
            Check::at_most("second_moment_deviation", (m2.value - law.moment(2)).abs(), 3.0 * m2.stderr),
            Check::below("ks_shift_half_dt", shift, HALF_DT_SHIFT_TOL),
        ],
        details: json!({
            "gof": gof,
            "gof_half_dt": gof_fine,
            "second_moment": m2,
            "second_moment_exact": law.moment(2),
            "moments_exact": law.moment_table(),
        }),
        files: vec![
            ("terminal.csv".into(), column_csv("u_T", &coarse)),
            ("gof.json".into(), to_json(&gof)?),
        ],
    })
}

fn run_arrow_a4(cfg: &ExperimentConfig, exec: Execution) -> Result<Artifacts> {
    let n = cfg.n[0];
    let mut coarse = system_config(cfg, n, derive_seed(cfg.seed, 1))?;
    coarse.brownian_refinement = 2;
    let mut fine = coarse.clone();
    fine.dt_natural = 0.5 * cfg.dt;
    fine.brownian_refinement = 1;
    let sys_coarse = terminal_s_tilde(&coarse, cfg.replicas, exec)?;
    let sys_fine = terminal_s_tilde(&fine, cfg.replicas, exec)?;
    // The limit runs on the system's rescaled step.
    let dt_limit = cfg.dt / (n as f64).sqrt();
    let (lim_coarse, lim_fine) =
        limit_pair(cfg.sigma_sq, dt_limit, cfg.horizon, A4_LIMIT_REPLICAS, derive_seed(cfg.seed, 2), exec)?;
    let gof = ks_two_sample(&sys_coarse, &lim_coarse)?;
    let gof_fine = ks_two_sample(&sys_fine, &lim_fine)?;
    let shift = (gof.ks_statistic - gof_fine.ks_statistic).abs();
    Ok(Artifacts {
        checks: vec![
            Check::below("ks_two_sample", gof.ks_statistic, KS_A4_TOL),
            Check::below("ks_shift_half_dt", shift, HALF_DT_SHIFT_TOL),
        ],
        details: json!({ "gof": gof, "gof_half_dt": gof_fine, "limit_dt": dt_limit }),
        files: vec![
            ("system_terminal.csv".into(), column_csv("s_tilde", &sys_coarse)),
            ("limit_terminal.csv".into(), column_csv("u_T", &lim_coarse)),
            ("gof.json".into(), to_json(&gof)?),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleSummary {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub variance: f64,
    /// Paths whose drift integrand jumped by more than 10% between records.
    pub coarse_stride_paths: usize,
}

/// `M_{n,f}(horizon)` for `f(x) = x` over `replicas` paths recorded every step.
pub fn martingale_study(cfg: &ExperimentConfig, n: usize, exec: Execution) -> Result<MartingaleSummary> {
    let sde = system_config(cfg, n, derive_seed(cfg.seed, 100 + n as u64))?;
    let f = TestFunction::monomial(1);
    let out = exec::try_map_indexed(cfg.replicas, exec, |r| {
        let path = simulate_replica(&sde, r as u64)?;
        let m = martingale_residual(&path, &f)?;
        Ok::<_, Error>((m.terminal(), m.coarse_stride))
    })?;
    let values: Vec<f64> = out.iter().map(|o| o.0).collect();
    let var = if values.len() > 1 { variance(&values) } else { 0.0 };
    Ok(MartingaleSummary {
        n,
        mean: mean(&values),
        stderr: (var / values.len() as f64).sqrt(),
        variance: var,
        coarse_stride_paths: out.iter().filter(|o| o.1).count(),
    })
}

fn run_generator_suite(cfg: &ExperimentConfig, exec: Execution) -> Result<Artifacts> {
    let mut sigma_sqs = vec![0.5, 1.0, 2.0];
    if !sigma_sqs.contains(&cfg.sigma_sq) {
        sigma_sqs.push(cfg.sigma_sq);
    }
    let vcfg = VerificationConfig {
        ns: cfg.n.clone(),
        sigma_sqs,
        seed: derive_seed(cfg.seed, 1),
        ..VerificationConfig::default()
    };
    let verification = verify_generators(&vcfg, exec)?;
    let mut checks = verification.checks.clone();
    let mut studies = Vec::new();
    for n in MARTINGALE_NS {
        let m = martingale_study(cfg, n, exec)?;
        checks.push(Check::at_most(format!("martingale/n={n}/mean"), m.mean.abs(), 3.0 * m.stderr));
        studies.push(m);
    }
    let vars: Vec<f64> = studies.iter().map(|m| m.variance).collect();
    let ratio = vars.iter().cloned().fold(f64::MIN, f64::max) / vars.iter().cloned().fold(f64::MAX, f64::min);
    checks.push(Check::at_most("martingale/variance_ratio", ratio, MARTINGALE_VARIANCE_RATIO_TOL));
    Ok(Artifacts {
        checks,
        details: json!({ "martingale": studies, "remainder_sups": verification.remainder_sups }),
        files: vec![
            ("verification.json".into(), to_json(&verification)?),
            ("martingale.json".into(), to_json(&studies)?),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapsingSummary {
    pub n: usize,
    pub median_sup_abs_t: f64,
    pub paths_leaving_box: usize,
    pub points_checked: usize,
    pub violations: usize,
}

fn run_collapsing_suite(cfg: &ExperimentConfig, exec: Execution) -> Result<Artifacts> {
    let n_min = *cfg.n.iter().min().expect("validated nonempty");
    let mut summaries = Vec::new();
    let mut medians = BTreeMap::new();
    let mut csv = String::from("n,replica,sup_abs_s,sup_abs_t,exit_time\n");
    for &n in &cfg.n {
        let sde = system_config(cfg, n, derive_seed(cfg.seed, n as u64))?;
        let constants = CollapsingConstants::new(n, cfg.k_box, cfg.sigma_sq, n_min, 3.0)?;
        let per_path = exec::try_map_indexed(cfg.replicas, exec, |r| {
            let path = simulate_replica(&sde, r as u64)?;
            let ext = path_extrema(&path, cfg.k_box)?;
            let check = collapsing_inequality_check(&path, &constants);
            Ok::<_, Error>((ext, check))
        })?;
        let sups: Vec<f64> = per_path.iter().map(|(e, _)| e.sup_abs_t).collect();
        let med = median(&sups)?;
        medians.insert(n as u64, med);
        for (r, (e, _)) in per_path.iter().enumerate() {
            let exit = match e.first_exit_rescaled {
                crate::stats::ExitTime::At(t) => format!("{t:.16e}"),
                crate::stats::ExitTime::Never => "never".into(),
            };
            csv.push_str(&format!("{n},{r},{:.16e},{:.16e},{exit}\n", e.sup_abs_s, e.sup_abs_t));
        }
        summaries.push(CollapsingSummary {
            n,
            median_sup_abs_t: med,
            paths_leaving_box: per_path.iter().filter(|(_, c)| c.exit_time.is_some()).count(),
            points_checked: per_path.iter().map(|(_, c)| c.points_checked).sum(),
            violations: per_path.iter().map(|(_, c)| c.violations()).sum(),
        });
    }
    let meds: Vec<f64> = medians.values().cloned().collect();
    let not_decreasing = meds.windows(2).filter(|w| w[1] >= w[0]).count();
    let slope = collapsing_scaling(&medians)?;
    let violations: usize = summaries.iter().map(|s| s.violations).sum();
    Ok(Artifacts {
        checks: vec![
            Check::at_most("median_sup_t_non_decreasing_steps", not_decreasing as f64, 0.0),
            Check::below("median_sup_t_loglog_slope", slope, COLLAPSING_SLOPE_TOL),
            Check::at_most("collapsing_inequality_violations", violations as f64, 0.0),
        ],
        details: json!({ "per_n": summaries, "slope": slope }),
        files: vec![
            ("extrema.csv".into(), csv.into_bytes()),
            ("collapsing.json".into(), to_json(&summaries)?),
        ],
    })
}

/// Runs `cfg.experiment`, writes its artifacts and `report.json` into
/// `cfg.out_dir`, and returns the report. The output directory is checked
/// before any computation starts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    probe_output_dir(&cfg.out_dir)?;
    let exec = Execution::from_workers(cfg.workers);
    let artifacts = match cfg.experiment {
        Experiment::ArrowA1 => run_arrow_a1(cfg, exec)?,
        Experiment::ArrowA2 => run_arrow_a2(cfg, exec)?,
        Experiment::ArrowA3 => run_arrow_a3(cfg, exec)?,
        Experiment::ArrowA4 => run_arrow_a4(cfg, exec)?,
        Experiment::GeneratorSuite => run_generator_suite(cfg, exec)?,
        Experiment::CollapsingSuite => run_collapsing_suite(cfg, exec)?,
    };
    let report = Report {
        experiment: cfg.experiment,
        seed: cfg.seed,
        config: cfg.clone(),
        pass: all_pass(&artifacts.checks),
        checks: artifacts.checks,
        details: artifacts.details,
    };
    let mut files = Vec::new();
    for (name, bytes) in artifacts.files.into_iter().chain([("report.json".to_string(), to_json(&report)?)]) {
        let path = cfg.out_dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        files.push(path);
    }
    Ok(RunOutcome { report, files })
}

/// Runs the four arrows at default settings into `out/<experiment>` and
/// writes `out/diagram.json`.
pub fn run_diagram(sigma_sq: f64, out: &Path, seed: u64, workers: usize) -> Result<Vec<RunOutcome>> {
    probe_output_dir(out)?;
    let mut outcomes = Vec::new();
    for e in [Experiment::ArrowA1, Experiment::ArrowA2, Experiment::ArrowA3, Experiment::ArrowA4] {
        let mut cfg = ExperimentConfig::defaults(e, sigma_sq)?;
        cfg.seed = seed;
        cfg.workers = workers;
        cfg.out_dir = out.join(e.name());
        outcomes.push(run_experiment(&cfg)?);
    }
    let summary: Vec<Value> = outcomes
        .iter()
        .map(|o| json!({ "experiment": o.report.experiment, "pass": o.report.pass }))
        .collect();
    let pass = outcomes.iter().all(|o| o.report.pass);
    let path = out.join("diagram.json");
    fs::write(&path, to_json(&json!({ "sigma_sq": sigma_sq, "seed": seed, "arrows": summary, "pass": pass }))?)
        .map_err(|e| Error::io(&path, e))?;
    Ok(outcomes)
}
