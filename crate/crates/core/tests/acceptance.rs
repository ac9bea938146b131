//! Acceptance run: every criterion at its stated size and tolerance, one
//! PASS/FAIL line each. Exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use socdyn::config::{Experiment, ExperimentConfig};
use socdyn::experiments::{run_experiment, Report};
use socdyn::limit::QuarticLaw;
use socdyn::report::Check;
use socdyn::special::adaptive_simpson;

fn run_default(e: Experiment, dir: &Path) -> Report {
    let mut cfg = ExperimentConfig::defaults(e, 1.0).expect("defaults validate");
    cfg.out_dir = dir.join(e.name());
    run_experiment(&cfg).unwrap_or_else(|err| panic!("{e} failed to run: {err}")).report
}

fn with_prefix<'a>(checks: &'a [Check], prefixes: &[&str]) -> Vec<&'a Check> {
    checks.iter().filter(|c| prefixes.iter().any(|p| c.name.starts_with(p))).collect()
}

fn named<'a>(report: &'a Report, name: &str) -> &'a Check {
    report.checks.iter().find(|c| c.name == name).unwrap_or_else(|| panic!("no check {name}"))
}

/// Verdict plus a one-line summary built from the failing (or worst) checks.
fn judge(checks: &[&Check]) -> (bool, String) {
    let failing: Vec<_> = checks.iter().filter(|c| !c.pass).collect();
    if checks.is_empty() {
        return (false, "no checks".into());
    }
    if failing.is_empty() {
        let shown: Vec<String> = checks
            .iter()
            .take(4)
            .map(|c| format!("{}={:.4e} (tol {:.1e})", c.name, c.value, c.tolerance))
            .collect();
        let more = if checks.len() > 4 { format!(", +{} more", checks.len() - 4) } else { String::new() };
        (true, format!("{}{more}", shown.join(", ")))
    } else {
        let shown: Vec<String> = failing
            .iter()
            .map(|c| format!("{}={:.4e} (tol {:.1e})", c.name, c.value, c.tolerance))
            .collect();
        (false, shown.join(", "))
    }
}

fn small_config(e: Experiment, workers: usize, dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults(e, 1.0).unwrap();
    match e {
        Experiment::ArrowA1 => (c.n, c.replicas, c.horizon) = (vec![16], 40, 1.0),
        Experiment::ArrowA2 => (c.n, c.replicas) = (vec![32], 4),
        Experiment::ArrowA3 => (c.replicas, c.horizon) = (200, 2.0),
        Experiment::ArrowA4 => (c.n, c.replicas, c.horizon) = (vec![32], 40, 0.5),
        Experiment::GeneratorSuite => (c.n, c.replicas) = (vec![2, 10], 40),
        Experiment::CollapsingSuite => (c.n, c.replicas, c.horizon) = (vec![64, 128, 256], 16, 0.5),
    }
    c.workers = workers;
    c.out_dir = dir.join(format!("{}-w{workers}", e.name()));
    c
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn main() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = tmp.path();
    let mut results: Vec<(u32, &str, bool, String)> = Vec::new();
    let clock = Instant::now();

    let suite = run_default(Experiment::GeneratorSuite, dir);
    let (p, s) = judge(&with_prefix(&suite.checks, &["identity/", "decomposition/", "stationarity/"]));
    results.push((1, "generator identity", p, s));
    let (p, s) = judge(&with_prefix(&suite.checks, &["psi_partials/", "grad_log_density/"]));
    results.push((2, "derivative soundness", p, s));
    let (p, s) = judge(&with_prefix(&suite.checks, &["remainder/"]));
    results.push((3, "perturbation remainder", p, s));

    let a3 = run_default(Experiment::ArrowA3, dir);
    let (p, s) = judge(&[named(&a3, "ks_one_sample"), named(&a3, "second_moment_deviation")]);
    results.push((4, "arrow A3 invariant law", p, s));

    let a2 = run_default(Experiment::ArrowA2, dir);
    let (p, s) = judge(&a2.checks.iter().collect::<Vec<_>>());
    results.push((5, "arrow A2 equilibrium sampler", p, s));

    let a4 = run_default(Experiment::ArrowA4, dir);
    let (p, s) = judge(&[named(&a4, "ks_two_sample")]);
    results.push((6, "arrow A4 process convergence", p, s));

    let a1 = run_default(Experiment::ArrowA1, dir);
    let (p, s) = judge(&a1.checks.iter().collect::<Vec<_>>());
    results.push((7, "arrow A1 ergodicity", p, s));

    let coll = run_default(Experiment::CollapsingSuite, dir);
    let (p, s) = judge(&coll.checks.iter().collect::<Vec<_>>());
    results.push((8, "collapsing", p, s));

    let (p, s) = judge(&with_prefix(&suite.checks, &["martingale/"]));
    results.push((9, "martingale residual", p, s));

    let law = QuarticLaw::new(1.0).unwrap();
    let mass = adaptive_simpson(&|x| law.pdf(x), -10.0, 10.0, 1e-14);
    let mut exact = vec![
        Check::below("density_mass_error", (mass - 1.0).abs(), 1e-10),
        Check::below("cdf_at_zero_error", (law.cdf(0.0) - 0.5).abs(), 1e-12),
    ];
    for e in Experiment::ALL {
        let one = small_config(e, 1, dir);
        let four = small_config(e, 4, dir);
        let r1 = run_experiment(&one).unwrap_or_else(|err| panic!("{e}: {err}"));
        run_experiment(&four).unwrap_or_else(|err| panic!("{e}: {err}"));
        let (f1, f4) = (dir_contents(&one.out_dir), dir_contents(&four.out_dir));
        let differing = f1.len().abs_diff(f4.len()) + f1.iter().filter(|(k, v)| f4.get(*k) != Some(*v)).count();
        assert_eq!(r1.files.len(), f1.len());
        exact.push(Check::at_most(format!("workers_1_vs_4_differing_files/{e}"), differing as f64, 0.0));
    }
    let (p, s) = judge(&exact.iter().collect::<Vec<_>>());
    results.push((10, "exactness and reproducibility", p, s));

    let relabel = |prefix: &str, c: &Check| Check { name: format!("{prefix}/{}", c.name), ..c.clone() };
    let shifts = [relabel("a3", named(&a3, "ks_shift_half_dt")), relabel("a4", named(&a4, "ks_shift_half_dt"))];
    let (p, s) = judge(&shifts.iter().collect::<Vec<_>>());
    results.push((11, "discretization robustness", p, s));

    println!();
    for (id, title, pass, summary) in &results {
        println!("{} criterion {id:>2} {title}: {summary}", if *pass { "PASS" } else { "FAIL" });
    }
    let failed = results.iter().filter(|r| !r.2).count();
    println!("\n{} of {} criteria passed in {:.1}s", results.len() - failed, results.len(), clock.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
