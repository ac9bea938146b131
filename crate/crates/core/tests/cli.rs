use std::path::Path;
use std::process::Command;

fn socdyn(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_socdyn")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn missing_sigma_sq_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.cfg", "experiment = arrow_a3\n");
    let out = socdyn(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma_sq"));
}

#[test]
fn unknown_experiment_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.cfg", "experiment = arrow_a9\nsigma_sq = 1\n");
    let out = socdyn(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("experiment"));
}

#[test]
fn missing_config_file_is_io_error() {
    let out = socdyn(&["run", "/nonexistent/socdyn.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_directory_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let body = format!("experiment = arrow_a3\nsigma_sq = 1\nout_dir = {}\n", blocker.join("out").display());
    let cfg = write_config(dir.path(), "a.cfg", &body);
    assert_eq!(socdyn(&["run", &cfg]).status.code(), Some(2));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for (i, workers) in [1, 4].iter().enumerate() {
        let out_dir = dir.path().join(format!("run{i}"));
        let body = format!(
            "experiment = arrow_a3\nsigma_sq = 1\nreplicas = 300\nhorizon = 3\ndt = 0.01\nseed = 5\n\
             workers = {workers}\nout_dir = {}\n",
            out_dir.display()
        );
        let cfg = write_config(dir.path(), &format!("{i}.cfg"), &body);
        let out = socdyn(&["run", &cfg]);
        assert!(matches!(out.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push((
            std::fs::read(out_dir.join("report.json")).unwrap(),
            std::fs::read(out_dir.join("terminal.csv")).unwrap(),
        ));
    }
    assert_eq!(reports[0], reports[1]);
    let text = String::from_utf8(reports[0].0.clone()).unwrap();
    assert!(text.contains("\"seed\": 5"));
}

#[test]
fn statistical_failure_exits_1() {
    // Two replicas cannot meet the KS tolerance.
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "experiment = arrow_a3\nsigma_sq = 1\nreplicas = 2\nhorizon = 1\nseed = 3\nout_dir = {}\n",
        dir.path().join("o").display()
    );
    let cfg = write_config(dir.path(), "a.cfg", &body);
    let out = socdyn(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL ks_one_sample"));
}

#[test]
fn verify_generators_passes_for_small_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_string_lossy().into_owned();
    let out = socdyn(&["verify-generators", "--n", "2,10", "--out", &out_dir]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("verification.json")).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
}

#[test]
fn bad_n_list_is_rejected() {
    assert_eq!(socdyn(&["verify-generators", "--n", "2,x"]).status.code(), Some(2));
    assert_eq!(socdyn(&["verify-generators", "--n", "0"]).status.code(), Some(2));
}
