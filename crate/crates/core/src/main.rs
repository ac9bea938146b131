use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use socdyn::config::ExperimentConfig;
use socdyn::experiments::{run_diagram, run_experiment};
use socdyn::{verify_generators, Error, Execution, VerificationConfig};

#[derive(Parser)]
#[command(name = "socdyn", version, about = "Critical mean-field particle dynamics: simulation and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a key = value config file.
    Run { config: PathBuf },
    /// Check the generator identities, derivatives and remainder decay.
    VerifyGenerators {
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 10, 100])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Also write verification.json here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run arrows A1-A4 at default settings, one subdirectory each.
    Diagram {
        #[arg(long, default_value_t = 1.0)]
        sigma_sq: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn print_checks(checks: &[socdyn::report::Check]) {
    for c in checks {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {} value={:.6e} tolerance={:.6e}", c.name, c.value, c.tolerance);
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let outcome = run_experiment(&cfg)?;
            print_checks(&outcome.report.checks);
            println!("report: {}", cfg.out_dir.join("report.json").display());
            Ok(outcome.report.pass)
        }
        Command::VerifyGenerators { n, seed, out, workers } => {
            if n.is_empty() || n.contains(&0) {
                return Err(Error::Config { key: "n".into(), reason: "expected positive sizes".into() });
            }
            let cfg = VerificationConfig { ns: n, seed, ..VerificationConfig::default() };
            let exec = Execution::from_workers(workers.unwrap_or_else(default_workers));
            let report = verify_generators(&cfg, exec)?;
            let failed: Vec<_> = report.checks.iter().filter(|c| !c.pass).cloned().collect();
            println!("{} checks, {} failed", report.checks.len(), failed.len());
            print_checks(&failed);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
                let path = dir.join("verification.json");
                let text = serde_json::to_string_pretty(&report)? + "\n";
                std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
            }
            Ok(report.pass)
        }
        Command::Diagram { sigma_sq, out, seed, workers } => {
            let outcomes = run_diagram(sigma_sq, &out, seed, workers.unwrap_or_else(default_workers))?;
            for o in &outcomes {
                println!("{}: {}", o.report.experiment, if o.report.pass { "PASS" } else { "FAIL" });
                print_checks(&o.report.checks);
            }
            Ok(outcomes.iter().all(|o| o.report.pass))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("socdyn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
