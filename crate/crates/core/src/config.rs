//! Flat `key = value` experiment configs.
//!
//! Recognized keys: `experiment`, `n`, `sigma_sq`, `dt`, `horizon`,
//! `replicas`, `seed`, `workers`, `out_dir`, `k_box`. Blank lines and
//! lines starting with `#` are ignored; `n` takes a comma-separated list.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::particle::default_dt_natural;

const KEYS: [&str; 10] = [
    "experiment", "n", "sigma_sq", "dt", "horizon", "replicas", "seed", "workers", "out_dir", "k_box",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    ArrowA1,
    ArrowA2,
    ArrowA3,
    ArrowA4,
    GeneratorSuite,
    CollapsingSuite,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::ArrowA1,
        Experiment::ArrowA2,
        Experiment::ArrowA3,
        Experiment::ArrowA4,
        Experiment::GeneratorSuite,
        Experiment::CollapsingSuite,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::ArrowA1 => "arrow_a1",
            Experiment::ArrowA2 => "arrow_a2",
            Experiment::ArrowA3 => "arrow_a3",
            Experiment::ArrowA4 => "arrow_a4",
            Experiment::GeneratorSuite => "generator_suite",
            Experiment::CollapsingSuite => "collapsing_suite",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::config("experiment", format!("unknown experiment `{s}`")))
    }
}

/// A config as written; absent keys are `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawConfig {
    pub values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", lineno + 1), "expected `key = value`")
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::config(k, "unknown key"));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::config(k, "key given twice"));
            }
        }
        Ok(RawConfig { values })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::config(key, format!("cannot parse `{v}`"))))
            .transpose()
    }
}

/// A config with every default filled in for its experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n: Vec<usize>,
    pub sigma_sq: f64,
    /// Natural-time step of the particle system (rescaled step for `arrow_a3`).
    pub dt: f64,
    /// Rescaled horizon.
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub k_box: f64,
    /// Worker threads; never affects output.
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

struct Defaults {
    n: &'static [usize],
    dt: Option<f64>,
    horizon: f64,
    replicas: usize,
}

fn defaults(e: Experiment) -> Defaults {
    match e {
        Experiment::ArrowA1 => Defaults { n: &[64], dt: None, horizon: 10.0, replicas: 2000 },
        // Replicas are independent sampler chains.
        Experiment::ArrowA2 => Defaults { n: &[512], dt: None, horizon: 0.0, replicas: 50 },
        Experiment::ArrowA3 => Defaults { n: &[], dt: Some(0.005), horizon: 50.0, replicas: 10_000 },
        Experiment::ArrowA4 => Defaults { n: &[256], dt: None, horizon: 5.0, replicas: 500 },
        Experiment::GeneratorSuite => Defaults { n: &[2, 10, 100], dt: None, horizon: 1.0, replicas: 1000 },
        Experiment::CollapsingSuite => Defaults { n: &[64, 256, 1024], dt: None, horizon: 2.0, replicas: 200 },
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, "must be positive and finite"))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        ExperimentConfig::from_raw(&RawConfig::parse(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::parse(&text)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let experiment: Experiment = raw
            .get::<String>("experiment")?
            .ok_or_else(|| Error::config("experiment", "missing required key"))?
            .parse()?;
        let sigma_sq = positive(
            "sigma_sq",
            raw.get("sigma_sq")?.ok_or_else(|| Error::config("sigma_sq", "missing required key"))?,
        )?;
        let d = defaults(experiment);
        let n = match raw.values.get("n") {
            Some(list) => list
                .split(',')
                .map(|v| match v.trim().parse::<usize>() {
                    Ok(n) if n >= 1 => Ok(n),
                    _ => Err(Error::config("n", format!("`{}` is not a positive integer", v.trim()))),
                })
                .collect::<Result<Vec<_>>>()?,
            None => d.n.to_vec(),
        };
        if n.is_empty() && experiment != Experiment::ArrowA3 {
            return Err(Error::config("n", "needs at least one value"));
        }
        let dt = match raw.get::<f64>("dt")? {
            Some(v) => positive("dt", v)?,
            None => d.dt.unwrap_or_else(|| default_dt_natural(sigma_sq)),
        };
        let horizon = match raw.get::<f64>("horizon")? {
            Some(v) => positive("horizon", v)?,
            None => d.horizon,
        };
        let replicas = raw.get::<usize>("replicas")?.unwrap_or(d.replicas);
        if replicas == 0 {
            return Err(Error::config("replicas", "must be >= 1"));
        }
        let k_box = match raw.get::<f64>("k_box")? {
            Some(v) => positive("k_box", v)?,
            None => 2.0,
        };
        let workers = raw
            .get::<usize>("workers")?
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |w| w.get()));
        let out_dir = raw
            .get::<PathBuf>("out_dir")?
            .unwrap_or_else(|| PathBuf::from("socdyn-out").join(experiment.name()));
        let cfg = ExperimentConfig {
            experiment,
            n,
            sigma_sq,
            dt,
            horizon,
            replicas,
            seed: raw.get("seed")?.unwrap_or(1),
            k_box,
            workers,
            out_dir,
        };
        cfg.check_consistency()?;
        Ok(cfg)
    }

    /// Default config of `experiment` at `σ²`.
    pub fn defaults(experiment: Experiment, sigma_sq: f64) -> Result<Self> {
        let mut raw = RawConfig::default();
        raw.values.insert("experiment".into(), experiment.name().into());
        raw.values.insert("sigma_sq".into(), sigma_sq.to_string());
        ExperimentConfig::from_raw(&raw)
    }

    fn check_consistency(&self) -> Result<()> {
        match self.experiment {
            Experiment::ArrowA1 | Experiment::ArrowA4 => {
                if self.n.len() != 1 {
                    return Err(Error::config("n", "this experiment takes a single n"));
                }
                if self.dt >= self.horizon * (self.n[0] as f64).sqrt() {
                    return Err(Error::config("dt", "must be smaller than the natural horizon"));
                }
            }
            Experiment::ArrowA2 => {
                if self.n.len() != 1 {
                    return Err(Error::config("n", "this experiment takes a single n"));
                }
            }
            Experiment::ArrowA3 => {
                if self.dt >= self.horizon {
                    return Err(Error::config("dt", "must be smaller than the horizon"));
                }
            }
            Experiment::GeneratorSuite => {}
            Experiment::CollapsingSuite => {
                if self.n.len() < 3 {
                    return Err(Error::config("n", "the scaling fit needs at least three sizes"));
                }
                let n_min = *self.n.iter().min().expect("nonempty");
                if self.k_box >= self.sigma_sq * (n_min as f64).powf(0.25) {
                    return Err(Error::config("k_box", "must be below sigma_sq * min(n)^(1/4)"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let c = ExperimentConfig::parse(
            "# comment\nexperiment = arrow_a4\nn = 128\nsigma_sq = 2\ndt = 0.004\nhorizon = 3\n\
             replicas = 7\nseed = 9\nworkers = 4\nout_dir = /tmp/x\nk_box = 1.5\n",
        )
        .unwrap();
        assert_eq!(c.experiment, Experiment::ArrowA4);
        assert_eq!((c.n.clone(), c.sigma_sq, c.dt, c.horizon), (vec![128], 2.0, 0.004, 3.0));
        assert_eq!((c.replicas, c.seed, c.workers, c.k_box), (7, 9, 4, 1.5));
        assert_eq!(c.out_dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn defaults_follow_the_experiment() {
        let c = ExperimentConfig::parse("experiment = collapsing_suite\nsigma_sq = 1").unwrap();
        assert_eq!(c.n, vec![64, 256, 1024]);
        assert_eq!((c.horizon, c.replicas, c.k_box), (2.0, 200, 2.0));
        let a3 = ExperimentConfig::defaults(Experiment::ArrowA3, 1.0).unwrap();
        assert_eq!((a3.dt, a3.horizon, a3.replicas), (0.005, 50.0, 10_000));
    }

    fn key_of(text: &str) -> String {
        match ExperimentConfig::parse(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_offending_key() {
        assert_eq!(key_of("experiment = arrow_a3\n"), "sigma_sq");
        assert_eq!(key_of("experiment = arrow_a9\nsigma_sq = 1"), "experiment");
        assert_eq!(key_of("experiment = arrow_a3\nsigma_sq = 1\ncolour = red"), "colour");
        assert_eq!(key_of("experiment = arrow_a3\nsigma_sq = -1"), "sigma_sq");
        assert_eq!(key_of("experiment = arrow_a1\nsigma_sq = 1\nn = 4,x"), "n");
        assert_eq!(key_of("experiment = arrow_a1\nsigma_sq = 1\nreplicas = 0"), "replicas");
        assert_eq!(key_of("experiment = collapsing_suite\nsigma_sq = 1\nn = 64,256"), "n");
        assert_eq!(key_of("experiment = collapsing_suite\nsigma_sq = 1\nk_box = 3"), "k_box");
        assert_eq!(key_of("sigma_sq = 1"), "experiment");
        assert_eq!(key_of("experiment = arrow_a3\nsigma_sq = 1\nsigma_sq = 2"), "sigma_sq");
        assert_eq!(key_of("experiment arrow_a3"), "line 1");
    }

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
    }
}
