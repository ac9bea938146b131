//! Langevin samplers (ULA and MALA) for the equilibrium density.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::{sums, StarDensity};
use crate::rng::{self, Domain};
use crate::stats::{effective_sample_size, MomentEstimate};

/// Acceptance rate targeted by burn-in tuning.
pub const TARGET_ACCEPTANCE: f64 = 0.55;
/// Below this post-tuning acceptance the run is rejected.
pub const MIN_ACCEPTANCE: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct MalaConfig {
    pub model: StarDensity,
    pub step_size: f64,
    pub burn_in: u64,
    pub thinning: u64,
    /// Kept samples per chain.
    pub chain_length: usize,
    pub seed: u64,
    /// `true` = MALA accept/reject, `false` = ULA.
    pub adjusted: bool,
    /// Adapt the step size toward [`TARGET_ACCEPTANCE`] during burn-in.
    /// Only applies to adjusted chains.
    pub tune: bool,
    /// Diagnostic switch: drop the mean-field term and target the product measure.
    pub interaction: bool,
}

impl MalaConfig {
    /// Defaults: step `0.5 σ²/n^{1/3}`, burn-in 1000, no thinning, MALA with tuning.
    pub fn new(model: StarDensity, chain_length: usize, seed: u64) -> Self {
        let step_size = default_step_size(model.phi.sigma_sq(), model.n);
        MalaConfig {
            model,
            step_size,
            burn_in: 1000,
            thinning: 1,
            chain_length,
            seed,
            adjusted: true,
            tune: true,
            interaction: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::contract("step_size must be positive and finite"));
        }
        if self.chain_length == 0 {
            return Err(Error::contract("chain_length must be >= 1"));
        }
        if self.thinning == 0 {
            return Err(Error::contract("thinning must be >= 1"));
        }
        Ok(())
    }

    pub fn sweeps(&self) -> u64 {
        self.burn_in + self.chain_length as u64 * self.thinning
    }
}

pub fn default_step_size(sigma_sq: f64, n: usize) -> f64 {
    0.5 * sigma_sq / (n as f64).cbrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainDiagnostics {
    /// Over the post-burn-in sweeps.
    pub acceptance_rate: f64,
    #[serde(rename = "ess")]
    pub effective_sample_estimate: f64,
    #[serde(rename = "sweeps")]
    pub sweep_count: u64,
}

#[derive(Debug, Clone)]
pub struct EquilibriumSample {
    /// `S/n^{3/4}` at each kept sweep, chains concatenated in index order.
    pub samples: Vec<f64>,
    pub diagnostics: ChainDiagnostics,
    /// Step size after tuning, per chain.
    pub step_sizes: Vec<f64>,
    /// Proposals rejected because they were not finite.
    pub non_finite_proposals: u64,
}

impl EquilibriumSample {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "s_star_rescaled")?;
        for v in &self.samples {
            writeln!(w, "{v:.16e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MalaStep {
    pub x: Vec<f64>,
    pub accepted: bool,
    /// Log Metropolis–Hastings ratio; 0 for ULA.
    pub log_ratio: f64,
}

/// `log f*` and its gradient in one pass over `x`.
fn eval_into(model: &StarDensity, interaction: bool, x: &[f64], grad: &mut [f64]) -> f64 {
    let (s, t) = sums(x);
    let r = if interaction { s / (t + 1.0) } else { 0.0 };
    let r2 = r * r;
    let mut pot = 0.0;
    for (g, &xj) in grad.iter_mut().zip(x) {
        *g = r - xj * r2 + 2.0 * model.phi.phi_prime(xj);
        pot += model.phi.phi(xj);
    }
    let inter = if interaction { 0.5 * s * s / (t + 1.0) } else { 0.0 };
    inter + 2.0 * pot
}

/// `log q(to | from)` up to a constant, for the Langevin proposal with step `h`.
fn log_q(to: &[f64], from: &[f64], grad_from: &[f64], h: f64) -> f64 {
    let ss: f64 = to
        .iter()
        .zip(from)
        .zip(grad_from)
        .map(|((&y, &x), &g)| {
            let d = y - x - 0.5 * h * g;
            d * d
        })
        .sum();
    -ss / (2.0 * h)
}

/// One sweep holding the current point, its log-density and gradient.
struct Chain<'a> {
    model: &'a StarDensity,
    adjusted: bool,
    interaction: bool,
    h: f64,
    x: Vec<f64>,
    logf: f64,
    grad: Vec<f64>,
    y: Vec<f64>,
    logf_y: f64,
    grad_y: Vec<f64>,
    non_finite: u64,
}

impl<'a> Chain<'a> {
    fn new(model: &'a StarDensity, adjusted: bool, interaction: bool, h: f64, x: Vec<f64>) -> Self {
        let n = x.len();
        let mut grad = vec![0.0; n];
        let logf = eval_into(model, interaction, &x, &mut grad);
        Chain {
            model,
            adjusted,
            interaction,
            h,
            x,
            logf,
            grad,
            y: vec![0.0; n],
            logf_y: 0.0,
            grad_y: vec![0.0; n],
            non_finite: 0,
        }
    }

    /// Proposes from the noise already stored in `self.y` and returns
    /// `(accepted, log_ratio, acceptance probability)`.
    fn step_with_noise(&mut self, u: f64) -> (bool, f64, f64) {
        let h = self.h;
        let sq = h.sqrt();
        for ((y, &x), &g) in self.y.iter_mut().zip(&self.x).zip(&self.grad) {
            *y = x + 0.5 * h * g + sq * *y;
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            self.non_finite += 1;
            return (false, f64::NEG_INFINITY, 0.0);
        }
        self.logf_y = eval_into(self.model, self.interaction, &self.y, &mut self.grad_y);
        let log_ratio = if self.adjusted {
            self.logf_y - self.logf + log_q(&self.x, &self.y, &self.grad_y, h) - log_q(&self.y, &self.x, &self.grad, h)
        } else {
            0.0
        };
        if !self.logf_y.is_finite() || log_ratio.is_nan() {
            self.non_finite += 1;
            return (false, f64::NEG_INFINITY, 0.0);
        }
        let accept_prob = log_ratio.min(0.0).exp();
        let accepted = !self.adjusted || u.ln() < log_ratio;
        if accepted {
            std::mem::swap(&mut self.x, &mut self.y);
            std::mem::swap(&mut self.grad, &mut self.grad_y);
            self.logf = self.logf_y;
        }
        (accepted, log_ratio, accept_prob)
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> (bool, f64, f64) {
        for v in self.y.iter_mut() {
            *v = rng::standard_normal(rng);
        }
        let u: f64 = if self.adjusted { rng.random() } else { 0.5 };
        self.step_with_noise(u)
    }
}

/// One Langevin proposal from `x` with `config.step_size`, accepted or
/// rejected by Metropolis–Hastings when `config.adjusted`.
pub fn mala_step<R: Rng + ?Sized>(x: &[f64], config: &MalaConfig, rng: &mut R) -> Result<MalaStep> {
    config.validate()?;
    if x.len() != config.model.n {
        return Err(Error::contract("point dimension does not match the model"));
    }
    let mut chain = Chain::new(&config.model, config.adjusted, config.interaction, config.step_size, x.to_vec());
    for v in chain.y.iter_mut() {
        *v = rng::standard_normal(rng);
    }
    let u: f64 = if config.adjusted { rng.random() } else { 0.5 };
    let (accepted, log_ratio, _) = chain.step_with_noise(u);
    Ok(MalaStep {
        x: chain.x,
        accepted,
        log_ratio,
    })
}

/// Like [`mala_step`] with caller-supplied standard normals and uniform.
pub fn mala_step_with_noise(x: &[f64], config: &MalaConfig, xi: &[f64], u: f64) -> Result<MalaStep> {
    config.validate()?;
    if x.len() != config.model.n || xi.len() != config.model.n {
        return Err(Error::contract("point or noise dimension does not match the model"));
    }
    let mut chain = Chain::new(&config.model, config.adjusted, config.interaction, config.step_size, x.to_vec());
    chain.y.copy_from_slice(xi);
    let (accepted, log_ratio, _) = chain.step_with_noise(u);
    Ok(MalaStep {
        x: chain.x,
        accepted,
        log_ratio,
    })
}

struct ChainOutput {
    samples: Vec<f64>,
    accepted: u64,
    steps: u64,
    step_size: f64,
    non_finite: u64,
}

fn run_chain(config: &MalaConfig, chain_index: u64, start: Option<&[f64]>) -> ChainOutput {
    let n = config.model.n;
    let x0 = match start {
        Some(x) => x.to_vec(),
        None => {
            let sd = config.model.phi.sigma_sq().sqrt();
            let mut r = rng::stream(config.seed, Domain::ChainInit, chain_index, 0);
            (0..n).map(|_| sd * rng::standard_normal(&mut r)).collect()
        }
    };
    let mut rng = rng::stream(config.seed, Domain::ChainProposal, chain_index, 0);
    let mut chain = Chain::new(&config.model, config.adjusted, config.interaction, config.step_size, x0);
    let tune = config.tune && config.adjusted;
    let mut log_h = config.step_size.ln();
    for i in 0..config.burn_in {
        let (_, _, p) = chain.step(&mut rng);
        if tune {
            let gain = 1.0 / (i as f64 + 10.0).powf(0.6);
            log_h += gain * (p - TARGET_ACCEPTANCE);
            chain.h = log_h.exp();
        }
    }
    let scale = (n as f64).powf(-0.75);
    let mut samples = Vec::with_capacity(config.chain_length);
    let mut accepted = 0;
    for _ in 0..config.chain_length {
        for _ in 0..config.thinning {
            if chain.step(&mut rng).0 {
                accepted += 1;
            }
        }
        samples.push(chain.x.iter().sum::<f64>() * scale);
    }
    ChainOutput {
        samples,
        accepted,
        steps: config.chain_length as u64 * config.thinning,
        step_size: chain.h,
        non_finite: chain.non_finite,
    }
}

/// Runs one chain and returns its rescaled-sum samples.
pub fn sample_equilibrium(config: &MalaConfig) -> Result<EquilibriumSample> {
    sample_equilibrium_chains(config, 1, Execution::Sequential)
}

/// Runs `chains` independent chains (chain `c` uses stream index `c`) and
/// concatenates their samples in chain order.
pub fn sample_equilibrium_chains(config: &MalaConfig, chains: usize, exec: Execution) -> Result<EquilibriumSample> {
    config.validate()?;
    if chains == 0 {
        return Err(Error::contract("need at least one chain"));
    }
    let outputs = exec::map_indexed(chains, exec, |c| run_chain(config, c as u64, None));
    merge(config, outputs)
}

/// Single chain started from `x0` instead of an i.i.d. draw.
pub fn sample_equilibrium_from(config: &MalaConfig, x0: &[f64]) -> Result<EquilibriumSample> {
    config.validate()?;
    if x0.len() != config.model.n {
        return Err(Error::contract("start point dimension does not match the model"));
    }
    merge(config, vec![run_chain(config, 0, Some(x0))])
}

fn merge(config: &MalaConfig, outputs: Vec<ChainOutput>) -> Result<EquilibriumSample> {
    let accepted: u64 = outputs.iter().map(|o| o.accepted).sum();
    let steps: u64 = outputs.iter().map(|o| o.steps).sum();
    let acceptance_rate = accepted as f64 / steps as f64;
    let ess = outputs.iter().map(|o| effective_sample_size(&o.samples)).sum();
    let step_sizes: Vec<f64> = outputs.iter().map(|o| o.step_size).collect();
    if config.adjusted && acceptance_rate < MIN_ACCEPTANCE {
        return Err(Error::StepSize {
            acceptance: acceptance_rate,
            step_size: step_sizes[0],
        });
    }
    Ok(EquilibriumSample {
        diagnostics: ChainDiagnostics {
            acceptance_rate,
            effective_sample_estimate: ess,
            sweep_count: config.sweeps() * outputs.len() as u64,
        },
        non_finite_proposals: outputs.iter().map(|o| o.non_finite).sum(),
        step_sizes,
        samples: outputs.into_iter().flat_map(|o| o.samples).collect(),
    })
}

/// Moments of `S/n^{3/4}` under the equilibrium density of Gaussian `φ`,
/// by self-normalized importance sampling from `N(0, σ²)ⁿ` with weights
/// `exp(S²/(2(T+1)))` (bounded by `e^{n/2}`). Standard errors use the delta
/// method.
pub fn importance_moments(
    n: usize,
    sigma_sq: f64,
    orders: &[u32],
    draws: usize,
    seed: u64,
) -> Result<BTreeMap<u32, MomentEstimate>> {
    if n == 0 || draws < 2 || !(sigma_sq > 0.0) {
        return Err(Error::contract("need n >= 1, draws >= 2 and sigma_sq > 0"));
    }
    let mut r = rng::stream(seed, Domain::Oracle, 0, 0);
    let sd = sigma_sq.sqrt();
    let scale = (n as f64).powf(-0.75);
    let mut x = vec![0.0; n];
    let mut ws = Vec::with_capacity(draws);
    let mut vals = Vec::with_capacity(draws);
    for _ in 0..draws {
        for v in x.iter_mut() {
            *v = sd * rng::standard_normal(&mut r);
        }
        let (s, t) = sums(&x);
        ws.push((0.5 * s * s / (t + 1.0)).exp());
        vals.push(s * scale);
    }
    let w_sum: f64 = ws.iter().sum();
    Ok(orders
        .iter()
        .map(|&k| {
            let g = |v: f64| v.powi(k as i32);
            let value = ws.iter().zip(&vals).map(|(w, &v)| w * g(v)).sum::<f64>() / w_sum;
            let var = ws.iter().zip(&vals).map(|(w, &v)| (w * (g(v) - value)).powi(2)).sum::<f64>() / (w_sum * w_sum);
            (k, MomentEstimate { value, stderr: var.sqrt() })
        })
        .collect())
}
