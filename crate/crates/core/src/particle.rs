//! Euler–Maruyama integration of the n-particle system in natural time,
//! observed through `S̃_n(t) = S_n(√n t)/n^{3/4}` and
//! `T̃_n(t) = n^{1/4}(T_n(√n t)/n − σ²)`.
//!
//! The noise is additive with unit diffusion, so plain EM already has strong
//! order 1 here. Each replica owns one RNG lane per particle.

use std::io::Write;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::{ParticleState, PhiKind, PhiModel};
use crate::rng::{Domain, ParticleStreams};

/// Cached sums are recomputed from scratch this often.
pub const RESYNC_INTERVAL: u64 = 1000;

/// `0.01 / max(1, σ²)`.
pub fn default_dt_natural(sigma_sq: f64) -> f64 {
    0.01 / sigma_sq.max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    /// Coordinates i.i.d. `N(0, σ²)`.
    IidGaussian { sigma_sq: f64 },
    /// The same configuration for every replica.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SdeRunConfig {
    pub n: usize,
    pub phi: PhiModel,
    pub dt_natural: f64,
    /// Horizon in rescaled time; the integration runs to natural time `√n · horizon`.
    pub horizon_rescaled: f64,
    pub record_stride: usize,
    pub seed: u64,
    pub snapshot_full_state: bool,
    pub initial: InitialLaw,
    /// Diagnostic switch: `false` drops the mean-field interaction term.
    pub interaction: bool,
    /// Each increment is the sum of this many `N(0, dt/m)` draws, so a run at
    /// `dt` with `m = 2` follows the same Brownian path as a run at `dt/2`.
    pub brownian_refinement: u32,
}

impl SdeRunConfig {
    /// Gaussian start with variance `σ²` of `phi`, default step, every step recorded.
    pub fn new(n: usize, phi: PhiModel, horizon_rescaled: f64) -> Self {
        let sigma_sq = phi.sigma_sq();
        SdeRunConfig {
            n,
            dt_natural: default_dt_natural(sigma_sq),
            phi,
            horizon_rescaled,
            record_stride: 1,
            seed: 0,
            snapshot_full_state: false,
            initial: InitialLaw::IidGaussian { sigma_sq },
            interaction: true,
            brownian_refinement: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::contract("n must be >= 1"));
        }
        if !(self.dt_natural > 0.0 && self.dt_natural.is_finite()) {
            return Err(Error::contract("dt_natural must be positive"));
        }
        if !(self.horizon_rescaled > 0.0 && self.horizon_rescaled.is_finite()) {
            return Err(Error::contract("horizon must be positive"));
        }
        if self.record_stride == 0 {
            return Err(Error::contract("record_stride must be >= 1"));
        }
        if self.brownian_refinement == 0 {
            return Err(Error::contract("brownian_refinement must be >= 1"));
        }
        if self.record_stride as u64 > self.steps() {
            return Err(Error::contract(
                "record_stride exceeds the number of steps; nothing would be recorded",
            ));
        }
        if let InitialLaw::Fixed(x) = &self.initial {
            if x.len() != self.n {
                return Err(Error::contract("fixed initial state has the wrong dimension"));
            }
        }
        Ok(())
    }

    pub fn natural_horizon(&self) -> f64 {
        (self.n as f64).sqrt() * self.horizon_rescaled
    }

    pub fn steps(&self) -> u64 {
        ((self.natural_horizon() / self.dt_natural).round() as u64).max(1)
    }
}

/// Observables of one replica on the record grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledPath {
    pub n: usize,
    pub sigma_sq: f64,
    pub seed: u64,
    pub replica: u64,
    pub times: Vec<f64>,
    pub s_tilde: Vec<f64>,
    pub t_tilde: Vec<f64>,
    /// Full particle configurations at each record point, when requested.
    pub snapshots: Option<Vec<Vec<f64>>>,
}

impl RescaledPath {
    fn empty(n: usize, sigma_sq: f64, seed: u64, replica: u64, snapshots: bool) -> Self {
        RescaledPath {
            n,
            sigma_sq,
            seed,
            replica,
            times: Vec::new(),
            s_tilde: Vec::new(),
            t_tilde: Vec::new(),
            snapshots: snapshots.then(Vec::new),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `(S̃, T̃)` at the last record point.
    pub fn terminal(&self) -> Option<(f64, f64)> {
        Some((*self.s_tilde.last()?, *self.t_tilde.last()?))
    }

    fn record(&mut self, time: f64, state: &ParticleState) {
        let (s, t) = rescale(state.s_sum(), state.t_sum(), self.n, self.sigma_sq);
        self.times.push(time);
        self.s_tilde.push(s);
        self.t_tilde.push(t);
        if let Some(snaps) = self.snapshots.as_mut() {
            snaps.push(state.x().to_vec());
        }
    }

    /// CSV with header `t,s_tilde,t_tilde`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,s_tilde,t_tilde")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e}",
                self.times[i], self.s_tilde[i], self.t_tilde[i]
            )?;
        }
        Ok(())
    }
}

/// Maps `(S_n, T_n)` to `(S̃_n, T̃_n)`.
pub fn rescale(s_sum: f64, t_sum: f64, n: usize, sigma_sq: f64) -> (f64, f64) {
    let nf = n as f64;
    let q = nf.powf(0.25);
    (s_sum / (q * q * q), q * (t_sum / nf - sigma_sq))
}

/// Draws coordinates i.i.d. `N(0, σ²)` from the initial-state streams of replica 0.
pub fn init_iid_gaussian(n: usize, sigma_sq: f64, seed: u64) -> Result<ParticleState> {
    init_iid_gaussian_replica(n, sigma_sq, seed, 0)
}

pub fn init_iid_gaussian_replica(n: usize, sigma_sq: f64, seed: u64, replica: u64) -> Result<ParticleState> {
    if n == 0 {
        return Err(Error::contract("n must be >= 1"));
    }
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
        return Err(Error::contract("sigma_sq must be positive"));
    }
    let mut x = vec![0.0; n];
    ParticleStreams::new(seed, Domain::InitialState, replica, n).fill_scaled_normals(sigma_sq.sqrt(), &mut x);
    ParticleState::new(x)
}

/// Advances `state` in place by one EM step. Returns `false` if any
/// coordinate became non-finite.
fn step_in_place(state: &mut ParticleState, dt: f64, noise: &[f64], phi: &PhiModel, interaction: bool) -> bool {
    let (x, s, t, time) = state.parts_mut();
    let r = if interaction { *s / (*t + 1.0) } else { 0.0 };
    let r2 = r * r;
    let (ds, dt_sum) = match phi.kind() {
        PhiKind::Gaussian { sigma_sq } => {
            let k = -0.5 / sigma_sq;
            advance(x, noise, dt, |v| k * v + 0.5 * (r - v * r2))
        }
        PhiKind::Custom { phi_prime, .. } => advance(x, noise, dt, |v| phi_prime(v) + 0.5 * (r - v * r2)),
    };
    *s += ds;
    *t = (*t + dt_sum).max(0.0);
    *time += dt;
    ds.is_finite() && dt_sum.is_finite()
}

#[inline(always)]
fn advance<F: Fn(f64) -> f64>(x: &mut [f64], noise: &[f64], dt: f64, drift: F) -> (f64, f64) {
    let mut ds = 0.0;
    let mut dt_sum = 0.0;
    for (xj, &w) in x.iter_mut().zip(noise) {
        let old = *xj;
        let new = old + drift(old) * dt + w;
        let d = new - old;
        ds += d;
        dt_sum += d * (new + old);
        *xj = new;
    }
    (ds, dt_sum)
}

/// One Euler–Maruyama step `x' = x + drift(x)·dt + noise`, where `noise`
/// already carries the `√dt` scaling.
pub fn em_step_system(state: &ParticleState, dt: f64, noise: &[f64], phi: &PhiModel) -> Result<ParticleState> {
    if noise.len() != state.n() {
        return Err(Error::contract(format!(
            "noise has {} entries for {} particles",
            noise.len(),
            state.n()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::contract("dt must be positive"));
    }
    let mut next = state.clone();
    if !step_in_place(&mut next, dt, noise, phi, true) {
        return Err(Error::BlowUp {
            replica: 0,
            step: (state.natural_time() / dt).round() as u64 + 1,
            prefix: None,
        });
    }
    Ok(next)
}

/// Integrates replica 0 of `config`.
pub fn simulate_system(config: &SdeRunConfig) -> Result<RescaledPath> {
    simulate_replica(config, 0)
}

pub fn simulate_replica(config: &SdeRunConfig, replica: u64) -> Result<RescaledPath> {
    let initial = match &config.initial {
        InitialLaw::IidGaussian { sigma_sq } => {
            init_iid_gaussian_replica(config.n, *sigma_sq, config.seed, replica)?.into_coords()
        }
        InitialLaw::Fixed(x) => x.clone(),
    };
    let streams = ParticleStreams::new(config.seed, Domain::SystemNoise, replica, config.n);
    integrate(config, replica, ParticleState::new(initial)?, NoiseSource::Streams(streams))
}

pub(crate) enum NoiseSource<'a> {
    Streams(ParticleStreams),
    /// Pre-generated `√dt`-scaled increments, one vector per step.
    Explicit(&'a [Vec<f64>]),
}

pub(crate) fn integrate(
    config: &SdeRunConfig,
    replica: u64,
    mut state: ParticleState,
    mut noise_src: NoiseSource<'_>,
) -> Result<RescaledPath> {
    config.validate()?;
    let n = config.n;
    if state.n() != n {
        return Err(Error::contract("initial state has the wrong dimension"));
    }
    let sqrt_n = (n as f64).sqrt();
    let dt = config.dt_natural;
    let refinement = config.brownian_refinement;
    let sub_scale = (dt / refinement as f64).sqrt();
    let steps = config.steps();
    let stride = config.record_stride as u64;
    let sigma_sq = config.phi.sigma_sq();

    let mut path = RescaledPath::empty(n, sigma_sq, config.seed, replica, config.snapshot_full_state);
    path.record(0.0, &state);
    let mut noise = vec![0.0; n];
    for step in 1..=steps {
        let w: &[f64] = match &mut noise_src {
            NoiseSource::Streams(s) => {
                s.fill_summed_normals(sub_scale, refinement, &mut noise);
                &noise
            }
            NoiseSource::Explicit(v) => v
                .get(step as usize - 1)
                .map(|v| v.as_slice())
                .ok_or_else(|| Error::contract("not enough explicit noise vectors"))?,
        };
        if !step_in_place(&mut state, dt, w, &config.phi, config.interaction) {
            return Err(Error::BlowUp {
                replica,
                step,
                prefix: Some(Box::new(path)),
            });
        }
        if step % RESYNC_INTERVAL == 0 {
            state.resync();
        }
        if step % stride == 0 || step == steps {
            path.record(step as f64 * dt / sqrt_n, &state);
        }
    }
    Ok(path)
}

/// Runs `replicas` independent replicas; output is ordered by replica index
/// and does not depend on `exec`.
pub fn simulate_replicas(config: &SdeRunConfig, replicas: usize, exec: Execution) -> Result<Vec<RescaledPath>> {
    config.validate()?;
    exec::try_map_indexed(replicas, exec, |r| simulate_replica(config, r as u64))
}

/// `S̃_n` at the horizon for each replica, recording only the endpoints.
pub fn terminal_s_tilde(config: &SdeRunConfig, replicas: usize, exec: Execution) -> Result<Vec<f64>> {
    let mut cfg = config.clone();
    cfg.record_stride = cfg.steps() as usize;
    cfg.snapshot_full_state = false;
    let paths = simulate_replicas(&cfg, replicas, exec)?;
    Ok(paths.iter().filter_map(|p| p.terminal().map(|(s, _)| s)).collect())
}

/// Runs replica 0 from `initial` on caller-supplied Brownian increments
/// (already scaled by `√dt`), one vector per step.
pub fn simulate_with_increments(
    config: &SdeRunConfig,
    initial: ParticleState,
    increments: &[Vec<f64>],
) -> Result<RescaledPath> {
    if increments.iter().any(|w| w.len() != config.n) {
        return Err(Error::contract("increment vectors must have length n"));
    }
    integrate(config, 0, initial, NoiseSource::Explicit(increments))
}

/// `N(0,1)` draws scaled by `√dt`, for running [`integrate`] on hand-built noise.
#[cfg(test)]
pub(crate) fn explicit_noise(seed: u64, n: usize, steps: usize, dt: f64) -> Vec<Vec<f64>> {
    use crate::rng::{standard_normal, stream};
    let mut r = stream(seed, Domain::Oracle, 0, 0);
    (0..steps)
        .map(|_| (0..n).map(|_| dt.sqrt() * standard_normal(&mut r)).collect())
        .collect()
}
