//! Single-site potential, interacting drift and the equilibrium log-density.
//!
//! With `S = Σ x_i`, `T = Σ x_i²` and `r = S / (T + 1)`, the particle drift
//! is `φ'(x_j) + ½(r − x_j r²)`, which is exactly half the gradient of
//! `½ S²/(T+1) + 2 Σ φ(x_i)`. The system is therefore the Langevin diffusion
//! of that density, whose normalizing constant is never computed.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum PhiKind {
    /// `φ(x) = −x²/(4σ²)`, i.e. `ρ = N(0, σ²)`.
    Gaussian { sigma_sq: f64 },
    Custom {
        phi: ScalarFn,
        phi_prime: ScalarFn,
        /// Variance of `ρ`, used to center `T̃`.
        variance: f64,
    },
}

/// The potential `φ` together with its derivative and the constant `C` of
/// the confinement condition `x φ'(x) ≤ C (1 + x²)`.
#[derive(Clone)]
pub struct PhiModel {
    kind: PhiKind,
    confinement_constant: f64,
}

impl fmt::Debug for PhiModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PhiKind::Gaussian { sigma_sq } => f
                .debug_struct("PhiModel::Gaussian")
                .field("sigma_sq", sigma_sq)
                .finish(),
            PhiKind::Custom { variance, .. } => f
                .debug_struct("PhiModel::Custom")
                .field("variance", variance)
                .field("confinement_constant", &self.confinement_constant)
                .finish(),
        }
    }
}

impl PhiModel {
    pub fn gaussian(sigma_sq: f64) -> Result<Self> {
        if !(sigma_sq.is_finite() && sigma_sq > 0.0) {
            return Err(Error::InvalidModel(format!(
                "sigma_sq must be positive and finite, got {sigma_sq}"
            )));
        }
        Ok(PhiModel {
            kind: PhiKind::Gaussian { sigma_sq },
            // x φ'(x) = −x²/(2σ²) ≤ 0, so any positive constant works.
            confinement_constant: 1.0,
        })
    }

    /// A user-supplied even potential. `C` is validated, not derived; see
    /// [`validate_phi`].
    pub fn custom<P, D>(phi: P, phi_prime: D, confinement_constant: f64, variance: f64) -> Result<Self>
    where
        P: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(confinement_constant.is_finite() && confinement_constant > 0.0) {
            return Err(Error::InvalidModel(format!(
                "confinement constant must be positive, got {confinement_constant}"
            )));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::InvalidModel(format!(
                "reference variance must be positive, got {variance}"
            )));
        }
        Ok(PhiModel {
            kind: PhiKind::Custom {
                phi: Arc::new(phi),
                phi_prime: Arc::new(phi_prime),
                variance,
            },
            confinement_constant,
        })
    }

    pub fn kind(&self) -> &PhiKind {
        &self.kind
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.kind, PhiKind::Gaussian { .. })
    }

    /// Variance of the single-site law `ρ` (σ² in the Gaussian case).
    pub fn sigma_sq(&self) -> f64 {
        match self.kind {
            PhiKind::Gaussian { sigma_sq } => sigma_sq,
            PhiKind::Custom { variance, .. } => variance,
        }
    }

    pub fn confinement_constant(&self) -> f64 {
        self.confinement_constant
    }

    #[inline]
    pub fn phi(&self, x: f64) -> f64 {
        match &self.kind {
            PhiKind::Gaussian { sigma_sq } => -x * x / (4.0 * sigma_sq),
            PhiKind::Custom { phi, .. } => phi(x),
        }
    }

    #[inline]
    pub fn phi_prime(&self, x: f64) -> f64 {
        match &self.kind {
            PhiKind::Gaussian { sigma_sq } => -x / (2.0 * sigma_sq),
            PhiKind::Custom { phi_prime, .. } => phi_prime(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// `φ(x) ≠ φ(−x)`.
    Evenness { x: f64 },
    /// `x φ'(x) > C (1 + x²)`.
    Confinement { x: f64, lhs: f64, rhs: f64 },
    /// The trapezoid estimate of `∫ exp(2φ)` over the grid hull is not
    /// finite, or the integrand has not decayed at the hull edges.
    Integrability { estimate: f64, edge_ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub first_violation: Option<Violation>,
    /// Trapezoid estimate of `∫ exp(2φ)` over the symmetrized grid hull.
    pub integral_estimate: f64,
}

/// Largest tolerated ratio `exp(2φ(edge)) / max exp(2φ)` on the grid.
const EDGE_DECAY_RATIO: f64 = 1e-3;

/// Spot-checks evenness, confinement and integrability of `exp(2φ)` on a
/// finite grid.
///
/// Integrability is only a heuristic here: the grid is symmetrized, the
/// trapezoid estimate of `∫ exp(2φ)` must be finite and the integrand at the
/// hull edges must be small compared to its maximum. A global integrability
/// certificate is not possible numerically.
pub fn validate_phi(phi: &PhiModel, grid: &[f64]) -> Result<ValidationReport> {
    if grid.is_empty() {
        return Err(Error::contract("validation grid is empty"));
    }
    if let Some(bad) = grid.iter().find(|x| !x.is_finite()) {
        return Err(Error::contract(format!("non-finite grid entry {bad}")));
    }
    let c = phi.confinement_constant();
    let mut first_violation = None;
    for &x in grid {
        let (a, b, d) = (phi.phi(x), phi.phi(-x), phi.phi_prime(x));
        if !(a.is_finite() && b.is_finite() && d.is_finite()) {
            return Err(Error::InvalidModel(format!("phi or phi' is not finite at x = {x}")));
        }
        if first_violation.is_some() {
            continue;
        }
        if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
            first_violation = Some(Violation::Evenness { x });
            continue;
        }
        let (lhs, rhs) = (x * d, c * (1.0 + x * x));
        if lhs > rhs * (1.0 + 1e-12) {
            first_violation = Some(Violation::Confinement { x, lhs, rhs });
        }
    }

    let mut pts: Vec<f64> = grid.iter().flat_map(|&x| [x, -x]).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let dens: Vec<f64> = pts.iter().map(|&x| (2.0 * phi.phi(x)).exp()).collect();
    let estimate: f64 = pts
        .windows(2)
        .zip(dens.windows(2))
        .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
        .sum();
    let peak = dens.iter().cloned().fold(0.0, f64::max);
    let edge = dens[0].max(dens[dens.len() - 1]);
    let edge_ratio = if peak > 0.0 && peak.is_finite() { edge / peak } else { f64::INFINITY };
    if first_violation.is_none()
        && (!estimate.is_finite() || !(edge_ratio <= EDGE_DECAY_RATIO) || pts.len() < 2)
    {
        first_violation = Some(Violation::Integrability { estimate, edge_ratio });
    }

    Ok(ValidationReport {
        pass: first_violation.is_none(),
        first_violation,
        integral_estimate: estimate,
    })
}

/// Positions of the `n` particles with cached `S_n[x]` and `T_n[x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    x: Vec<f64>,
    s_sum: f64,
    t_sum: f64,
    natural_time: f64,
}

impl ParticleState {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::contract("a particle state needs n >= 1 coordinates"));
        }
        let (s_sum, t_sum) = sums(&x);
        Ok(ParticleState {
            x,
            s_sum,
            t_sum,
            natural_time: 0.0,
        })
    }

    pub fn with_time(mut self, natural_time: f64) -> Self {
        self.natural_time = natural_time;
        self
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn s_sum(&self) -> f64 {
        self.s_sum
    }

    pub fn t_sum(&self) -> f64 {
        self.t_sum
    }

    pub fn natural_time(&self) -> f64 {
        self.natural_time
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.x
    }

    /// Recomputes the cached sums from the coordinates.
    pub fn resync(&mut self) {
        let (s, t) = sums(&self.x);
        self.s_sum = s;
        self.t_sum = t;
    }

    /// Whether the cached sums agree with freshly recomputed ones within
    /// `1e-9 · n` relative tolerance.
    pub fn sums_consistent(&self) -> bool {
        let (s, t) = sums(&self.x);
        let tol = 1e-9 * self.n() as f64;
        let scale = 1.0 + t;
        (s - self.s_sum).abs() <= tol * scale && (t - self.t_sum).abs() <= tol * scale && self.t_sum >= 0.0
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [f64], &mut f64, &mut f64, &mut f64) {
        (&mut self.x, &mut self.s_sum, &mut self.t_sum, &mut self.natural_time)
    }
}

pub(crate) fn sums(x: &[f64]) -> (f64, f64) {
    x.iter().fold((0.0, 0.0), |(s, t), &v| (s + v, t + v * v))
}

/// Writes the drift of every coordinate into `out`. With `interaction`
/// off only `φ'` remains (diagnostic mode).
#[inline]
pub(crate) fn drift_into(x: &[f64], s: f64, t: f64, phi: &PhiModel, interaction: bool, out: &mut [f64]) {
    let r = if interaction { s / (t + 1.0) } else { 0.0 };
    let r2 = r * r;
    match phi.kind() {
        PhiKind::Gaussian { sigma_sq } => {
            let k = -0.5 / sigma_sq;
            for (o, &xj) in out.iter_mut().zip(x) {
                *o = k * xj + 0.5 * (r - xj * r2);
            }
        }
        PhiKind::Custom { phi_prime, .. } => {
            for (o, &xj) in out.iter_mut().zip(x) {
                *o = phi_prime(xj) + 0.5 * (r - xj * r2);
            }
        }
    }
}

/// Drift of the interacting system at `state`.
pub fn drift_vector(state: &ParticleState, phi: &PhiModel) -> Vec<f64> {
    let mut out = vec![0.0; state.n()];
    drift_into(&state.x, state.s_sum, state.t_sum, phi, true, &mut out);
    out
}

/// The unnormalized equilibrium density on `ℝⁿ`.
#[derive(Debug, Clone)]
pub struct StarDensity {
    pub phi: PhiModel,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfinementDiagnostics {
    /// `⟨∇ log f*(x), x⟩`.
    pub inner_product: f64,
    /// `S²/(T+1)² + 2C(n + ‖x‖²)`.
    pub bound: f64,
    /// `S²/(T+1)²`, never larger than `n`.
    pub ratio_term: f64,
}

impl StarDensity {
    pub fn new(phi: PhiModel, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::contract("density dimension must be >= 1"));
        }
        Ok(StarDensity { phi, n })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::contract(format!(
                "expected a point of dimension {}, got {}",
                self.n,
                x.len()
            )));
        }
        Ok(())
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.log_density_unchecked(x))
    }

    pub(crate) fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        let (s, t) = sums(x);
        let pot: f64 = x.iter().map(|&v| self.phi.phi(v)).sum();
        0.5 * s * s / (t + 1.0) + 2.0 * pot
    }

    pub fn grad_log_density(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut g = vec![0.0; self.n];
        self.grad_into(x, &mut g);
        Ok(g)
    }

    /// `∂_j log f* = r − x_j r² + 2φ'(x_j)` with `r = S/(T+1)`.
    pub(crate) fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let (s, t) = sums(x);
        let r = s / (t + 1.0);
        let r2 = r * r;
        for (o, &xj) in out.iter_mut().zip(x) {
            *o = r - xj * r2 + 2.0 * self.phi.phi_prime(xj);
        }
    }

    pub fn confinement_diagnostics(&self, x: &[f64]) -> Result<ConfinementDiagnostics> {
        let g = self.grad_log_density(x)?;
        let inner_product = g.iter().zip(x).map(|(a, b)| a * b).sum();
        let (s, t) = sums(x);
        let ratio_term = (s / (t + 1.0)).powi(2);
        let bound = ratio_term + 2.0 * self.phi.confinement_constant() * (self.n as f64 + t);
        Ok(ConfinementDiagnostics {
            inner_product,
            bound,
            ratio_term,
        })
    }
}

pub fn log_density_star(x: &[f64], model: &StarDensity) -> Result<f64> {
    model.log_density(x)
}

pub fn grad_log_density_star(x: &[f64], model: &StarDensity) -> Result<Vec<f64>> {
    model.grad_log_density(x)
}

pub fn confinement_diagnostics(x: &[f64], model: &StarDensity) -> Result<ConfinementDiagnostics> {
    model.confinement_diagnostics(x)
}
