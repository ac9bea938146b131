//! Generators of the particle system, of the rescaled pair `(S̃, T̃)` and of
//! the limit diffusion, plus the perturbed test functions, remainders,
//! martingale residuals and collapsing checks built on them.
//!
//! Coordinates: `x = S̃`, `y = T̃`. With `q = n^{1/4}`,
//! `T + 1 = nσ²/h_n(y)` where `h_n(y) = 1/(1 + y/(qσ²) + 1/(nσ²))`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::sums;
use crate::particle::{rescale, RescaledPath};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Step and tolerance of the derivative probes run at construction.
const FD_STEP: f64 = 1e-4;
const FD_TOL: f64 = 1e-5;

/// A scalar `C⁴` function with its first four derivatives.
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    d: [RealFn; 5],
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction").field("name", &self.name).finish()
    }
}

fn arc<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> RealFn {
    Arc::new(f)
}

impl TestFunction {
    /// Builds a test function from `[f, f', f'', f⁽³⁾, f⁽⁴⁾]`, checking each
    /// derivative against a central difference of the previous one on
    /// `[−2, 2]`.
    pub fn new(name: impl Into<String>, derivatives: [RealFn; 5]) -> Result<Self> {
        let tf = TestFunction {
            name: name.into(),
            d: derivatives,
        };
        for i in 0..=32 {
            let x = -2.0 + 0.125 * i as f64;
            for k in 0..4 {
                let fd = (tf.d[k](x + FD_STEP) - tf.d[k](x - FD_STEP)) / (2.0 * FD_STEP);
                let an = tf.d[k + 1](x);
                if !(an.is_finite() && (fd - an).abs() <= FD_TOL * an.abs().max(1.0)) {
                    return Err(Error::InvalidModel(format!(
                        "{}: derivative {} disagrees with finite differences at x = {x} ({an} vs {fd})",
                        tf.name,
                        k + 1
                    )));
                }
            }
        }
        Ok(tf)
    }

    pub fn constant(c: f64) -> Self {
        let zero = || arc(|_| 0.0);
        TestFunction::new(format!("{c}"), [arc(move |_| c), zero(), zero(), zero(), zero()]).expect("constant")
    }

    /// `x^k` for `k ≤ 4`.
    pub fn monomial(k: u32) -> Self {
        assert!(k <= 4, "monomials above degree 4 are not provided");
        let falling = |j: u32| -> f64 { (0..j).map(|i| (k - i) as f64).product() };
        let d: [RealFn; 5] = std::array::from_fn(|j| {
            let j = j as u32;
            if j > k {
                arc(|_| 0.0)
            } else {
                let c = falling(j);
                let p = (k - j) as i32;
                arc(move |x: f64| c * x.powi(p))
            }
        });
        let name = match k {
            0 => "1".to_string(),
            1 => "x".to_string(),
            _ => format!("x^{k}"),
        };
        TestFunction::new(name, d).expect("monomial")
    }

    pub fn sin() -> Self {
        TestFunction::new(
            "sin x",
            [arc(f64::sin), arc(f64::cos), arc(|x| -x.sin()), arc(|x| -x.cos()), arc(f64::sin)],
        )
        .expect("sin")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `[f, f', f'', f⁽³⁾, f⁽⁴⁾]` at `x`.
    pub fn derivatives(&self, x: f64) -> [f64; 5] {
        std::array::from_fn(|k| self.d[k](x))
    }

    pub fn value(&self, x: f64) -> f64 {
        self.d[0](x)
    }
}

/// Value and partials up to second order of a two-argument function.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Partials2 {
    pub v: f64,
    pub x: f64,
    pub y: f64,
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

/// A `C²` function of `(x, y)` with analytic partials.
pub trait Fn2d: Sync {
    fn partials(&self, x: f64, y: f64) -> Partials2;
}

/// A test function seen as a function of `x` only.
impl Fn2d for TestFunction {
    fn partials(&self, x: f64, _y: f64) -> Partials2 {
        let d = self.derivatives(x);
        Partials2 {
            v: d[0],
            x: d[1],
            xx: d[2],
            ..Partials2::default()
        }
    }
}

impl<F: Fn(f64, f64) -> Partials2 + Sync> Fn2d for F {
    fn partials(&self, x: f64, y: f64) -> Partials2 {
        self(x, y)
    }
}

/// `Σ c · x^i · y^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly2 {
    pub terms: Vec<(f64, u32, u32)>,
}

impl Poly2 {
    pub fn new(terms: Vec<(f64, u32, u32)>) -> Self {
        Poly2 { terms }
    }

    pub fn monomial(i: u32, j: u32) -> Self {
        Poly2::new(vec![(1.0, i, j)])
    }
}

fn pow_d(v: f64, p: u32, order: u32) -> f64 {
    if order > p {
        return 0.0;
    }
    let c: f64 = (0..order).map(|i| (p - i) as f64).product();
    c * v.powi((p - order) as i32)
}

impl Fn2d for Poly2 {
    fn partials(&self, x: f64, y: f64) -> Partials2 {
        let mut out = Partials2::default();
        for &(c, i, j) in &self.terms {
            out.v += c * pow_d(x, i, 0) * pow_d(y, j, 0);
            out.x += c * pow_d(x, i, 1) * pow_d(y, j, 0);
            out.y += c * pow_d(x, i, 0) * pow_d(y, j, 1);
            out.xx += c * pow_d(x, i, 2) * pow_d(y, j, 0);
            out.xy += c * pow_d(x, i, 1) * pow_d(y, j, 1);
            out.yy += c * pow_d(x, i, 0) * pow_d(y, j, 2);
        }
        out
    }
}

/// A point `(S̃, T̃)` together with the `n` and `σ²` it refers to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorPoint {
    pub x: f64,
    pub y: f64,
    pub n: usize,
    pub sigma_sq: f64,
}

impl GeneratorPoint {
    pub fn new(x: f64, y: f64, n: usize, sigma_sq: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::contract("n must be >= 1"));
        }
        if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
            return Err(Error::contract("sigma_sq must be positive"));
        }
        let floor = -sigma_sq * (n as f64).powf(0.25);
        if !(y > floor) {
            return Err(Error::Domain(format!("y = {y} is not above −σ²n^(1/4) = {floor}")));
        }
        Ok(GeneratorPoint { x, y, n, sigma_sq })
    }

    /// The point induced by a particle configuration.
    pub fn from_configuration(config: &[f64], sigma_sq: f64) -> Result<Self> {
        let (s, t) = sums(config);
        let (x, y) = rescale(s, t, config.len(), sigma_sq);
        GeneratorPoint::new(x, y, config.len(), sigma_sq)
    }

    fn q(&self) -> f64 {
        (self.n as f64).powf(0.25)
    }

    pub fn h(&self) -> f64 {
        h_n(self.y, self.n, self.sigma_sq)
    }
}

/// `h_n(y) = nσ²/(T+1)`.
pub fn h_n(y: f64, n: usize, sigma_sq: f64) -> f64 {
    let nf = n as f64;
    1.0 / (1.0 + y / (nf.powf(0.25) * sigma_sq) + 1.0 / (nf * sigma_sq))
}

/// `√n (h_n − 1 + y/(n^{1/4}σ²) − y²/(√n σ⁴))`, evaluated without the
/// cancellation of the direct form.
pub fn eps1(y: f64, n: usize, sigma_sq: f64) -> f64 {
    let nf = n as f64;
    let c = 1.0 / (nf * sigma_sq);
    let u = y / (nf.powf(0.25) * sigma_sq) + c;
    nf.sqrt() * (-u * u * u / (1.0 + u) - c * (1.0 - 2.0 * u + c))
}

/// `h_n² − 1`.
pub fn eps2(y: f64, n: usize, sigma_sq: f64) -> f64 {
    let h = h_n(y, n, sigma_sq);
    h * h - 1.0
}

/// `½ f'' − x³ f'/(2σ⁴)`.
pub fn apply_g_sigma(f: &TestFunction, x: f64, sigma_sq: f64) -> f64 {
    let d = f.derivatives(x);
    0.5 * d[2] - x * x * x * d[1] / (2.0 * sigma_sq * sigma_sq)
}

/// Exact generator of `(S̃, T̃)` split into its leading part and remainders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorDecomposition {
    pub exact: f64,
    /// `−√n y/σ² f_y − n^{1/4}xy/(2σ⁴) f_x + (xy² − x³σ²)/(2σ⁶) f_x + ½f_xx + 2σ² f_yy`.
    pub truncated: f64,
    /// Coefficient remainder of `f_x`.
    pub r1: f64,
    /// Coefficient remainder of `f_y`.
    pub r2: f64,
    /// `exact − truncated`: `f_x R1 + f_y R2 + 2x/n^{1/4} f_xy + 2y/n^{1/4} f_yy`.
    pub remainder: f64,
}

pub fn g_tilde_decomposition<F: Fn2d + ?Sized>(f: &F, p: &GeneratorPoint) -> Result<GeneratorDecomposition> {
    let p = GeneratorPoint::new(p.x, p.y, p.n, p.sigma_sq)?;
    let (x, y, s2) = (p.x, p.y, p.sigma_sq);
    let s4 = s2 * s2;
    let nf = p.n as f64;
    let (q, rn) = (p.q(), nf.sqrt());
    let h = p.h();
    let d = f.partials(x, y);

    let coef_x = -(rn * x / (2.0 * s2)) * (1.0 - h) - x * x * x * h * h / (2.0 * s4);
    let coef_y = -rn * y / s2 + x * x * h * h / (q * q * q * s4);
    let exact = coef_x * d.x
        + coef_y * d.y
        + 0.5 * d.xx
        + 2.0 * x / q * d.xy
        + (2.0 * y / q + 2.0 * s2) * d.yy;

    let truncated = -rn * y / s2 * d.y - q * x * y / (2.0 * s4) * d.x
        + (x * y * y - x * x * x * s2) / (2.0 * s4 * s2) * d.x
        + 0.5 * d.xx
        + 2.0 * s2 * d.yy;

    let r1 = x * eps1(y, p.n, s2) / (2.0 * s2) - x * x * x * eps2(y, p.n, s2) / (2.0 * s4);
    let r2 = x * x * h * h / (q * q * q * s4);
    let remainder = d.x * r1 + d.y * r2 + 2.0 * x / q * d.xy + 2.0 * y / q * d.yy;
    Ok(GeneratorDecomposition {
        exact,
        truncated,
        r1,
        r2,
        remainder,
    })
}

/// Exact generator of `(S̃, T̃)` applied to `f` at `p`.
pub fn apply_g_tilde_n<F: Fn2d + ?Sized>(f: &F, p: &GeneratorPoint) -> Result<f64> {
    Ok(g_tilde_decomposition(f, p)?.exact)
}

/// `∂_jΨ_f` and `∂²_jΨ_f` for `Ψ_f(x) = f(S̃(x), T̃(x))`.
pub fn psi_partials<F: Fn2d + ?Sized>(config: &[f64], j: usize, f: &F, sigma_sq: f64) -> (f64, f64) {
    let n = config.len();
    let (s, t) = sums(config);
    let (x, y) = rescale(s, t, n, sigma_sq);
    let d = f.partials(x, y);
    let nf = n as f64;
    let a = nf.powf(-0.75);
    let xj = config[j];
    let first = a * (d.x + 2.0 * xj * d.y);
    let second = a * a * (d.xx + 4.0 * xj * d.xy + 4.0 * xj * xj * d.yy) + 2.0 * a * d.y;
    (first, second)
}

/// `√n · L_nΨ_f` summed coordinate by coordinate, for Gaussian `φ`.
pub fn sqrtn_ln_psi<F: Fn2d + ?Sized>(config: &[f64], f: &F, sigma_sq: f64) -> f64 {
    let n = config.len();
    let (s, t) = sums(config);
    let (x, y) = rescale(s, t, n, sigma_sq);
    let d = f.partials(x, y);
    let nf = n as f64;
    let a = nf.powf(-0.75);
    let r = s / (t + 1.0);
    let r2 = r * r;
    let total: f64 = config
        .iter()
        .map(|&xj| {
            let b = 0.5 * (r - xj * r2) - xj / (2.0 * sigma_sq);
            let first = a * (d.x + 2.0 * xj * d.y);
            let second = a * a * (d.xx + 4.0 * xj * d.xy + 4.0 * xj * xj * d.yy) + 2.0 * a * d.y;
            b * first + 0.5 * second
        })
        .sum();
    nf.sqrt() * total
}

/// `H_f`, `K_f` and `F_{n,f}` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationValues {
    pub h: f64,
    pub k: f64,
    pub f: f64,
}

/// `H_f = −xy f'/(2σ²)`, `K_f = y²(3x f' + x² f'')/(8σ⁴)`,
/// `F = f + n^{−1/4} H_f + n^{−1/2} K_f`.
pub fn perturbation_terms(f: &TestFunction, x: f64, y: f64, n: usize, sigma_sq: f64) -> PerturbationValues {
    let p = Perturbed::new(f, n, sigma_sq).partials(x, y);
    let d = f.derivatives(x);
    let h = -x * y * d[1] / (2.0 * sigma_sq);
    let k = y * y * (3.0 * x * d[1] + x * x * d[2]) / (8.0 * sigma_sq * sigma_sq);
    PerturbationValues { h, k, f: p.v }
}

/// `F_{n,f}` as a two-argument function.
#[derive(Debug, Clone, Copy)]
pub struct Perturbed<'a> {
    pub f: &'a TestFunction,
    pub n: usize,
    pub sigma_sq: f64,
}

impl<'a> Perturbed<'a> {
    pub fn new(f: &'a TestFunction, n: usize, sigma_sq: f64) -> Self {
        Perturbed { f, n, sigma_sq }
    }
}

impl Fn2d for Perturbed<'_> {
    fn partials(&self, x: f64, y: f64) -> Partials2 {
        let [f0, f1, f2, f3, f4] = self.f.derivatives(x);
        let s2 = self.sigma_sq;
        let (a, b) = (-1.0 / (2.0 * s2), 1.0 / (8.0 * s2 * s2));
        let e = (self.n as f64).powf(-0.25);
        let e2 = e * e;

        // H = a·x·y·f'
        let h = a * x * y * f1;
        let h_x = a * y * (f1 + x * f2);
        let h_y = a * x * f1;
        let h_xx = a * y * (2.0 * f2 + x * f3);
        let h_xy = a * (f1 + x * f2);

        // K = b·y²·g, g = 3x f' + x² f''
        let g = 3.0 * x * f1 + x * x * f2;
        let g1 = 3.0 * f1 + 5.0 * x * f2 + x * x * f3;
        let g2 = 8.0 * f2 + 7.0 * x * f3 + x * x * f4;
        let k = b * y * y * g;
        let k_x = b * y * y * g1;
        let k_y = 2.0 * b * y * g;
        let k_xx = b * y * y * g2;
        let k_xy = 2.0 * b * y * g1;
        let k_yy = 2.0 * b * g;

        Partials2 {
            v: f0 + e * h + e2 * k,
            x: f1 + e * h_x + e2 * k_x,
            y: e * h_y + e2 * k_y,
            xx: f2 + e * h_xx + e2 * k_xx,
            xy: e * h_xy + e2 * k_xy,
            yy: e2 * k_yy,
        }
    }
}

/// Grid points of `[−k, k]²` (`density` per axis) inside the disk of radius `k`.
fn disk_grid(k: f64, density: usize) -> Vec<(f64, f64)> {
    let step = 2.0 * k / (density - 1) as f64;
    let mut pts = Vec::new();
    for i in 0..density {
        for j in 0..density {
            let (x, y) = (-k + step * i as f64, -k + step * j as f64);
            if x * x + y * y <= k * k * (1.0 + 1e-12) {
                pts.push((x, y));
            }
        }
    }
    pts
}

/// `max |G̃_n F_{n,f} − G_σ f|` over grid points of the disk `‖(x,y)‖ ≤ k`.
pub fn remainder_sup(
    f: &TestFunction,
    n: usize,
    k: f64,
    sigma_sq: f64,
    grid_density: usize,
    exec: Execution,
) -> Result<f64> {
    if grid_density < 2 || !(k > 0.0) {
        return Err(Error::contract("need k > 0 and at least two grid points per axis"));
    }
    let floor = sigma_sq * (n as f64).powf(0.25);
    if k >= floor {
        return Err(Error::Domain(format!("k = {k} must be below σ²n^(1/4) = {floor}")));
    }
    let pts = disk_grid(k, grid_density);
    let big_f = Perturbed::new(f, n, sigma_sq);
    let m = exec::max_indexed(pts.len(), exec, |i| {
        let (x, y) = pts[i];
        let p = GeneratorPoint { x, y, n, sigma_sq };
        match apply_g_tilde_n(&big_f, &p) {
            Ok(g) => (g - apply_g_sigma(f, x, sigma_sq)).abs(),
            Err(_) => f64::NAN,
        }
    });
    if m.is_nan() {
        return Err(Error::Domain("remainder evaluation left the domain of h_n".into()));
    }
    Ok(m)
}

/// `M_{n,f}` and its predictable quadratic variation along one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleSeries {
    pub times: Vec<f64>,
    pub residual: Vec<f64>,
    pub quadratic_variation: Vec<f64>,
    /// Largest change of the drift integrand between consecutive records,
    /// relative to its sup over the path.
    pub max_relative_jump: f64,
    /// Set when `max_relative_jump` exceeds 10%.
    pub coarse_stride: bool,
}

impl MartingaleSeries {
    pub fn terminal(&self) -> f64 {
        *self.residual.last().unwrap_or(&0.0)
    }
}

/// `F(S̃_t, T̃_t) − F(S̃_0, T̃_0) − ∫₀ᵗ G̃_nF ds` with `F = F_{n,f}`, by the
/// trapezoid rule on the record grid. The quadratic variation integrates
/// `F_x² + 4x n^{−1/4} F_xF_y + 4(σ² + y n^{−1/4}) F_y²`.
pub fn martingale_residual(path: &RescaledPath, f: &TestFunction) -> Result<MartingaleSeries> {
    if path.is_empty() {
        return Err(Error::contract("path is empty"));
    }
    let (n, s2) = (path.n, path.sigma_sq);
    let e = (n as f64).powf(-0.25);
    let big_f = Perturbed::new(f, n, s2);
    let mut values = Vec::with_capacity(path.len());
    let mut drift = Vec::with_capacity(path.len());
    let mut carre = Vec::with_capacity(path.len());
    for i in 0..path.len() {
        let p = GeneratorPoint::new(path.s_tilde[i], path.t_tilde[i], n, s2)?;
        let d = big_f.partials(p.x, p.y);
        values.push(d.v);
        drift.push(apply_g_tilde_n(&big_f, &p)?);
        carre.push(d.x * d.x + 4.0 * p.x * e * d.x * d.y + 4.0 * (s2 + p.y * e) * d.y * d.y);
    }
    let mut residual = vec![0.0; path.len()];
    let mut qv = vec![0.0; path.len()];
    let (mut int_drift, mut int_qv) = (0.0, 0.0);
    for i in 1..path.len() {
        let dt = path.times[i] - path.times[i - 1];
        int_drift += 0.5 * dt * (drift[i] + drift[i - 1]);
        int_qv += 0.5 * dt * (carre[i] + carre[i - 1]);
        residual[i] = values[i] - values[0] - int_drift;
        qv[i] = int_qv;
    }
    let sup = drift.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let max_jump = drift.windows(2).fold(0.0f64, |a, w| a.max((w[1] - w[0]).abs()));
    let max_relative_jump = if sup > 0.0 { max_jump / sup } else { 0.0 };
    Ok(MartingaleSeries {
        times: path.times.clone(),
        residual,
        quadratic_variation: qv,
        max_relative_jump,
        coarse_stride: max_relative_jump > 0.1,
    })
}

/// Constants of the collapsing criterion applied to `ξ_n = T̃²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollapsingConstants {
    pub n: usize,
    pub sigma_sq: f64,
    /// Half-width of the box `[−k, k]²` the path is stopped on.
    pub k: f64,
    pub kappa_n: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub d: f64,
    pub alpha_n: f64,
    pub beta_n: f64,
}

/// `x² h_n(y)²/(n^{3/4}σ⁴)`.
pub fn r2(x: f64, y: f64, n: usize, sigma_sq: f64) -> f64 {
    let h = h_n(y, n, sigma_sq);
    x * x * h * h / ((n as f64).powf(0.75) * sigma_sq * sigma_sq)
}

/// `sup_{n' ≥ n_min} sup_{[−k,k]²} |R2|`. The box sup sits at the corner
/// `(±k, −k)`; `n'` is scanned densely near `n_min` and geometrically after.
fn r2_box_sup(k: f64, n_min: usize, sigma_sq: f64) -> f64 {
    let mut sup = 0.0f64;
    let mut n = n_min;
    while n < n_min.saturating_mul(1 << 20) {
        sup = sup.max(r2(k, -k, n, sigma_sq));
        n = if n < n_min + 256 { n + 1 } else { n + n / 8 };
    }
    sup
}

impl CollapsingConstants {
    /// `κ_n = √n`, `C₂ = 2/σ²`, `C₅ = 16k²(σ²+k)`, `α_n = β_n = n^{1/4}`,
    /// `C₃ = 0` and `C₄ = 4σ² + 2k sup|R2| + 4k` with the sup over the box
    /// and over `n' ≥ n_min`. Needs `k < σ² n_min^{1/4}`.
    pub fn new(n: usize, k: f64, sigma_sq: f64, n_min: usize, d: f64) -> Result<Self> {
        if n == 0 || n_min == 0 || n < n_min {
            return Err(Error::contract("need 1 <= n_min <= n"));
        }
        if !(d > 2.0) {
            return Err(Error::contract("d must exceed 2"));
        }
        if !(k > 0.0 && sigma_sq > 0.0) {
            return Err(Error::contract("k and sigma_sq must be positive"));
        }
        let floor = sigma_sq * (n_min as f64).powf(0.25);
        if k >= floor {
            return Err(Error::Domain(format!("k = {k} must be below σ²n_min^(1/4) = {floor}")));
        }
        let nf = n as f64;
        Ok(CollapsingConstants {
            n,
            sigma_sq,
            k,
            kappa_n: nf.sqrt(),
            c2: 2.0 / sigma_sq,
            c3: 0.0,
            c4: 4.0 * sigma_sq + 2.0 * k * r2_box_sup(k, n_min, sigma_sq) + 4.0 * k,
            c5: 16.0 * k * k * (sigma_sq + k),
            d,
            alpha_n: nf.powf(0.25),
            beta_n: nf.powf(0.25),
        })
    }
}

/// Drift and bracket of `ξ_n = T̃²` at one point: `(ζ_n, ΣZ²)`.
pub fn collapsing_terms(x: f64, y: f64, n: usize, sigma_sq: f64) -> (f64, f64) {
    let nf = n as f64;
    let e = nf.powf(-0.25);
    let zeta = -(2.0 * nf.sqrt() / sigma_sq) * y * y + 4.0 * sigma_sq + 2.0 * y * r2(x, y, n, sigma_sq) + 4.0 * y * e;
    let bracket = 16.0 * y * y * (sigma_sq + y * e);
    (zeta, bracket)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollapsingViolation {
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub zeta: f64,
    pub zeta_bound: f64,
    pub bracket: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapsingReport {
    pub points_checked: usize,
    /// Record time of the first box exit, if the path left the box.
    pub exit_time: Option<f64>,
    pub drift_violations: usize,
    pub bracket_violations: usize,
    /// Smallest `bound − ζ_n` and `C₅ − ΣZ²` seen.
    pub min_drift_slack: f64,
    pub min_bracket_slack: f64,
    pub first_violation: Option<CollapsingViolation>,
}

impl CollapsingReport {
    pub fn violations(&self) -> usize {
        self.drift_violations + self.bracket_violations
    }
}

/// Checks `ζ_n ≤ −κ_nC₂ξ_n + β_nC₃ + C₄` and `ΣZ² ≤ C₅` at every record
/// point up to (not including) the first exit from `[−k, k]²`.
pub fn collapsing_inequality_check(path: &RescaledPath, c: &CollapsingConstants) -> CollapsingReport {
    let mut report = CollapsingReport {
        points_checked: 0,
        exit_time: None,
        drift_violations: 0,
        bracket_violations: 0,
        min_drift_slack: f64::INFINITY,
        min_bracket_slack: f64::INFINITY,
        first_violation: None,
    };
    for i in 0..path.len() {
        let (x, y) = (path.s_tilde[i], path.t_tilde[i]);
        if x.abs() >= c.k || y.abs() >= c.k {
            report.exit_time = Some(path.times[i]);
            break;
        }
        report.points_checked += 1;
        let (zeta, bracket) = collapsing_terms(x, y, path.n, c.sigma_sq);
        let bound = -c.kappa_n * c.c2 * y * y + c.beta_n * c.c3 + c.c4;
        let drift_slack = bound - zeta;
        let bracket_slack = c.c5 - bracket;
        report.min_drift_slack = report.min_drift_slack.min(drift_slack);
        report.min_bracket_slack = report.min_bracket_slack.min(bracket_slack);
        // Both sides carry an O(√n k²) term that cancels; allow for its rounding.
        let tol = 1e-12 * (1.0 + c.kappa_n * c.c2 * y * y + c.c4);
        let bad_drift = drift_slack < -tol;
        let bad_bracket = bracket_slack < -1e-12 * c.c5;
        report.drift_violations += bad_drift as usize;
        report.bracket_violations += bad_bracket as usize;
        if (bad_drift || bad_bracket) && report.first_violation.is_none() {
            report.first_violation = Some(CollapsingViolation {
                time: path.times[i],
                x,
                y,
                zeta,
                zeta_bound: bound,
                bracket,
            });
        }
    }
    report
}
