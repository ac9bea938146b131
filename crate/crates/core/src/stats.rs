//! Goodness-of-fit and path statistics.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::particle::RescaledPath;

/// Terms kept in the Kolmogorov series.
const KOLMOGOROV_TERMS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GofReport {
    #[serde(rename = "ks")]
    pub ks_statistic: f64,
    #[serde(rename = "p")]
    pub p_value_approx: f64,
    #[serde(rename = "m")]
    pub sample_size: usize,
    /// Raw moments of the (first) sample, orders 1..=4.
    pub moments: BTreeMap<u32, f64>,
}

/// Asymptotic Kolmogorov tail `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        // The alternating series has not started converging; Q is 1 to
        // within 1e-10 here.
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=KOLMOGOROV_TERMS {
        let kf = k as f64;
        sum += sign * (-2.0 * kf * kf * lambda * lambda).exp();
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// p-value for statistic `d` at effective sample size `ne`, with Stephens'
/// finite-size correction.
pub fn ks_p_value(d: f64, ne: f64) -> f64 {
    let rn = ne.sqrt();
    kolmogorov_q((rn + 0.12 + 0.11 / rn) * d)
}

fn sorted_finite(sample: &[f64], what: &str) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::contract(format!("{what} is empty")));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract(format!("{what} has non-finite entries")));
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn raw_moments(sample: &[f64]) -> BTreeMap<u32, f64> {
    let m = sample.len() as f64;
    (1..=4)
        .map(|k| (k, sample.iter().map(|v| v.powi(k as i32)).sum::<f64>() / m))
        .collect()
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<GofReport> {
    let xs = sorted_finite(sample, "sample")?;
    let m = xs.len() as f64;
    let d = xs.iter().enumerate().fold(0.0f64, |acc, (i, &x)| {
        let f = cdf(x);
        let lo = (f - i as f64 / m).abs();
        let hi = (f - (i + 1) as f64 / m).abs();
        acc.max(lo).max(hi)
    });
    Ok(GofReport {
        ks_statistic: d.min(1.0),
        p_value_approx: ks_p_value(d, m),
        sample_size: xs.len(),
        moments: raw_moments(sample),
    })
}

/// Two-sample Kolmogorov–Smirnov test. Moments in the report are those of `a`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<GofReport> {
    let xa = sorted_finite(a, "first sample")?;
    let xb = sorted_finite(b, "second sample")?;
    let (na, nb) = (xa.len(), xb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < na && j < nb {
        // Step past every copy of the smaller value so ties are handled.
        let v = xa[i].min(xb[j]);
        while i < na && xa[i] <= v {
            i += 1;
        }
        while j < nb && xb[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    Ok(GofReport {
        ks_statistic: d.min(1.0),
        p_value_approx: ks_p_value(d, ne),
        sample_size: na,
        moments: raw_moments(a),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub value: f64,
    /// Standard error of the sample mean of `x^k`.
    pub stderr: f64,
}

/// Raw empirical moments with their standard errors.
pub fn empirical_moments(sample: &[f64], orders: &[u32]) -> Result<BTreeMap<u32, MomentEstimate>> {
    if sample.is_empty() {
        return Err(Error::contract("sample is empty"));
    }
    let m = sample.len() as f64;
    Ok(orders
        .iter()
        .map(|&k| {
            let value = sample.iter().map(|v| v.powi(k as i32)).sum::<f64>() / m;
            let second = sample.iter().map(|v| v.powi(2 * k as i32)).sum::<f64>() / m;
            let stderr = ((second - value * value).max(0.0) / m).sqrt();
            (k, MomentEstimate { value, stderr })
        })
        .collect())
}

pub fn mean(sample: &[f64]) -> f64 {
    sample.iter().sum::<f64>() / sample.len() as f64
}

/// Unbiased sample variance.
pub fn variance(sample: &[f64]) -> f64 {
    let mu = mean(sample);
    sample.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (sample.len() as f64 - 1.0)
}

pub fn median(sample: &[f64]) -> Result<f64> {
    let v = sorted_finite(sample, "sample")?;
    let k = v.len();
    Ok(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

/// Geyer's initial-positive-sequence estimate of the effective sample size.
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let m = series.len();
    if m < 4 {
        return m as f64;
    }
    let mu = mean(series);
    let c0 = series.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / m as f64;
    if c0 <= 0.0 {
        return m as f64;
    }
    let acf = |lag: usize| -> f64 {
        (0..m - lag).map(|i| (series[i] - mu) * (series[i + lag] - mu)).sum::<f64>() / (m as f64 * c0)
    };
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < m {
        let pair = acf(lag) + acf(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (m as f64 / tau.max(1.0)).min(m as f64)
}

/// First record time at which the path leaves `(−k, k)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExitTime {
    At(f64),
    Never,
}

impl ExitTime {
    /// `Never` maps to `+∞`.
    pub fn as_f64(&self) -> f64 {
        match self {
            ExitTime::At(t) => *t,
            ExitTime::Never => f64::INFINITY,
        }
    }
}

impl Serialize for ExitTime {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExitTime::At(t) => s.serialize_f64(*t),
            ExitTime::Never => s.serialize_str("never"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitTimeReport {
    pub k: f64,
    pub first_exit_rescaled: ExitTime,
    pub sup_abs_s: f64,
    pub sup_abs_t: f64,
}

/// Sup-norms of `S̃` and `T̃` and the record-grid exit time from the box
/// `[−k, k]²` (first record with `|S̃| ≥ k` or `|T̃| ≥ k`).
pub fn path_extrema(path: &RescaledPath, k: f64) -> Result<ExitTimeReport> {
    if path.is_empty() {
        return Err(Error::contract("path is empty"));
    }
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let first_exit = (0..path.len())
        .find(|&i| path.s_tilde[i].abs() >= k || path.t_tilde[i].abs() >= k)
        .map_or(ExitTime::Never, |i| ExitTime::At(path.times[i]));
    Ok(ExitTimeReport {
        k,
        first_exit_rescaled: first_exit,
        sup_abs_s: sup(&path.s_tilde),
        sup_abs_t: sup(&path.t_tilde),
    })
}

/// Least-squares slope of `ln(median)` against `ln(n)`.
pub fn collapsing_scaling(per_n_medians: &BTreeMap<u64, f64>) -> Result<f64> {
    if per_n_medians.len() < 3 {
        return Err(Error::contract("need at least three distinct n values"));
    }
    if per_n_medians.iter().any(|(&n, &m)| n == 0 || !(m > 0.0)) {
        return Err(Error::contract("n and medians must be positive"));
    }
    let pts: Vec<(f64, f64)> = per_n_medians
        .iter()
        .map(|(&n, &m)| ((n as f64).ln(), m.ln()))
        .collect();
    Ok(ls_slope(&pts))
}

pub(crate) fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `erfc` with relative error below 1.2e-7 (Numerical Recipes' Chebyshev fit).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.265_512_23
            + t * (1.000_023_68
                + t * (0.374_091_96
                    + t * (0.096_784_18
                        + t * (-0.186_288_06
                            + t * (0.278_868_07
                                + t * (-1.135_203_98
                                    + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Domain};
    use proptest::prelude::*;

    fn path(s: Vec<f64>, t: Vec<f64>) -> RescaledPath {
        RescaledPath {
            n: 1,
            sigma_sq: 1.0,
            seed: 0,
            replica: 0,
            times: (0..s.len()).map(|i| i as f64).collect(),
            s_tilde: s,
            t_tilde: t,
            snapshots: None,
        }
    }

    /// Inverse of `normal_cdf` by bisection; test-only oracle.
    fn normal_quantile(p: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn single_point_at_the_median() {
        let r = ks_one_sample(&[0.0], normal_cdf).unwrap();
        assert!((r.ks_statistic - 0.5).abs() < 1e-7);
        assert!(ks_one_sample(&[], normal_cdf).is_err());
    }

    #[test]
    fn plug_in_quantiles_give_half_over_m() {
        let m = 200;
        let q: Vec<f64> = (1..=m).map(|i| normal_quantile((i as f64 - 0.5) / m as f64)).collect();
        // The approximate normal CDF is accurate to ~1e-7, bisection inverts it exactly.
        let r = ks_one_sample(&q, normal_cdf).unwrap();
        assert!((r.ks_statistic - 0.5 / m as f64).abs() < 1e-9);
    }

    #[test]
    fn calibrated_under_the_null() {
        let mut passes = 0;
        for trial in 0..100u64 {
            let mut r = rng::stream(1234, Domain::Oracle, trial, 0);
            let xs: Vec<f64> = (0..10_000).map(|_| rng::standard_normal(&mut r)).collect();
            if ks_one_sample(&xs, normal_cdf).unwrap().p_value_approx > 0.01 {
                passes += 1;
            }
        }
        assert!(passes >= 98, "{passes}/100");
    }

    #[test]
    fn two_sample_examples() {
        let a = [0.3, 1.2, -0.4, 2.2];
        assert_eq!(ks_two_sample(&a, &a).unwrap().ks_statistic, 0.0);
        let lo: Vec<f64> = (0..10).map(f64::from).collect();
        let hi: Vec<f64> = (100..110).map(f64::from).collect();
        assert_eq!(ks_two_sample(&lo, &hi).unwrap().ks_statistic, 1.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]).unwrap().ks_statistic, 1.0);
        assert!(ks_two_sample(&[], &[1.0]).is_err());
        // Ties across samples do not inflate the statistic.
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0, 2.0, 1.0]).unwrap().ks_statistic, 0.0);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Q(1.3581) ≈ 0.05, Q(1.6276) ≈ 0.01.
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 1e-4);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn moment_examples() {
        let m = empirical_moments(&[1.0, -1.0], &[1, 2]).unwrap();
        assert_eq!(m[&1].value, 0.0);
        assert_eq!(m[&2].value, 1.0);
        assert_eq!(empirical_moments(&[2.0], &[4]).unwrap()[&4].value, 16.0);
        assert!(empirical_moments(&[], &[1]).is_err());

        let mut r = rng::stream(5, Domain::Oracle, 0, 0);
        let xs: Vec<f64> = (0..1_000_000).map(|_| rng::standard_normal(&mut r)).collect();
        let m4 = empirical_moments(&xs, &[4]).unwrap()[&4];
        assert!((m4.value - 3.0).abs() < 3.0 * m4.stderr);
    }

    #[test]
    fn symmetrized_sample_has_zero_odd_moments() {
        let xs = [0.3, 1.7, -2.2, 0.9];
        let sym: Vec<f64> = xs.iter().flat_map(|&v| [v, -v]).collect();
        let m = empirical_moments(&sym, &[1, 3, 5]).unwrap();
        assert!(m.values().all(|e| e.value == 0.0));
    }

    #[test]
    fn extrema_examples() {
        let flat = path_extrema(&path(vec![0.0; 3], vec![0.0; 3]), 1.0).unwrap();
        assert_eq!(flat.first_exit_rescaled, ExitTime::Never);
        assert_eq!((flat.sup_abs_s, flat.sup_abs_t), (0.0, 0.0));
        let bump = path_extrema(&path(vec![0.0; 3], vec![0.0, 3.0, 0.0]), 2.0).unwrap();
        assert_eq!(bump.first_exit_rescaled, ExitTime::At(1.0));
        assert_eq!(bump.sup_abs_t, 3.0);
        assert_eq!(serde_json::to_string(&ExitTime::Never).unwrap(), "\"never\"");
    }

    #[test]
    fn scaling_fit_examples() {
        let pow: BTreeMap<u64, f64> = [64u64, 256, 1024].iter().map(|&n| (n, 3.0 * (n as f64).powf(-0.125))).collect();
        assert!((collapsing_scaling(&pow).unwrap() + 0.125).abs() < 1e-12);
        let flat: BTreeMap<u64, f64> = [(1, 2.0), (2, 2.0), (5, 2.0)].into_iter().collect();
        assert_eq!(collapsing_scaling(&flat).unwrap(), 0.0);
        let two: BTreeMap<u64, f64> = [(1, 2.0), (2, 2.0)].into_iter().collect();
        assert!(collapsing_scaling(&two).is_err());
    }

    #[test]
    fn ess_of_white_noise_is_close_to_length() {
        let mut r = rng::stream(9, Domain::Oracle, 0, 0);
        let xs: Vec<f64> = (0..4000).map(|_| rng::standard_normal(&mut r)).collect();
        let ess = effective_sample_size(&xs);
        assert!(ess > 3000.0, "{ess}");
        // AR(1) with coefficient 0.9 has ESS ≈ m (1−ρ)/(1+ρ).
        let mut ar = vec![0.0; 20_000];
        for i in 1..ar.len() {
            ar[i] = 0.9 * ar[i - 1] + rng::standard_normal(&mut r);
        }
        let e = effective_sample_size(&ar);
        assert!(e > 500.0 && e < 1700.0, "{e}");
    }

    proptest! {
        #[test]
        fn ks_is_invariant_under_monotone_transforms(seed in 0u64..1000) {
            let mut r = rng::stream(seed, Domain::Oracle, 0, 0);
            let xs: Vec<f64> = (0..300).map(|_| rng::standard_normal(&mut r)).collect();
            let a = ks_one_sample(&xs, normal_cdf).unwrap().ks_statistic;
            // y = x³ + x is strictly increasing; invert it with bisection in the CDF.
            let ys: Vec<f64> = xs.iter().map(|x| x * x * x + x).collect();
            let inv = |y: f64| {
                let (mut lo, mut hi) = (-20.0f64, 20.0f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid * mid * mid + mid < y { lo = mid } else { hi = mid }
                }
                0.5 * (lo + hi)
            };
            let b = ks_one_sample(&ys, |y| normal_cdf(inv(y))).unwrap().ks_statistic;
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn exit_time_is_monotone_in_k(seed in 0u64..1000, k1 in 0.1f64..3.0, dk in 0.0f64..2.0) {
            let mut r = rng::stream(seed, Domain::Oracle, 1, 0);
            let s: Vec<f64> = (0..50).map(|_| rng::standard_normal(&mut r)).collect();
            let t: Vec<f64> = (0..50).map(|_| rng::standard_normal(&mut r)).collect();
            let p = path(s, t);
            let e1 = path_extrema(&p, k1).unwrap().first_exit_rescaled.as_f64();
            let e2 = path_extrema(&p, k1 + dk).unwrap().first_exit_rescaled.as_f64();
            prop_assert!(e1 <= e2);
        }

        #[test]
        fn p_value_decreases_with_the_statistic(d1 in 0.0f64..0.2, dd in 0.0f64..0.2) {
            prop_assert!(ks_p_value(d1 + dd, 1000.0) <= ks_p_value(d1, 1000.0));
        }
    }
}
