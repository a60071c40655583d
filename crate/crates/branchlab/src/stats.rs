//! Statistical toolkit: two-sample Kolmogorov–Smirnov, chi-square
//! goodness-of-fit, total-variation distance, and moment summaries.
//!
//! Every acceptance-style test in this repository is a fixed-seed hypothesis
//! test with a pre-registered threshold of `p > 0.001`, so runs are
//! deterministic.

use num::rational::BigRational;
use num::{Signed, Zero};
use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::BTreeMap;
use std::hash::Hash;

/// Result of a hypothesis test.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Moment summary of a real sample with a bootstrap 95% CI for the mean.
#[derive(Clone, Debug, Serialize)]
pub struct SampleSummary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    /// Central moments of orders 2, 3, 4.
    pub central: [f64; 3],
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Summarizes a sample; the CI uses `boot` bootstrap resamples from `rng`.
pub fn summarize<R: Rng + ?Sized>(xs: &[f64], boot: usize, rng: &mut R) -> SampleSummary {
    assert!(!xs.is_empty());
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let mut central = [0.0; 3];
    for &x in xs {
        let d = x - mean;
        central[0] += d * d;
        central[1] += d * d * d;
        central[2] += d * d * d * d;
    }
    for c in &mut central {
        *c /= n as f64;
    }
    let variance = if n > 1 {
        central[0] * n as f64 / (n - 1) as f64
    } else {
        0.0
    };
    let mut means: Vec<f64> = (0..boot)
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..n {
                s += xs[rng.gen_range(0..n)];
            }
            s / n as f64
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (lo, hi) = if boot > 0 {
        let l = means[(0.025 * boot as f64) as usize];
        let h = means[((0.975 * boot as f64) as usize).min(boot - 1)];
        (l.min(mean), h.max(mean))
    } else {
        (mean, mean)
    };
    SampleSummary {
        count: n,
        mean,
        variance,
        central,
        ci_lower: lo,
        ci_upper: hi,
    }
}

/// Two-sample Kolmogorov–Smirnov test: exact sup-difference of empirical
/// CDFs, asymptotic Kolmogorov p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestResult {
    assert!(!a.is_empty() && !b.is_empty(), "KS requires nonempty samples");
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.partial_cmp(v).unwrap());
    ys.sort_by(|u, v| u.partial_cmp(v).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = xs[i].min(ys[j]);
        while i < n && xs[i] <= t {
            i += 1;
        }
        while j < m && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    TestResult {
        statistic: d,
        p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d),
    }
}

/// Kolmogorov distribution survival function `Q(x) = 2 Σ (−1)^{k−1} e^{−2k²x²}`.
fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * x * x).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson chi-square goodness of fit against a fixed pmf. Bins with
/// expected count below 5 are merged (rarest first) before computing the
/// statistic; dof = merged bins − 1.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> TestResult {
    assert_eq!(observed.len(), expected.len());
    let total: u64 = observed.iter().sum();
    let psum: f64 = expected.iter().sum();
    assert!((psum - 1.0).abs() <= 1e-9, "expected pmf sums to {psum}");
    // Merge small-expectation bins, rarest first.
    let mut order: Vec<usize> = (0..expected.len()).collect();
    order.sort_by(|&i, &j| expected[i].partial_cmp(&expected[j]).unwrap());
    let mut bins: Vec<(f64, f64)> = Vec::new(); // (observed, expected count)
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for &i in &order {
        acc_o += observed[i] as f64;
        acc_e += expected[i] * total as f64;
        if acc_e >= 5.0 {
            bins.push((acc_o, acc_e));
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 {
        if let Some(last) = bins.last_mut() {
            last.0 += acc_o;
            last.1 += acc_e;
        } else {
            bins.push((acc_o, acc_e));
        }
    }
    assert!(bins.len() >= 2, "chi-square needs at least two usable bins");
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = (bins.len() - 1) as f64;
    let dist = ChiSquared::new(dof).expect("valid dof");
    TestResult {
        statistic,
        p_value: 1.0 - dist.cdf(statistic),
    }
}

/// Total-variation distance `(1/2) Σ |p − q|` over the union of supports.
pub fn tv_distance<K: Ord + Hash + Clone>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    for (name, m) in [("p", p), ("q", q)] {
        let s: f64 = m.values().sum();
        assert!((s - 1.0).abs() <= 1e-9, "{name} sums to {s}");
    }
    let mut keys: Vec<&K> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Exact rational total-variation distance.
pub fn tv_distance_exact<K: Ord + Clone>(
    p: &BTreeMap<K, BigRational>,
    q: &BTreeMap<K, BigRational>,
) -> BigRational {
    let mut keys: Vec<&K> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    let zero = BigRational::zero();
    let sum: BigRational = keys
        .iter()
        .map(|k| (p.get(k).unwrap_or(&zero) - q.get(k).unwrap_or(&zero)).abs())
        .sum();
    sum / BigRational::from_integer(2.into())
}
