//! Reference implementations used as test oracles. Each is written from the
//! definitions, without calling the code under test.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Poisson probability mass `e^-l l^k / k!`.
pub fn poisson(k: u32, lambda: f64) -> f64 {
    let fact: f64 = (1..=k).map(f64::from).product();
    (-lambda).exp() * lambda.powi(k as i32) / fact
}

/// The feature model: a Gaussian elution profile times a Poisson-weighted
/// sum of Gaussian isotope peaks.
#[allow(clippy::too_many_arguments)]
pub fn model(a: f64, mu: f64, sigma: f64, zeta0: f64, delta: f64, lambda: f64, rho: f64, n: u32, t: f64, m: f64) -> f64 {
    let elution = (-(t - mu).powi(2) / (2.0 * sigma * sigma)).exp();
    let envelope: f64 = (0..n)
        .map(|k| {
            let zk = zeta0 + k as f64 * delta;
            poisson(k, lambda) * (-(m - zk).powi(2) / (2.0 * rho * rho)).exp()
        })
        .sum();
    a * elution * envelope
}

/// Composite Simpson weights for `intervals` (even) subintervals of `[lo, hi]`.
fn simpson_nodes(lo: f64, hi: f64, intervals: usize) -> Vec<(f64, f64)> {
    assert!(intervals.is_multiple_of(2));
    let h = (hi - lo) / intervals as f64;
    (0..=intervals)
        .map(|i| {
            let w = if i == 0 || i == intervals {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (lo + i as f64 * h, w * h / 3.0)
        })
        .collect()
}

/// Product-rule Simpson quadrature of `f` over a rectangle.
pub fn quadrature_2d(
    f: impl Fn(f64, f64) -> f64,
    (t_lo, t_hi, nt): (f64, f64, usize),
    (m_lo, m_hi, nm): (f64, f64, usize),
) -> f64 {
    let ts = simpson_nodes(t_lo, t_hi, nt);
    let ms = simpson_nodes(m_lo, m_hi, nm);
    ts.iter()
        .map(|&(t, wt)| wt * ms.iter().map(|&(m, wm)| wm * f(t, m)).sum::<f64>())
        .sum()
}

/// `sqrt(2 pi) sigma`, the integral of an unnormalized Gaussian.
pub fn gaussian_integral(sigma: f64) -> f64 {
    (2.0 * PI).sqrt() * sigma
}

/// Central difference of `f` at `x` with step `h`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Scaled rank-sum statistic by pair counting: the share of (case, control)
/// pairs where case is larger minus the share where it is smaller.
pub fn w_by_pairs(case: &[f64], control: &[f64]) -> f64 {
    let mut score = 0i64;
    for a in case {
        for b in control {
            score += (a > b) as i64 - (a < b) as i64;
        }
    }
    score as f64 / (case.len() * control.len()) as f64
}

/// Every `k`-subset of `0..n` as a bit mask.
pub fn subsets(n: usize, k: usize) -> Vec<u32> {
    (0u32..1 << n).filter(|m| m.count_ones() as usize == k).collect()
}

/// Kolmogorov-Smirnov distance of `sample` from Uniform(0, 1).
pub fn ks_uniform_statistic(sample: &[f64]) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let above = (i + 1) as f64 / n - v;
            let below = v - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS p-value with the Stephens small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let k = d * (sn + 0.12 + 0.11 / sn);
    let mut p = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * k * k).exp();
        p += if j % 2 == 1 { 2.0 * term } else { -2.0 * term };
    }
    p.clamp(0.0, 1.0)
}

/// Area under the ROC curve as the probability that a positive outscores a
/// negative, ties counting one half.
pub fn auc_by_pairs(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut total = 0.0;
    for p in positives {
        for n in negatives {
            total += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    total / (positives.len() * negatives.len()) as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Midranks by counting: `#(smaller) + (#(equal) + 1) / 2`.
pub fn midranks_by_counting(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let below = x.iter().filter(|o| *o < v).count() as f64;
            let equal = x.iter().filter(|o| *o == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Spearman correlation as Pearson correlation of midranks.
pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (midranks_by_counting(x), midranks_by_counting(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
