//! The LC-MS feature model: a Gaussian elution profile in time multiplied by an
//! envelope of `N` equally spaced Gaussian isotope peaks in m/z whose relative
//! heights follow a Poisson distribution with parameter `lambda`.
//!
//! ```text
//! f(t, m) = A exp(-(t - mu)^2 / 2 sigma^2) * sum_k P(k; lambda) exp(-(m - zeta_k)^2 / 2 rho^2)
//! zeta_k  = zeta0 + k delta,  k = 0 .. N-1
//! ```
//!
//! The ion abundance of a species is the volume under the fitted surface.

mod fit;
mod guess;

pub use fit::{fit_feature, fit_feature_with, FitError, FitResult, FitSettings};
pub use guess::{fit_window, initial_guess};

use std::f64::consts::PI;

/// Spacing between isotope peaks of a singly charged ion, in Thomson.
pub const NEUTRON_SPACING: f64 = 1.00335;

/// Number of isotope peaks modeled when fitting.
pub const FIT_PEAKS: u32 = 4;

/// Number of parameters optimized by [`fit_feature`]: A, mu, sigma, zeta0, lambda, rho.
pub const FREE_PARAMS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureParams {
    pub amplitude: f64,
    /// Elution apex, seconds.
    pub mu: f64,
    /// Elution standard deviation, seconds.
    pub sigma: f64,
    /// m/z of the first isotope peak.
    pub zeta0: f64,
    /// Inter-peak spacing in m/z.
    pub delta: f64,
    pub lambda: f64,
    /// Isotope peak standard deviation in m/z.
    pub rho: f64,
    pub n_peaks: u32,
}

impl FeatureParams {
    pub fn is_valid(&self) -> bool {
        let finite = [
            self.amplitude,
            self.mu,
            self.sigma,
            self.zeta0,
            self.delta,
            self.lambda,
            self.rho,
        ]
        .iter()
        .all(|v| v.is_finite());
        finite
            && self.sigma > 0.0
            && self.rho > 0.0
            && self.delta > 0.0
            && self.lambda >= 0.0
            && self.amplitude >= 0.0
            && self.n_peaks >= 1
    }

    pub fn peak_mz(&self, k: u32) -> f64 {
        self.zeta0 + k as f64 * self.delta
    }

    /// Poisson weights `lambda^k e^-lambda / k!` for `k = 0 .. N-1`.
    pub fn isotope_weights(&self) -> Vec<f64> {
        poisson_weights(self.lambda, self.n_peaks)
    }

    pub fn extent(&self) -> TimeExtent {
        extent_2sigma(self)
    }
}

fn poisson_weights(lambda: f64, n: u32) -> Vec<f64> {
    let mut w = Vec::with_capacity(n as usize);
    let mut term = (-lambda).exp();
    for k in 0..n {
        w.push(term);
        term *= lambda / (k + 1) as f64;
    }
    w
}

/// Model intensity at retention time `t` and m/z `m`.
pub fn evaluate_model(p: &FeatureParams, t: f64, m: f64) -> f64 {
    let dt = t - p.mu;
    let time = (-dt * dt / (2.0 * p.sigma * p.sigma)).exp();
    let envelope: f64 = p
        .isotope_weights()
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let dm = m - p.peak_mz(k as u32);
            w * (-dm * dm / (2.0 * p.rho * p.rho)).exp()
        })
        .sum();
    p.amplitude * time * envelope
}

/// Closed-form volume under the model surface: `2 pi A sigma rho sum_k P(k; lambda)`.
pub fn analytic_volume(p: &FeatureParams) -> f64 {
    let weight_sum: f64 = p.isotope_weights().iter().sum();
    2.0 * PI * p.amplitude * p.sigma * p.rho * weight_sum
}

/// Partial derivatives of [`evaluate_model`] with respect to
/// `(A, mu, sigma, zeta0, lambda, rho)`; `delta` and `N` are held fixed.
pub fn model_jacobian(p: &FeatureParams, t: f64, m: f64) -> [f64; FREE_PARAMS] {
    let dt = t - p.mu;
    let s2 = p.sigma * p.sigma;
    let r2 = p.rho * p.rho;
    let time = (-dt * dt / (2.0 * s2)).exp();

    // d/dlambda of P(k) is P(k-1) - P(k), with P(-1) = 0.
    let weights = p.isotope_weights();
    let mut envelope = 0.0;
    let mut d_zeta = 0.0;
    let mut d_lambda = 0.0;
    let mut d_rho = 0.0;
    let mut prev = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        let dm = m - p.peak_mz(k as u32);
        let g = (-dm * dm / (2.0 * r2)).exp();
        envelope += w * g;
        d_zeta += w * g * dm / r2;
        d_rho += w * g * dm * dm / (r2 * p.rho);
        d_lambda += (prev - w) * g;
        prev = w;
    }
    let a_t = p.amplitude * time;
    let f = a_t * envelope;
    [
        time * envelope,
        f * dt / s2,
        f * dt * dt / (s2 * p.sigma),
        a_t * d_zeta,
        a_t * d_lambda,
        a_t * d_rho,
    ]
}

/// Retention-time interval `[left, right]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeExtent {
    pub left: f64,
    pub right: f64,
}

impl TimeExtent {
    pub fn new(left: f64, right: f64) -> Self {
        debug_assert!(left <= right);
        TimeExtent { left, right }
    }

    pub fn intersects(&self, other: &TimeExtent) -> bool {
        self.left <= other.right && other.left <= self.right
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }
}

/// `[mu - 2 sigma, mu + 2 sigma]`.
pub fn extent_2sigma(p: &FeatureParams) -> TimeExtent {
    TimeExtent::new(p.mu - 2.0 * p.sigma, p.mu + 2.0 * p.sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn example() -> FeatureParams {
        FeatureParams {
            amplitude: 100.0,
            mu: 50.0,
            sigma: 2.0,
            zeta0: 500.0,
            delta: 0.5,
            lambda: 1.0,
            rho: 0.02,
            n_peaks: 3,
        }
    }

    #[test]
    fn apex_of_single_peak_is_amplitude() {
        let p = FeatureParams {
            n_peaks: 1,
            lambda: 0.0,
            ..example()
        };
        assert_eq!(evaluate_model(&p, p.mu, p.zeta0), p.amplitude);
    }

    #[test]
    fn isotope_ratio_is_lambda() {
        let p = FeatureParams {
            lambda: 0.7,
            rho: 0.001,
            ..example()
        };
        let r = evaluate_model(&p, p.mu, p.peak_mz(1)) / evaluate_model(&p, p.mu, p.zeta0);
        assert!((r - 0.7).abs() < 1e-12, "{r}");
    }

    #[test]
    fn example_point_matches_direct_formula() {
        // A * 1 * (e^-1 * 1 + e^-1 * exp(-0.25/0.0008) + ...) at t = mu, m = zeta0;
        // the k >= 1 Gaussians are ~e^-312 so the value is A e^-1.
        let v = evaluate_model(&example(), 50.0, 500.0);
        assert!((v - 36.787_944_117_144_23).abs() < 1e-12, "{v}");
    }

    #[test]
    fn volume_limits() {
        let p = FeatureParams {
            n_peaks: 1,
            lambda: 0.0,
            ..example()
        };
        let base = 2.0 * PI * p.amplitude * p.sigma * p.rho;
        assert!((analytic_volume(&p) - base).abs() < 1e-12 * base);
        let wide = FeatureParams {
            n_peaks: 40,
            lambda: 2.5,
            ..example()
        };
        assert!((analytic_volume(&wide) - base).abs() < 1e-9 * base);
    }

    #[test]
    fn jacobian_special_points() {
        let p = example();
        for &(t, m) in &[(48.0, 500.01), (53.0, 500.49), (50.0, 501.0)] {
            let j = model_jacobian(&p, t, m);
            let f = evaluate_model(&p, t, m);
            assert!((j[0] - f / p.amplitude).abs() <= 1e-14 * f.max(1e-300));
        }
        assert_eq!(model_jacobian(&p, p.mu, 500.003)[1], 0.0);
    }

    #[test]
    fn jacobian_lambda_at_zero() {
        let p = FeatureParams {
            lambda: 0.0,
            ..example()
        };
        let h = 1e-7;
        let fd = (evaluate_model(&FeatureParams { lambda: h, ..p }, 50.0, 500.49)
            - evaluate_model(&p, 50.0, 500.49))
            / h;
        let j = model_jacobian(&p, 50.0, 500.49)[4];
        assert!((fd - j).abs() <= 1e-5 * j.abs().max(1e-12), "{fd} {j}");
    }

    #[test]
    fn extent_arithmetic() {
        let p = example();
        let e = extent_2sigma(&p);
        assert_eq!((e.left, e.right), (46.0, 54.0));
        assert!(e.width() > 0.0);
        assert!(e.intersects(&TimeExtent::new(50.0, 58.0)));
        assert!(!e.intersects(&TimeExtent::new(55.0, 58.0)));
    }

    fn arb_params() -> impl Strategy<Value = FeatureParams> {
        (
            0.0f64..1e6,
            0.0f64..3600.0,
            0.1f64..20.0,
            300.0f64..2000.0,
            0.2f64..1.1,
            0.0f64..5.0,
            0.001f64..0.05,
            1u32..8,
        )
            .prop_map(|(amplitude, mu, sigma, zeta0, delta, lambda, rho, n_peaks)| FeatureParams {
                amplitude,
                mu,
                sigma,
                zeta0,
                delta,
                lambda,
                rho,
                n_peaks,
            })
    }

    proptest! {
        #[test]
        fn model_and_volume_nonnegative(p in arb_params(), dt in -50.0f64..50.0, dm in -1.0f64..5.0) {
            let v = evaluate_model(&p, p.mu + dt, p.zeta0 + dm);
            prop_assert!(v >= 0.0 && v.is_finite());
            prop_assert!(analytic_volume(&p) >= 0.0);
        }

        #[test]
        fn volume_increases_in_scale_params(p in arb_params(), factor in 1.01f64..3.0) {
            let p = FeatureParams { amplitude: p.amplitude.max(1.0), ..p };
            let v = analytic_volume(&p);
            let by_amplitude = FeatureParams { amplitude: p.amplitude * factor, ..p };
            let by_sigma = FeatureParams { sigma: p.sigma * factor, ..p };
            let by_rho = FeatureParams { rho: p.rho * factor, ..p };
            prop_assert!(analytic_volume(&by_amplitude) > v);
            prop_assert!(analytic_volume(&by_sigma) > v);
            prop_assert!(analytic_volume(&by_rho) > v);
        }
    }
}
