//! Damped least-squares (Levenberg-Marquardt) fit of the feature model to a
//! raster window.
//!
//! The positive parameters `A, sigma, lambda, rho` are optimized on a log scale,
//! so every iterate satisfies the model invariants without a constrained solver.

use nalgebra::{Matrix6, Vector6};
use thiserror::Error;

use super::{analytic_volume, evaluate_model, model_jacobian, FeatureParams, FREE_PARAMS};
use crate::ingest::Raster;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    pub max_iterations: usize,
    /// Converged when an accepted step lowers the objective by less than this fraction.
    pub objective_tolerance: f64,
    /// Converged when the step in internal coordinates is shorter than this.
    pub step_tolerance: f64,
    pub damping_start: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    pub damping_max: f64,
    pub min_points: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            max_iterations: 200,
            objective_tolerance: 1e-8,
            step_tolerance: 1e-8,
            damping_start: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 0.1,
            damping_max: 1e12,
            min_points: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub params: FeatureParams,
    /// Root-mean-square residual over the window.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub abundance: f64,
}

impl FitResult {
    /// Largest RMS residual, as a fraction of the fitted amplitude, accepted as a quantification.
    pub const RESIDUAL_GATE: f64 = 0.5;

    /// Whether this fit counts as a successful ion-abundance quantification.
    pub fn is_success(&self) -> bool {
        self.converged
            && self.residual_norm.is_finite()
            && self.residual_norm <= Self::RESIDUAL_GATE * self.params.amplitude
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("window contains no positive intensity")]
    NoData,
    #[error("window has {found} points, at least {needed} required")]
    TooFewPoints { found: usize, needed: usize },
    #[error("initial guess violates the model invariants")]
    InvalidGuess,
    #[error("normal equations stayed singular after exhausting damping")]
    SingularNormalEquations,
    #[error("no convergence after {} iterations", .0.iterations)]
    NoConvergence(Box<FitResult>),
}

/// Internal parameter vector: `[ln A, mu, ln sigma, zeta0, ln lambda, ln rho]`.
struct Coords {
    delta: f64,
    n_peaks: u32,
}

const LAMBDA_FLOOR: f64 = 1e-8;

impl Coords {
    fn encode(&self, p: &FeatureParams) -> Vector6<f64> {
        Vector6::new(
            p.amplitude.ln(),
            p.mu,
            p.sigma.ln(),
            p.zeta0,
            p.lambda.max(LAMBDA_FLOOR).ln(),
            p.rho.ln(),
        )
    }

    fn decode(&self, x: &Vector6<f64>) -> FeatureParams {
        FeatureParams {
            amplitude: x[0].exp(),
            mu: x[1],
            sigma: x[2].exp(),
            zeta0: x[3],
            delta: self.delta,
            lambda: x[4].exp(),
            rho: x[5].exp(),
            n_peaks: self.n_peaks,
        }
    }
}

fn objective(window: &Raster, p: &FeatureParams) -> f64 {
    window
        .points()
        .iter()
        .map(|pt| {
            let r = evaluate_model(p, pt.time, pt.mz) - pt.intensity;
            r * r
        })
        .sum()
}

/// `J^T J` and `J^T r` in internal coordinates.
fn normal_equations(window: &Raster, p: &FeatureParams) -> (Matrix6<f64>, Vector6<f64>) {
    let chain = [p.amplitude, 1.0, p.sigma, 1.0, p.lambda, p.rho];
    let mut jtj = Matrix6::zeros();
    let mut jtr = Vector6::zeros();
    for pt in window.points() {
        let r = evaluate_model(p, pt.time, pt.mz) - pt.intensity;
        let raw = model_jacobian(p, pt.time, pt.mz);
        let mut row = Vector6::zeros();
        for i in 0..FREE_PARAMS {
            row[i] = raw[i] * chain[i];
        }
        jtj += row * row.transpose();
        jtr += row * r;
    }
    (jtj, jtr)
}

/// Fits with the default settings.
pub fn fit_feature(window: &Raster, guess: &FeatureParams) -> Result<FitResult, FitError> {
    fit_feature_with(window, guess, &FitSettings::default())
}

pub fn fit_feature_with(
    window: &Raster,
    guess: &FeatureParams,
    settings: &FitSettings,
) -> Result<FitResult, FitError> {
    if !window.points().iter().any(|p| p.intensity > 0.0) {
        return Err(FitError::NoData);
    }
    if window.len() < settings.min_points {
        return Err(FitError::TooFewPoints {
            found: window.len(),
            needed: settings.min_points,
        });
    }
    if !guess.is_valid() || guess.amplitude <= 0.0 {
        return Err(FitError::InvalidGuess);
    }

    let coords = Coords {
        delta: guess.delta,
        n_peaks: guess.n_peaks,
    };
    let mut x = coords.encode(guess);
    let mut params = coords.decode(&x);
    let mut sse = objective(window, &params);
    let mut damping = settings.damping_start;
    let mut converged = sse == 0.0;
    let mut iterations = 0;

    while !converged && iterations < settings.max_iterations {
        iterations += 1;
        let (jtj, jtr) = normal_equations(window, &params);
        loop {
            let mut lhs = jtj;
            for i in 0..FREE_PARAMS {
                lhs[(i, i)] += damping * jtj[(i, i)];
            }
            let step = lhs.cholesky().map(|c| c.solve(&(-jtr)));
            let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) else {
                damping *= settings.damping_increase;
                if damping > settings.damping_max {
                    return Err(FitError::SingularNormalEquations);
                }
                continue;
            };
            let step_norm = step.norm();
            let candidate_x = x + step;
            let candidate = coords.decode(&candidate_x);
            let candidate_sse = if candidate.is_valid() {
                objective(window, &candidate)
            } else {
                f64::INFINITY
            };
            if candidate_sse.is_finite() && candidate_sse < sse {
                let relative_decrease = (sse - candidate_sse) / sse;
                x = candidate_x;
                params = candidate;
                sse = candidate_sse;
                damping = (damping * settings.damping_decrease).max(f64::MIN_POSITIVE);
                converged = sse == 0.0
                    || relative_decrease < settings.objective_tolerance
                    || step_norm < settings.step_tolerance;
                break;
            }
            if step_norm < settings.step_tolerance {
                converged = true;
                break;
            }
            damping *= settings.damping_increase;
            if damping > settings.damping_max {
                return Err(FitError::SingularNormalEquations);
            }
        }
    }

    let result = FitResult {
        params,
        residual_norm: (sse / window.len() as f64).sqrt(),
        iterations,
        converged: converged && within_window(window, &params),
        abundance: analytic_volume(&params),
    };
    if result.converged {
        Ok(result)
    } else {
        Err(FitError::NoConvergence(Box::new(result)))
    }
}

/// A converged solution must describe a feature the window actually resolves:
/// apex inside the window, elution width shorter than the window and isotope
/// peaks narrower than their spacing.
fn within_window(window: &Raster, p: &FeatureParams) -> bool {
    let pts = window.points();
    let (t_lo, t_hi) = (pts[0].time, pts[pts.len() - 1].time);
    let (mz_lo, mz_hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), pt| {
            (lo.min(pt.mz), hi.max(pt.mz))
        });
    p.mu >= t_lo
        && p.mu <= t_hi
        && p.sigma <= (t_hi - t_lo).max(f64::MIN_POSITIVE)
        && p.zeta0 >= mz_lo - p.delta
        && p.zeta0 <= mz_hi
        && p.rho < p.delta / 2.0
}
