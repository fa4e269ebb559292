//! Per-run feature adjustment and raster rendering.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::feature::{evaluate_model, FeatureParams, TimeExtent};
use crate::ingest::{Raster, RasterPoint, RunId};
use crate::quant::median;

/// A species' feature as it appears in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFeature {
    pub species: usize,
    pub params: FeatureParams,
    /// Member of the spike class, which suppresses co-eluting base features.
    pub spike: bool,
}

/// Proportional ion competition: every base feature whose 2-sigma extent
/// meets spike features is scaled by `1 / (1 + c * sum(A_spike) / A)`.
/// Spike amplitudes are read before any base feature changes.
pub fn apply_competition(features: &mut [RunFeature], strength: f64) {
    let spikes: Vec<(TimeExtent, f64)> = features
        .iter()
        .filter(|f| f.spike)
        .map(|f| (f.params.extent(), f.params.amplitude))
        .collect();
    for f in features.iter_mut().filter(|f| !f.spike) {
        let extent = f.params.extent();
        let load: f64 = spikes
            .iter()
            .filter(|(e, _)| e.intersects(&extent))
            .map(|(_, a)| a)
            .sum();
        if load > 0.0 && f.params.amplitude > 0.0 {
            f.params.amplitude /= 1.0 + strength * load / f.params.amplitude;
        }
    }
}

/// Drops features whose amplitude is below `fraction` of the run median.
pub fn apply_detection_floor(features: &mut Vec<RunFeature>, fraction: f64) {
    let mut amps: Vec<f64> = features.iter().map(|f| f.params.amplitude).collect();
    let Some(mid) = median(&mut amps) else {
        return;
    };
    features.retain(|f| f.params.amplitude >= fraction * mid && f.params.amplitude > 0.0);
}

/// m/z offsets, in units of the feature's rho, sampled around each isotope.
const MZ_OFFSETS: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];
/// Time support of a feature in units of sigma.
const TIME_SUPPORT: f64 = 3.0;

/// Samples every feature on integer seconds within `mu +- 3 sigma` at
/// `zeta_k + j rho`. Each point carries the summed signal of all features plus
/// Gaussian noise with standard deviation `noise * A` of the feature that
/// placed it, clipped at zero. Each feature draws its noise from its own seed,
/// so adding a feature leaves the noise of the others unchanged.
pub fn render_raster(run: RunId, features: &[(FeatureParams, u64)], noise: f64) -> Raster {
    let noise_of = |amplitude: f64| Normal::new(0.0, noise * amplitude).expect("finite noise");
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| features[a].0.mu.total_cmp(&features[b].0.mu));
    let sorted: Vec<&FeatureParams> = order.iter().map(|&i| &features[i].0).collect();
    let max_reach = sorted
        .iter()
        .map(|p| 4.0 * p.sigma)
        .fold(0.0f64, f64::max);

    let mut keys: Vec<(f64, f64, f64)> = Vec::new();
    for &i in &order {
        let (p, seed) = &features[i];
        let mut rng = ChaCha8Rng::seed_from_u64(*seed);
        let dist = (noise > 0.0).then(|| noise_of(p.amplitude));
        let t0 = (p.mu - TIME_SUPPORT * p.sigma).ceil().max(0.0) as i64;
        let t1 = (p.mu + TIME_SUPPORT * p.sigma).floor() as i64;
        for t in t0..=t1 {
            for k in 0..p.n_peaks {
                for j in MZ_OFFSETS {
                    let e = dist.map_or(0.0, |d| d.sample(&mut rng));
                    keys.push((t as f64, p.peak_mz(k) + j * p.rho, e));
                }
            }
        }
    }
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);

    // Sorting is stable, so the feature first in `mu` order owns a shared point.
    let points = keys
        .into_iter()
        .map(|(t, mz, jitter)| {
            let lo = sorted.partition_point(|p| p.mu < t - max_reach);
            let hi = sorted.partition_point(|p| p.mu <= t + max_reach);
            let signal: f64 = sorted[lo..hi]
                .iter()
                .filter(|p| {
                    mz > p.zeta0 - 6.0 * p.rho
                        && mz < p.peak_mz(p.n_peaks - 1) + 6.0 * p.rho
                })
                .map(|p| evaluate_model(p, t, mz))
                .sum();
            RasterPoint {
                time: t,
                mz,
                intensity: (signal + jitter).max(0.0),
            }
        })
        .collect();
    Raster::new(run, points).expect("rendered points are sorted, unique and nonnegative")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feature(mu: f64, amplitude: f64) -> FeatureParams {
        FeatureParams {
            amplitude,
            mu,
            sigma: 3.0,
            zeta0: 600.0,
            delta: 0.5,
            lambda: 0.8,
            rho: 0.01,
            n_peaks: 4,
        }
    }

    #[test]
    fn competition_only_touches_overlapping_base_features() {
        let mut fs = vec![
            RunFeature { species: 0, params: feature(100.0, 10.0), spike: false },
            RunFeature { species: 1, params: feature(104.0, 30.0), spike: true },
            RunFeature { species: 2, params: feature(500.0, 10.0), spike: false },
        ];
        apply_competition(&mut fs, 1.0);
        assert!((fs[0].params.amplitude - 10.0 / 4.0).abs() < 1e-12);
        assert_eq!(fs[1].params.amplitude, 30.0);
        assert_eq!(fs[2].params.amplitude, 10.0);
    }

    #[test]
    fn floor_drops_faint_features() {
        let mut fs: Vec<RunFeature> = [1.0, 100.0, 120.0, 0.5]
            .iter()
            .enumerate()
            .map(|(i, a)| RunFeature { species: i, params: feature(100.0, *a), spike: false })
            .collect();
        apply_detection_floor(&mut fs, 0.01);
        assert_eq!(fs.iter().map(|f| f.species).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn noiseless_render_is_the_model() {
        let p = feature(50.0, 1000.0);
        let r = render_raster(RunId::new("s", "r"), &[(p, 0)], 0.0);
        assert_eq!(r.len(), 19 * 4 * 5);
        for pt in r.points() {
            assert_eq!(pt.intensity, evaluate_model(&p, pt.time, pt.mz));
        }
    }
}
