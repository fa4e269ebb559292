use super::{FeatureParams, FitError, FIT_PEAKS, NEUTRON_SPACING};
use crate::ingest::{Identification, Raster};

/// Retention-time half width of the search window around an identification, seconds.
pub const WINDOW_HALF_TIME: f64 = 30.0;
/// m/z margin added on both sides of the isotope envelope.
pub const WINDOW_MZ_MARGIN: f64 = 0.1;

/// Raster points in the vicinity of an identification: `rt +- 30 s` and
/// `[mz - 0.1, mz + (N-1) delta + 0.1]`.
pub fn fit_window(raster: &Raster, hint: &Identification) -> Raster {
    let delta = NEUTRON_SPACING / hint.species.charge() as f64;
    raster.window(
        hint.retention_time - WINDOW_HALF_TIME,
        hint.retention_time + WINDOW_HALF_TIME,
        hint.precursor_mz - WINDOW_MZ_MARGIN,
        hint.precursor_mz + (FIT_PEAKS - 1) as f64 * delta + WINDOW_MZ_MARGIN,
    )
}

const MIN_SIGMA: f64 = 0.5;
/// Points within this distance of the identification's isotope lattice
/// `precursor + k delta` are apex candidates, Thomson.
pub const LATTICE_TOLERANCE: f64 = 0.015;
const LAMBDA_RANGE: (f64, f64) = (0.01, 10.0);
const START_RHO: f64 = 0.01;

/// Starting point for [`super::fit_feature`] derived from the window and the
/// identification that located it.
///
/// The apex is the most intense point on the identification's isotope
/// lattice; only when the lattice is empty does it fall back to the whole
/// window. Co-eluting envelopes sit off the lattice almost surely.
pub fn initial_guess(window: &Raster, hint: &Identification) -> Result<FeatureParams, FitError> {
    let delta = NEUTRON_SPACING / hint.species.charge() as f64;
    let on_lattice = |mz: f64| {
        let k = ((mz - hint.precursor_mz) / delta).round();
        (0.0..FIT_PEAKS as f64).contains(&k)
            && (mz - hint.precursor_mz - k * delta).abs() <= LATTICE_TOLERANCE
    };
    let brightest = |lattice: bool| {
        window
            .points()
            .iter()
            .filter(|p| p.intensity > 0.0 && (!lattice || on_lattice(p.mz)))
            .max_by(|a, b| a.intensity.total_cmp(&b.intensity))
    };
    let apex = brightest(true)
        .or_else(|| brightest(false))
        .ok_or(FitError::NoData)?;

    // Snap the apex m/z onto the isotope lattice that starts at or below the precursor.
    let steps = ((apex.mz - hint.precursor_mz) / delta).round().max(0.0);
    let zeta0 = apex.mz - steps * delta;

    let sigma = half_width_half_max(window, apex.time).max(MIN_SIGMA);

    // Isotope marginals: intensity summed by nearest lattice position.
    let mut marginal = [0.0f64; 2];
    for p in window.points() {
        let k = ((p.mz - zeta0) / delta).round();
        if k == 0.0 || k == 1.0 {
            marginal[k as usize] += p.intensity;
        }
    }
    let lambda = if marginal[0] > 0.0 {
        marginal[1] / marginal[0]
    } else {
        LAMBDA_RANGE.0
    }
    .clamp(LAMBDA_RANGE.0, LAMBDA_RANGE.1);

    // The apex sits on isotope `steps`; undo its Poisson weight.
    let k_apex = (steps as u32).min(FIT_PEAKS - 1);
    let weight = super::poisson_weights(lambda, FIT_PEAKS)[k_apex as usize];

    Ok(FeatureParams {
        amplitude: apex.intensity / weight,
        mu: apex.time,
        sigma,
        zeta0,
        delta,
        lambda,
        rho: START_RHO,
        n_peaks: FIT_PEAKS,
    })
}

/// Half width at half maximum of the time marginal around `apex_time`.
fn half_width_half_max(window: &Raster, apex_time: f64) -> f64 {
    let mut marginal: Vec<(f64, f64)> = Vec::new();
    for p in window.points() {
        match marginal.last_mut() {
            Some((t, sum)) if *t == p.time => *sum += p.intensity,
            _ => marginal.push((p.time, p.intensity)),
        }
    }
    let Some(apex_idx) = marginal.iter().position(|(t, _)| *t == apex_time) else {
        return 0.0;
    };
    let half = marginal[apex_idx].1 / 2.0;
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = apex_idx;
        for i in range {
            if marginal[i].1 <= half {
                // Linear interpolation between the last point above and this one.
                let (t0, v0) = marginal[prev];
                let (t1, v1) = marginal[i];
                let frac = if v0 > v1 { (v0 - half) / (v0 - v1) } else { 0.0 };
                return Some((t0 + frac * (t1 - t0) - apex_time).abs());
            }
            prev = i;
        }
        None
    };
    let right = crossing(&mut (apex_idx + 1..marginal.len()));
    let left = crossing(&mut (0..apex_idx).rev());
    match (left, right) {
        (Some(l), Some(r)) => 0.5 * (l + r),
        (Some(x), None) | (None, Some(x)) => x,
        (None, None) => {
            let span = marginal.last().map(|l| l.0).unwrap_or(apex_time) - marginal[0].0;
            span / 2.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::evaluate_model;
    use crate::ingest::{parse_species, RasterPoint, RunId};

    fn hint(mz: f64, rt: f64, charge: u8) -> Identification {
        Identification {
            sample_id: "S".into(),
            replicate_id: "r".into(),
            species: parse_species(&format!("PEPTIDEK+{charge}")).unwrap(),
            retention_time: rt,
            precursor_mz: mz,
            fdr: 0.0,
        }
    }

    #[test]
    fn single_point_window_uses_floors() {
        let raster = Raster::new(
            RunId::new("S", "r"),
            vec![RasterPoint {
                time: 10.0,
                mz: 500.0,
                intensity: 7.0,
            }],
        )
        .unwrap();
        let g = initial_guess(&raster, &hint(500.0, 10.0, 2)).unwrap();
        assert!((g.amplitude - 7.0 / (-LAMBDA_RANGE.0).exp()).abs() < 1e-9);
        assert_eq!(g.mu, 10.0);
        assert_eq!(g.sigma, MIN_SIGMA);
        assert_eq!(g.lambda, LAMBDA_RANGE.0);
        assert_eq!(g.n_peaks, 4);
        assert!((g.delta - 1.00335 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_or_zero_window_is_no_data() {
        let empty = Raster::new(RunId::new("S", "r"), vec![]).unwrap();
        assert!(matches!(
            initial_guess(&empty, &hint(500.0, 10.0, 2)),
            Err(FitError::NoData)
        ));
        let zeros = Raster::new(
            RunId::new("S", "r"),
            (0..5)
                .map(|i| RasterPoint {
                    time: i as f64,
                    mz: 500.0,
                    intensity: 0.0,
                })
                .collect(),
        )
        .unwrap();
        assert!(matches!(
            initial_guess(&zeros, &hint(500.0, 10.0, 2)),
            Err(FitError::NoData)
        ));
    }

    #[test]
    fn guess_from_synthetic_window_is_close() {
        let truth = FeatureParams {
            amplitude: 5e4,
            mu: 1200.0,
            sigma: 3.5,
            zeta0: 650.321,
            delta: 1.00335 / 2.0,
            lambda: 0.8,
            rho: 0.012,
            n_peaks: 4,
        };
        let mut pts = Vec::new();
        for t in 1190..=1210 {
            for k in 0..4 {
                for j in -2..=2 {
                    let mz = truth.peak_mz(k) + j as f64 * truth.rho;
                    pts.push(RasterPoint {
                        time: t as f64,
                        mz,
                        intensity: evaluate_model(&truth, t as f64, mz),
                    });
                }
            }
        }
        let raster = Raster::new(RunId::new("S", "r"), pts).unwrap();
        let id = hint(truth.peak_mz(0), 1203.0, 2);
        let window = fit_window(&raster, &id);
        let g = initial_guess(&window, &id).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(g.amplitude, truth.amplitude) < 0.05);
        assert!(rel(g.mu, truth.mu) < 0.5);
        assert!(rel(g.zeta0, truth.zeta0) < 0.5);
        assert!((g.zeta0 - truth.zeta0).abs() < 1e-9);
        assert!((g.sigma - truth.sigma * (2.0f64.ln() * 2.0).sqrt()).abs() < 0.5);
        assert!(rel(g.lambda, truth.lambda) < 0.05);
    }

    #[test]
    fn brighter_off_lattice_neighbor_is_not_the_apex() {
        let target = FeatureParams {
            amplitude: 1e3,
            mu: 120.0,
            sigma: 2.5,
            zeta0: 423.745,
            delta: 1.00335 / 2.0,
            lambda: 0.5,
            rho: 0.012,
            n_peaks: 4,
        };
        // A brighter envelope 0.05 Th off the target's fourth isotope, 20 s earlier.
        let neighbor = FeatureParams {
            amplitude: 1e5,
            mu: 100.0,
            zeta0: target.peak_mz(3) - 0.05,
            ..target
        };
        let mut pts = Vec::new();
        for t in 90..=130 {
            for p in [&target, &neighbor] {
                for k in 0..4 {
                    for j in -2..=2 {
                        let mz = p.peak_mz(k) + j as f64 * p.rho;
                        let intensity = evaluate_model(&target, t as f64, mz) + evaluate_model(&neighbor, t as f64, mz);
                        pts.push(RasterPoint { time: t as f64, mz, intensity });
                    }
                }
            }
        }
        pts.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.mz.total_cmp(&b.mz)));
        pts.dedup_by(|a, b| a.time == b.time && a.mz == b.mz);
        let raster = Raster::new(RunId::new("S", "r"), pts).unwrap();
        let id = hint(target.zeta0, 121.0, 2);
        let g = initial_guess(&fit_window(&raster, &id), &id).unwrap();
        assert_eq!(g.mu, 120.0);
        assert!((g.zeta0 - target.zeta0).abs() < 1e-9);
    }
}
