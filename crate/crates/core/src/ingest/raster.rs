use std::cmp::Ordering;
use std::path::Path;

use thiserror::Error;

use super::RunId;
use crate::tsv::{Table, TsvError, TsvWriter};

/// A single (time, m/z, intensity) observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterPoint {
    pub time: f64,
    pub mz: f64,
    pub intensity: f64,
}

impl RasterPoint {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.mz.total_cmp(&other.mz))
    }
}

#[derive(Debug, Error)]
pub enum RasterError {
    #[error(transparent)]
    Tsv(#[from] TsvError),
    #[error("{0}: raster file names must look like <sample_id>__<replicate_id>.raster.tsv")]
    BadFileName(String),
    #[error("negative intensity {intensity} at t={time}, m/z={mz}")]
    NegativeIntensity { time: f64, mz: f64, intensity: f64 },
    #[error("duplicate point at t={time}, m/z={mz}")]
    DuplicatePoint { time: f64, mz: f64 },
    #[error("non-finite coordinate or intensity")]
    NonFinite,
}

/// Sparse scan data for one run, sorted by (time, m/z).
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub run: RunId,
    points: Vec<RasterPoint>,
}

impl Raster {
    /// Sorts the points and validates nonnegativity and uniqueness.
    pub fn new(run: RunId, mut points: Vec<RasterPoint>) -> Result<Self, RasterError> {
        for p in &points {
            if !(p.time.is_finite() && p.mz.is_finite() && p.intensity.is_finite()) {
                return Err(RasterError::NonFinite);
            }
            if p.intensity < 0.0 {
                return Err(RasterError::NegativeIntensity {
                    time: p.time,
                    mz: p.mz,
                    intensity: p.intensity,
                });
            }
        }
        points.sort_by(RasterPoint::key_cmp);
        if let Some(w) = points.windows(2).find(|w| w[0].key_cmp(&w[1]) == Ordering::Equal) {
            return Err(RasterError::DuplicatePoint {
                time: w[0].time,
                mz: w[0].mz,
            });
        }
        Ok(Raster { run, points })
    }

    pub fn points(&self) -> &[RasterPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points with time in `[t_lo, t_hi]` and m/z in `[mz_lo, mz_hi]`.
    pub fn window(&self, t_lo: f64, t_hi: f64, mz_lo: f64, mz_hi: f64) -> Raster {
        let start = self.points.partition_point(|p| p.time < t_lo);
        let end = self.points.partition_point(|p| p.time <= t_hi);
        let points = self.points[start..end.max(start)]
            .iter()
            .filter(|p| p.mz >= mz_lo && p.mz <= mz_hi)
            .copied()
            .collect();
        Raster {
            run: self.run.clone(),
            points,
        }
    }
}

/// Reads `<sample_id>__<replicate_id>.raster.tsv` with header `rt_sec mz intensity`.
pub fn read_raster(path: &Path) -> Result<Raster, RasterError> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_string();
    let run = name
        .strip_suffix(".raster.tsv")
        .and_then(RunId::parse)
        .ok_or_else(|| RasterError::BadFileName(path.display().to_string()))?;

    let table = Table::read(path)?;
    let cols = table.columns(&["rt_sec", "mz", "intensity"])?;
    let mut points = Vec::with_capacity(table.len());
    for row in table.rows() {
        let time = row.f64(cols[0], "rt_sec")?;
        let mz = row.f64(cols[1], "mz")?;
        let intensity = row.f64(cols[2], "intensity")?;
        if intensity < 0.0 {
            return Err(row.error(format!("negative intensity {intensity}")).into());
        }
        points.push((RasterPoint { time, mz, intensity }, row.line));
    }
    points.sort_by(|a, b| a.0.key_cmp(&b.0));
    if let Some(w) = points
        .windows(2)
        .find(|w| w[0].0.key_cmp(&w[1].0) == Ordering::Equal)
    {
        let line = w[0].1.max(w[1].1);
        return Err(TsvError::row(
            path,
            line,
            format!("duplicate point at t={}, m/z={}", w[1].0.time, w[1].0.mz),
        )
        .into());
    }
    Ok(Raster {
        run,
        points: points.into_iter().map(|(p, _)| p).collect(),
    })
}

/// Writes `raster` into `dir` under its canonical file name.
pub fn write_raster(dir: &Path, raster: &Raster) -> Result<(), TsvError> {
    let path = dir.join(raster.run.raster_file_name());
    let mut w = TsvWriter::create(&path, &["rt_sec", "mz", "intensity"])?;
    for p in &raster.points {
        w.write_row([p.time.to_string(), p.mz.to_string(), p.intensity.to_string()])?;
    }
    w.finish()
}
