//! Species-level quantification: spectral counts, fitted ion abundances,
//! technical-replicate averaging, presence filtering and normalization.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::feature::{fit_feature, fit_window, initial_guess, FeatureParams, FitError, FitResult};
use crate::ingest::{Identification, Raster, RunId, SpeciesKey};
use crate::matrix::{Group, Level, MatrixError, Measure, QuantMatrix, SampleColumn};
use crate::tsv::{Table, TsvError, TsvWriter};

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("no raster available for run {0}")]
    MissingRaster(RunId),
    #[error("column '{0}' has no positive values to normalize by")]
    DegenerateColumn(String),
    #[error("technical replicates of sample '{0}' disagree on group")]
    MixedGroups(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Tsv(#[from] TsvError),
}

/// Runs in column order with their group labels.
pub type RunLayout = [(RunId, Group)];

fn species_in(ids: &[Identification], runs: &RunLayout) -> Vec<SpeciesKey> {
    let wanted: BTreeSet<&RunId> = runs.iter().map(|(r, _)| r).collect();
    let mut keys: Vec<(String, SpeciesKey)> = ids
        .iter()
        .filter(|id| wanted.contains(&id.run()))
        .map(|id| id.species.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(|k| (k.to_string(), k))
        .collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0));
    keys.into_iter().map(|(_, k)| k).collect()
}

fn columns(runs: &RunLayout) -> Vec<SampleColumn> {
    runs.iter()
        .map(|(r, g)| SampleColumn::new(r.to_string(), *g))
        .collect()
}

/// Number of identifications of each species in each run.
///
/// A species not identified in a run is 0 when another technical replicate of
/// the same biological sample identified it, and missing otherwise.
pub fn spectral_counts(ids: &[Identification], runs: &RunLayout) -> Result<QuantMatrix, QuantError> {
    let species = species_in(ids, runs);
    let index: HashMap<&SpeciesKey, usize> = species.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let run_index: HashMap<&RunId, usize> = runs.iter().enumerate().map(|(j, (r, _))| (r, j)).collect();

    let mut counts = vec![vec![0u32; runs.len()]; species.len()];
    let mut seen_in_sample: BTreeSet<(usize, &str)> = BTreeSet::new();
    for id in ids {
        let Some(&j) = run_index.get(&id.run()) else {
            continue;
        };
        let i = index[&id.species];
        counts[i][j] += 1;
        seen_in_sample.insert((i, runs[j].0.sample_id.as_str()));
    }

    let cells = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .zip(runs)
                .map(|(&c, (run, _))| {
                    if c > 0 || seen_in_sample.contains(&(i, run.sample_id.as_str())) {
                        Some(c as f64)
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    let entities = species.iter().map(ToString::to_string).collect();
    Ok(QuantMatrix::new(
        Measure::SpectralCount,
        Level::Species,
        entities,
        columns(runs),
        cells,
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    /// Converged and passed the residual gate.
    Success,
    /// Converged, but the residual is too large or the feature does not
    /// explain the identification that seeded it.
    Rejected,
    Failed,
}

impl FitStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitStatus::Success => "success",
            FitStatus::Rejected => "rejected",
            FitStatus::Failed => "failed",
        }
    }
}

/// Outcome of the feature fit for one species in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub run: RunId,
    pub species: SpeciesKey,
    pub status: FitStatus,
    /// Final parameters when the optimizer produced any.
    pub result: Option<FitResult>,
}

impl FitRecord {
    pub fn params(&self) -> Option<&FeatureParams> {
        self.result.as_ref().map(|r| &r.params)
    }

    pub fn is_success(&self) -> bool {
        self.status == FitStatus::Success
    }
}

/// The seeding MS/MS scan must fall within 3 sigma of the fitted apex, and the
/// fitted envelope must start within a quarter isotope spacing of the precursor.
fn explains(p: &FeatureParams, seed: &Identification) -> bool {
    (p.mu - seed.retention_time).abs() <= 3.0 * p.sigma
        && (p.zeta0 - seed.precursor_mz).abs() <= p.delta / 4.0
}

fn fit_one(raster: &Raster, seed: &Identification) -> FitRecord {
    let window = fit_window(raster, seed);
    let outcome = initial_guess(&window, seed).and_then(|g| fit_feature(&window, &g));
    let (status, result) = match outcome {
        Ok(r) if r.is_success() && explains(&r.params, seed) => (FitStatus::Success, Some(r)),
        Ok(r) => (FitStatus::Rejected, Some(r)),
        Err(FitError::NoConvergence(r)) => (FitStatus::Failed, Some(*r)),
        Err(_) => (FitStatus::Failed, None),
    };
    FitRecord {
        run: seed.run(),
        species: seed.species.clone(),
        status,
        result,
    }
}

/// Fits one feature per species per run, seeded from the lowest-fdr
/// identification, and tabulates the volumes of the successful fits.
///
/// Rows match [`spectral_counts`] on the same input, so every present cell
/// here has a present count.
pub fn ion_abundances(
    ids: &[Identification],
    rasters: &BTreeMap<RunId, Raster>,
    runs: &RunLayout,
) -> Result<(QuantMatrix, Vec<FitRecord>), QuantError> {
    let species = species_in(ids, runs);
    let index: HashMap<&SpeciesKey, usize> = species.iter().enumerate().map(|(i, k)| (k, i)).collect();

    let mut seeds: BTreeMap<(usize, usize), &Identification> = BTreeMap::new();
    for (j, (run, _)) in runs.iter().enumerate() {
        let mut any = false;
        for id in ids.iter().filter(|id| id.run() == *run) {
            any = true;
            let slot = seeds.entry((index[&id.species], j)).or_insert(id);
            if id.fdr < slot.fdr {
                *slot = id;
            }
        }
        if any && !rasters.contains_key(run) {
            return Err(QuantError::MissingRaster(run.clone()));
        }
    }

    let tasks: Vec<((usize, usize), &Identification)> = seeds.into_iter().collect();
    let records: Vec<((usize, usize), FitRecord)> = tasks
        .par_iter()
        .map(|&((i, j), seed)| ((i, j), fit_one(&rasters[&runs[j].0], seed)))
        .collect();

    let mut cells = vec![vec![None; runs.len()]; species.len()];
    for ((i, j), rec) in &records {
        if rec.is_success() {
            cells[*i][*j] = rec.result.map(|r| r.abundance);
        }
    }
    let matrix = QuantMatrix::new(
        Measure::IonAbundance,
        Level::Species,
        species.iter().map(ToString::to_string).collect(),
        columns(runs),
        cells,
    )?;
    Ok((matrix, records.into_iter().map(|(_, r)| r).collect()))
}

const FIT_COLUMNS: [&str; 16] = [
    "sample_id",
    "replicate_id",
    "species",
    "status",
    "A",
    "mu",
    "sigma",
    "zeta0",
    "delta",
    "lambda",
    "rho",
    "n_peaks",
    "residual",
    "iterations",
    "converged",
    "abundance",
];

pub fn write_fit_table(path: &Path, records: &[FitRecord]) -> Result<(), TsvError> {
    let mut w = TsvWriter::create(path, &FIT_COLUMNS)?;
    for rec in records {
        let mut row = vec![
            rec.run.sample_id.clone(),
            rec.run.replicate_id.clone(),
            rec.species.to_string(),
            rec.status.as_str().to_string(),
        ];
        match &rec.result {
            Some(r) => {
                let p = &r.params;
                row.extend(
                    [p.amplitude, p.mu, p.sigma, p.zeta0, p.delta, p.lambda, p.rho]
                        .iter()
                        .map(|v| v.to_string()),
                );
                row.push(p.n_peaks.to_string());
                row.push(r.residual_norm.to_string());
                row.push(r.iterations.to_string());
                row.push(r.converged.to_string());
                row.push(r.abundance.to_string());
            }
            None => row.extend(std::iter::repeat_n("NA".to_string(), 12)),
        }
        w.write_row(row)?;
    }
    w.finish()
}

pub fn read_fit_table(path: &Path) -> Result<Vec<FitRecord>, TsvError> {
    let table = Table::read(path)?;
    let c = table.columns(&FIT_COLUMNS)?;
    table
        .rows()
        .map(|row| {
            let run = RunId::new(row.str(c[0]), row.str(c[1]));
            let species = row
                .str(c[2])
                .parse::<SpeciesKey>()
                .map_err(|e| row.error(e.to_string()))?;
            let status = match row.str(c[3]) {
                "success" => FitStatus::Success,
                "rejected" => FitStatus::Rejected,
                "failed" => FitStatus::Failed,
                other => return Err(row.error(format!("unknown fit status '{other}'"))),
            };
            let int = |k: usize| -> Result<usize, TsvError> {
                row.str(c[k])
                    .parse()
                    .map_err(|_| row.error(format!("{} is not an integer", FIT_COLUMNS[k])))
            };
            let result = match row.opt_f64(c[4], FIT_COLUMNS[4])? {
                None => None,
                Some(amplitude) => {
                    let f = |k: usize| row.f64(c[k], FIT_COLUMNS[k]);
                    let converged = match row.str(c[14]) {
                        "true" => true,
                        "false" => false,
                        other => return Err(row.error(format!("converged must be true or false, found '{other}'"))),
                    };
                    Some(FitResult {
                        params: FeatureParams {
                            amplitude,
                            mu: f(5)?,
                            sigma: f(6)?,
                            zeta0: f(7)?,
                            delta: f(8)?,
                            lambda: f(9)?,
                            rho: f(10)?,
                            n_peaks: int(11)? as u32,
                        },
                        residual_norm: f(12)?,
                        iterations: int(13)?,
                        converged,
                        abundance: f(15)?,
                    })
                }
            };
            Ok(FitRecord {
                run,
                species,
                status,
                result,
            })
        })
        .collect()
}

/// Biological sample a column belongs to: the sample part of a run label, or
/// the label itself.
fn sample_of(column_id: &str) -> String {
    RunId::parse(column_id)
        .map(|r| r.sample_id)
        .unwrap_or_else(|| column_id.to_string())
}

/// Collapses technical replicates into one column per biological sample: mean
/// of the present values, missing when none is present.
pub fn average_technical_replicates(m: &QuantMatrix) -> Result<QuantMatrix, QuantError> {
    let mut order: Vec<(String, Group)> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (j, col) in m.samples().iter().enumerate() {
        let sample = sample_of(&col.id);
        match order.iter().position(|(s, _)| *s == sample) {
            Some(g) => {
                if order[g].1 != col.group {
                    return Err(QuantError::MixedGroups(sample));
                }
                members[g].push(j);
            }
            None => {
                order.push((sample, col.group));
                members.push(vec![j]);
            }
        }
    }
    let cells = m
        .rows()
        .map(|(_, row)| {
            members
                .iter()
                .map(|cols| {
                    let present: Vec<f64> = cols.iter().filter_map(|&j| row[j]).collect();
                    (!present.is_empty())
                        .then(|| present.iter().sum::<f64>() / present.len() as f64)
                })
                .collect()
        })
        .collect();
    let samples = order
        .into_iter()
        .map(|(id, g)| SampleColumn::new(id, g))
        .collect();
    Ok(QuantMatrix::new(
        m.measure,
        m.level,
        m.entities().to_vec(),
        samples,
        cells,
    )?)
}

/// Keeps entities present in at least `k` case or `k` control samples that
/// also have some positive value.
pub fn filter_min_presence(m: &QuantMatrix, k: usize) -> QuantMatrix {
    let groups = m.groups();
    m.retain_rows(|_, row| {
        let present = |g: Group| {
            row.iter()
                .zip(&groups)
                .filter(|(v, gg)| **gg == g && v.is_some())
                .count()
        };
        let informative = row.iter().flatten().any(|v| *v > 0.0);
        informative && (present(Group::Case) >= k || present(Group::Control) >= k)
    })
}

pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Rescales columns to a common center: the mean column total for counts, the
/// median of column medians for abundances.
pub fn normalize(m: &QuantMatrix) -> Result<QuantMatrix, QuantError> {
    let mut stats = Vec::with_capacity(m.n_samples());
    for (j, col) in m.samples().iter().enumerate() {
        let mut present: Vec<f64> = m.column(j).flatten().collect();
        let stat = match m.measure {
            Measure::SpectralCount => present.iter().sum::<f64>(),
            Measure::IonAbundance => median(&mut present).unwrap_or(0.0),
        };
        if stat.is_nan() || stat <= 0.0 {
            return Err(QuantError::DegenerateColumn(col.id.clone()));
        }
        stats.push(stat);
    }
    let center = match m.measure {
        Measure::SpectralCount => stats.iter().sum::<f64>() / stats.len() as f64,
        Measure::IonAbundance => median(&mut stats.clone()).expect("at least two columns"),
    };
    let factors: Vec<f64> = stats.iter().map(|s| center / s).collect();
    Ok(m.scale_columns(&factors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_species;

    fn id(sample: &str, rep: &str, species: &str, fdr: f64) -> Identification {
        Identification {
            sample_id: sample.into(),
            replicate_id: rep.into(),
            species: parse_species(species).unwrap(),
            retention_time: 100.0,
            precursor_mz: 500.0,
            fdr,
        }
    }

    fn layout() -> Vec<(RunId, Group)> {
        vec![
            (RunId::new("c1", "a"), Group::Case),
            (RunId::new("c1", "b"), Group::Case),
            (RunId::new("k1", "a"), Group::Control),
            (RunId::new("k1", "b"), Group::Control),
        ]
    }

    fn matrix(measure: Measure, cells: Vec<Vec<Option<f64>>>) -> QuantMatrix {
        let samples = vec![
            SampleColumn::new("x", Group::Case),
            SampleColumn::new("y", Group::Control),
            SampleColumn::new("z", Group::Control),
        ];
        let entities = (0..cells.len()).map(|i| format!("E{i}")).collect();
        QuantMatrix::new(measure, Level::Species, entities, samples, cells).unwrap()
    }

    #[test]
    fn counts_follow_the_zero_versus_missing_rule() {
        let mut ids: Vec<_> = (0..4).map(|_| id("c1", "a", "PEPK+2", 0.0)).collect();
        ids.push(id("k1", "b", "AAK+1", 0.0));
        ids.push(id("zz", "a", "AAK+1", 0.0));
        let m = spectral_counts(&ids, &layout()).unwrap();
        assert_eq!(m.entities(), ["AAK+1", "PEPK+2"]);
        assert_eq!(m.row(0), [None, None, Some(0.0), Some(1.0)]);
        assert_eq!(m.row(1), [Some(4.0), Some(0.0), None, None]);
    }

    #[test]
    fn ion_abundance_requires_rasters() {
        let ids = vec![id("c1", "a", "PEPK+2", 0.0)];
        let err = ion_abundances(&ids, &BTreeMap::new(), &layout()).unwrap_err();
        assert!(matches!(err, QuantError::MissingRaster(r) if r == RunId::new("c1", "a")));
    }

    #[test]
    fn averaging_rules() {
        let samples = vec![
            SampleColumn::new("s1__a", Group::Case),
            SampleColumn::new("s1__b", Group::Case),
            SampleColumn::new("s2__a", Group::Control),
            SampleColumn::new("s2__b", Group::Control),
        ];
        let m = QuantMatrix::new(
            Measure::IonAbundance,
            Level::Species,
            vec!["A".into(), "B".into()],
            samples,
            vec![
                vec![Some(10.0), Some(20.0), Some(10.0), None],
                vec![None, None, None, Some(3.0)],
            ],
        )
        .unwrap();
        let avg = average_technical_replicates(&m).unwrap();
        assert_eq!(avg.samples().len(), 2);
        assert_eq!(avg.samples()[0].id, "s1");
        assert_eq!(avg.row(0), [Some(15.0), Some(10.0)]);
        assert_eq!(avg.row(1), [None, Some(3.0)]);
    }

    #[test]
    fn filtering_thresholds() {
        let m = matrix(
            Measure::SpectralCount,
            vec![
                vec![Some(1.0), None, None],
                vec![None, Some(2.0), Some(1.0)],
                vec![Some(0.0), Some(0.0), Some(0.0)],
                vec![None, None, None],
            ],
        );
        let f = filter_min_presence(&m, 2);
        assert_eq!(f.entities(), ["E1"]);
        assert_eq!(filter_min_presence(&f, 2), f);
        assert_eq!(filter_min_presence(&m, 1).entities(), ["E0", "E1"]);
    }

    #[test]
    fn count_normalization_matches_hand_values() {
        // Totals 4, 8, 12 -> center 8, factors 2, 1, 2/3.
        let m = matrix(
            Measure::SpectralCount,
            vec![
                vec![Some(1.0), Some(6.0), Some(3.0)],
                vec![Some(3.0), Some(2.0), Some(9.0)],
            ],
        );
        let n = normalize(&m).unwrap();
        assert_eq!(n.row(0), [Some(2.0), Some(6.0), Some(2.0)]);
        assert_eq!(n.row(1), [Some(6.0), Some(2.0), Some(6.0)]);
    }

    #[test]
    fn abundance_normalization_matches_hand_values() {
        // Medians 2, 5, 20 (missing skipped) -> center 5, factors 2.5, 1, 0.25.
        let m = matrix(
            Measure::IonAbundance,
            vec![
                vec![Some(1.0), Some(5.0), Some(20.0)],
                vec![Some(2.0), Some(4.0), None],
                vec![Some(3.0), Some(9.0), None],
            ],
        );
        let n = normalize(&m).unwrap();
        assert_eq!(n.row(0), [Some(2.5), Some(5.0), Some(5.0)]);
        assert_eq!(n.row(1), [Some(5.0), Some(4.0), None]);
        assert_eq!(n.row(2), [Some(7.5), Some(9.0), None]);
    }

    #[test]
    fn degenerate_column_is_named() {
        let m = matrix(
            Measure::SpectralCount,
            vec![vec![Some(1.0), Some(0.0), Some(3.0)]],
        );
        assert!(matches!(normalize(&m), Err(QuantError::DegenerateColumn(c)) if c == "y"));
    }
}
