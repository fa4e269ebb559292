//! Ion-competition and digestion diagnostics.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::feature::TimeExtent;
use crate::ingest::ProteinMap;
use crate::matrix::QuantMatrix;
use crate::quant::median;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiagnosticsError {
    #[error("'{species}' does not occur at position {start} of its parent")]
    NotAtPosition { species: String, start: usize },
    #[error("no tryptic status for species: {}", .0.join(", "))]
    MissingStatus(Vec<String>),
}

/// Gap in seconds between two time extents, 0 when they intersect.
pub fn pairwise_distance(a: &TimeExtent, b: &TimeExtent) -> f64 {
    if a.left > b.right {
        a.left - b.right
    } else if b.left > a.right {
        b.left - a.right
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cohort {
    Zero,
    Positive,
    Missing,
}

impl Cohort {
    pub fn of(d: Option<f64>) -> Self {
        match d {
            None => Cohort::Missing,
            Some(d) if d > 0.0 => Cohort::Positive,
            Some(_) => Cohort::Zero,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Cohort::Zero => "zero",
            Cohort::Positive => "positive",
            Cohort::Missing => "missing",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceRecord {
    pub species: String,
    pub d: Option<f64>,
    pub cohort: Cohort,
}

/// Time extents of features observed in one sample.
pub type SampleExtents = BTreeMap<String, TimeExtent>;

/// Interference distance of each foreground species: over the case samples in
/// which it was observed, the mean of its minimum separation from any
/// background feature of that sample. Samples without background features do
/// not contribute.
///
/// `foreground[s]` maps species to extent in sample `s`; `background[s]` lists
/// every background extent in sample `s`. Output follows `species` order.
pub fn interference_distance(
    species: &[String],
    foreground: &BTreeMap<String, SampleExtents>,
    background: &BTreeMap<String, Vec<TimeExtent>>,
    case_samples: &[String],
) -> Vec<InterferenceRecord> {
    species
        .iter()
        .map(|sp| {
            let per_sample: Vec<f64> = case_samples
                .iter()
                .filter_map(|s| {
                    let fg = foreground.get(s)?.get(sp)?;
                    background
                        .get(s)?
                        .iter()
                        .map(|bg| pairwise_distance(fg, bg))
                        .min_by(f64::total_cmp)
                })
                .collect();
            let d = (!per_sample.is_empty())
                .then(|| per_sample.iter().sum::<f64>() / per_sample.len() as f64);
            InterferenceRecord {
                species: sp.clone(),
                d,
                cohort: Cohort::of(d),
            }
        })
        .collect()
}

/// Which side of a two-organism design a protein belongs to, by accession prefix.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassRule {
    pub spike_prefixes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProteinClass {
    /// Proteins added at varying amounts (background features for interference).
    Spike,
    /// Everything else (the foreground).
    Base,
}

impl ProteinClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProteinClass::Spike => "spike",
            ProteinClass::Base => "base",
        }
    }
}

impl ClassRule {
    pub fn new<S: Into<String>>(prefixes: impl IntoIterator<Item = S>) -> Self {
        ClassRule {
            spike_prefixes: prefixes.into_iter().map(Into::into).collect(),
        }
    }

    pub fn classify(&self, accession: &str) -> ProteinClass {
        if self.spike_prefixes.iter().any(|p| accession.starts_with(p.as_str())) {
            ProteinClass::Spike
        } else {
            ProteinClass::Base
        }
    }

    /// Class of a sequence whose proteins all agree; `None` when unmapped or mixed.
    pub fn classify_sequence(&self, pm: &ProteinMap, sequence: &str) -> Option<ProteinClass> {
        let mut classes = pm.proteins_for(sequence)?.iter().map(|a| self.classify(a));
        let first = classes.next()?;
        classes.all(|c| c == first).then_some(first)
    }
}

/// Ordered from least to most tryptic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrypticStatus {
    NonTryptic,
    StrictlySemiTryptic,
    FullyTryptic,
}

impl fmt::Display for TrypticStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrypticStatus::FullyTryptic => "fully_tryptic",
            TrypticStatus::StrictlySemiTryptic => "strictly_semi_tryptic",
            TrypticStatus::NonTryptic => "non_tryptic",
        })
    }
}

fn cleaves_after(residue: u8) -> bool {
    residue == b'K' || residue == b'R'
}

/// Tryptic status of `sequence` found at 1-based `start` in `parent`. With the
/// proline rule, trypsin does not cut before P.
pub fn classify_tryptic(
    sequence: &str,
    parent: &str,
    start: usize,
    proline_rule: bool,
) -> Result<TrypticStatus, DiagnosticsError> {
    let (seq, par) = (sequence.as_bytes(), parent.as_bytes());
    let end = start.wrapping_sub(1).wrapping_add(seq.len());
    if start == 0 || seq.is_empty() || end > par.len() || &par[start - 1..end] != seq {
        return Err(DiagnosticsError::NotAtPosition {
            species: sequence.to_string(),
            start,
        });
    }
    let blocked = |next: u8| proline_rule && next == b'P';
    let n_term = start == 1 || (cleaves_after(par[start - 2]) && !blocked(seq[0]));
    let c_term = end == par.len() || (cleaves_after(seq[seq.len() - 1]) && !blocked(par[end]));
    Ok(match (n_term, c_term) {
        (true, true) => TrypticStatus::FullyTryptic,
        (false, false) => TrypticStatus::NonTryptic,
        _ => TrypticStatus::StrictlySemiTryptic,
    })
}

/// Most tryptic status of `sequence` over every occurrence in every parent.
pub fn best_tryptic_status<'a>(
    sequence: &str,
    parents: impl IntoIterator<Item = &'a str>,
    proline_rule: bool,
) -> Option<TrypticStatus> {
    parents
        .into_iter()
        .flat_map(|parent| {
            parent
                .match_indices(sequence)
                .map(move |(i, _)| (parent, i + 1))
                .collect::<Vec<_>>()
        })
        .filter_map(|(parent, start)| classify_tryptic(sequence, parent, start, proline_rule).ok())
        .max()
}

/// Tryptic status of every mapped sequence, resolved against the protein
/// sequences in `fasta`.
pub fn tryptic_statuses(
    pm: &ProteinMap,
    fasta: &BTreeMap<String, String>,
    proline_rule: bool,
) -> HashMap<String, TrypticStatus> {
    pm.iter()
        .filter_map(|(seq, accs)| {
            let parents = accs.iter().filter_map(|a| fasta.get(a).map(String::as_str));
            best_tryptic_status(seq, parents, proline_rule).map(|s| (seq.clone(), s))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiProfile {
    pub sample_id: String,
    pub semi_count: usize,
    pub semi_fraction: f64,
}

/// Per sample: how many strictly semi-tryptic species were observed and what
/// fraction of the total signal they carry. `sequence_of` maps a row entity to
/// the sequence used to look up its status.
pub fn semi_tryptic_profile(
    m: &QuantMatrix,
    statuses: &HashMap<String, TrypticStatus>,
    sequence_of: impl Fn(&str) -> String,
) -> Result<Vec<SemiProfile>, DiagnosticsError> {
    let mut semi = Vec::with_capacity(m.n_entities());
    let mut unknown = Vec::new();
    for entity in m.entities() {
        match statuses.get(&sequence_of(entity)) {
            Some(s) => semi.push(*s == TrypticStatus::StrictlySemiTryptic),
            None => unknown.push(entity.clone()),
        }
    }
    if !unknown.is_empty() {
        return Err(DiagnosticsError::MissingStatus(unknown));
    }
    Ok(m.samples()
        .iter()
        .enumerate()
        .map(|(j, col)| {
            let (mut count, mut semi_sum, mut total) = (0, 0.0, 0.0);
            for (v, is_semi) in m.column(j).zip(&semi) {
                let Some(v) = v else { continue };
                total += v;
                if *is_semi {
                    count += 1;
                    semi_sum += v;
                }
            }
            SemiProfile {
                sample_id: col.id.clone(),
                semi_count: count,
                semi_fraction: if total > 0.0 { semi_sum / total } else { 0.0 },
            }
        })
        .collect())
}

/// Number of 0.1-wide bins covering `[-1, 1]`.
pub const W_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct StratumSummary {
    pub stratum: String,
    pub n: usize,
    pub median: f64,
    /// Counts in `[-1 + 0.1 i, -0.9 + 0.1 i)`; the last bin also holds 1.
    pub histogram: [usize; W_BINS],
}

impl StratumSummary {
    pub fn bin_edges(i: usize) -> (f64, f64) {
        let lo = -1.0 + 0.1 * i as f64;
        (lo, lo + 0.1)
    }
}

fn bin_of(w: f64) -> usize {
    (((w + 1.0) * 10.0).floor().max(0.0) as usize).min(W_BINS - 1)
}

/// Summaries of labeled `w` values per stratum, in the order of `strata`.
/// Strata without records are omitted.
pub fn stratified_w(records: &[(String, f64)], strata: &[String]) -> Vec<StratumSummary> {
    strata
        .iter()
        .filter_map(|name| {
            let mut ws: Vec<f64> = records
                .iter()
                .filter(|(s, _)| s == name)
                .map(|(_, w)| *w)
                .collect();
            if ws.is_empty() {
                log::info!("stratum '{name}' has no records; omitted");
                return None;
            }
            let mut histogram = [0; W_BINS];
            for &w in &ws {
                histogram[bin_of(w)] += 1;
            }
            Some(StratumSummary {
                stratum: name.clone(),
                n: ws.len(),
                median: median(&mut ws).expect("non-empty"),
                histogram,
            })
        })
        .collect()
}

/// `low` for values at or below the median of `values`, `high` above.
pub fn median_split(values: &[f64]) -> Vec<&'static str> {
    let Some(mid) = median(&mut values.to_vec()) else {
        return Vec::new();
    };
    values
        .iter()
        .map(|v| if *v <= mid { "low" } else { "high" })
        .collect()
}

/// Missingness stratum label, `0-{cut}` or `{cut + 1}-{total}`.
pub fn missingness_stratum(missing: usize, cut: usize, total: usize) -> String {
    if missing <= cut {
        format!("0-{cut}")
    } else {
        format!("{}-{total}", cut + 1)
    }
}
