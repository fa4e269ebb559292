//! Aggregation of species quantities to peptides and proteins.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ingest::{ProteinMap, SpeciesKey};
use crate::matrix::{Level, MatrixError, QuantMatrix};

pub use crate::matrix::Level as RollupLevel;

#[derive(Debug, Error)]
pub enum RollupError {
    #[error("cannot roll {from} up to {to}")]
    Direction { from: Level, to: Level },
    #[error("sequences without a protein: {}", .0.join(", "))]
    Unmapped(Vec<String>),
    #[error("entity '{0}' is not a species key")]
    BadSpecies(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Sequence of a species key or, for peptide entities, the key itself.
fn sequence_of(entity: &str, level: Level) -> Result<String, RollupError> {
    match level {
        Level::Species => entity
            .parse::<SpeciesKey>()
            .map(|k| k.sequence().to_string())
            .map_err(|_| RollupError::BadSpecies(entity.to_string())),
        _ => Ok(entity.to_string()),
    }
}

/// Parent entities of one row at the target level.
fn parents(
    entity: &str,
    from: Level,
    to: Level,
    pm: &ProteinMap,
) -> Result<Option<Vec<String>>, RollupError> {
    if from == to {
        return Ok(Some(vec![entity.to_string()]));
    }
    let seq = sequence_of(entity, from)?;
    Ok(match to {
        Level::Peptide => Some(vec![seq]),
        Level::Protein => pm
            .proteins_for(&seq)
            .map(|set| set.iter().cloned().collect()),
        Level::Species => unreachable!("direction checked by caller"),
    })
}

/// Sums rows into their parents at `target`, skipping missing cells; a parent
/// whose constituents are all missing in a sample stays missing. Shared
/// sequences contribute to every protein they map to.
pub fn rollup_matrix(
    m: &QuantMatrix,
    target: Level,
    pm: &ProteinMap,
) -> Result<QuantMatrix, RollupError> {
    if target < m.level {
        return Err(RollupError::Direction {
            from: m.level,
            to: target,
        });
    }
    let mut groups: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    let mut orphans = BTreeSet::new();
    for (entity, row) in m.rows() {
        let Some(parents) = parents(entity, m.level, target, pm)? else {
            orphans.insert(sequence_of(entity, m.level)?);
            continue;
        };
        for parent in parents {
            let acc = groups
                .entry(parent)
                .or_insert_with(|| vec![None; row.len()]);
            for (a, v) in acc.iter_mut().zip(row) {
                if let Some(v) = v {
                    *a = Some(a.unwrap_or(0.0) + v);
                }
            }
        }
    }
    if !orphans.is_empty() {
        return Err(RollupError::Unmapped(orphans.into_iter().collect()));
    }
    let (entities, cells) = groups.into_iter().unzip();
    Ok(QuantMatrix::new(
        m.measure,
        target,
        entities,
        m.samples().to_vec(),
        cells,
    )?)
}

/// A protein's constituent entities at one level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProteinElements {
    pub protein: String,
    pub level: Level,
    /// Row indices into the matrix the elements were drawn from.
    pub rows: Vec<usize>,
    pub elements: Vec<String>,
}

impl ProteinElements {
    pub fn k(&self) -> usize {
        self.elements.len()
    }
}

/// For every protein, the rows of `m` (species, peptide or protein level) that
/// belong to it. Proteins without surviving rows are omitted; rows whose
/// sequence has no protein are ignored.
pub fn protein_elements(pm: &ProteinMap, m: &QuantMatrix) -> Result<Vec<ProteinElements>, RollupError> {
    let mut by_protein: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, entity) in m.entities().iter().enumerate() {
        let Some(proteins) = parents(entity, m.level, Level::Protein, pm)? else {
            continue;
        };
        for p in proteins {
            by_protein.entry(p).or_default().push(i);
        }
    }
    Ok(by_protein
        .into_iter()
        .map(|(protein, rows)| ProteinElements {
            elements: rows.iter().map(|&i| m.entities()[i].clone()).collect(),
            protein,
            level: m.level,
            rows,
        })
        .collect())
}
