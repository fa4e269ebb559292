//! Entity-by-sample quantity tables with explicit missing cells.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::tsv::{fmt_opt, Table, TsvError, TsvWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    SpectralCount,
    IonAbundance,
}

impl Measure {
    pub const ALL: [Measure; 2] = [Measure::SpectralCount, Measure::IonAbundance];

    pub fn as_str(&self) -> &'static str {
        match self {
            Measure::SpectralCount => "count",
            Measure::IonAbundance => "abundance",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "count" | "spectral_count" => Ok(Measure::SpectralCount),
            "abundance" | "ion_abundance" => Ok(Measure::IonAbundance),
            other => Err(format!("unknown measure '{other}' (expected count|abundance)")),
        }
    }
}

/// Rollup level, ordered species < peptide < protein.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Species,
    Peptide,
    Protein,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Species, Level::Peptide, Level::Protein];

    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Species => "species",
            Level::Peptide => "peptide",
            Level::Protein => "protein",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "species" | "s" => Ok(Level::Species),
            "peptide" | "p" => Ok(Level::Peptide),
            "protein" | "P" => Ok(Level::Protein),
            other => Err(format!(
                "unknown level '{other}' (expected species|peptide|protein)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Case,
    Control,
}

impl Group {
    pub fn as_str(&self) -> &'static str {
        match self {
            Group::Case => "case",
            Group::Control => "control",
        }
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "case" => Ok(Group::Case),
            "control" => Ok(Group::Control),
            other => Err(format!("unknown group '{other}' (expected case|control)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleColumn {
    pub id: String,
    pub group: Group,
}

impl SampleColumn {
    pub fn new(id: impl Into<String>, group: Group) -> Self {
        SampleColumn {
            id: id.into(),
            group,
        }
    }
}

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix needs at least one case and one control sample")]
    MissingGroup,
    #[error("row {row} has {found} cells, expected {expected}")]
    Shape {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("duplicate entity '{0}'")]
    DuplicateEntity(String),
    #[error("duplicate sample '{0}'")]
    DuplicateSample(String),
    #[error("invalid cell value {value} for entity '{entity}'")]
    BadValue { entity: String, value: f64 },
    #[error(transparent)]
    Tsv(#[from] TsvError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantMatrix {
    pub measure: Measure,
    pub level: Level,
    entities: Vec<String>,
    samples: Vec<SampleColumn>,
    cells: Vec<Vec<Option<f64>>>,
}

impl QuantMatrix {
    pub fn new(
        measure: Measure,
        level: Level,
        entities: Vec<String>,
        samples: Vec<SampleColumn>,
        cells: Vec<Vec<Option<f64>>>,
    ) -> Result<Self, MatrixError> {
        if !samples.iter().any(|s| s.group == Group::Case)
            || !samples.iter().any(|s| s.group == Group::Control)
        {
            return Err(MatrixError::MissingGroup);
        }
        for (i, s) in samples.iter().enumerate() {
            if samples[..i].iter().any(|o| o.id == s.id) {
                return Err(MatrixError::DuplicateSample(s.id.clone()));
            }
        }
        let mut sorted: Vec<&String> = entities.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(MatrixError::DuplicateEntity(w[0].clone()));
        }
        if cells.len() != entities.len() {
            return Err(MatrixError::Shape {
                row: cells.len(),
                found: 0,
                expected: samples.len(),
            });
        }
        for (row, (entity, values)) in entities.iter().zip(&cells).enumerate() {
            if values.len() != samples.len() {
                return Err(MatrixError::Shape {
                    row,
                    found: values.len(),
                    expected: samples.len(),
                });
            }
            if let Some(&bad) = values.iter().flatten().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(MatrixError::BadValue {
                    entity: entity.clone(),
                    value: bad,
                });
            }
        }
        Ok(QuantMatrix {
            measure,
            level,
            entities,
            samples,
            cells,
        })
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn samples(&self) -> &[SampleColumn] {
        &self.samples
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn row(&self, i: usize) -> &[Option<f64>] {
        &self.cells[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[Option<f64>])> {
        self.entities
            .iter()
            .map(String::as_str)
            .zip(self.cells.iter().map(Vec::as_slice))
    }

    pub fn entity_index(&self, entity: &str) -> Option<usize> {
        self.entities.iter().position(|e| e == entity)
    }

    pub fn get(&self, entity: usize, sample: usize) -> Option<f64> {
        self.cells[entity][sample]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        self.cells.iter().map(move |r| r[j])
    }

    pub fn group_indices(&self, group: Group) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.group == group)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn groups(&self) -> Vec<Group> {
        self.samples.iter().map(|s| s.group).collect()
    }

    /// Keeps the rows for which `keep` is true, preserving order.
    pub fn retain_rows(&self, mut keep: impl FnMut(&str, &[Option<f64>]) -> bool) -> QuantMatrix {
        let (entities, cells) = self
            .rows()
            .filter(|(e, r)| keep(e, r))
            .map(|(e, r)| (e.to_string(), r.to_vec()))
            .unzip();
        QuantMatrix {
            entities,
            cells,
            ..self.clone_header()
        }
    }

    /// Same header with cells transformed column-wise by `factors`.
    pub(crate) fn scale_columns(&self, factors: &[f64]) -> QuantMatrix {
        let cells = self
            .cells
            .iter()
            .map(|r| {
                r.iter()
                    .zip(factors)
                    .map(|(v, f)| v.map(|x| x * f))
                    .collect()
            })
            .collect();
        QuantMatrix {
            cells,
            entities: self.entities.clone(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> QuantMatrix {
        QuantMatrix {
            measure: self.measure,
            level: self.level,
            entities: Vec::new(),
            samples: self.samples.clone(),
            cells: Vec::new(),
        }
    }

    /// Writes the matrix (`entity` column then one column per sample, `NA` for
    /// missing) and the `sample_id group` sidecar next to it.
    pub fn write_tsv(&self, path: &Path, sidecar: &Path) -> Result<(), TsvError> {
        let mut header = vec![self.level.as_str()];
        header.extend(self.samples.iter().map(|s| s.id.as_str()));
        let mut w = TsvWriter::create(path, &header)?;
        for (entity, row) in self.rows() {
            let mut fields = vec![entity.to_string()];
            fields.extend(row.iter().map(|v| fmt_opt(*v)));
            w.write_row(fields)?;
        }
        w.finish()?;
        write_sidecar(sidecar, &self.samples)
    }

    pub fn read_tsv(
        path: &Path,
        sidecar: &Path,
        measure: Measure,
        level: Level,
    ) -> Result<QuantMatrix, MatrixError> {
        let groups = read_sidecar(sidecar)?;
        let table = Table::read(path)?;
        let key_col = table.column(level.as_str())?;
        let mut samples = Vec::new();
        let mut sample_cols = Vec::new();
        for (i, h) in table.header.iter().enumerate() {
            if i == key_col {
                continue;
            }
            let group = groups
                .iter()
                .find(|s| s.id == *h)
                .map(|s| s.group)
                .ok_or_else(|| {
                    TsvError::row(sidecar, 1, format!("no group assigned to sample '{h}'"))
                })?;
            samples.push(SampleColumn::new(h.clone(), group));
            sample_cols.push(i);
        }
        let mut entities = Vec::new();
        let mut cells = Vec::new();
        for row in table.rows() {
            entities.push(row.str(key_col).to_string());
            let values = sample_cols
                .iter()
                .map(|&c| row.opt_f64(c, &table.header[c]))
                .collect::<Result<Vec<_>, _>>()?;
            cells.push(values);
        }
        QuantMatrix::new(measure, level, entities, samples, cells)
    }
}

pub fn write_sidecar(path: &Path, samples: &[SampleColumn]) -> Result<(), TsvError> {
    let mut w = TsvWriter::create(path, &["sample_id", "group"])?;
    for s in samples {
        w.write_row([s.id.as_str(), s.group.as_str()])?;
    }
    w.finish()
}

pub fn read_sidecar(path: &Path) -> Result<Vec<SampleColumn>, TsvError> {
    let table = Table::read(path)?;
    let cols = table.columns(&["sample_id", "group"])?;
    table
        .rows()
        .map(|row| {
            let group = row.str(cols[1]).parse().map_err(|e: String| row.error(e))?;
            Ok(SampleColumn::new(row.str(cols[0]), group))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples() -> Vec<SampleColumn> {
        vec![
            SampleColumn::new("a", Group::Case),
            SampleColumn::new("b", Group::Control),
        ]
    }

    #[test]
    fn validates_shape_and_groups() {
        let ok = QuantMatrix::new(
            Measure::IonAbundance,
            Level::Species,
            vec!["X+2".into()],
            samples(),
            vec![vec![Some(1.0), None]],
        );
        assert!(ok.is_ok());
        assert!(matches!(
            QuantMatrix::new(
                Measure::IonAbundance,
                Level::Species,
                vec![],
                vec![SampleColumn::new("a", Group::Case)],
                vec![]
            ),
            Err(MatrixError::MissingGroup)
        ));
        assert!(QuantMatrix::new(
            Measure::IonAbundance,
            Level::Species,
            vec!["X".into()],
            samples(),
            vec![vec![Some(-1.0), None]]
        )
        .is_err());
        assert!(QuantMatrix::new(
            Measure::IonAbundance,
            Level::Species,
            vec!["X".into(), "X".into()],
            samples(),
            vec![vec![None, None], vec![None, None]]
        )
        .is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = QuantMatrix::new(
            Measure::SpectralCount,
            Level::Peptide,
            vec!["PEPK".into(), "AAK".into()],
            samples(),
            vec![vec![Some(1.5), None], vec![Some(0.0), Some(3.0)]],
        )
        .unwrap();
        let (p, s) = (dir.path().join("m.tsv"), dir.path().join("m.samples.tsv"));
        m.write_tsv(&p, &s).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "peptide\ta\tb\nPEPK\t1.5\tNA\nAAK\t0\t3\n");
        let back = QuantMatrix::read_tsv(&p, &s, Measure::SpectralCount, Level::Peptide).unwrap();
        assert_eq!(back, m);
    }
}
