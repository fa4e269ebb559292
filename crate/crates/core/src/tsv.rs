//! Minimal tab-separated table plumbing shared by every reader and writer.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TsvError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: missing column '{column}'")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: line {line}: {message}")]
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },
}

impl TsvError {
    pub fn row(path: &Path, line: u64, message: impl Into<String>) -> Self {
        TsvError::Row {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

/// A fully-loaded TSV table with a validated header.
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, TsvError> {
        let file = File::open(path).map_err(|source| TsvError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_reader(path, file)
    }

    pub fn from_reader(path: &Path, reader: impl io::Read) -> Result<Self, TsvError> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .has_headers(true)
            .flexible(false)
            .quoting(false)
            .from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() == 1 && record[0].trim().is_empty() {
                continue;
            }
            rows.push((line, record));
        }
        Ok(Table {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    /// Index of a required column.
    pub fn column(&self, name: &str) -> Result<usize, TsvError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TsvError::MissingColumn {
                path: self.path.clone(),
                column: name.to_string(),
            })
    }

    pub fn columns(&self, names: &[&str]) -> Result<Vec<usize>, TsvError> {
        names.iter().map(|n| self.column(n)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.rows.iter().map(move |(line, record)| Row {
            path: &self.path,
            line: *line,
            record,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub struct Row<'a> {
    path: &'a Path,
    pub line: u64,
    record: &'a csv::StringRecord,
}

impl Row<'_> {
    pub fn str(&self, idx: usize) -> &str {
        self.record.get(idx).map(str::trim).unwrap_or("")
    }

    pub fn f64(&self, idx: usize, what: &str) -> Result<f64, TsvError> {
        let text = self.str(idx);
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.error(format!("{what}: cannot parse '{text}' as a number")))
    }

    /// A number or `NA`.
    pub fn opt_f64(&self, idx: usize, what: &str) -> Result<Option<f64>, TsvError> {
        if self.str(idx) == "NA" {
            Ok(None)
        } else {
            self.f64(idx, what).map(Some)
        }
    }

    pub fn error(&self, message: impl Into<String>) -> TsvError {
        TsvError::row(self.path, self.line, message)
    }
}

fn csv_error(path: &Path, err: csv::Error) -> TsvError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(source) => TsvError::Io {
            path: path.to_path_buf(),
            source,
        },
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => TsvError::row(
            path,
            line,
            format!("expected {expected_len} columns as declared by the header, found {len}"),
        ),
        other => TsvError::row(path, line, format!("{other:?}")),
    }
}

/// Buffered line writer that joins fields with tabs.
pub struct TsvWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TsvWriter {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, TsvError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| TsvError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        let file = File::create(path).map_err(|source| TsvError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = TsvWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        w.write_row(header.iter().copied())?;
        Ok(w)
    }

    pub fn write_row<I, S>(&mut self, fields: I) -> Result<(), TsvError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut first = true;
        for field in fields {
            if !first {
                self.out.write_all(b"\t").map_err(|e| self.io(e))?;
            }
            first = false;
            self.out
                .write_all(field.as_ref().as_bytes())
                .map_err(|e| self.io(e))?;
        }
        self.out.write_all(b"\n").map_err(|e| self.io(e))
    }

    pub fn finish(mut self) -> Result<(), TsvError> {
        self.out.flush().map_err(|e| self.io(e))
    }

    fn io(&self, source: io::Error) -> TsvError {
        TsvError::Io {
            path: self.path.clone(),
            source,
        }
    }
}

/// Renders an optional value, `NA` when missing.
pub fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "NA".to_string(),
    }
}
