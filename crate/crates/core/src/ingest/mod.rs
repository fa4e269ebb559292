//! Readers and writers for every external input: identification tables,
//! intensity rasters, species-to-protein maps, mixture designs, sample sheets
//! and protein sequences.

mod raster;
mod species;
mod tables;

pub use raster::{read_raster, write_raster, Raster, RasterError, RasterPoint};
pub use species::{
    is_amino_acid, parse_species, Modification, SpeciesKey, SpeciesParseError, AMINO_ACIDS,
};
pub use tables::{
    read_design, read_fasta, read_identifications, read_protein_map, read_sample_sheet,
    write_design, write_fasta, write_identifications, write_protein_map, write_sample_sheet,
    DesignTable, Identification, ProteinMap, SampleSheet, SampleSheetRow,
};

use std::fmt;

/// One LC-MS/MS run: a technical replicate of a biological sample.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunId {
    pub sample_id: String,
    pub replicate_id: String,
}

impl RunId {
    pub fn new(sample_id: impl Into<String>, replicate_id: impl Into<String>) -> Self {
        RunId {
            sample_id: sample_id.into(),
            replicate_id: replicate_id.into(),
        }
    }

    /// Inverse of the `Display` form `<sample_id>__<replicate_id>`.
    pub fn parse(label: &str) -> Option<Self> {
        let (s, r) = label.split_once("__")?;
        if s.is_empty() || r.is_empty() {
            return None;
        }
        Some(RunId::new(s, r))
    }

    pub fn raster_file_name(&self) -> String {
        format!("{self}.raster.tsv")
    }
}

impl fmt::Display for RunId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}__{}", self.sample_id, self.replicate_id)
    }
}

/// Keeps the identifications with `fdr <= threshold`, preserving order.
pub fn filter_by_fdr(ids: &[Identification], threshold: f64) -> Vec<Identification> {
    ids.iter().filter(|id| id.fdr <= threshold).cloned().collect()
}
