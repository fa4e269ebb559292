use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{parse_species, RunId, SpeciesKey};
use crate::tsv::{Table, TsvError, TsvWriter};

/// One quality-scored MS/MS identification.
#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub sample_id: String,
    pub replicate_id: String,
    pub species: SpeciesKey,
    /// Seconds.
    pub retention_time: f64,
    /// Thomson.
    pub precursor_mz: f64,
    pub fdr: f64,
}

impl Identification {
    pub fn run(&self) -> RunId {
        RunId::new(self.sample_id.clone(), self.replicate_id.clone())
    }
}

const ID_HEADER: [&str; 6] = ["sample_id", "replicate_id", "species", "rt_sec", "mz", "fdr"];

pub fn read_identifications(path: &Path) -> Result<Vec<Identification>, TsvError> {
    let table = Table::read(path)?;
    let cols = table.columns(&ID_HEADER)?;
    let mut out = Vec::with_capacity(table.len());
    for row in table.rows() {
        let species = parse_species(row.str(cols[2])).map_err(|e| row.error(e.to_string()))?;
        let retention_time = row.f64(cols[3], "rt_sec")?;
        let precursor_mz = row.f64(cols[4], "mz")?;
        let fdr = row.f64(cols[5], "fdr")?;
        if retention_time < 0.0 {
            return Err(row.error(format!("rt_sec {retention_time} is negative")));
        }
        if precursor_mz <= 0.0 {
            return Err(row.error(format!("mz {precursor_mz} is not positive")));
        }
        if !(0.0..=1.0).contains(&fdr) {
            return Err(row.error(format!("fdr {fdr} outside [0, 1]")));
        }
        let sample_id = row.str(cols[0]).to_string();
        let replicate_id = row.str(cols[1]).to_string();
        if sample_id.is_empty() || replicate_id.is_empty() {
            return Err(row.error("empty sample_id or replicate_id"));
        }
        out.push(Identification {
            sample_id,
            replicate_id,
            species,
            retention_time,
            precursor_mz,
            fdr,
        });
    }
    Ok(out)
}

pub fn write_identifications(path: &Path, ids: &[Identification]) -> Result<(), TsvError> {
    let mut w = TsvWriter::create(path, &ID_HEADER)?;
    for id in ids {
        w.write_row([
            id.sample_id.clone(),
            id.replicate_id.clone(),
            id.species.to_string(),
            id.retention_time.to_string(),
            id.precursor_mz.to_string(),
            id.fdr.to_string(),
        ])?;
    }
    w.finish()
}

/// Primary sequence to protein accessions. Shared sequences map to several proteins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProteinMap {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl ProteinMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sequence: impl Into<String>, accession: impl Into<String>) {
        self.entries
            .entry(sequence.into())
            .or_default()
            .insert(accession.into());
    }

    pub fn proteins_for(&self, sequence: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(sequence)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Accession to the sequences attributed to it.
    pub fn by_protein(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut out: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (seq, accs) in &self.entries {
            for acc in accs {
                out.entry(acc.as_str()).or_default().insert(seq.as_str());
            }
        }
        out
    }
}

pub fn read_protein_map(path: &Path) -> Result<ProteinMap, TsvError> {
    let table = Table::read(path)?;
    let cols = table.columns(&["sequence", "protein_accession"])?;
    let mut map = ProteinMap::new();
    for row in table.rows() {
        let seq = row.str(cols[0]);
        let acc = row.str(cols[1]);
        if acc.is_empty() {
            return Err(row.error("empty protein_accession"));
        }
        if seq.is_empty() || !seq.bytes().all(super::is_amino_acid) {
            return Err(row.error(format!("invalid sequence '{seq}'")));
        }
        map.insert(seq, acc);
    }
    Ok(map)
}

pub fn write_protein_map(path: &Path, map: &ProteinMap) -> Result<(), TsvError> {
    let mut w = TsvWriter::create(path, &["sequence", "protein_accession"])?;
    for (seq, accs) in map.iter() {
        for acc in accs {
            w.write_row([seq.as_str(), acc.as_str()])?;
        }
    }
    w.finish()
}

/// Per-protein abundance in each sample class of a mixture design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignTable {
    pub classes: Vec<String>,
    rows: Vec<(String, Vec<f64>)>,
}

impl DesignTable {
    pub fn new(classes: Vec<String>) -> Self {
        DesignTable {
            classes,
            rows: Vec::new(),
        }
    }

    /// Adds a protein row. Returns `false` (and leaves the table unchanged) when
    /// the accession is already present, the width is wrong or an abundance is negative.
    pub fn push(&mut self, accession: impl Into<String>, abundances: Vec<f64>) -> bool {
        let accession = accession.into();
        if abundances.len() != self.classes.len()
            || abundances.iter().any(|a| !(a.is_finite() && *a >= 0.0))
            || self.rows.iter().any(|(a, _)| *a == accession)
        {
            return false;
        }
        self.rows.push((accession, abundances));
        true
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    pub fn abundance(&self, accession: &str, class: &str) -> Option<f64> {
        let idx = self.class_index(class)?;
        self.rows
            .iter()
            .find(|(a, _)| a == accession)
            .map(|(_, v)| v[idx])
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.rows.iter().map(|(a, v)| (a.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn read_design(path: &Path) -> Result<DesignTable, TsvError> {
    let table = Table::read(path)?;
    let acc_col = table.column("protein_accession")?;
    let class_cols: Vec<(usize, String)> = table
        .header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != acc_col)
        .map(|(i, h)| (i, h.clone()))
        .collect();
    if class_cols.is_empty() {
        return Err(TsvError::row(&table.path, 1, "design declares no sample classes"));
    }
    let mut design = DesignTable::new(class_cols.iter().map(|(_, h)| h.clone()).collect());
    for row in table.rows() {
        let acc = row.str(acc_col);
        if acc.is_empty() {
            return Err(row.error("empty protein_accession"));
        }
        let mut values = Vec::with_capacity(class_cols.len());
        for (i, class) in &class_cols {
            let v = row.f64(*i, class)?;
            if v < 0.0 {
                return Err(row.error(format!("negative abundance {v} for class {class}")));
            }
            values.push(v);
        }
        if !design.push(acc, values) {
            return Err(row.error(format!("duplicate accession '{acc}'")));
        }
    }
    Ok(design)
}

pub fn write_design(path: &Path, design: &DesignTable) -> Result<(), TsvError> {
    let mut header = vec!["protein_accession"];
    header.extend(design.classes.iter().map(String::as_str));
    let mut w = TsvWriter::create(path, &header)?;
    for (acc, values) in design.rows() {
        let mut fields = vec![acc.to_string()];
        fields.extend(values.iter().map(f64::to_string));
        w.write_row(fields)?;
    }
    w.finish()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSheetRow {
    pub run: RunId,
    /// Design class of the biological sample, e.g. `Mix1` or `QC2`.
    pub class: String,
}

/// Lists the runs of an experiment and the design class of each.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SampleSheet {
    pub rows: Vec<SampleSheetRow>,
}

impl SampleSheet {
    pub fn runs_in_class<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a RunId> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.class == class)
            .map(|r| &r.run)
    }

    pub fn class_of(&self, sample_id: &str) -> Option<&str> {
        self.rows
            .iter()
            .find(|r| r.run.sample_id == sample_id)
            .map(|r| r.class.as_str())
    }
}

pub fn read_sample_sheet(path: &Path) -> Result<SampleSheet, TsvError> {
    let table = Table::read(path)?;
    let cols = table.columns(&["sample_id", "replicate_id", "class"])?;
    let mut sheet = SampleSheet::default();
    for row in table.rows() {
        let run = RunId::new(row.str(cols[0]), row.str(cols[1]));
        let class = row.str(cols[2]).to_string();
        if run.sample_id.is_empty() || run.replicate_id.is_empty() || class.is_empty() {
            return Err(row.error("empty field"));
        }
        if sheet.rows.iter().any(|r| r.run == run) {
            return Err(row.error(format!("duplicate run {run}")));
        }
        if let Some(prev) = sheet.class_of(&run.sample_id) {
            if prev != class {
                return Err(row.error(format!(
                    "sample {} assigned to both {prev} and {class}",
                    run.sample_id
                )));
            }
        }
        sheet.rows.push(SampleSheetRow { run, class });
    }
    Ok(sheet)
}

pub fn write_sample_sheet(path: &Path, sheet: &SampleSheet) -> Result<(), TsvError> {
    let mut w = TsvWriter::create(path, &["sample_id", "replicate_id", "class"])?;
    for r in &sheet.rows {
        w.write_row([&r.run.sample_id, &r.run.replicate_id, &r.class])?;
    }
    w.finish()
}

/// Reads protein sequences from FASTA; the accession is the first word of the header.
pub fn read_fasta(path: &Path) -> Result<BTreeMap<String, String>, TsvError> {
    let text = fs::read_to_string(path).map_err(|source| TsvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = BTreeMap::new();
    let mut current: Option<(String, String)> = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(header) = line.strip_prefix('>') {
            if let Some((acc, seq)) = current.take() {
                out.insert(acc, seq);
            }
            let acc = header.split_whitespace().next().unwrap_or("").to_string();
            if acc.is_empty() {
                return Err(TsvError::row(path, i as u64 + 1, "empty FASTA header"));
            }
            current = Some((acc, String::new()));
        } else if !line.is_empty() {
            match current.as_mut() {
                Some((_, seq)) => seq.push_str(&line.to_ascii_uppercase()),
                None => {
                    return Err(TsvError::row(path, i as u64 + 1, "sequence before header"))
                }
            }
        }
    }
    if let Some((acc, seq)) = current {
        out.insert(acc, seq);
    }
    Ok(out)
}

pub fn write_fasta(path: &Path, proteins: &BTreeMap<String, String>) -> Result<(), TsvError> {
    let io = |source| TsvError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for (acc, seq) in proteins {
        writeln!(f, ">{acc}").map_err(io)?;
        for chunk in seq.as_bytes().chunks(60) {
            f.write_all(chunk).map_err(io)?;
            f.write_all(b"\n").map_err(io)?;
        }
    }
    f.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        fs::write(&path, body).unwrap();
        path
    }

    const HEADER: &str = "sample_id\treplicate_id\tspecies\trt_sec\tmz\tfdr\n";

    #[test]
    fn reads_well_formed_identifications() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}A1\tr1\tGGALDFADFK+2\t100.5\t520.76\t0.0001\n\
             A1\tr1\tDEDTQAM[147.035]PFR+2\t200\t620.25\t0.0\n\
             A2\tr2\tDEDTQAMPFR+3\t300\t410.2\t0.001\n"
        );
        let ids = read_identifications(&write(dir.path(), "ids.tsv", &body)).unwrap();
        assert_eq!(ids.len(), 3);
        assert_eq!(ids[1].species.to_string(), "DEDTQAM[147.035]PFR+2");
        assert_eq!(ids[2].run(), RunId::new("A2", "r2"));
    }

    #[test]
    fn header_only_gives_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let ids = read_identifications(&write(dir.path(), "ids.tsv", HEADER)).unwrap();
        assert!(ids.is_empty());
    }

    #[test]
    fn fdr_out_of_range_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}A1\tr1\tGGALDFADFK+2\t100\t520\t0.0\nA1\tr1\tGGALDFADFK+2\t100\t520\t1.5\n"
        );
        let err = read_identifications(&write(dir.path(), "ids.tsv", &body)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("fdr"), "{msg}");
    }

    #[test]
    fn missing_column_and_bad_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.tsv", "sample_id\treplicate_id\tspecies\trt_sec\tmz\n");
        assert!(matches!(
            read_identifications(&p),
            Err(TsvError::MissingColumn { .. })
        ));
        let body = format!("{HEADER}A1\tr1\tGGALDFADFK+2\tabc\t520\t0.0\n");
        let err = read_identifications(&write(dir.path(), "b.tsv", &body)).unwrap_err();
        assert!(err.to_string().contains("rt_sec"));
        let body = format!("{HEADER}A1\tr1\tGGALDFADFK+\t1\t520\t0.0\n");
        let err = read_identifications(&write(dir.path(), "c.tsv", &body)).unwrap_err();
        assert!(err.to_string().contains("charge"));
    }

    #[test]
    fn protein_map_shared_sequences() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "pm.tsv",
            "sequence\tprotein_accession\nPEPTIDEK\tP1\nPEPTIDEK\tP2\nAAAK\tP1\n",
        );
        let pm = read_protein_map(&p).unwrap();
        assert_eq!(pm.proteins_for("PEPTIDEK").unwrap().len(), 2);
        let inv = pm.by_protein();
        assert_eq!(inv["P1"].len(), 2);
        let bad = write(dir.path(), "bad.tsv", "sequence\tprotein_accession\nPEPK\t\n");
        assert!(read_protein_map(&bad).is_err());
    }

    #[test]
    fn design_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "d.tsv",
            "protein_accession\tQC2\tA\nYEAST_1\t60\t60\nUPS1_1\t0\t0.25\n",
        );
        let d = read_design(&p).unwrap();
        assert_eq!(d.classes, vec!["QC2", "A"]);
        assert_eq!(d.abundance("UPS1_1", "A"), Some(0.25));
        let out = dir.path().join("d2.tsv");
        write_design(&out, &d).unwrap();
        assert_eq!(read_design(&out).unwrap(), d);

        let dup = write(dir.path(), "dup.tsv", "protein_accession\tA\nP\t1\nP\t2\n");
        assert!(read_design(&dup).is_err());
        let neg = write(dir.path(), "neg.tsv", "protein_accession\tA\nP\t-1\n");
        assert!(read_design(&neg).is_err());
    }

    #[test]
    fn sample_sheet_rejects_conflicting_class() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "s.tsv",
            "sample_id\treplicate_id\tclass\nA1\tr1\tMix1\nA1\tr2\tMix2\n",
        );
        assert!(read_sample_sheet(&p).is_err());
    }

    #[test]
    fn fasta_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut prots = BTreeMap::new();
        prots.insert("P1".to_string(), "MK".repeat(50));
        prots.insert("P2".to_string(), "ACDEFGHIK".to_string());
        let p = dir.path().join("p.fasta");
        write_fasta(&p, &prots).unwrap();
        assert_eq!(read_fasta(&p).unwrap(), prots);
    }
}
