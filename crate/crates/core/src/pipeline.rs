//! File-level orchestration of the analysis stages.
//!
//! Each stage reads the inputs it needs, computes everything in memory and
//! only then writes its outputs, so a failing stage leaves no partial files.
//! The in-memory steps are public so callers can run the analysis without
//! touching disk.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use thiserror::Error;

use crate::diagnostics::{
    interference_distance, median_split, missingness_stratum, semi_tryptic_profile,
    stratified_w, tryptic_statuses, ClassRule, Cohort, DiagnosticsError, InterferenceRecord,
    ProteinClass, SampleExtents, SemiProfile, StratumSummary,
};
use crate::evaluate::{confusion_at_fdr, design_to_truth, roc, significance_scores, Confusion, EvalError, Roc};
use crate::feature::TimeExtent;
use crate::ingest::{
    filter_by_fdr, read_design, read_fasta, read_identifications, read_protein_map, read_raster,
    read_sample_sheet, Identification, ProteinMap, Raster, RasterError, RunId, SampleSheet,
    SpeciesKey,
};
use crate::kv::{read_pairs, ConfigError, Pair};
use crate::matrix::{read_sidecar, Group, Level, MatrixError, Measure, QuantMatrix, SampleColumn};
use crate::quant::{
    average_technical_replicates, filter_min_presence, ion_abundances, median, normalize,
    read_fit_table, spectral_counts, write_fit_table, FitRecord, FitStatus, QuantError,
};
use crate::rollup::{protein_elements, rollup_matrix, RollupError};
use crate::simulate::{files, write_dataset, SimConfig, SimDataset, RASTER_DIR};
use crate::stats::{
    assign_qvalues, permutation_test, spearman_rho, wilcoxon_w_missing, MissingPolicy, RankGroup,
    Spearman, StatsError, TauResult, TestSettings,
};
use crate::tsv::{fmt_opt, TsvError, TsvWriter};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tsv(#[from] TsvError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Rollup(#[from] RollupError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Configuration mistakes, as opposed to problems with the data.
    pub fn is_usage(&self) -> bool {
        matches!(self, PipelineError::Config(_))
    }
}

fn invalid(message: impl Into<String>) -> PipelineError {
    PipelineError::Config(ConfigError::Invalid(message.into()))
}

type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Dataset directory holding identifications, rasters, maps and designs.
    pub input: PathBuf,
    /// Directory receiving every stage's outputs; later stages read from it.
    pub out: PathBuf,
    pub fdr_threshold: f64,
    pub min_presence: usize,
    pub levels: Vec<Level>,
    pub measures: Vec<Measure>,
    pub permutations: usize,
    pub seed: u64,
    pub alpha: f64,
    pub spike_prefixes: Vec<String>,
    /// Defaults to the first class of the sample sheet.
    pub case_class: Option<String>,
    /// Defaults to the second class of the sample sheet.
    pub control_class: Option<String>,
    pub missing_policy: MissingPolicy,
    pub orientation: RankGroup,
    pub proline_rule: bool,
    pub exhaustive_limit: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: PathBuf::from("."),
            out: PathBuf::from("out"),
            fdr_threshold: 0.001,
            min_presence: 3,
            levels: vec![Level::Species, Level::Peptide, Level::Protein],
            measures: Measure::ALL.to_vec(),
            permutations: 1500,
            seed: 0,
            alpha: 0.05,
            spike_prefixes: vec![crate::simulate::SPIKE_PREFIX.to_string()],
            case_class: None,
            control_class: None,
            missing_policy: MissingPolicy::ZeroFill,
            orientation: RankGroup::Case,
            proline_rule: true,
            exhaustive_limit: 0,
        }
    }
}

fn list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, String> {
    let items: Result<Vec<T>, _> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("cannot parse list item '{s}'")))
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for p in read_pairs(path)? {
            cfg.apply(&p)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, p: &Pair) -> Result<(), ConfigError> {
        self.set(&p.key, &p.value).map_err(|m| p.error(m))
    }

    /// Sets one key; used for file lines and command-line overrides alike.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("{key}: cannot parse '{value}'"))
        }
        match key {
            "input" => self.input = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "fdr_threshold" => self.fdr_threshold = num(key, value)?,
            "min_presence" => self.min_presence = num(key, value)?,
            "levels" | "level" => self.levels = list(value)?,
            "measures" | "measure" => self.measures = list(value)?,
            "permutations" => self.permutations = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "spike_prefixes" => self.spike_prefixes = list(value)?,
            "case_class" => self.case_class = Some(value.to_string()),
            "control_class" => self.control_class = Some(value.to_string()),
            "missing_policy" => {
                self.missing_policy = match value {
                    "zero_fill" => MissingPolicy::ZeroFill,
                    "exclude" => MissingPolicy::Exclude,
                    other => return Err(format!("unknown missing_policy '{other}' (expected zero_fill|exclude)")),
                }
            }
            "orientation" => {
                self.orientation = match value {
                    "case" => RankGroup::Case,
                    "control" => RankGroup::Control,
                    other => return Err(format!("unknown orientation '{other}' (expected case|control)")),
                }
            }
            "proline_rule" => self.proline_rule = num(key, value)?,
            "exhaustive_limit" => self.exhaustive_limit = num(key, value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fdr_threshold) {
            return Err(invalid("fdr_threshold must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid("alpha must lie in [0, 1]"));
        }
        if self.min_presence == 0 {
            return Err(invalid("min_presence must be at least 1"));
        }
        if self.permutations == 0 {
            return Err(invalid("permutations must be at least 1"));
        }
        if self.levels.is_empty() || self.measures.is_empty() {
            return Err(invalid("at least one level and one measure are required"));
        }
        if let (Some(a), Some(b)) = (&self.case_class, &self.control_class) {
            if a == b {
                return Err(invalid("case_class and control_class must differ"));
            }
        }
        Ok(())
    }

    pub fn test_settings(&self) -> TestSettings {
        TestSettings {
            permutations: self.permutations,
            seed: self.seed,
            policy: self.missing_policy,
            orientation: self.orientation,
            exhaustive_limit: self.exhaustive_limit,
        }
    }

    pub fn class_rule(&self) -> ClassRule {
        ClassRule::new(self.spike_prefixes.iter().cloned())
    }

    fn input_file(&self, name: &str) -> PathBuf {
        self.input.join(name)
    }
}

/// Output file names, relative to the output directory.
pub mod outputs {
    use crate::matrix::{Level, Measure};

    pub fn raw_species(m: Measure) -> String {
        format!("species.{m}.raw.tsv")
    }

    pub fn species(m: Measure) -> String {
        format!("species.{m}.tsv")
    }

    pub fn level(level: Level, m: Measure) -> String {
        format!("{level}.{m}.tsv")
    }

    pub fn tau(level: Level, m: Measure) -> String {
        format!("tau.{level}.{m}.tsv")
    }

    pub fn roc(level: Level, m: Measure) -> String {
        format!("roc.{level}.{m}.tsv")
    }

    /// Group sidecar accompanying the matrix file `name`.
    pub fn sidecar(name: &str) -> String {
        format!("{}.samples.tsv", name.trim_end_matches(".tsv"))
    }

    pub const FITS: &str = "fits.tsv";
    pub const QUANT_REPORT: &str = "quantify_report.tsv";
    pub const INTERFERENCE: &str = "interference.tsv";
    pub const INTERFERENCE_SUMMARY: &str = "interference_summary.tsv";
    pub const SPECIES_W: &str = "species_w.tsv";
    pub const SEMI_PROFILE: &str = "semi_profile.tsv";
    pub const STRATIFIED_W: &str = "stratified_w.tsv";
    pub const STRATIFIED_SUMMARY: &str = "stratified_w_summary.tsv";
    pub const AUC: &str = "auc.tsv";
    pub const CONFUSION: &str = "confusion.tsv";
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn read_matrix(dir: &Path, name: &str, measure: Measure, level: Level) -> Result<QuantMatrix> {
    Ok(QuantMatrix::read_tsv(
        &dir.join(name),
        &dir.join(outputs::sidecar(name)),
        measure,
        level,
    )?)
}

fn write_matrix(dir: &Path, name: &str, m: &QuantMatrix) -> Result<()> {
    Ok(m.write_tsv(&dir.join(name), &dir.join(outputs::sidecar(name)))?)
}

/// Case and control classes: configured, or the first two classes of the sheet.
pub fn resolve_classes(sheet: &SampleSheet, cfg: &PipelineConfig) -> Result<(String, String)> {
    let mut classes: Vec<&str> = Vec::new();
    for r in &sheet.rows {
        if !classes.contains(&r.class.as_str()) {
            classes.push(&r.class);
        }
    }
    let pick = |configured: &Option<String>, idx: usize, what: &str| match configured {
        Some(c) => Ok(c.clone()),
        None if classes.len() == 2 => Ok(classes[idx].to_string()),
        None => Err(invalid(format!(
            "sample sheet has {} classes; set {what} explicitly",
            classes.len()
        ))),
    };
    let case = pick(&cfg.case_class, 0, "case_class")?;
    let control = pick(&cfg.control_class, 1, "control_class")?;
    if case == control {
        return Err(invalid("case and control classes must differ"));
    }
    Ok((case, control))
}

/// Runs of the two compared classes in sheet order, labeled by group.
pub fn run_layout(sheet: &SampleSheet, case: &str, control: &str) -> Result<Vec<(RunId, Group)>> {
    let layout: Vec<(RunId, Group)> = sheet
        .rows
        .iter()
        .filter_map(|r| {
            let g = if r.class == case {
                Group::Case
            } else if r.class == control {
                Group::Control
            } else {
                return None;
            };
            Some((r.run.clone(), g))
        })
        .collect();
    for (class, g) in [(case, Group::Case), (control, Group::Control)] {
        if !layout.iter().any(|(_, x)| *x == g) {
            return Err(invalid(format!("class '{class}' has no samples")));
        }
    }
    Ok(layout)
}

/// Species-level matrices and fits of one comparison.
#[derive(Debug, Clone)]
pub struct Quantified {
    /// Per-run matrices before averaging and filtering.
    pub raw: BTreeMap<Measure, QuantMatrix>,
    /// Replicate-averaged, presence-filtered matrices.
    pub species: BTreeMap<Measure, QuantMatrix>,
    pub fits: Vec<FitRecord>,
    pub report: Vec<(String, String)>,
}

/// Counts and fits species per run from fdr-filtered identifications, then
/// averages technical replicates and applies the presence filter.
pub fn quantify(
    ids: &[Identification],
    rasters: &BTreeMap<RunId, Raster>,
    layout: &[(RunId, Group)],
    cfg: &PipelineConfig,
) -> Result<Quantified> {
    let passing = filter_by_fdr(ids, cfg.fdr_threshold);
    let mut raw = BTreeMap::new();
    let mut fits = Vec::new();
    for &measure in &cfg.measures {
        let m = match measure {
            Measure::SpectralCount => spectral_counts(&passing, layout)?,
            Measure::IonAbundance => {
                let (m, f) = ion_abundances(&passing, rasters, layout)?;
                fits = f;
                m
            }
        };
        raw.insert(measure, m);
    }
    let mut species = BTreeMap::new();
    for (&measure, m) in &raw {
        let averaged = average_technical_replicates(m)?;
        species.insert(measure, filter_min_presence(&averaged, cfg.min_presence));
    }

    let count = |s: FitStatus| fits.iter().filter(|f| f.status == s).count();
    let converged = fits
        .iter()
        .filter(|f| f.result.is_some_and(|r| r.converged))
        .count();
    let mut report = vec![
        ("runs".to_string(), layout.len().to_string()),
        ("identifications".to_string(), ids.len().to_string()),
        ("identifications_passing_fdr".to_string(), passing.len().to_string()),
        (
            "species_identified".to_string(),
            passing.iter().map(|i| &i.species).collect::<BTreeSet<_>>().len().to_string(),
        ),
        ("fits_attempted".to_string(), fits.len().to_string()),
        ("fits_converged".to_string(), converged.to_string()),
        ("fits_successful".to_string(), count(FitStatus::Success).to_string()),
        ("fits_rejected".to_string(), count(FitStatus::Rejected).to_string()),
        ("fits_failed".to_string(), count(FitStatus::Failed).to_string()),
    ];
    for (measure, m) in &species {
        report.push((format!("species_counted.{measure}"), m.n_entities().to_string()));
    }
    Ok(Quantified {
        raw,
        species,
        fits,
        report,
    })
}

/// The species matrix rolled up to `level` and normalized there.
pub fn level_matrix(species: &QuantMatrix, level: Level, pm: &ProteinMap) -> Result<QuantMatrix> {
    let m = if level == Level::Species {
        species.clone()
    } else {
        rollup_matrix(species, level, pm)?
    };
    if m.n_entities() == 0 {
        return Ok(m);
    }
    Ok(normalize(&m)?)
}

/// Per-protein tau with permutation p-values and BH q-values.
pub fn test_matrix(m: &QuantMatrix, pm: &ProteinMap, settings: &TestSettings) -> Result<Vec<TauResult>> {
    if m.n_entities() == 0 {
        return Ok(Vec::new());
    }
    let elements = protein_elements(pm, m)?;
    let mut results = permutation_test(m, &elements, settings)?;
    assign_qvalues(&mut results);
    Ok(results)
}

/// `w` of every row in the requested orientation; `None` when undefined.
pub fn row_ws(m: &QuantMatrix, policy: MissingPolicy, orientation: RankGroup) -> Vec<Option<f64>> {
    let case = m.group_indices(Group::Case);
    let control = m.group_indices(Group::Control);
    let sign = match orientation {
        RankGroup::Case => 1.0,
        RankGroup::Control => -1.0,
    };
    (0..m.n_entities())
        .map(|i| {
            let row = m.row(i);
            let a: Vec<Option<f64>> = case.iter().map(|&j| row[j]).collect();
            let b: Vec<Option<f64>> = control.iter().map(|&j| row[j]).collect();
            wilcoxon_w_missing(&a, &b, policy).ok().map(|r| sign * r.w)
        })
        .collect()
}

fn sequence_of_species(entity: &str) -> String {
    entity
        .parse::<SpeciesKey>()
        .map(|k| k.sequence().to_string())
        .unwrap_or_else(|_| entity.to_string())
}

/// Interference analysis of the base-class species of a species-level matrix.
#[derive(Debug, Clone)]
pub struct Interference {
    pub records: Vec<InterferenceRecord>,
    /// `w` of each record's species.
    pub ws: Vec<Option<f64>>,
    /// Spearman correlation of `w` and `d_i` over the positive cohort.
    pub spearman: Option<Spearman>,
}

impl Interference {
    pub fn cohort_size(&self, c: Cohort) -> usize {
        self.records.iter().filter(|r| r.cohort == c).count()
    }

    pub fn median_w(&self, c: Cohort) -> Option<f64> {
        let mut ws: Vec<f64> = self
            .records
            .iter()
            .zip(&self.ws)
            .filter(|(r, _)| r.cohort == c)
            .filter_map(|(_, w)| *w)
            .collect();
        median(&mut ws)
    }
}

/// Distances between successful base-class fits and spike-class fits in the
/// case runs, with each run treated as one sample.
pub fn interference(
    species: &QuantMatrix,
    fits: &[FitRecord],
    runs: &[SampleColumn],
    pm: &ProteinMap,
    rule: &ClassRule,
    cfg: &PipelineConfig,
) -> Interference {
    let case_runs: Vec<String> = runs
        .iter()
        .filter(|c| c.group == Group::Case)
        .map(|c| c.id.clone())
        .collect();
    let mut foreground: BTreeMap<String, SampleExtents> = BTreeMap::new();
    let mut background: BTreeMap<String, Vec<TimeExtent>> = BTreeMap::new();
    for f in fits.iter().filter(|f| f.is_success()) {
        let Some(r) = f.result else { continue };
        let run = f.run.to_string();
        match rule.classify_sequence(pm, f.species.sequence()) {
            Some(ProteinClass::Spike) => background.entry(run).or_default().push(r.params.extent()),
            Some(ProteinClass::Base) => {
                foreground
                    .entry(run)
                    .or_default()
                    .insert(f.species.to_string(), r.params.extent());
            }
            None => {}
        }
    }

    let all_ws = row_ws(species, cfg.missing_policy, cfg.orientation);
    let (names, ws): (Vec<String>, Vec<Option<f64>>) = species
        .entities()
        .iter()
        .zip(all_ws)
        .filter(|(e, _)| rule.classify_sequence(pm, &sequence_of_species(e)) == Some(ProteinClass::Base))
        .map(|(e, w)| (e.clone(), w))
        .unzip();
    let records = interference_distance(&names, &foreground, &background, &case_runs);

    let (x, y): (Vec<f64>, Vec<f64>) = records
        .iter()
        .zip(&ws)
        .filter(|(r, _)| r.cohort == Cohort::Positive)
        .filter_map(|(r, w)| Some(((*w)?, r.d?)))
        .unzip();
    let spearman = match spearman_rho(&x, &y, cfg.seed) {
        Ok(s) => Some(s),
        Err(e) => {
            warn!("no correlation over the positive cohort: {e}");
            None
        }
    };
    Interference {
        records,
        ws,
        spearman,
    }
}

/// Stratified `w` summaries by total abundance, missingness and cohort.
pub fn stratify(species: &QuantMatrix, inter: &Interference, cfg: &PipelineConfig) -> Vec<StratumSummary> {
    let ws = row_ws(species, cfg.missing_policy, cfg.orientation);
    let totals: Vec<f64> = (0..species.n_entities())
        .map(|i| species.row(i).iter().flatten().sum())
        .collect();
    let n = species.n_samples();
    let cut = (n / 2).saturating_sub(1);
    let mut records: Vec<(String, f64)> = Vec::new();
    for ((w, split), i) in ws.iter().zip(median_split(&totals)).zip(0..) {
        let Some(w) = w else { continue };
        records.push((format!("abundance:{split}"), *w));
        let missing = species.row(i).iter().filter(|v| v.is_none()).count();
        records.push((format!("missing:{}", missingness_stratum(missing, cut, n)), *w));
    }
    for (r, w) in inter.records.iter().zip(&inter.ws) {
        if let Some(w) = w {
            records.push((format!("cohort:{}", r.cohort.as_str()), *w));
        }
    }
    let strata: Vec<String> = [
        "abundance:low".to_string(),
        "abundance:high".to_string(),
        format!("missing:0-{cut}"),
        format!("missing:{}-{n}", cut + 1),
        "cohort:zero".to_string(),
        "cohort:positive".to_string(),
        "cohort:missing".to_string(),
    ]
    .into();
    stratified_w(&records, &strata)
}

fn write_report(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut w = TsvWriter::create(path, &["key", "value"])?;
    for (k, v) in rows {
        w.write_row([k, v])?;
    }
    Ok(w.finish()?)
}

pub fn cmd_simulate(sim: &SimConfig, out: &Path) -> Result<SimDataset> {
    let data = crate::simulate::simulate(sim);
    create_dir(out)?;
    write_dataset(out, &data)?;
    info!(
        "simulated {} runs, {} identifications into {}",
        data.rasters.len(),
        data.identifications.len(),
        out.display()
    );
    Ok(data)
}

pub fn cmd_quantify(cfg: &PipelineConfig) -> Result<Quantified> {
    cfg.validate()?;
    let sheet = read_sample_sheet(&cfg.input_file(files::SAMPLES))?;
    let (case, control) = resolve_classes(&sheet, cfg)?;
    let layout = run_layout(&sheet, &case, &control)?;
    let ids = read_identifications(&cfg.input_file(files::IDENTIFICATIONS))?;
    if ids.is_empty() {
        warn!("no identifications in {}; matrices will be empty", cfg.input.display());
    }

    let mut rasters = BTreeMap::new();
    if cfg.measures.contains(&Measure::IonAbundance) {
        let with_ids: BTreeSet<RunId> = ids.iter().map(Identification::run).collect();
        for (run, _) in layout.iter().filter(|(r, _)| with_ids.contains(r)) {
            let path = cfg.input.join(RASTER_DIR).join(run.raster_file_name());
            if !path.exists() {
                return Err(QuantError::MissingRaster(run.clone()).into());
            }
            rasters.insert(run.clone(), read_raster(&path)?);
        }
    }
    let q = quantify(&ids, &rasters, &layout, cfg)?;

    create_dir(&cfg.out)?;
    for (&measure, m) in &q.raw {
        write_matrix(&cfg.out, &outputs::raw_species(measure), m)?;
    }
    for (&measure, m) in &q.species {
        write_matrix(&cfg.out, &outputs::species(measure), m)?;
    }
    if cfg.measures.contains(&Measure::IonAbundance) {
        write_fit_table(&cfg.out.join(outputs::FITS), &q.fits)?;
    }
    write_report(&cfg.out.join(outputs::QUANT_REPORT), &q.report)?;
    Ok(q)
}

pub fn cmd_rollup(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let pm = read_protein_map(&cfg.input_file(files::PROTEIN_MAP))?;
    let mut results = Vec::new();
    for &measure in &cfg.measures {
        let species = read_matrix(&cfg.out, &outputs::species(measure), measure, Level::Species)?;
        for &level in &cfg.levels {
            results.push((outputs::level(level, measure), level_matrix(&species, level, &pm)?));
        }
    }
    for (name, m) in &results {
        write_matrix(&cfg.out, name, m)?;
    }
    Ok(())
}

const TAU_COLUMNS: [&str; 8] = ["protein", "level", "measure", "K", "tau", "p_value", "q_value", "direction"];

pub fn write_tau_table(path: &Path, results: &[TauResult]) -> Result<()> {
    let mut w = TsvWriter::create(path, &TAU_COLUMNS)?;
    for r in results {
        w.write_row([
            r.protein.clone(),
            r.level.to_string(),
            r.measure.to_string(),
            r.k.to_string(),
            r.tau.to_string(),
            r.p_value.to_string(),
            r.q_value.to_string(),
            r.direction.as_str().to_string(),
        ])?;
    }
    Ok(w.finish()?)
}

pub fn read_tau_table(path: &Path) -> Result<Vec<TauResult>> {
    let table = crate::tsv::Table::read(path)?;
    let c = table.columns(&TAU_COLUMNS)?;
    let mut out = Vec::with_capacity(table.len());
    for row in table.rows() {
        let direction = match row.str(c[7]) {
            "up" => crate::stats::Direction::Up,
            "down" => crate::stats::Direction::Down,
            "none" => crate::stats::Direction::Flat,
            other => return Err(row.error(format!("bad direction '{other}'")).into()),
        };
        out.push(TauResult {
            protein: row.str(c[0]).to_string(),
            level: row.str(c[1]).parse().map_err(|e: String| row.error(e))?,
            measure: row.str(c[2]).parse().map_err(|e: String| row.error(e))?,
            k: row.f64(c[3], "K")? as usize,
            tau: row.f64(c[4], "tau")?,
            p_value: row.f64(c[5], "p_value")?,
            q_value: row.f64(c[6], "q_value")?,
            direction,
        });
    }
    Ok(out)
}

pub fn cmd_test(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let pm = read_protein_map(&cfg.input_file(files::PROTEIN_MAP))?;
    let settings = cfg.test_settings();
    let mut results = Vec::new();
    for &measure in &cfg.measures {
        for &level in &cfg.levels {
            let m = read_matrix(&cfg.out, &outputs::level(level, measure), measure, level)?;
            let r = test_matrix(&m, &pm, &settings)?;
            info!("{level} {measure}: {} proteins tested", r.len());
            results.push((outputs::tau(level, measure), r));
        }
    }
    for (name, r) in &results {
        write_tau_table(&cfg.out.join(name), r)?;
    }
    Ok(())
}

pub fn cmd_diagnose(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let pm = read_protein_map(&cfg.input_file(files::PROTEIN_MAP))?;
    let rule = cfg.class_rule();
    let measure = Measure::IonAbundance;
    let species = read_matrix(&cfg.out, &outputs::species(measure), measure, Level::Species)?;
    let runs = read_sidecar(&cfg.out.join(outputs::sidecar(&outputs::raw_species(measure))))?;
    let fits = read_fit_table(&cfg.out.join(outputs::FITS))?;

    let fasta_path = cfg.input_file(files::FASTA);
    let profile: Option<Vec<SemiProfile>> = if fasta_path.exists() {
        let fasta = read_fasta(&fasta_path)?;
        let statuses = tryptic_statuses(&pm, &fasta, cfg.proline_rule);
        Some(semi_tryptic_profile(&species, &statuses, sequence_of_species)?)
    } else {
        warn!("{} not found; skipping the semi-tryptic profile", fasta_path.display());
        None
    };
    let inter = interference(&species, &fits, &runs, &pm, &rule, cfg);
    let strata = stratify(&species, &inter, cfg);

    create_dir(&cfg.out)?;
    let mut w = TsvWriter::create(&cfg.out.join(outputs::INTERFERENCE), &["species", "d_i", "cohort"])?;
    for r in &inter.records {
        w.write_row([r.species.clone(), fmt_opt(r.d), r.cohort.as_str().to_string()])?;
    }
    w.finish()?;

    let ws = row_ws(&species, cfg.missing_policy, cfg.orientation);
    let mut w = TsvWriter::create(&cfg.out.join(outputs::SPECIES_W), &["species", "w", "total", "missing"])?;
    for (i, (name, wv)) in species.entities().iter().zip(&ws).enumerate() {
        let row = species.row(i);
        w.write_row([
            name.clone(),
            fmt_opt(*wv),
            row.iter().flatten().sum::<f64>().to_string(),
            row.iter().filter(|v| v.is_none()).count().to_string(),
        ])?;
    }
    w.finish()?;

    let mut summary = Vec::new();
    for c in [Cohort::Zero, Cohort::Positive, Cohort::Missing] {
        summary.push((format!("size.{}", c.as_str()), inter.cohort_size(c).to_string()));
        summary.push((format!("median_w.{}", c.as_str()), fmt_opt(inter.median_w(c))));
    }
    summary.push(("spearman_rho.positive".into(), fmt_opt(inter.spearman.map(|s| s.rho))));
    summary.push(("spearman_p.positive".into(), fmt_opt(inter.spearman.map(|s| s.p_value))));
    write_report(&cfg.out.join(outputs::INTERFERENCE_SUMMARY), &summary)?;

    if let Some(profile) = &profile {
        let mut w = TsvWriter::create(
            &cfg.out.join(outputs::SEMI_PROFILE),
            &["sample_id", "semi_count", "semi_abundance_fraction"],
        )?;
        for p in profile {
            w.write_row([p.sample_id.clone(), p.semi_count.to_string(), p.semi_fraction.to_string()])?;
        }
        w.finish()?;
    }

    let mut w = TsvWriter::create(
        &cfg.out.join(outputs::STRATIFIED_W),
        &["stratum", "bin_low", "bin_high", "count"],
    )?;
    for s in &strata {
        for (i, count) in s.histogram.iter().enumerate() {
            let (lo, hi) = StratumSummary::bin_edges(i);
            w.write_row([s.stratum.clone(), format!("{lo:.1}"), format!("{hi:.1}"), count.to_string()])?;
        }
    }
    w.finish()?;
    let mut w = TsvWriter::create(&cfg.out.join(outputs::STRATIFIED_SUMMARY), &["stratum", "n", "median"])?;
    for s in &strata {
        w.write_row([s.stratum.clone(), s.n.to_string(), s.median.to_string()])?;
    }
    Ok(w.finish()?)
}

pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let sheet = read_sample_sheet(&cfg.input_file(files::SAMPLES))?;
    let (case, control) = resolve_classes(&sheet, cfg)?;
    let design = read_design(&cfg.input_file(files::DESIGN))?;
    let truth = design_to_truth(&design, &case, &control)?;
    let rule = cfg.class_rule();

    let mut evaluated: Vec<(Level, Measure, Option<Roc>, Confusion)> = Vec::new();
    for &measure in &cfg.measures {
        for &level in &cfg.levels {
            let results = read_tau_table(&cfg.out.join(outputs::tau(level, measure)))?;
            let curve = match roc(&significance_scores(&results), &truth) {
                Ok(r) => Some(r),
                Err(e) => {
                    warn!("{level} {measure}: {e}");
                    None
                }
            };
            evaluated.push((level, measure, curve, confusion_at_fdr(&results, &rule, cfg.alpha)));
        }
    }

    let mut auc = TsvWriter::create(&cfg.out.join(outputs::AUC), &["measure", "level", "auc"])?;
    let mut conf = TsvWriter::create(
        &cfg.out.join(outputs::CONFUSION),
        &["measure", "level", "spike_up", "spike_down", "base_up", "base_down"],
    )?;
    use crate::stats::Direction::{Down, Up};
    for (level, measure, curve, c) in &evaluated {
        if let Some(curve) = curve {
            let mut w = TsvWriter::create(&cfg.out.join(outputs::roc(*level, *measure)), &["threshold", "fpr", "tpr"])?;
            for p in &curve.points {
                w.write_row([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
            }
            w.finish()?;
        }
        auc.write_row([
            measure.to_string(),
            level.to_string(),
            curve.as_ref().map_or("NA".to_string(), |r| format!("{:.3}", r.auc)),
        ])?;
        conf.write_row([
            measure.to_string(),
            level.to_string(),
            c.get(Up, ProteinClass::Spike).to_string(),
            c.get(Down, ProteinClass::Spike).to_string(),
            c.get(Up, ProteinClass::Base).to_string(),
            c.get(Down, ProteinClass::Base).to_string(),
        ])?;
    }
    auc.finish()?;
    Ok(conf.finish()?)
}
