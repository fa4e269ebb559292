//! Synthetic LC-MS/MS datasets with known ground truth.
//!
//! A proteome of random sequences is digested into species whose features are
//! drawn from the feature model with amplitudes proportional to the design
//! abundance of their protein. Per run, features get biological and technical
//! variation and retention-time jitter, optionally compete for ions, and are
//! dropped below a detection floor; the survivors are rendered into a raster
//! and sampled for identifications.
//!
//! All randomness derives from one seed. Each purpose (proteome, species,
//! injection, per-sample biology, per-run variation) draws from its own ChaCha
//! stream, so runs can be generated in parallel without changing the output.

mod config;
mod render;
mod sequence;

pub use config::{Competition, ConfigError, Preset, SimConfig, BASE_PREFIX, SPIKE_PREFIX};
pub use render::{apply_competition, apply_detection_floor, render_raster, RunFeature};
pub use sequence::{mz, peptide_mass, random_protein, semi_tryptic_truncation, tryptic_digest};

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use rayon::prelude::*;

use crate::diagnostics::ClassRule;
use crate::feature::{FeatureParams, FIT_PEAKS, NEUTRON_SPACING};
use crate::ingest::{
    write_design, write_fasta, write_identifications, write_protein_map, write_raster,
    write_sample_sheet, DesignTable, Identification, Modification, ProteinMap, Raster, RunId,
    SampleSheet, SampleSheetRow, SpeciesKey,
};
use crate::tsv::{TsvError, TsvWriter};

/// Random streams by purpose; per-sample and per-run streams are offset by index.
const STREAM_PROTEOME: u64 = 0;
const STREAM_SPECIES: u64 = 1;
const STREAM_INJECTION: u64 = 2;
const STREAM_SAMPLE_BASE: u64 = 1 << 20;
const STREAM_RUN_BASE: u64 = 1 << 40;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn lognormal(sd: f64) -> LogNormal<f64> {
    LogNormal::new(0.0, sd.max(0.0)).expect("finite spread")
}

/// A quantifiable species of the simulated proteome.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSpecies {
    pub key: SpeciesKey,
    pub protein: usize,
    /// Monoisotopic m/z.
    pub mz: f64,
    pub rt: f64,
    pub sigma: f64,
    pub rho: f64,
    pub lambda: f64,
    /// Relative ionization efficiency.
    pub efficiency: f64,
    pub semi_tryptic: bool,
    /// For injected contaminants: parent species and abundance ratio to it.
    pub injected: Option<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimProtein {
    pub accession: String,
    pub sequence: String,
    /// Hidden abundance multiplier on top of the design.
    pub scale: f64,
    pub spike: bool,
}

/// A feature as rendered in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthFeature {
    pub run: RunId,
    pub species: usize,
    pub params: FeatureParams,
    /// Amplitude before ion competition.
    pub base_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub proteins: Vec<SimProtein>,
    pub species: Vec<SimSpecies>,
    pub features: Vec<TruthFeature>,
}

impl SimTruth {
    /// Features of `species` keyed by run.
    pub fn features_of(&self, species: usize) -> impl Iterator<Item = &TruthFeature> {
        self.features.iter().filter(move |f| f.species == species)
    }
}

#[derive(Debug, Clone)]
pub struct SimDataset {
    pub rasters: Vec<Raster>,
    pub identifications: Vec<Identification>,
    pub protein_map: ProteinMap,
    pub design: DesignTable,
    pub samples: SampleSheet,
    pub fasta: BTreeMap<String, String>,
    pub truth: SimTruth,
}

impl SimDataset {
    /// Runs in sample-sheet order.
    pub fn runs(&self) -> impl Iterator<Item = &RunId> {
        self.samples.rows.iter().map(|r| &r.run)
    }

    pub fn rasters_by_run(&self) -> BTreeMap<RunId, Raster> {
        self.rasters
            .iter()
            .map(|r| (r.run.clone(), r.clone()))
            .collect()
    }

    pub fn class_rule(&self) -> ClassRule {
        ClassRule::new([config::SPIKE_PREFIX])
    }
}

fn build_design(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> (DesignTable, Vec<(String, f64, bool)>) {
    let classes = cfg.preset.classes();
    let mut design = DesignTable::new(classes.iter().map(|c| c.to_string()).collect());
    let mut proteins = Vec::new();
    let spread = lognormal(cfg.protein_spread);
    match cfg.preset {
        Preset::Cptac => {
            for i in 0..cfg.proteins {
                let acc = format!("{}{:03}", config::BASE_PREFIX, i + 1);
                design.push(acc.clone(), vec![config::CPTAC_BASE; classes.len()]);
                proteins.push((acc, spread.sample(rng), false));
            }
            for i in 0..cfg.spike_proteins {
                let acc = format!("{}{:02}", config::SPIKE_PREFIX, i + 1);
                design.push(acc.clone(), config::CPTAC_SPIKE_LEVELS.to_vec());
                proteins.push((acc, 1.0, true));
            }
        }
        Preset::Biatech | Preset::Null => {
            let differential = if cfg.preset == Preset::Null {
                0
            } else {
                cfg.differential.min(cfg.proteins)
            };
            let mut flags: Vec<bool> = (0..cfg.proteins).map(|i| i < differential).collect();
            flags.shuffle(rng);
            let mut n_diff = 0;
            for (i, diff) in flags.into_iter().enumerate() {
                let acc = format!("{}{:03}", config::BASE_PREFIX, i + 1);
                let base = spread.sample(rng);
                let row = if diff {
                    n_diff += 1;
                    let up = rng.random_bool(0.5);
                    // Every ninth differential protein is absent from one mixture.
                    let (hi, lo) = if n_diff % 9 == 0 {
                        (base, 0.0)
                    } else {
                        let fold: f64 = [2.0, 3.0, 5.0][rng.random_range(0..3)];
                        (base * fold.sqrt(), base / fold.sqrt())
                    };
                    if up {
                        vec![hi, lo]
                    } else {
                        vec![lo, hi]
                    }
                } else {
                    vec![base, base]
                };
                design.push(acc.clone(), row);
                proteins.push((acc, 1.0, false));
            }
        }
    }
    (design, proteins)
}

const MIN_PEPTIDE: usize = 7;
const MAX_PEPTIDE: usize = 22;
const OXIDATION_RATE: f64 = 0.15;

fn make_species(
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    protein: usize,
    sequence: &str,
    oxidized: bool,
    semi: bool,
) -> SimSpecies {
    let charge = if rng.random_bool(0.7) { 2 } else { 3 };
    let mods = if oxidized {
        let pos = sequence.find('M').expect("oxidized species contain M") + 1;
        vec![Modification::new(pos, sequence::OXIDIZED_MET)]
    } else {
        vec![]
    };
    let mass = peptide_mass(sequence, oxidized);
    SimSpecies {
        key: SpeciesKey::new(sequence.to_string(), mods, charge).expect("generated species are valid"),
        protein,
        mz: mz(mass, charge),
        rt: rng.random_range(config::RT_MARGIN..cfg.run_length - config::RT_MARGIN),
        sigma: rng.random_range(cfg.sigma_range.0..=cfg.sigma_range.1),
        rho: rng.random_range(cfg.rho_range.0..=cfg.rho_range.1),
        lambda: mass / 1800.0,
        efficiency: lognormal(cfg.species_spread).sample(rng)
            * if semi { cfg.semi_tryptic_efficiency } else { 1.0 },
        semi_tryptic: semi,
        injected: None,
    }
}

fn build_species(
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    proteins: &[SimProtein],
) -> Vec<SimSpecies> {
    let mut used: HashSet<String> = HashSet::new();
    let mut species = Vec::new();
    for (pi, protein) in proteins.iter().enumerate() {
        let mut candidates: Vec<(usize, &str)> = tryptic_digest(&protein.sequence)
            .into_iter()
            .filter(|(_, p)| (MIN_PEPTIDE..=MAX_PEPTIDE).contains(&p.len()))
            .collect();
        candidates.shuffle(rng);
        let wanted = rng.random_range(cfg.species_per_protein.0..=cfg.species_per_protein.1);
        let mut taken = 0;
        for (start, pep) in candidates {
            if taken == wanted {
                break;
            }
            let (seq, semi) = if rng.random_bool(cfg.semi_tryptic_fraction) {
                match semi_tryptic_truncation(rng, &protein.sequence, start, pep, MIN_PEPTIDE - 1) {
                    Some((_, s)) => (s, true),
                    None => (pep.to_string(), false),
                }
            } else {
                (pep.to_string(), false)
            };
            if !used.insert(seq.clone()) {
                continue;
            }
            species.push(make_species(cfg, rng, pi, &seq, false, semi));
            if seq.contains('M') && rng.random_bool(OXIDATION_RATE) {
                species.push(make_species(cfg, rng, pi, &seq, true, semi));
            }
            taken += 1;
        }
    }
    species
}

/// Adds strictly semi-tryptic truncations of abundant species that appear only
/// in the injection class, at 2-5% of their parent's abundance.
fn inject(
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    proteins: &[SimProtein],
    species: &mut Vec<SimSpecies>,
    design: &DesignTable,
) {
    let count = (cfg.semi_tryptic_injection * species.len() as f64).round() as usize;
    if count == 0 {
        return;
    }
    if design.class_index(&cfg.semi_tryptic_class).is_none() {
        log::warn!("semi_tryptic_class '{}' is not a design class; nothing injected", cfg.semi_tryptic_class);
        return;
    }
    // Parents are ranked by their mean strength over all classes, so they are
    // not biased toward proteins that happen to be high in the injected class.
    let strength = |s: &SimSpecies| {
        let p = &proteins[s.protein];
        let mean = design
            .classes
            .iter()
            .map(|c| design.abundance(&p.accession, c).unwrap_or(0.0))
            .sum::<f64>()
            / design.classes.len() as f64;
        mean * p.scale * s.efficiency
    };
    let mut ranked: Vec<usize> = (0..species.len())
        .filter(|&i| species[i].injected.is_none() && species[i].key.modifications().is_empty())
        .filter(|&i| strength(&species[i]) > 0.0)
        .collect();
    ranked.sort_by(|&a, &b| strength(&species[b]).total_cmp(&strength(&species[a])));
    let mut pool: Vec<usize> = ranked[..ranked.len().div_ceil(3)].to_vec();
    pool.shuffle(rng);

    let mut used: HashSet<String> = species.iter().map(|s| s.key.sequence().to_string()).collect();
    let mut added = 0;
    for parent in pool {
        if added == count {
            break;
        }
        let p = &species[parent];
        let protein = &proteins[p.protein].sequence;
        let Some(start) = protein.find(p.key.sequence()).map(|i| i + 1) else {
            continue;
        };
        let Some((_, seq)) =
            semi_tryptic_truncation(rng, protein, start, p.key.sequence(), MIN_PEPTIDE - 1)
        else {
            continue;
        };
        if !used.insert(seq.clone()) {
            continue;
        }
        let mut s = make_species(cfg, rng, p.protein, &seq, false, true);
        let shift = rng.random_range(30.0..120.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        s.rt = (p.rt + shift).clamp(config::RT_MARGIN, cfg.run_length - config::RT_MARGIN);
        s.injected = Some((parent, rng.random_range(0.02..=0.05)));
        species.push(s);
        added += 1;
    }
    if added < count {
        log::warn!("injected {added} of {count} requested semi-tryptic species");
    }
}

struct RunPlan {
    run: RunId,
    class: usize,
    sample_index: usize,
}

fn plan_runs(cfg: &SimConfig, design: &DesignTable) -> Vec<RunPlan> {
    let mut plans = Vec::new();
    let mut sample_index = 0;
    for (ci, class) in design.classes.iter().enumerate() {
        for b in 1..=cfg.biological {
            for t in 1..=cfg.technical {
                plans.push(RunPlan {
                    run: RunId::new(format!("{class}_{b}"), format!("t{t}")),
                    class: ci,
                    sample_index,
                });
            }
            sample_index += 1;
        }
    }
    plans
}

/// Multiplicative biological variation of one biological sample: per protein
/// and per species.
fn sample_biology(cfg: &SimConfig, sample: usize, n_proteins: usize, n_species: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = stream(cfg.seed, STREAM_SAMPLE_BASE + sample as u64);
    let prot = lognormal(cfg.bio_cv);
    let spec = lognormal(cfg.bio_cv / 2.0);
    let p = (0..n_proteins).map(|_| prot.sample(&mut rng)).collect();
    let s = (0..n_species).map(|_| spec.sample(&mut rng)).collect();
    (p, s)
}

struct RunOutput {
    raster: Raster,
    ids: Vec<Identification>,
    features: Vec<TruthFeature>,
}

fn simulate_run(
    cfg: &SimConfig,
    plan: &RunPlan,
    run_index: usize,
    proteins: &[SimProtein],
    species: &[SimSpecies],
    design: &DesignTable,
) -> RunOutput {
    let (bio_p, bio_s) = sample_biology(cfg, plan.sample_index, proteins.len(), species.len());
    // Separate streams per phase, so species appended to the end of the list
    // leave the draws of the others untouched.
    let run_stream = STREAM_RUN_BASE + 4 * run_index as u64;
    let mut rng = stream(cfg.seed, run_stream);
    let noise_seed = stream(cfg.seed, run_stream + 1).random::<u64>();
    let mut id_rng = stream(cfg.seed, run_stream + 2);
    let mut rt_rng = stream(cfg.seed, run_stream + 3);
    let tech = lognormal(cfg.tech_cv);
    let class = &design.classes[plan.class];

    let mut base: Vec<f64> = species
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = &proteins[s.protein];
            let ab = design.abundance(&p.accession, class).unwrap_or(0.0);
            cfg.amplitude_scale * ab * p.scale * s.efficiency * bio_p[s.protein] * bio_s[i] * tech.sample(&mut rng)
        })
        .collect();
    for (i, s) in species.iter().enumerate() {
        if let Some((parent, ratio)) = s.injected {
            base[i] = if *class == cfg.semi_tryptic_class {
                ratio * base[parent]
            } else {
                0.0
            };
        }
    }

    let jitter = rand_distr::Normal::new(0.0, cfg.rt_jitter.max(0.0)).expect("finite jitter");
    let mut features: Vec<RunFeature> = species
        .iter()
        .enumerate()
        .filter(|(i, _)| base[*i] > 0.0)
        .map(|(i, s)| RunFeature {
            species: i,
            spike: proteins[s.protein].spike,
            params: FeatureParams {
                amplitude: base[i],
                mu: (s.rt + jitter.sample(&mut rt_rng)).max(0.0),
                sigma: s.sigma,
                zeta0: s.mz,
                delta: NEUTRON_SPACING / s.key.charge() as f64,
                lambda: s.lambda,
                rho: s.rho,
                n_peaks: FIT_PEAKS,
            },
        })
        .collect();
    if cfg.competition == Competition::Proportional {
        apply_competition(&mut features, cfg.competition_strength);
    }
    apply_detection_floor(&mut features, cfg.detection_floor);

    let params: Vec<(FeatureParams, u64)> = features
        .iter()
        .map(|f| (f.params, noise_seed ^ (f.species as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
        .collect();
    let raster = render_raster(plan.run.clone(), &params, cfg.noise);

    let mut ids = Vec::new();
    for f in &features {
        let p = &f.params;
        let mean = cfg.cid_max * p.amplitude / (p.amplitude + cfg.cid_half);
        if mean.is_nan() || mean <= 0.0 {
            continue;
        }
        let n = Poisson::new(mean).expect("positive mean").sample(&mut id_rng) as usize;
        for _ in 0..n {
            let t = id_rng.random_range(p.mu - 2.0 * p.sigma..=p.mu + 2.0 * p.sigma).max(0.0);
            let fdr = if id_rng.random_bool(cfg.high_fdr_fraction) {
                id_rng.random_range(0.002..0.05)
            } else {
                id_rng.random_range(0.0..=0.001)
            };
            ids.push(Identification {
                sample_id: plan.run.sample_id.clone(),
                replicate_id: plan.run.replicate_id.clone(),
                species: species[f.species].key.clone(),
                retention_time: t,
                precursor_mz: p.zeta0,
                fdr,
            });
        }
    }
    ids.sort_by(|a, b| a.retention_time.total_cmp(&b.retention_time));

    let features = features
        .into_iter()
        .map(|f| TruthFeature {
            run: plan.run.clone(),
            species: f.species,
            params: f.params,
            base_amplitude: base[f.species],
        })
        .collect();
    RunOutput { raster, ids, features }
}

/// Generates a complete dataset; identical configurations give identical data.
pub fn simulate(cfg: &SimConfig) -> SimDataset {
    let mut rng = stream(cfg.seed, STREAM_PROTEOME);
    let (design, protein_rows) = build_design(cfg, &mut rng);
    let proteins: Vec<SimProtein> = protein_rows
        .into_iter()
        .map(|(accession, scale, spike)| {
            let length = rng.random_range(250..=500);
            SimProtein {
                sequence: random_protein(&mut rng, length),
                accession,
                scale,
                spike,
            }
        })
        .collect();

    let mut species = build_species(cfg, &mut stream(cfg.seed, STREAM_SPECIES), &proteins);
    inject(cfg, &mut stream(cfg.seed, STREAM_INJECTION), &proteins, &mut species, &design);

    let plans = plan_runs(cfg, &design);
    let outputs: Vec<RunOutput> = plans
        .par_iter()
        .enumerate()
        .map(|(i, plan)| simulate_run(cfg, plan, i, &proteins, &species, &design))
        .collect();

    let mut protein_map = ProteinMap::new();
    for s in &species {
        protein_map.insert(s.key.sequence(), proteins[s.protein].accession.clone());
    }
    let samples = SampleSheet {
        rows: plans
            .iter()
            .map(|p| SampleSheetRow {
                run: p.run.clone(),
                class: design.classes[p.class].clone(),
            })
            .collect(),
    };
    let fasta = proteins
        .iter()
        .map(|p| (p.accession.clone(), p.sequence.clone()))
        .collect();

    let mut rasters = Vec::with_capacity(outputs.len());
    let mut identifications = Vec::new();
    let mut features = Vec::new();
    for out in outputs {
        rasters.push(out.raster);
        identifications.extend(out.ids);
        features.extend(out.features);
    }
    SimDataset {
        rasters,
        identifications,
        protein_map,
        design,
        samples,
        fasta,
        truth: SimTruth {
            proteins,
            species,
            features,
        },
    }
}

pub const RASTER_DIR: &str = "rasters";

/// File names written by [`write_dataset`], relative to the dataset directory.
pub mod files {
    pub const IDENTIFICATIONS: &str = "identifications.tsv";
    pub const PROTEIN_MAP: &str = "proteins.tsv";
    pub const DESIGN: &str = "design.tsv";
    pub const SAMPLES: &str = "samples.tsv";
    pub const FASTA: &str = "proteins.fasta";
    pub const TRUTH_FEATURES: &str = "truth_features.tsv";
    pub const TRUTH_SPECIES: &str = "truth_species.tsv";
}

/// Writes the dataset in the ingest formats plus truth tables.
pub fn write_dataset(dir: &Path, data: &SimDataset) -> Result<(), TsvError> {
    let raster_dir = dir.join(RASTER_DIR);
    for r in &data.rasters {
        write_raster(&raster_dir, r)?;
    }
    write_identifications(&dir.join(files::IDENTIFICATIONS), &data.identifications)?;
    write_protein_map(&dir.join(files::PROTEIN_MAP), &data.protein_map)?;
    write_design(&dir.join(files::DESIGN), &data.design)?;
    write_sample_sheet(&dir.join(files::SAMPLES), &data.samples)?;
    write_fasta(&dir.join(files::FASTA), &data.fasta)?;

    let truth = &data.truth;
    let mut w = TsvWriter::create(
        &dir.join(files::TRUTH_SPECIES),
        &["species", "protein", "mz", "rt", "sigma", "rho", "lambda", "efficiency", "semi_tryptic", "injected"],
    )?;
    for s in &truth.species {
        w.write_row([
            s.key.to_string(),
            truth.proteins[s.protein].accession.clone(),
            s.mz.to_string(),
            s.rt.to_string(),
            s.sigma.to_string(),
            s.rho.to_string(),
            s.lambda.to_string(),
            s.efficiency.to_string(),
            s.semi_tryptic.to_string(),
            s.injected.is_some().to_string(),
        ])?;
    }
    w.finish()?;

    let mut w = TsvWriter::create(
        &dir.join(files::TRUTH_FEATURES),
        &["run", "species", "amplitude", "base_amplitude", "mu", "sigma", "zeta0", "delta", "lambda", "rho", "n_peaks", "volume"],
    )?;
    for f in &truth.features {
        let p = &f.params;
        w.write_row([
            f.run.to_string(),
            truth.species[f.species].key.to_string(),
            p.amplitude.to_string(),
            f.base_amplitude.to_string(),
            p.mu.to_string(),
            p.sigma.to_string(),
            p.zeta0.to_string(),
            p.delta.to_string(),
            p.lambda.to_string(),
            p.rho.to_string(),
            p.n_peaks.to_string(),
            crate::feature::analytic_volume(p).to_string(),
        ])?;
    }
    w.finish()
}

/// Distinct species keys that the identifications reference.
pub fn identified_species(ids: &[Identification]) -> BTreeSet<&SpeciesKey> {
    ids.iter().map(|i| &i.species).collect()
}
