//! Simulator configuration as a flat `key = value` file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

pub use crate::kv::ConfigError;
use crate::kv::{parse_pairs, read_pairs, Pair};

pub const SPIKE_PREFIX: &str = "UPS";
pub const BASE_PREFIX: &str = "PRT";
/// Design abundance of every base protein in the spike-in preset.
pub const CPTAC_BASE: f64 = 60.0;
/// Spike-protein design abundance per class of the spike-in preset.
pub const CPTAC_SPIKE_LEVELS: [f64; 6] = [0.0, 0.25, 0.74, 2.2, 6.7, 20.0];
/// No feature apex closer than this to either end of a run, seconds.
pub const RT_MARGIN: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Two mixtures, a subset of proteins differential.
    Biatech,
    /// Base proteome at constant abundance plus spike proteins over six classes.
    Cptac,
    /// Two mixtures with identical composition.
    Null,
}

impl Preset {
    pub fn classes(&self) -> Vec<&'static str> {
        match self {
            Preset::Biatech | Preset::Null => vec!["mix1", "mix2"],
            Preset::Cptac => vec!["QC2", "A", "B", "C", "D", "E"],
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "biatech" => Ok(Preset::Biatech),
            "cptac" => Ok(Preset::Cptac),
            "null" => Ok(Preset::Null),
            other => Err(format!("unknown preset '{other}' (expected biatech|cptac|null)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Biatech => "biatech",
            Preset::Cptac => "cptac",
            Preset::Null => "null",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Competition {
    Off,
    Proportional,
}

impl FromStr for Competition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(Competition::Off),
            "proportional" => Ok(Competition::Proportional),
            other => Err(format!("unknown competition '{other}' (expected off|proportional)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub preset: Preset,
    pub seed: u64,
    /// Base proteins.
    pub proteins: usize,
    /// Spike proteins (spike-in preset only).
    pub spike_proteins: usize,
    /// Differential proteins (two-mixture preset only).
    pub differential: usize,
    /// Biological samples per class.
    pub biological: usize,
    /// Technical replicates per biological sample.
    pub technical: usize,
    pub species_per_protein: (usize, usize),
    /// Seconds.
    pub run_length: f64,
    /// Feature amplitude per unit of design abundance.
    pub amplitude_scale: f64,
    pub sigma_range: (f64, f64),
    pub rho_range: (f64, f64),
    /// Per-point noise standard deviation as a fraction of the feature amplitude.
    pub noise: f64,
    pub competition: Competition,
    pub competition_strength: f64,
    /// Features below this fraction of the run median amplitude are not detected.
    pub detection_floor: f64,
    /// Probability that a species is a semi-tryptic truncation, in every class.
    pub semi_tryptic_fraction: f64,
    /// Ionization efficiency multiplier of semi-tryptic species.
    pub semi_tryptic_efficiency: f64,
    /// Extra semi-tryptic species as a fraction of all species.
    pub semi_tryptic_injection: f64,
    /// Class whose runs receive the injected species.
    pub semi_tryptic_class: String,
    /// Expected identifications of a feature saturate at `cid_max`, reaching
    /// half of it at amplitude `cid_half`.
    pub cid_max: f64,
    pub cid_half: f64,
    /// Per-feature, per-run retention-time jitter (sd, seconds).
    pub rt_jitter: f64,
    /// Log-scale spread of protein abundance multipliers.
    pub protein_spread: f64,
    /// Log-scale spread of species ionization efficiencies.
    pub species_spread: f64,
    /// Log-scale biological variation per protein and biological sample.
    pub bio_cv: f64,
    /// Log-scale technical variation per species and run.
    pub tech_cv: f64,
    /// Fraction of identifications given fdr values above common thresholds.
    pub high_fdr_fraction: f64,
}

impl SimConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = SimConfig {
            preset,
            seed: 0,
            proteins: 54,
            spike_proteins: 0,
            differential: 27,
            biological: 6,
            technical: 2,
            species_per_protein: (3, 8),
            run_length: 2400.0,
            amplitude_scale: 1e4,
            sigma_range: (2.0, 5.0),
            rho_range: (0.008, 0.015),
            noise: 0.01,
            competition: Competition::Off,
            competition_strength: 1.0,
            detection_floor: 0.01,
            semi_tryptic_fraction: 0.08,
            semi_tryptic_efficiency: 0.1,
            semi_tryptic_injection: 0.0,
            semi_tryptic_class: "mix1".into(),
            cid_max: 8.0,
            cid_half: 2000.0,
            rt_jitter: 2.0,
            protein_spread: 0.5,
            species_spread: 0.6,
            bio_cv: 0.3,
            tech_cv: 0.08,
            high_fdr_fraction: 0.05,
        };
        match preset {
            Preset::Biatech => base,
            Preset::Null => SimConfig {
                differential: 0,
                ..base
            },
            Preset::Cptac => SimConfig {
                proteins: 80,
                spike_proteins: 48,
                differential: 0,
                technical: 1,
                species_per_protein: (2, 5),
                run_length: 3600.0,
                amplitude_scale: 1e4 / CPTAC_BASE,
                competition: Competition::Proportional,
                semi_tryptic_class: "A".into(),
                protein_spread: 1.0,
                species_spread: 0.8,
                rt_jitter: 3.0,
                ..base
            },
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        Self::from_pairs(&read_pairs(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    /// `preset` selects the starting values, so it is applied before every other key.
    pub fn from_pairs(pairs: &[Pair]) -> Result<Self, ConfigError> {
        let preset = match pairs.iter().find(|p| p.key == "preset") {
            Some(p) => p.value.parse().map_err(|m: String| p.error(m))?,
            None => Preset::Biatech,
        };
        let mut cfg = SimConfig::preset(preset);
        for p in pairs {
            cfg.set(&p.key, &p.value).map_err(|m| p.error(m))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("{key}: cannot parse '{value}'"))
        }
        match key {
            "preset" => {}
            "seed" => self.seed = num(key, value)?,
            "proteins" => self.proteins = num(key, value)?,
            "spike_proteins" => self.spike_proteins = num(key, value)?,
            "differential" => self.differential = num(key, value)?,
            "biological" => self.biological = num(key, value)?,
            "technical" => self.technical = num(key, value)?,
            "species_per_protein_min" => self.species_per_protein.0 = num(key, value)?,
            "species_per_protein_max" => self.species_per_protein.1 = num(key, value)?,
            "run_length" => self.run_length = num(key, value)?,
            "amplitude_scale" => self.amplitude_scale = num(key, value)?,
            "sigma_min" => self.sigma_range.0 = num(key, value)?,
            "sigma_max" => self.sigma_range.1 = num(key, value)?,
            "rho_min" => self.rho_range.0 = num(key, value)?,
            "rho_max" => self.rho_range.1 = num(key, value)?,
            "noise" => self.noise = num(key, value)?,
            "competition" => self.competition = value.parse()?,
            "competition_strength" => self.competition_strength = num(key, value)?,
            "detection_floor" => self.detection_floor = num(key, value)?,
            "semi_tryptic_fraction" => self.semi_tryptic_fraction = num(key, value)?,
            "semi_tryptic_efficiency" => self.semi_tryptic_efficiency = num(key, value)?,
            "semi_tryptic_injection" => self.semi_tryptic_injection = num(key, value)?,
            "semi_tryptic_class" => self.semi_tryptic_class = value.to_string(),
            "cid_max" => self.cid_max = num(key, value)?,
            "cid_half" => self.cid_half = num(key, value)?,
            "rt_jitter" => self.rt_jitter = num(key, value)?,
            "protein_spread" => self.protein_spread = num(key, value)?,
            "species_spread" => self.species_spread = num(key, value)?,
            "bio_cv" => self.bio_cv = num(key, value)?,
            "tech_cv" => self.tech_cv = num(key, value)?,
            "high_fdr_fraction" => self.high_fdr_fraction = num(key, value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let rates = [
            self.noise,
            self.competition_strength,
            self.detection_floor,
            self.semi_tryptic_injection,
            self.semi_tryptic_efficiency,
            self.cid_max,
            self.cid_half,
            self.rt_jitter,
            self.protein_spread,
            self.species_spread,
            self.bio_cv,
            self.tech_cv,
        ];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return bad("rates and spreads must be finite and nonnegative");
        }
        for p in [self.semi_tryptic_fraction, self.high_fdr_fraction] {
            if !(0.0..=1.0).contains(&p) {
                return bad("fractions must lie in [0, 1]");
            }
        }
        if self.run_length.is_nan() || self.run_length <= 2.0 * RT_MARGIN {
            return bad("run_length must exceed 120 seconds");
        }
        if self.biological == 0 || self.technical == 0 || self.proteins == 0 {
            return bad("proteins, biological and technical must be at least 1");
        }
        let (lo, hi) = self.species_per_protein;
        if lo == 0 || lo > hi {
            return bad("species_per_protein_min must be in 1..=species_per_protein_max");
        }
        for (lo, hi) in [self.sigma_range, self.rho_range] {
            if !(lo > 0.0 && lo <= hi) {
                return bad("sigma and rho ranges must be positive and ordered");
            }
        }
        if self.rho_range.1 >= 0.1 {
            return bad("rho_max must be below 0.1 so isotope peaks stay resolved");
        }
        if self.amplitude_scale.is_nan() || self.amplitude_scale <= 0.0 {
            return bad("amplitude_scale must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_then_overrides() {
        let cfg = SimConfig::parse("competition = off\n# note\npreset = cptac\nseed=7\n").unwrap();
        assert_eq!(cfg.preset, Preset::Cptac);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.competition, Competition::Off);
        assert_eq!(cfg.spike_proteins, 48);
    }

    #[test]
    fn errors_name_the_line() {
        let e = SimConfig::parse("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(e.to_string().starts_with("line 2:"), "{e}");
        assert!(SimConfig::parse("noise = -1").is_err());
        assert!(SimConfig::parse("just words").is_err());
    }
}
