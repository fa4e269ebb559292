//! Species nomenclature: `SEQUENCE[mass]...+charge`.
//!
//! A modification is written as a bracketed net residue mass directly after the
//! residue it modifies, e.g. `DEDTQAM[147.035]PFR+2`. Masses are held in
//! thousandths of a Dalton so the canonical rendering (three decimals) is
//! bijective with the stored value.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// The 20 standard amino-acid one-letter codes.
pub const AMINO_ACIDS: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";

pub fn is_amino_acid(b: u8) -> bool {
    AMINO_ACIDS.contains(&b)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpeciesParseError {
    #[error("empty species string")]
    Empty,
    #[error("byte {offset}: '{found}' is not a standard amino acid")]
    NotAminoAcid { offset: usize, found: char },
    #[error("byte {offset}: modification bracket without a preceding residue")]
    OrphanModification { offset: usize },
    #[error("byte {offset}: unterminated modification bracket")]
    UnterminatedModification { offset: usize },
    #[error("byte {offset}: invalid modification mass '{text}'")]
    BadMass { offset: usize, text: String },
    #[error("byte {offset}: residue already carries a modification")]
    DuplicateModification { offset: usize },
    #[error("byte {offset}: malformed charge suffix")]
    BadCharge { offset: usize },
    #[error("byte {offset}: missing charge suffix")]
    MissingCharge { offset: usize },
}

/// A residue modification. `position` is a 1-based index into the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Modification {
    pub position: usize,
    mass_milli: i64,
}

impl Modification {
    pub fn new(position: usize, mass: f64) -> Self {
        Modification {
            position,
            mass_milli: (mass * 1000.0).round() as i64,
        }
    }

    /// Net residue mass in Daltons, at the canonical 3-decimal precision.
    pub fn mass(&self) -> f64 {
        self.mass_milli as f64 / 1000.0
    }
}

/// Identity of a quantifiable entity: primary sequence, modifications and charge.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpeciesKey {
    sequence: String,
    modifications: Vec<Modification>,
    charge: u8,
}

impl SpeciesKey {
    /// Builds a key from parts, validating every invariant.
    pub fn new(
        sequence: impl Into<String>,
        mut modifications: Vec<Modification>,
        charge: u8,
    ) -> Result<Self, SpeciesParseError> {
        let sequence = sequence.into();
        if sequence.is_empty() {
            return Err(SpeciesParseError::Empty);
        }
        if let Some((offset, b)) = sequence.bytes().enumerate().find(|(_, b)| !is_amino_acid(*b)) {
            return Err(SpeciesParseError::NotAminoAcid {
                offset,
                found: b as char,
            });
        }
        if charge == 0 {
            return Err(SpeciesParseError::BadCharge {
                offset: sequence.len(),
            });
        }
        modifications.sort();
        for (i, m) in modifications.iter().enumerate() {
            if m.position == 0 || m.position > sequence.len() {
                return Err(SpeciesParseError::OrphanModification { offset: m.position });
            }
            if i > 0 && modifications[i - 1].position == m.position {
                return Err(SpeciesParseError::DuplicateModification { offset: m.position });
            }
        }
        Ok(SpeciesKey {
            sequence,
            modifications,
            charge,
        })
    }

    pub fn sequence(&self) -> &str {
        &self.sequence
    }

    pub fn modifications(&self) -> &[Modification] {
        &self.modifications
    }

    pub fn charge(&self) -> u8 {
        self.charge
    }

    /// The same species with a different charge state.
    pub fn with_charge(&self, charge: u8) -> Self {
        SpeciesKey {
            charge: charge.max(1),
            ..self.clone()
        }
    }
}

/// Parses species nomenclature. `render(parse(s))` is the canonical form of `s`.
pub fn parse_species(text: &str) -> Result<SpeciesKey, SpeciesParseError> {
    let bytes = text.as_bytes();
    if bytes.is_empty() {
        return Err(SpeciesParseError::Empty);
    }
    let mut sequence = String::with_capacity(bytes.len());
    let mut modifications: Vec<Modification> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b'[' => {
                if sequence.is_empty() {
                    return Err(SpeciesParseError::OrphanModification { offset: i });
                }
                let close = bytes[i + 1..]
                    .iter()
                    .position(|&c| c == b']')
                    .map(|p| p + i + 1)
                    .ok_or(SpeciesParseError::UnterminatedModification { offset: i })?;
                let mass_text = &text[i + 1..close];
                let mass: f64 = mass_text
                    .parse()
                    .ok()
                    .filter(|m: &f64| m.is_finite())
                    .ok_or_else(|| SpeciesParseError::BadMass {
                        offset: i + 1,
                        text: mass_text.to_string(),
                    })?;
                let position = sequence.len();
                if modifications.last().is_some_and(|m| m.position == position) {
                    return Err(SpeciesParseError::DuplicateModification { offset: i });
                }
                modifications.push(Modification::new(position, mass));
                i = close + 1;
            }
            b'+' => {
                if sequence.is_empty() {
                    return Err(SpeciesParseError::OrphanModification { offset: i });
                }
                let digits = &text[i + 1..];
                if digits.is_empty() {
                    return Err(SpeciesParseError::BadCharge { offset: i + 1 });
                }
                if let Some(bad) = digits.bytes().position(|d| !d.is_ascii_digit()) {
                    return Err(SpeciesParseError::BadCharge {
                        offset: i + 1 + bad,
                    });
                }
                let charge: u8 = digits
                    .parse()
                    .ok()
                    .filter(|&c| c > 0)
                    .ok_or(SpeciesParseError::BadCharge { offset: i + 1 })?;
                return Ok(SpeciesKey {
                    sequence,
                    modifications,
                    charge,
                });
            }
            b if is_amino_acid(b) => {
                sequence.push(b as char);
                i += 1;
            }
            _ => {
                let found = text[i..].chars().next().unwrap_or('?');
                return Err(SpeciesParseError::NotAminoAcid { offset: i, found });
            }
        }
    }
    Err(SpeciesParseError::MissingCharge { offset: bytes.len() })
}

impl fmt::Display for SpeciesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut mods = self.modifications.iter().peekable();
        for (idx, residue) in self.sequence.chars().enumerate() {
            write!(f, "{residue}")?;
            while let Some(m) = mods.next_if(|m| m.position == idx + 1) {
                write!(f, "[{:.3}]", m.mass())?;
            }
        }
        write!(f, "+{}", self.charge)
    }
}

impl FromStr for SpeciesKey {
    type Err = SpeciesParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_species(s)
    }
}
