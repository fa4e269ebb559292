//! Random proteomes and their tryptic peptides.

use rand::Rng;

use crate::diagnostics::{best_tryptic_status, TrypticStatus};

/// Monoisotopic residue masses in Daltons.
pub fn residue_mass(aa: u8) -> f64 {
    match aa {
        b'G' => 57.02146,
        b'A' => 71.03711,
        b'S' => 87.03203,
        b'P' => 97.05276,
        b'V' => 99.06841,
        b'T' => 101.04768,
        b'C' => 103.00919,
        b'L' | b'I' => 113.08406,
        b'N' => 114.04293,
        b'D' => 115.02694,
        b'Q' => 128.05858,
        b'K' => 128.09496,
        b'E' => 129.04259,
        b'M' => 131.04049,
        b'H' => 137.05891,
        b'F' => 147.06841,
        b'R' => 156.10111,
        b'Y' => 163.06333,
        b'W' => 186.07931,
        _ => panic!("not an amino acid: {}", aa as char),
    }
}

pub const WATER: f64 = 18.01056;
pub const PROTON: f64 = 1.00728;
/// Residue mass of methionine sulfoxide.
pub const OXIDIZED_MET: f64 = 147.03540;

/// Neutral monoisotopic mass of a sequence; `oxidized` replaces one M residue.
pub fn peptide_mass(sequence: &str, oxidized: bool) -> f64 {
    let base: f64 = sequence.bytes().map(residue_mass).sum::<f64>() + WATER;
    if oxidized {
        base - residue_mass(b'M') + OXIDIZED_MET
    } else {
        base
    }
}

pub fn mz(mass: f64, charge: u8) -> f64 {
    (mass + charge as f64 * PROTON) / charge as f64
}

/// Approximate background amino-acid frequencies (percent).
const FREQUENCIES: [(u8, u32); 20] = [
    (b'A', 83),
    (b'R', 55),
    (b'N', 41),
    (b'D', 55),
    (b'C', 14),
    (b'Q', 39),
    (b'E', 67),
    (b'G', 71),
    (b'H', 23),
    (b'I', 59),
    (b'L', 97),
    (b'K', 58),
    (b'M', 24),
    (b'F', 39),
    (b'P', 47),
    (b'S', 66),
    (b'T', 53),
    (b'W', 11),
    (b'Y', 29),
    (b'V', 69),
];

pub fn random_protein(rng: &mut impl Rng, length: usize) -> String {
    let total: u32 = FREQUENCIES.iter().map(|f| f.1).sum();
    let mut s = String::with_capacity(length);
    s.push('M');
    while s.len() < length {
        let mut x = rng.random_range(0..total);
        for &(aa, f) in &FREQUENCIES {
            if x < f {
                s.push(aa as char);
                break;
            }
            x -= f;
        }
    }
    s
}

/// Fully tryptic peptides (cut after K/R, not before P) with 1-based starts.
pub fn tryptic_digest(protein: &str) -> Vec<(usize, &str)> {
    let bytes = protein.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..bytes.len() {
        let cut = (bytes[i] == b'K' || bytes[i] == b'R')
            && bytes.get(i + 1).is_none_or(|&n| n != b'P');
        if cut || i + 1 == bytes.len() {
            out.push((start + 1, &protein[start..=i]));
            start = i + 1;
        }
    }
    out
}

/// A strictly semi-tryptic truncation of `peptide` (a tryptic peptide of
/// `protein` at `start`), cut 1-4 residues into one end, or `None` when no
/// candidate of length >= `min_len` qualifies.
pub fn semi_tryptic_truncation(
    rng: &mut impl Rng,
    protein: &str,
    start: usize,
    peptide: &str,
    min_len: usize,
) -> Option<(usize, String)> {
    for _ in 0..8 {
        let cut = rng.random_range(1..=4usize);
        if peptide.len() < min_len + cut {
            return None;
        }
        let (s, seq) = if rng.random_bool(0.5) {
            (start + cut, &peptide[cut..])
        } else {
            (start, &peptide[..peptide.len() - cut])
        };
        if best_tryptic_status(seq, [protein], true) == Some(TrypticStatus::StrictlySemiTryptic) {
            return Some((s, seq.to_string()));
        }
    }
    None
}
