//! Label-free LC-MS/MS differential quantification.
//!
//! Species are quantified by spectral count and by the volume of a fitted
//! isotopic-envelope feature model, rolled up to peptides and proteins, and
//! tested for differential abundance with a permutation-calibrated mean of
//! scaled Wilcoxon rank-sum statistics. Diagnostics cover ion competition
//! (interference distance) and semi-tryptic content; a simulator produces
//! datasets with known ground truth.

pub mod diagnostics;
pub mod evaluate;
pub mod feature;
pub mod ingest;
pub mod kv;
pub mod matrix;
pub mod pipeline;
pub mod quant;
pub mod rollup;
pub mod simulate;
pub mod stats;
pub mod tsv;
