//! Rank statistics: the scaled Wilcoxon `w`, its per-protein mean `tau`, a
//! label-permutation null, Benjamini-Hochberg q-values and Spearman's rho.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::matrix::{Group, Level, Measure, QuantMatrix};
use crate::rollup::ProteinElements;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("a comparison group has no observations")]
    EmptyGroup,
    #[error("tau of an empty element list")]
    NoElements,
    #[error("the sample layout admits fewer than two distinct relabelings")]
    TooFewRelabelings,
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("at least {0} paired values are required")]
    TooFewValues(usize),
    #[error("ranks have zero variance")]
    ZeroVariance,
}

/// How missing cells enter a rank comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPolicy {
    /// Missing ranks as 0, below every observed value.
    ZeroFill,
    /// Missing cells are dropped, shrinking that group.
    Exclude,
}

/// Which group's ranks are summed into `W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankGroup {
    #[default]
    Case,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// Rank sum of the first group.
    pub rank_sum: f64,
    pub w: f64,
    pub n: usize,
    pub m: usize,
}

/// Midranks (1-based) of `values`.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end (0-based) share rank mean(start+1 ..= end).
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// `w = 2 (W - (W_max + W_min) / 2) / (W_max - W_min)`, with
/// `W_min = n(n+1)/2` and `W_max = n(n+2m+1)/2`.
fn scale(rank_sum: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    (2.0 * rank_sum - n * (n + m + 1.0)) / (n * m)
}

/// Scaled rank-sum statistic of `case` against `control`.
pub fn wilcoxon_w(case: &[f64], control: &[f64]) -> Result<WilcoxonResult, StatsError> {
    if case.is_empty() || control.is_empty() {
        return Err(StatsError::EmptyGroup);
    }
    let pooled: Vec<f64> = case.iter().chain(control).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum = ranks[..case.len()].iter().sum();
    Ok(WilcoxonResult {
        rank_sum,
        w: scale(rank_sum, case.len(), control.len()),
        n: case.len(),
        m: control.len(),
    })
}

/// [`wilcoxon_w`] on cells that may be missing.
pub fn wilcoxon_w_missing(
    case: &[Option<f64>],
    control: &[Option<f64>],
    policy: MissingPolicy,
) -> Result<WilcoxonResult, StatsError> {
    let resolve = |v: &[Option<f64>]| -> Vec<f64> {
        match policy {
            MissingPolicy::ZeroFill => v.iter().map(|x| x.unwrap_or(0.0)).collect(),
            MissingPolicy::Exclude => v.iter().flatten().copied().collect(),
        }
    };
    wilcoxon_w(&resolve(case), &resolve(control))
}

pub fn tau(ws: &[f64]) -> Result<f64, StatsError> {
    if ws.is_empty() {
        return Err(StatsError::NoElements);
    }
    Ok(ws.iter().sum::<f64>() / ws.len() as f64)
}

/// One row of a matrix pre-ranked once: ranks do not depend on the labels, so
/// any relabeling only re-partitions them.
struct RankedRow {
    /// (sample column, midrank) for the cells that take part.
    ranked: Vec<(usize, f64)>,
}

impl RankedRow {
    fn new(row: &[Option<f64>], policy: MissingPolicy) -> Self {
        let cells: Vec<(usize, f64)> = row
            .iter()
            .enumerate()
            .filter_map(|(j, v)| match (v, policy) {
                (Some(x), _) => Some((j, *x)),
                (None, MissingPolicy::ZeroFill) => Some((j, 0.0)),
                (None, MissingPolicy::Exclude) => None,
            })
            .collect();
        let values: Vec<f64> = cells.iter().map(|c| c.1).collect();
        let ranks = midranks(&values);
        RankedRow {
            ranked: cells.iter().zip(ranks).map(|(c, r)| (c.0, r)).collect(),
        }
    }

    /// Case-oriented `w` under `labels`, or `None` when a group is empty.
    fn w(&self, labels: &[Group]) -> Option<f64> {
        let (mut rank_sum, mut n, mut m) = (0.0, 0, 0);
        for &(j, r) in &self.ranked {
            match labels[j] {
                Group::Case => {
                    rank_sum += r;
                    n += 1;
                }
                Group::Control => m += 1,
            }
        }
        (n > 0 && m > 0).then(|| scale(rank_sum, n, m))
    }
}

/// Settings of the differential test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestSettings {
    pub permutations: usize,
    pub seed: u64,
    pub policy: MissingPolicy,
    pub orientation: RankGroup,
    /// Enumerate every relabeling instead of sampling when the layout has at
    /// most this many of them.
    pub exhaustive_limit: u64,
}

impl Default for TestSettings {
    fn default() -> Self {
        TestSettings {
            permutations: 1500,
            seed: 0,
            policy: MissingPolicy::ZeroFill,
            orientation: RankGroup::Case,
            exhaustive_limit: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// Higher in case than control.
    Up,
    Down,
    Flat,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Flat => "none",
        }
    }

    fn of_case_tau(tau: f64) -> Self {
        if tau > 0.0 {
            Direction::Up
        } else if tau < 0.0 {
            Direction::Down
        } else {
            Direction::Flat
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauResult {
    pub protein: String,
    pub level: Level,
    pub measure: Measure,
    /// Elements with a defined `w`.
    pub k: usize,
    /// Mean `w` in the configured orientation.
    pub tau: f64,
    pub p_value: f64,
    pub q_value: f64,
    /// Case-relative direction regardless of orientation.
    pub direction: Direction,
}

/// Per-element `w` values of a protein under `labels`, case oriented.
fn element_ws(rows: &[&RankedRow], labels: &[Group]) -> Vec<f64> {
    rows.iter().filter_map(|r| r.w(labels)).collect()
}

fn mean(ws: &[f64]) -> Option<f64> {
    (!ws.is_empty()).then(|| ws.iter().sum::<f64>() / ws.len() as f64)
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Every assignment of `n_case` case labels to `len` positions, in
/// lexicographic order of the case index sets.
fn all_labelings(len: usize, n_case: usize) -> Vec<Vec<Group>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..n_case).collect();
    loop {
        let mut labels = vec![Group::Control; len];
        for &i in &idx {
            labels[i] = Group::Case;
        }
        out.push(labels);
        // Advance to the next combination.
        let Some(pos) = (0..n_case).rev().find(|&p| idx[p] < len - n_case + p) else {
            return out;
        };
        idx[pos] += 1;
        for p in pos + 1..n_case {
            idx[p] = idx[p - 1] + 1;
        }
    }
}

/// Sampled relabelings preserving group sizes, generated up front so the
/// result does not depend on scheduling.
fn random_labelings(observed: &[Group], count: usize, seed: u64) -> Vec<Vec<Group>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut labels = observed.to_vec();
            labels.shuffle(&mut rng);
            labels
        })
        .collect()
}

/// Observed `tau` for each protein and its two-sided permutation p-value
/// `(1 + #{|tau_b| >= |tau_obs|}) / (B + 1)`; with exhaustive enumeration the
/// p-value is the exact fraction of relabelings at least as extreme. Proteins
/// without any defined element are omitted. q-values are left at 1; see
/// [`assign_qvalues`].
pub fn permutation_test(
    m: &QuantMatrix,
    elements: &[ProteinElements],
    settings: &TestSettings,
) -> Result<Vec<TauResult>, StatsError> {
    let observed = m.groups();
    let n_case = observed.iter().filter(|g| **g == Group::Case).count();
    if n_case == 0 || n_case == observed.len() {
        return Err(StatsError::EmptyGroup);
    }
    let distinct = binomial(observed.len() as u64, n_case as u64);
    if distinct < 2 {
        return Err(StatsError::TooFewRelabelings);
    }
    let exhaustive = distinct <= settings.exhaustive_limit;
    let labelings = if exhaustive {
        all_labelings(observed.len(), n_case)
    } else {
        random_labelings(&observed, settings.permutations, settings.seed)
    };

    let ranked: Vec<RankedRow> = (0..m.n_entities())
        .into_par_iter()
        .map(|i| RankedRow::new(m.row(i), settings.policy))
        .collect();
    let sign = match settings.orientation {
        RankGroup::Case => 1.0,
        RankGroup::Control => -1.0,
    };

    let results = elements
        .par_iter()
        .filter_map(|pe| {
            let rows: Vec<&RankedRow> = pe.rows.iter().map(|&i| &ranked[i]).collect();
            let ws = element_ws(&rows, &observed);
            let tau_case = mean(&ws)?;
            let threshold = tau_case.abs() - 1e-12;
            let extreme = labelings
                .iter()
                .filter(|labels| {
                    mean(&element_ws(&rows, labels)).is_some_and(|t| t.abs() >= threshold)
                })
                .count();
            let p_value = if exhaustive {
                extreme as f64 / labelings.len() as f64
            } else {
                (1 + extreme) as f64 / (labelings.len() + 1) as f64
            };
            Some(TauResult {
                protein: pe.protein.clone(),
                level: pe.level,
                measure: m.measure,
                k: ws.len(),
                tau: sign * tau_case,
                p_value,
                q_value: 1.0,
                direction: Direction::of_case_tau(tau_case),
            })
        })
        .collect();
    Ok(results)
}

/// Fills in Benjamini-Hochberg q-values across `results`.
pub fn assign_qvalues(results: &mut [TauResult]) {
    let p: Vec<f64> = results.iter().map(|r| r.p_value).collect();
    for (r, q) in results.iter_mut().zip(bh_qvalues(&p)) {
        r.q_value = q;
    }
}

/// Benjamini-Hochberg adjusted p-values, in input order:
/// `q_(i) = min_{j >= i} M p_(j) / j`, capped at 1.
pub fn bh_qvalues(p: &[f64]) -> Vec<f64> {
    let total = p.len() as f64;
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut q = vec![0.0; p.len()];
    let mut running = f64::INFINITY;
    for (rank, &i) in order.iter().enumerate().rev() {
        let j = (rank + 1) as f64;
        let adjusted = if j == total { p[i] } else { total * p[i] / j };
        running = running.min(adjusted);
        // Rounding must not push q below p.
        q[i] = running.max(p[i]).min(1.0);
    }
    q
}

/// Number of label permutations behind the Spearman p-value.
pub const SPEARMAN_PERMUTATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spearman {
    pub rho: f64,
    pub p_value: f64,
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Rank correlation with a two-sided permutation p-value from
/// [`SPEARMAN_PERMUTATIONS`] shuffles of `y` seeded by `seed`.
pub fn spearman_rho(x: &[f64], y: &[f64], seed: u64) -> Result<Spearman, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewValues(3));
    }
    let rx = midranks(x);
    let mut ry = midranks(y);
    let constant = |r: &[f64]| r.iter().all(|v| *v == r[0]);
    if constant(&rx) || constant(&ry) {
        return Err(StatsError::ZeroVariance);
    }
    let rho = pearson(&rx, &ry);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..SPEARMAN_PERMUTATIONS {
        ry.shuffle(&mut rng);
        if pearson(&rx, &ry).abs() >= rho.abs() - 1e-12 {
            extreme += 1;
        }
    }
    Ok(Spearman {
        rho,
        p_value: (1 + extreme) as f64 / (SPEARMAN_PERMUTATIONS + 1) as f64,
    })
}
