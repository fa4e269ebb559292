//! Scoring differential calls against a known design.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::diagnostics::{ClassRule, ProteinClass};
use crate::ingest::DesignTable;
use crate::stats::{Direction, TauResult};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("design has no class '{0}'")]
    UnknownClass(String),
    #[error("ROC needs at least one positive and one negative protein ({positives} and {negatives} scored)")]
    Degenerate { positives: usize, negatives: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Truth {
    Up,
    Down,
    Null,
}

impl Truth {
    pub fn as_str(&self) -> &'static str {
        match self {
            Truth::Up => "up",
            Truth::Down => "down",
            Truth::Null => "null",
        }
    }

    pub fn is_positive(&self) -> bool {
        *self != Truth::Null
    }
}

pub type GroundTruth = BTreeMap<String, Truth>;

/// Direction of every designed protein, comparing the case class with the
/// control class exactly.
pub fn design_to_truth(d: &DesignTable, case: &str, control: &str) -> Result<GroundTruth, EvalError> {
    let ci = d
        .class_index(case)
        .ok_or_else(|| EvalError::UnknownClass(case.to_string()))?;
    let ki = d
        .class_index(control)
        .ok_or_else(|| EvalError::UnknownClass(control.to_string()))?;
    Ok(d.rows()
        .map(|(acc, ab)| {
            let t = if ab[ci] > ab[ki] {
                Truth::Up
            } else if ab[ci] < ab[ki] {
                Truth::Down
            } else {
                Truth::Null
            };
            (acc.to_string(), t)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Proteins scoring at least this are called; the first point uses +inf.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// `1 - p` per protein: larger is more significant.
pub fn significance_scores(results: &[TauResult]) -> Vec<(String, f64)> {
    results
        .iter()
        .map(|r| (r.protein.clone(), 1.0 - r.p_value))
        .collect()
}

/// ROC of `scores` with up and down proteins as positives and null proteins as
/// negatives. Proteins outside `truth` are ignored. One point per distinct
/// score; the area is trapezoidal, so tied scores count one half.
pub fn roc(scores: &[(String, f64)], truth: &GroundTruth) -> Result<Roc, EvalError> {
    let mut labeled: Vec<(f64, bool)> = scores
        .iter()
        .filter_map(|(p, s)| truth.get(p).map(|t| (*s, t.is_positive())))
        .collect();
    let positives = labeled.iter().filter(|l| l.1).count();
    let negatives = labeled.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::Degenerate {
            positives,
            negatives,
        });
    }
    labeled.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp, mut auc) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < labeled.len() {
        let threshold = labeled[i].0;
        let (tp0, fp0) = (tp, fp);
        while i < labeled.len() && labeled[i].0 == threshold {
            if labeled[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        auc += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        });
    }
    Ok(Roc {
        points,
        auc: auc / (positives * negatives) as f64,
        positives,
        negatives,
    })
}

/// Called proteins at `q <= alpha`, counted by direction and protein class.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Confusion {
    pub counts: BTreeMap<(Direction, ProteinClass), usize>,
}

impl Confusion {
    pub fn get(&self, direction: Direction, class: ProteinClass) -> usize {
        self.counts.get(&(direction, class)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

pub fn confusion_at_fdr(results: &[TauResult], rule: &ClassRule, alpha: f64) -> Confusion {
    let mut c = Confusion::default();
    for r in results.iter().filter(|r| r.q_value <= alpha) {
        if r.direction == Direction::Flat {
            continue;
        }
        *c.counts
            .entry((r.direction, rule.classify(&r.protein)))
            .or_default() += 1;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{Level, Measure};

    fn truth(labels: &[(&str, Truth)]) -> GroundTruth {
        labels.iter().map(|(p, t)| (p.to_string(), *t)).collect()
    }

    fn scores(s: &[(&str, f64)]) -> Vec<(String, f64)> {
        s.iter().map(|(p, v)| (p.to_string(), *v)).collect()
    }

    #[test]
    fn truth_from_design() {
        let mut d = DesignTable::new(vec!["mix1".into(), "mix2".into()]);
        d.push("A", vec![2.0, 1.0]);
        d.push("B", vec![0.0, 0.5]);
        d.push("C", vec![3.0, 3.0]);
        let t = design_to_truth(&d, "mix1", "mix2").unwrap();
        assert_eq!(t["A"], Truth::Up);
        assert_eq!(t["B"], Truth::Down);
        assert_eq!(t["C"], Truth::Null);
        assert!(design_to_truth(&d, "mix3", "mix2").is_err());
    }

    #[test]
    fn separating_and_tied_scores() {
        let t = truth(&[("a", Truth::Up), ("b", Truth::Down), ("c", Truth::Null)]);
        let perfect = roc(&scores(&[("a", 0.9), ("b", 0.8), ("c", 0.1)]), &t).unwrap();
        assert_eq!(perfect.auc, 1.0);
        let tied = roc(&scores(&[("a", 0.5), ("b", 0.5), ("c", 0.5)]), &t).unwrap();
        assert_eq!(tied.auc, 0.5);
        let first = tied.points[0];
        let last = *tied.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr, last.fpr, last.tpr), (0.0, 0.0, 1.0, 1.0));
        assert!(roc(&scores(&[("a", 0.5)]), &t).is_err());
    }

    #[test]
    fn confusion_counts_by_class() {
        let mk = |p: &str, q: f64, d: Direction| TauResult {
            protein: p.into(),
            level: Level::Protein,
            measure: Measure::IonAbundance,
            k: 1,
            tau: 0.0,
            p_value: q,
            q_value: q,
            direction: d,
        };
        let results = vec![
            mk("UPS_1", 0.01, Direction::Up),
            mk("UPS_2", 0.2, Direction::Up),
            mk("YEAST_1", 0.03, Direction::Down),
        ];
        let rule = ClassRule::new(["UPS"]);
        let c = confusion_at_fdr(&results, &rule, 0.05);
        assert_eq!(c.get(Direction::Up, ProteinClass::Spike), 1);
        assert_eq!(c.get(Direction::Down, ProteinClass::Base), 1);
        assert_eq!(confusion_at_fdr(&results, &rule, 0.001).total(), 0);
        assert_eq!(confusion_at_fdr(&results, &rule, 1.0).total(), 3);
    }
}
