//! Evaluation statistics: accuracy with invalid handling, per-label F1,
//! Somers' D and Spearman's rank correlation.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("predictions ({preds}) and references ({golds}) differ in length")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("statistic needs at least {needed} items, got {got}")]
    TooFewItems { needed: usize, got: usize },
    #[error("undefined statistic: {0}")]
    Undefined(&'static str),
    #[error("non-finite value in sample")]
    NonFinite,
}

/// Fraction of predictions equal to their reference. `None` predictions are
/// invalid outputs and count as incorrect.
pub fn accuracy<L: PartialEq>(preds: &[Option<L>], golds: &[L]) -> Result<f64, StatsError> {
    if preds.len() != golds.len() {
        return Err(StatsError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(StatsError::TooFewItems { needed: 1, got: 0 });
    }
    let correct = preds
        .iter()
        .zip(golds)
        .filter(|(p, g)| p.as_ref() == Some(*g))
        .count();
    Ok(correct as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Number of references carrying the label.
    pub support: usize,
    /// Set when precision + recall = 0, in which case `f1` is 0 by convention.
    pub degenerate: bool,
}

/// One-vs-rest F1 for `label`. Invalid (`None`) predictions are negatives for
/// every label.
pub fn per_label_f1<L: PartialEq>(preds: &[Option<L>], golds: &[L], label: &L) -> Result<F1Score, StatsError> {
    if preds.len() != golds.len() {
        return Err(StatsError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (p, g) in preds.iter().zip(golds) {
        let predicted = p.as_ref() == Some(label);
        let actual = g == label;
        match (predicted, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let degenerate = precision + recall == 0.0;
    let f1 = if degenerate {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1Score {
        f1,
        precision,
        recall,
        support: tp + fn_,
        degenerate,
    })
}

/// One (reference, prediction) pair for correlation statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedItem {
    pub reference: f64,
    pub prediction: f64,
    /// The judge produced no usable output; the prediction is forced to 0.
    #[serde(default)]
    pub invalid: bool,
}

impl PairedItem {
    pub fn new(reference: f64, prediction: f64) -> Self {
        Self {
            reference,
            prediction,
            invalid: false,
        }
    }

    pub fn invalid(reference: f64) -> Self {
        Self {
            reference,
            prediction: 0.0,
            invalid: true,
        }
    }

    /// Prediction value used for pairing.
    pub fn effective_prediction(&self) -> f64 {
        if self.invalid {
            0.0
        } else {
            self.prediction
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub items: Vec<PairedItem>,
}

impl PairedSample {
    pub fn new(items: Vec<PairedItem>) -> Self {
        Self { items }
    }

    pub fn from_pairs(references: &[f64], predictions: &[f64]) -> Self {
        Self {
            items: references
                .iter()
                .zip(predictions)
                .map(|(&r, &p)| PairedItem::new(r, p))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn invalid_count(&self) -> usize {
        self.items.iter().filter(|i| i.invalid).count()
    }

    fn columns(&self) -> Result<(Vec<f64>, Vec<f64>), StatsError> {
        let refs: Vec<f64> = self.items.iter().map(|i| i.reference).collect();
        let preds: Vec<f64> = self.items.iter().map(PairedItem::effective_prediction).collect();
        if refs.iter().chain(&preds).any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        Ok((refs, preds))
    }
}

/// Which variable is treated as dependent in Somers' D.
///
/// `PredDependent` asks how well the prediction orders pairs that differ on
/// the reference, so its denominator counts pairs not tied on the reference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    #[default]
    PredDependent,
    RefDependent,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::PredDependent => "pred-dependent",
            Orientation::RefDependent => "ref-dependent",
        })
    }
}

impl FromStr for Orientation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pred-dependent" | "preddependent" | "pred" => Ok(Orientation::PredDependent),
            "ref-dependent" | "refdependent" | "ref" => Ok(Orientation::RefDependent),
            _ => Err(format!("unknown orientation {s:?}")),
        }
    }
}

/// Pair counts underlying Kendall-family statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub total: u64,
    /// Pairs tied on the reference (including joint ties).
    pub ref_ties: u64,
    /// Pairs tied on the prediction (including joint ties).
    pub pred_ties: u64,
    pub joint_ties: u64,
    pub discordant: u64,
}

impl PairCounts {
    pub fn concordant(&self) -> u64 {
        self.total + self.joint_ties - self.ref_ties - self.pred_ties - self.discordant
    }

    /// Concordant minus discordant pairs.
    pub fn net(&self) -> i64 {
        self.concordant() as i64 - self.discordant as i64
    }
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut ties = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            ties += run * (run - 1) / 2;
            run = 1;
        }
    }
    ties + run * (run - 1) / 2
}

/// Counts strict inversions while merge-sorting `values` ascending.
fn count_inversions(values: &mut [f64], buffer: &mut Vec<f64>) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_inversions(&mut values[..mid], buffer) + count_inversions(&mut values[mid..], buffer);
    buffer.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if values[j] < values[i] {
            swaps += (mid - i) as u64;
            buffer.push(values[j]);
            j += 1;
        } else {
            buffer.push(values[i]);
            i += 1;
        }
    }
    buffer.extend_from_slice(&values[i..mid]);
    buffer.extend_from_slice(&values[j..n]);
    values.copy_from_slice(buffer);
    swaps
}

/// Pair counts in `O(n log n)` (Knight's sort-and-merge algorithm).
pub fn pair_counts(refs: &[f64], preds: &[f64]) -> PairCounts {
    let n = refs.len() as u64;
    // `total_cmp` orders -0.0 before 0.0 while `==` ties them.
    let canon = |v: f64| if v == 0.0 { 0.0 } else { v };
    let mut pairs: Vec<(f64, f64)> = refs.iter().zip(preds).map(|(&r, &p)| (canon(r), canon(p))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut ref_ties = 0u64;
    let mut joint_ties = 0u64;
    let (mut ref_run, mut joint_run) = (1u64, 1u64);
    for w in pairs.windows(2) {
        if w[0].0 == w[1].0 {
            ref_run += 1;
            if w[0].1 == w[1].1 {
                joint_run += 1;
            } else {
                joint_ties += joint_run * (joint_run - 1) / 2;
                joint_run = 1;
            }
        } else {
            ref_ties += ref_run * (ref_run - 1) / 2;
            joint_ties += joint_run * (joint_run - 1) / 2;
            ref_run = 1;
            joint_run = 1;
        }
    }
    ref_ties += ref_run * (ref_run - 1) / 2;
    joint_ties += joint_run * (joint_run - 1) / 2;

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buffer = Vec::with_capacity(ys.len());
    let discordant = count_inversions(&mut ys, &mut buffer);
    let pred_ties = tied_pairs(&ys);

    PairCounts {
        total: n * n.saturating_sub(1) / 2,
        ref_ties,
        pred_ties,
        joint_ties,
        discordant,
    }
}

/// Somers' D between references and predictions.
///
/// Invalid items enter with prediction 0. Returns
/// [`StatsError::Undefined`] when the denominator is zero.
pub fn somers_d(sample: &PairedSample, orientation: Orientation) -> Result<f64, StatsError> {
    if sample.len() < 2 {
        return Err(StatsError::TooFewItems {
            needed: 2,
            got: sample.len(),
        });
    }
    let (refs, preds) = sample.columns()?;
    let counts = pair_counts(&refs, &preds);
    let denominator = match orientation {
        Orientation::PredDependent => counts.total - counts.ref_ties,
        Orientation::RefDependent => counts.total - counts.pred_ties,
    };
    if denominator == 0 {
        return Err(StatsError::Undefined(match orientation {
            Orientation::PredDependent => "all references tied",
            Orientation::RefDependent => "all predictions tied",
        }));
    }
    Ok(counts.net() as f64 / denominator as f64)
}

/// Average ranks (1-based), ties receive the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end (0-based) share rank mean((start+1)..=end)
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch {
            preds: ys.len(),
            golds: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Undefined("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of midranks.
pub fn spearman_rho(sample: &PairedSample) -> Result<f64, StatsError> {
    if sample.len() < 2 {
        return Err(StatsError::TooFewItems {
            needed: 2,
            got: sample.len(),
        });
    }
    let (refs, preds) = sample.columns()?;
    pearson(&midranks(&refs), &midranks(&preds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        let golds = ["Correct", "Incorrect"];
        assert_eq!(accuracy(&[Some("Correct"), Some("Incorrect")], &golds).unwrap(), 1.0);
        assert_eq!(accuracy(&[Some("Correct"), None], &golds).unwrap(), 0.5);
        assert!(matches!(
            accuracy(&[Some("Correct")], &golds),
            Err(StatsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn accuracy_ten_items_seven_matches() {
        let golds = [1, 1, 1, 0, 0, 0, 1, 0, 1, 0];
        let preds = [Some(1), Some(1), Some(0), Some(0), None, Some(0), Some(1), Some(0), Some(1), Some(1)];
        assert!((accuracy(&preds, &golds).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn f1_perfect_and_degenerate() {
        let golds = ["A", "B", "A"];
        let preds = [Some("A"), Some("B"), Some("A")];
        assert_eq!(per_label_f1(&preds, &golds, &"A").unwrap().f1, 1.0);
        assert_eq!(per_label_f1(&preds, &golds, &"B").unwrap().f1, 1.0);
        let absent = per_label_f1(&preds, &golds, &"C").unwrap();
        assert_eq!(absent.f1, 0.0);
        assert!(absent.degenerate);
    }

    #[test]
    fn f1_matches_confusion_matrix_oracle() {
        let golds = ["A", "A", "A", "B", "B", "C", "C", "C", "C"];
        let preds = [Some("A"), Some("B"), None, Some("B"), Some("A"), Some("C"), Some("C"), Some("A"), None];
        // Label A: tp=1, fp=2 (items 4, 7), fn=2 (items 1, 2) -> P=1/3, R=1/3, F1=1/3.
        let a = per_label_f1(&preds, &golds, &"A").unwrap();
        assert!((a.f1 - 1.0 / 3.0).abs() < 1e-12);
        // Label C: tp=2, fp=0, fn=2 -> P=1, R=0.5, F1=2/3.
        let c = per_label_f1(&preds, &golds, &"C").unwrap();
        assert!((c.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.support, 4);
    }

    #[test]
    fn somers_d_examples() {
        let s = PairedSample::from_pairs(&[0.0, 0.0, 1.0, 1.0], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(somers_d(&s, Orientation::PredDependent).unwrap(), 1.0);
        let s = PairedSample::from_pairs(&[0.0, 0.0, 1.0, 1.0], &[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(somers_d(&s, Orientation::PredDependent).unwrap(), -1.0);
        let s = PairedSample::from_pairs(&[0.0, 1.0], &[5.0, 5.0]);
        assert_eq!(somers_d(&s, Orientation::PredDependent).unwrap(), 0.0);
        assert!(matches!(
            somers_d(&s, Orientation::RefDependent),
            Err(StatsError::Undefined(_))
        ));
    }

    #[test]
    fn somers_d_all_references_tied_is_undefined() {
        let s = PairedSample::from_pairs(&[1.0, 1.0, 1.0], &[0.2, 0.5, 0.9]);
        assert_eq!(
            somers_d(&s, Orientation::PredDependent),
            Err(StatsError::Undefined("all references tied"))
        );
    }

    #[test]
    fn signed_zero_references_tie() {
        let s = PairedSample::from_pairs(&[-0.0, 0.0, 0.0, 1.0], &[5.0, 3.0, 4.0, 6.0]);
        let counts = pair_counts(&[-0.0, 0.0, 0.0, 1.0], &[5.0, 3.0, 4.0, 6.0]);
        assert_eq!(counts.ref_ties, 3);
        assert_eq!(counts.discordant, 0);
        assert_eq!(somers_d(&s, Orientation::PredDependent).unwrap(), 1.0);
        let counts = pair_counts(&[1.0, 2.0, 3.0], &[0.0, -0.0, 1.0]);
        assert_eq!(counts.pred_ties, 1);
        assert_eq!(counts.concordant(), 2);
    }

    #[test]
    fn heavy_ties_do_not_underflow() {
        // Every pair tied on both sides: ref_ties + pred_ties exceeds total.
        let counts = pair_counts(&[1.0; 5], &[2.0; 5]);
        assert_eq!((counts.total, counts.ref_ties, counts.pred_ties, counts.joint_ties), (10, 10, 10, 10));
        assert_eq!(counts.concordant(), 0);
        assert_eq!(counts.net(), 0);
    }

    #[test]
    fn invalid_items_pair_at_zero() {
        let s = PairedSample::new(vec![
            PairedItem::invalid(1.0),
            PairedItem::new(0.0, 0.5),
            PairedItem {
                reference: 1.0,
                prediction: 0.9,
                invalid: true,
            },
        ]);
        // Effective predictions [0, 0.5, 0]: both reference-1 items rank below the reference-0 item.
        assert_eq!(somers_d(&s, Orientation::PredDependent).unwrap(), -1.0);
        assert_eq!(s.invalid_count(), 2);
    }

    #[test]
    fn spearman_examples() {
        let s = PairedSample::from_pairs(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]);
        assert!((spearman_rho(&s).unwrap() - 1.0).abs() < 1e-15);
        let s = PairedSample::from_pairs(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]);
        assert!((spearman_rho(&s).unwrap() + 1.0).abs() < 1e-15);
        let s = PairedSample::from_pairs(&[1.0, 1.0], &[1.0, 2.0]);
        assert!(matches!(spearman_rho(&s), Err(StatsError::Undefined(_))));
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn orientation_parses() {
        assert_eq!("pred-dependent".parse::<Orientation>().unwrap(), Orientation::PredDependent);
        assert_eq!("ref-dependent".parse::<Orientation>().unwrap(), Orientation::RefDependent);
        assert!("sideways".parse::<Orientation>().is_err());
    }
}
