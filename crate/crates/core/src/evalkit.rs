//! Splits, thresholds, classification metrics, ROC/PR curves, grid search.
//!
//! Conventions: an example is predicted `threat` iff `score > threshold`;
//! tied pairs count one half in the AUC; precision, recall, FPR and FNR with
//! a zero denominator are 0.

use std::fmt::{Display, Write as _};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::Label;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("too few examples")]
    TooFewExamples,
    #[error("invalid split ratios: {0}")]
    BadRatios(String),
    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("no examples to evaluate")]
    Empty,
    #[error("AUC undefined (need both classes)")]
    SingleClass,
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("every grid cell failed")]
    AllCellsFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

/// Seeded Fisher-Yates shuffle of `0..n`, then contiguous train/val/test
/// slices. Validation and test get `floor(n * ratio)`; train takes the rest.
pub fn split_dataset(n: usize, ratios: [f64; 3], seed: u64) -> Result<Split, EvalError> {
    if ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(EvalError::BadRatios(format!("{ratios:?} must be positive")));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(EvalError::BadRatios(format!("{ratios:?} sum to {total}")));
    }
    if n < 3 {
        return Err(EvalError::TooFewExamples);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let portion = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
    let n_val = portion(ratios[1]);
    let n_test = portion(ratios[2]);
    let n_train = n - n_val - n_test;
    Ok(Split {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
        seed,
        ratios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `2tp / (2tp + fp + fn)`, exact in its integer inputs.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

fn check_lengths(scores: &[f64], labels: &[Label]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    Ok(())
}

pub fn confusion(scores: &[f64], labels: &[Label], threshold: f64) -> Result<ConfusionCounts, EvalError> {
    check_lengths(scores, labels)?;
    let mut c = ConfusionCounts::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s > threshold, l.is_threat()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub auc: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(counts: &ConfusionCounts, auc: f64) -> Result<MetricsReport, EvalError> {
    let total = counts.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MetricsReport {
        accuracy: ratio(counts.tp + counts.tn, total),
        precision,
        recall,
        f1,
        fpr: ratio(counts.fp, counts.fp + counts.tn),
        fnr: ratio(counts.fn_, counts.fn_ + counts.tp),
        auc,
    })
}

fn partition(scores: &[f64], labels: &[Label]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    check_lengths(scores, labels)?;
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (&s, &l) in scores.iter().zip(labels) {
        if l.is_threat() {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(EvalError::SingleClass);
    }
    Ok((pos, neg))
}

/// Mann-Whitney statistic: fraction of (threat, legit) pairs where the
/// threat scores higher, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64, EvalError> {
    let (pos, mut neg) = partition(scores, labels)?;
    neg.sort_by(f64::total_cmp);
    // twice the pair count, kept integral so the result is exact
    let mut doubled: u128 = 0;
    for p in &pos {
        let below = neg.partition_point(|n| n < p);
        let not_above = neg.partition_point(|n| n <= p);
        doubled += 2 * below as u128 + (not_above - below) as u128;
    }
    let pairs = pos.len() as u128 * neg.len() as u128;
    Ok(doubled as f64 / (2 * pairs) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Roc,
    Pr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    pub threshold: f64,
}

/// One point per threshold: `+inf`, every distinct score in descending order,
/// then `-inf`. ROC points are `(fpr, tpr)`; PR points are
/// `(recall, precision)`.
pub fn curve_points(scores: &[f64], labels: &[Label], kind: CurveKind) -> Result<Vec<CurvePoint>, EvalError> {
    partition(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let n_pos = labels.iter().filter(|l| l.is_threat()).count();
    let n_neg = labels.len() - n_pos;

    let point = |tp: usize, fp: usize, threshold: f64| {
        let (x, y) = match kind {
            CurveKind::Roc => (ratio(fp, n_neg), ratio(tp, n_pos)),
            CurveKind::Pr => (ratio(tp, n_pos), ratio(tp, tp + fp)),
        };
        CurvePoint { x, y, threshold }
    };

    let mut points = vec![point(0, 0, f64::INFINITY)];
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        // examples strictly above t are already counted
        points.push(point(tp, fp, t));
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]].is_threat() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
    }
    points.push(point(tp, fp, f64::NEG_INFINITY));
    Ok(points)
}

/// Trapezoidal area under a point sequence ordered by `x`.
pub fn trapezoid_area(points: &[CurvePoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].x - w[0].x) * (w[0].y + w[1].y) * 0.5)
        .sum()
}

/// Threshold maximizing F1 on a validation set. Candidates are `-inf`, the
/// midpoints between consecutive distinct scores, and `+inf`; ties resolve to
/// the smallest candidate.
pub fn select_threshold(scores: &[f64], labels: &[Label]) -> Result<f64, EvalError> {
    partition(scores, labels)?;
    let mut distinct = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut candidates = vec![f64::NEG_INFINITY];
    candidates.extend(distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.push(f64::INFINITY);

    let mut best = (f64::NEG_INFINITY, -1.0);
    for t in candidates {
        let f1 = confusion(scores, labels, t)?.f1();
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Maximize,
    Minimize,
}

impl Objective {
    fn better(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Objective::Maximize => candidate > incumbent,
            Objective::Minimize => candidate < incumbent,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow<T> {
    pub params: Vec<(String, T)>,
    /// `Err` holds the failure message of a cell that was skipped.
    pub objective: Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult<T> {
    pub best: Vec<(String, T)>,
    pub best_objective: f64,
    pub table: Vec<GridRow<T>>,
}

impl<T: Display> GridResult<T> {
    /// One column per parameter plus `objective`; failed cells leave it blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(first) = self.table.first() {
            for (name, _) in &first.params {
                out.push_str(name);
                out.push(',');
            }
        }
        out.push_str("objective\n");
        for row in &self.table {
            for (_, v) in &row.params {
                let _ = write!(out, "{v},");
            }
            if let Ok(v) = row.objective {
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Exhaustive Cartesian search. Cells are visited with the first parameter
/// varying slowest; the first cell reaching the best objective wins, which
/// breaks ties lexicographically by parameter order then value order.
/// Failing cells (including NaN objectives) are recorded and skipped.
pub fn grid_search<T, E, F>(
    grid: &[(String, Vec<T>)],
    objective: Objective,
    mut eval: F,
) -> Result<GridResult<T>, EvalError>
where
    T: Clone,
    E: Display,
    F: FnMut(&[(String, T)]) -> Result<f64, E>,
{
    if grid.is_empty() || grid.iter().any(|(_, values)| values.is_empty()) {
        return Err(EvalError::EmptyGrid);
    }
    let mut cursor = vec![0usize; grid.len()];
    let mut table = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    loop {
        let params: Vec<(String, T)> = grid
            .iter()
            .zip(&cursor)
            .map(|((name, values), &i)| (name.clone(), values[i].clone()))
            .collect();
        let outcome = match eval(&params) {
            Ok(v) if v.is_nan() => Err("objective is NaN".to_string()),
            Ok(v) => Ok(v),
            Err(e) => Err(e.to_string()),
        };
        if let Ok(v) = outcome {
            if best.is_none_or(|(_, b)| objective.better(v, b)) {
                best = Some((table.len(), v));
            }
        }
        table.push(GridRow {
            params,
            objective: outcome,
        });

        // odometer increment, last parameter fastest
        let mut k = grid.len();
        loop {
            if k == 0 {
                let (idx, value) = best.ok_or(EvalError::AllCellsFailed)?;
                return Ok(GridResult {
                    best: table[idx].params.clone(),
                    best_objective: value,
                    table,
                });
            }
            k -= 1;
            cursor[k] += 1;
            if cursor[k] < grid[k].1.len() {
                break;
            }
            cursor[k] = 0;
        }
    }
}
