//! Multi-label metrics and per-label threshold selection.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::matrix::Matrix;

/// Sigmoid scores and binary targets for `M` samples × `L` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    scores: Matrix,
    labels: Vec<u8>,
}

impl PredictionSet {
    pub fn new(scores: Matrix, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != scores.rows() * scores.cols() {
            return Err(CoreError::Shape(format!(
                "{} labels for a {}x{} score matrix",
                labels.len(),
                scores.rows(),
                scores.cols()
            )));
        }
        if scores.as_slice().iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(CoreError::InvalidConfig("scores must lie in [0, 1]".into()));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(CoreError::InvalidConfig("labels must be 0 or 1".into()));
        }
        Ok(Self { scores, labels })
    }

    /// Builds from per-sample rows.
    pub fn from_rows(scores: &[Vec<f64>], labels: &[Vec<u8>]) -> Result<Self> {
        let m = Matrix::from_rows(scores);
        let flat = labels.iter().flatten().copied().collect();
        Self::new(m, flat)
    }

    pub fn n_samples(&self) -> usize {
        self.scores.rows()
    }

    pub fn n_labels(&self) -> usize {
        self.scores.cols()
    }

    pub fn scores(&self) -> &Matrix {
        &self.scores
    }

    pub fn score_column(&self, label: usize) -> Vec<f64> {
        (0..self.n_samples()).map(|i| self.scores[(i, label)]).collect()
    }

    pub fn label_column(&self, label: usize) -> Vec<u8> {
        (0..self.n_samples())
            .map(|i| self.labels[i * self.n_labels() + label])
            .collect()
    }

    /// Rows reordered: row `i` of the result is row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let l = self.n_labels();
        let labels = perm
            .iter()
            .flat_map(|&i| self.labels[i * l..(i + 1) * l].iter().copied())
            .collect();
        Self {
            scores: self.scores.permute_rows(perm),
            labels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Counts {
    fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

/// A prediction is positive when `score >= threshold`.
pub fn binary_counts(scores: &[f64], labels: &[u8], threshold: f64) -> Counts {
    let mut c = Counts::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
    pub accuracy: f64,
}

/// Precision, recall and F1 are 0 when their denominators vanish.
pub fn f1_recall_precision_accuracy(c: Counts) -> ClassificationScores {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let accuracy = ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn_);
    ClassificationScores {
        f1,
        recall,
        precision,
        accuracy,
    }
}

/// Mann–Whitney AUROC from mid-ranks; `None` when a class is missing.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of 1-based mid-ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j + 2) as f64 / 2.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += mid_rank * pos_in_group as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// `{0, 1}` plus a point strictly inside every gap between consecutive
/// distinct scores.
pub fn threshold_candidates(scores: &[f64]) -> Vec<f64> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = vec![0.0, 1.0];
    for w in sorted.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        // Adjacent floats: the midpoint may round down onto the lower score.
        out.push(if mid > w[0] { mid } else { w[1] });
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Per label, the candidate threshold with the highest F1; ties go to the
/// smallest threshold.
pub fn select_thresholds(val: &PredictionSet) -> Vec<f64> {
    (0..val.n_labels())
        .map(|l| {
            let scores = val.score_column(l);
            let labels = val.label_column(l);
            let mut best = (f64::NEG_INFINITY, 0.0);
            for t in threshold_candidates(&scores) {
                let f1 = f1_recall_precision_accuracy(binary_counts(&scores, &labels, t)).f1;
                if f1 > best.0 {
                    best = (f1, t);
                }
            }
            best.1
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub threshold: f64,
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
    pub accuracy: f64,
    /// Absent for single-class columns.
    pub auroc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
    pub accuracy: f64,
    pub auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_label: Vec<LabelMetrics>,
    /// Unweighted mean over labels. AUROC averages only labels where it is defined.
    #[serde(rename = "macro")]
    pub macro_avg: AveragedMetrics,
    /// From counts pooled over labels; AUROC is not pooled.
    pub micro: AveragedMetrics,
    /// Labels whose AUROC was undefined.
    pub single_class_labels: Vec<usize>,
}

pub fn evaluate(test: &PredictionSet, thresholds: &[f64]) -> Result<MetricsReport> {
    if thresholds.len() != test.n_labels() {
        return Err(CoreError::Shape(format!(
            "{} thresholds for {} labels",
            thresholds.len(),
            test.n_labels()
        )));
    }
    let mut per_label = Vec::with_capacity(test.n_labels());
    let mut pooled = Counts::default();
    let mut single_class_labels = Vec::new();
    for (l, &t) in thresholds.iter().enumerate() {
        let scores = test.score_column(l);
        let labels = test.label_column(l);
        let counts = binary_counts(&scores, &labels, t);
        pooled.add(counts);
        let s = f1_recall_precision_accuracy(counts);
        let a = auroc(&scores, &labels);
        if a.is_none() {
            single_class_labels.push(l);
        }
        per_label.push(LabelMetrics {
            threshold: t,
            f1: s.f1,
            recall: s.recall,
            precision: s.precision,
            accuracy: s.accuracy,
            auroc: a,
        });
    }
    let n = per_label.len() as f64;
    let mean = |f: fn(&LabelMetrics) -> f64| per_label.iter().map(f).sum::<f64>() / n;
    let defined: Vec<f64> = per_label.iter().filter_map(|m| m.auroc).collect();
    let macro_auroc = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let macro_avg = AveragedMetrics {
        f1: mean(|m| m.f1),
        recall: mean(|m| m.recall),
        precision: mean(|m| m.precision),
        accuracy: mean(|m| m.accuracy),
        auroc: macro_auroc,
    };
    let pooled_scores = f1_recall_precision_accuracy(pooled);
    let micro = AveragedMetrics {
        f1: pooled_scores.f1,
        recall: pooled_scores.recall,
        precision: pooled_scores.precision,
        accuracy: pooled_scores.accuracy,
        auroc: None,
    };
    Ok(MetricsReport {
        per_label,
        macro_avg,
        micro,
        single_class_labels,
    })
}
