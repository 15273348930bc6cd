use wivi_core::csi::ActivityLabel;

use crate::error::{CliError, Result};

/// Square count matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if n == 0 || counts.iter().any(|r| r.len() != n) {
            return Err(CliError::other("confusion matrix must be square and non-empty"));
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth][pred]
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|c| self.counts[c][c]).sum()
    }

    /// Classes with no test samples; their PA is reported as 0.
    pub fn empty_rows(&self) -> Vec<bool> {
        (0..self.classes()).map(|c| self.row_sum(c) == 0).collect()
    }
}

/// 9×9 matrix indexed by [`ActivityLabel::id`].
pub fn confusion(preds: &[ActivityLabel], labels: &[ActivityLabel]) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(CliError::other(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    if preds.is_empty() {
        return Err(CliError::other("no predictions to score"));
    }
    let n = ActivityLabel::COUNT;
    let mut counts = vec![vec![0u64; n]; n];
    for (p, t) in preds.iter().zip(labels) {
        counts[t.id() as usize][p.id() as usize] += 1;
    }
    ConfusionMatrix::from_counts(counts)
}

/// Per-class recall: diagonal over row sum (0 for empty rows).
pub fn product_accuracy(cm: &ConfusionMatrix) -> Result<Vec<f64>> {
    if cm.total() == 0 {
        return Err(CliError::other("empty confusion matrix"));
    }
    Ok((0..cm.classes())
        .map(|c| match cm.row_sum(c) {
            0 => 0.0,
            r => cm.get(c, c) as f64 / r as f64,
        })
        .collect())
}

pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(CliError::other("empty confusion matrix")),
        t => Ok(cm.trace() as f64 / t as f64),
    }
}
