//! Confusion matrices and unweighted average recall.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::NUM_CLASSES;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{truth} ground-truth labels but {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("label {0} out of range")]
    LabelOutOfRange(u8),
    #[error("UAR is undefined: no class has ground-truth samples")]
    Empty,
}

/// 3x3 counts, rows are ground truth and columns are predictions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        Self { counts }
    }

    pub fn add(&mut self, truth: u8, pred: u8) -> Result<(), MetricsError> {
        for l in [truth, pred] {
            if l as usize >= NUM_CLASSES {
                return Err(MetricsError::LabelOutOfRange(l));
            }
        }
        self.counts[truth as usize][pred as usize] += 1;
        Ok(())
    }

    pub fn row_sums(&self) -> [u64; NUM_CLASSES] {
        self.counts.map(|r| r.iter().sum())
    }

    pub fn col_sums(&self) -> [u64; NUM_CLASSES] {
        std::array::from_fn(|j| self.counts.iter().map(|r| r[j]).sum())
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    /// Recall per class; `None` for classes without ground-truth samples.
    pub fn recalls(&self) -> [Option<f64>; NUM_CLASSES] {
        std::array::from_fn(|c| {
            let row: u64 = self.counts[c].iter().sum();
            (row > 0).then(|| self.counts[c][c] as f64 / row as f64)
        })
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum::<u64>() as f64 / total as f64)
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            counts: std::array::from_fn(|i| std::array::from_fn(|j| self.counts[j][i])),
        }
    }

    /// Rows of integers, right-aligned, one line per ground-truth class.
    pub fn to_grid_string(&self) -> String {
        let width = self
            .counts
            .iter()
            .flatten()
            .map(|v| v.to_string().len())
            .max()
            .unwrap_or(1);
        self.counts
            .iter()
            .map(|r| {
                r.iter()
                    .map(|v| format!("{v:>width$}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// `counts[t][p] = |{i : truth_i = t, pred_i = p}|`.
pub fn confusion(truth: &[u8], pred: &[u8]) -> Result<ConfusionMatrix, MetricsError> {
    if truth.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    let mut m = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(pred) {
        m.add(t, p)?;
    }
    Ok(m)
}

/// Mean recall over the classes that have ground-truth samples.
pub fn uar(m: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let recalls: Vec<f64> = m.recalls().into_iter().flatten().collect();
    if recalls.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Arithmetic mean and unbiased sample standard deviation. The deviation
/// is `None` for fewer than two values.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, Some(var.sqrt()))
}
