use serde::{Deserialize, Serialize};

use super::SvmError;

/// Per-dimension z-score standardizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, SvmError> {
        if x.len() != self.dim() {
            return Err(SvmError::DimMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn transform_all(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SvmError> {
        xs.iter().map(|x| self.transform(x)).collect()
    }
}

/// Fits mean and population standard deviation per dimension. Dimensions
/// with (numerically) zero spread get a standard deviation of 1.
pub fn fit_standardizer(xs: &[Vec<f64>]) -> Result<Standardizer, SvmError> {
    if xs.len() < 2 {
        return Err(SvmError::TooFewSamples(xs.len()));
    }
    let dim = xs[0].len();
    if let Some(bad) = xs.iter().find(|x| x.len() != dim) {
        return Err(SvmError::DimMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    let n = xs.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in xs {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for x in xs {
        for ((acc, v), m) in var.iter_mut().zip(x).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let std = var
        .into_iter()
        .zip(&mean)
        .map(|(v, m)| {
            let s = (v / n).sqrt();
            if s <= 1e-12 * (1.0 + m.abs()) {
                1.0
            } else {
                s
            }
        })
        .collect();
    Ok(Standardizer { mean, std })
}
