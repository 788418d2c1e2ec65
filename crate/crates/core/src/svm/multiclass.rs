//! One-vs-one multiclass wrapper around the binary solver.

use serde::{Deserialize, Serialize};

use super::kernel::KernelConfig;
use super::scaler::{fit_standardizer, Standardizer};
use super::smo::{train_binary_with, SmoConfig, SvmBinaryModel};
use super::SvmError;
use crate::corpus::NUM_CLASSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmMulticlassModel {
    /// Pair models in (0,1), (0,2), (1,2) order, skipping absent classes.
    pub binary_models: Vec<SvmBinaryModel>,
    pub scaler: Standardizer,
    pub kernel: KernelConfig,
    pub c: f64,
    /// Classes seen during training, ascending.
    pub classes: Vec<u8>,
}

pub fn train_multiclass(
    x: &[Vec<f64>],
    y: &[u8],
    c: f64,
    kernel: KernelConfig,
) -> Result<SvmMulticlassModel, SvmError> {
    train_multiclass_with(x, y, c, kernel, &SmoConfig::default())
}

pub fn train_multiclass_with(
    x: &[Vec<f64>],
    y: &[u8],
    c: f64,
    kernel: KernelConfig,
    config: &SmoConfig,
) -> Result<SvmMulticlassModel, SvmError> {
    if x.len() != y.len() {
        return Err(SvmError::LengthMismatch {
            samples: x.len(),
            labels: y.len(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&l| l as usize >= NUM_CLASSES) {
        return Err(SvmError::InvalidParameter(format!("class label {bad} out of range")));
    }
    let mut classes: Vec<u8> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(SvmError::SingleClass);
    }
    let scaler = fit_standardizer(x)?;
    let z = scaler.transform_all(x)?;

    let mut binary_models = Vec::new();
    for (ai, &a) in classes.iter().enumerate() {
        for &b in &classes[ai + 1..] {
            let (xs, ys): (Vec<Vec<f64>>, Vec<i8>) = z
                .iter()
                .zip(y)
                .filter(|(_, &l)| l == a || l == b)
                .map(|(row, &l)| (row.clone(), if l == a { 1 } else { -1 }))
                .unzip();
            let mut model = train_binary_with(&xs, &ys, c, kernel, config)?.model;
            model.class_pair = Some((a, b));
            binary_models.push(model);
        }
    }
    Ok(SvmMulticlassModel {
        binary_models,
        scaler,
        kernel,
        c,
        classes,
    })
}

impl SvmMulticlassModel {
    /// Majority vote over pair models; see [`resolve_vote`] for ties.
    pub fn predict(&self, x: &[f64]) -> Result<u8, SvmError> {
        let z = self.scaler.transform(x)?;
        let mut votes = [0usize; NUM_CLASSES];
        let mut sums = [0.0f64; NUM_CLASSES];
        let mut present = [false; NUM_CLASSES];
        for &c in &self.classes {
            present[c as usize] = true;
        }
        for m in &self.binary_models {
            let (a, b) = m.class_pair.expect("pair model carries its classes");
            let d = m.decision_value(&z);
            if d > 0.0 {
                votes[a as usize] += 1;
            } else {
                votes[b as usize] += 1;
            }
            sums[a as usize] += d;
            sums[b as usize] -= d;
        }
        Ok(resolve_vote(&votes, &sums, &present))
    }

    pub fn predict_all(&self, xs: &[Vec<f64>]) -> Result<Vec<u8>, SvmError> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    pub fn dim(&self) -> usize {
        self.scaler.dim()
    }
}

/// Picks the class with the most votes. Among tied classes the largest sum
/// of signed decision values wins; a remaining tie goes to the smallest
/// class index. Classes not flagged in `present` never win.
pub fn resolve_vote(votes: &[usize; NUM_CLASSES], decision_sums: &[f64; NUM_CLASSES], present: &[bool; NUM_CLASSES]) -> u8 {
    let mut best: Option<usize> = None;
    for c in (0..NUM_CLASSES).filter(|&c| present[c]) {
        best = match best {
            None => Some(c),
            Some(b) if votes[c] > votes[b] => Some(c),
            Some(b) if votes[c] == votes[b] && decision_sums[c] > decision_sums[b] => Some(c),
            keep => keep,
        };
    }
    best.expect("at least one class present") as u8
}
