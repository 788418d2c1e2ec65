use serde::{Deserialize, Serialize};

use super::SvmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
}

/// Kernel function and its parameter. `gamma` is only meaningful for RBF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelConfig {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelConfig {
    pub fn rbf(gamma: f64) -> Result<Self, SvmError> {
        if gamma > 0.0 && gamma.is_finite() {
            Ok(KernelConfig::Rbf { gamma })
        } else {
            Err(SvmError::InvalidParameter(format!("gamma must be positive, got {gamma}")))
        }
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            KernelConfig::Linear => KernelKind::Linear,
            KernelConfig::Rbf { .. } => KernelKind::Rbf,
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            KernelConfig::Linear => None,
            KernelConfig::Rbf { gamma } => Some(gamma),
        }
    }

    /// Kernel value without the dimension check.
    #[inline]
    pub(crate) fn apply(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelConfig::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelConfig::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

impl std::fmt::Display for KernelConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelConfig::Linear => f.write_str("linear"),
            KernelConfig::Rbf { gamma } => write!(f, "rbf(gamma={gamma:e})"),
        }
    }
}

/// `dot(a, b)` for LINEAR, `exp(-gamma * |a - b|^2)` for RBF.
pub fn kernel_eval(a: &[f64], b: &[f64], k: &KernelConfig) -> Result<f64, SvmError> {
    if a.len() != b.len() {
        return Err(SvmError::DimMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(k.apply(a, b))
}
