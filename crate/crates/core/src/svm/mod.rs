//! Kernel SVM trained from scratch: SMO for the binary dual, a one-vs-one
//! multiclass wrapper, linear and RBF kernels, z-score standardization.

mod kernel;
mod multiclass;
mod scaler;
mod smo;

use thiserror::Error;

pub use kernel::{kernel_eval, KernelConfig, KernelKind};
pub use multiclass::{resolve_vote, train_multiclass, train_multiclass_with, SvmMulticlassModel};
pub use scaler::{fit_standardizer, Standardizer};
pub use smo::{
    train_binary, train_binary_with, SmoConfig, SmoSolution, SvmBinaryModel, EQUALITY_TOLERANCE,
    FULL_CACHE_LIMIT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvmError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("{samples} samples but {labels} labels")]
    LengthMismatch { samples: usize, labels: usize },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("training data contains a single class")]
    SingleClass,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("SMO did not converge after {updates} pair updates (KKT violation {violation:e})")]
    NoConvergence { updates: u64, violation: f64 },
    #[error("trained model is infeasible: {0}")]
    Infeasible(String),
}
