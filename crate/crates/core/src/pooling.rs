//! Collapsing frame-level matrices into one vector per session.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::FeatureMatrix;

/// Frame hop of the audio encoder, in seconds.
pub const FRAME_HOP_S: f64 = 0.02;

/// Allowed deviation between an extractor's frame count and
/// [`expected_frame_count`].
pub const FRAME_COUNT_TOLERANCE: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum PoolingError {
    #[error("cannot pool an empty matrix")]
    Empty,
    #[error("duration {0} s is too short for a single frame")]
    TooShort(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingKind {
    Mean,
    Sum,
}

impl std::str::FromStr for PoolingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(PoolingKind::Mean),
            "sum" => Ok(PoolingKind::Sum),
            other => Err(format!("unknown pooling {other:?} (mean|sum)")),
        }
    }
}

impl std::fmt::Display for PoolingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PoolingKind::Mean => "mean",
            PoolingKind::Sum => "sum",
        })
    }
}

/// Pools the rows of `matrix` into a single row.
pub fn pool(matrix: &FeatureMatrix, kind: PoolingKind) -> Result<FeatureMatrix, PoolingError> {
    let row = pool_vector(matrix, kind)?;
    Ok(FeatureMatrix::from_row(row).expect("pooled row is finite"))
}

/// Same as [`pool`], returning the bare vector.
pub fn pool_vector(matrix: &FeatureMatrix, kind: PoolingKind) -> Result<Vec<f64>, PoolingError> {
    let n = matrix.rows();
    if n == 0 {
        return Err(PoolingError::Empty);
    }
    if n == 1 {
        return Ok(matrix.row(0).to_vec());
    }
    let sums = pairwise_column_sum(matrix, 0, n);
    Ok(match kind {
        PoolingKind::Sum => sums,
        PoolingKind::Mean => sums.into_iter().map(|s| s / n as f64).collect(),
    })
}

// Below this many rows the sum is accumulated directly.
const PAIRWISE_BLOCK: usize = 32;

fn pairwise_column_sum(m: &FeatureMatrix, start: usize, end: usize) -> Vec<f64> {
    if end - start <= PAIRWISE_BLOCK {
        let mut acc = vec![0.0; m.dim()];
        for r in start..end {
            for (a, v) in acc.iter_mut().zip(m.row(r)) {
                *a += v;
            }
        }
        return acc;
    }
    let mid = start + (end - start) / 2;
    let mut left = pairwise_column_sum(m, start, mid);
    let right = pairwise_column_sum(m, mid, end);
    for (a, b) in left.iter_mut().zip(right) {
        *a += b;
    }
    left
}

/// Number of encoder frames for a clip of `duration_s` seconds:
/// `floor(duration_s / 0.02) - 1`.
pub fn expected_frame_count(duration_s: f64) -> Result<usize, PoolingError> {
    if !duration_s.is_finite() || duration_s <= FRAME_HOP_S {
        return Err(PoolingError::TooShort(duration_s));
    }
    // The quotient is nudged so that exact multiples of the hop (0.06 s, ...)
    // are not lost to the binary representation of 0.02.
    let hops = (duration_s / FRAME_HOP_S * (1.0 + 1e-12)).floor() as usize;
    Ok(hops - 1)
}

/// Whether an emitted frame count is consistent with the clip duration.
pub fn frame_count_plausible(duration_s: f64, frames: usize) -> Result<bool, PoolingError> {
    let expected = expected_frame_count(duration_s)?;
    Ok(frames.abs_diff(expected) <= FRAME_COUNT_TOLERANCE)
}
