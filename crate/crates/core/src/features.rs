//! Lazy loading of pooled session vectors.
//!
//! Feature files are read the first time a session's vector is requested
//! and the pooled result is memoized. Nothing is read up front, so a
//! computation only ever touches the files of the sessions it uses.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::corpus::SessionRecord;
use crate::matrix::{read_feature_matrix, MatrixError};
use crate::pooling::{pool_vector, PoolingError, PoolingKind};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("session {session:?} has no feature set {feature_set:?}")]
    MissingSet { session: String, feature_set: String },
    #[error("session {session:?}: {source}")]
    Matrix {
        session: String,
        #[source]
        source: MatrixError,
    },
    #[error("session {session:?}: {source}")]
    Pooling {
        session: String,
        #[source]
        source: PoolingError,
    },
    #[error("feature set {feature_set:?}: session {session:?} has dim {found}, expected {expected}")]
    DimMismatch {
        feature_set: String,
        session: String,
        expected: usize,
        found: usize,
    },
}

type CacheKey = (PathBuf, PoolingKind);

/// Thread-safe memo of pooled vectors keyed by file and pooling kind.
#[derive(Debug, Default)]
pub struct FeatureStore {
    cache: Mutex<HashMap<CacheKey, Arc<Vec<f64>>>>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pooled(
        &self,
        session: &SessionRecord,
        feature_set: &str,
        pooling: PoolingKind,
    ) -> Result<Arc<Vec<f64>>, FeatureError> {
        let path = session
            .features
            .get(feature_set)
            .ok_or_else(|| FeatureError::MissingSet {
                session: session.session_id.clone(),
                feature_set: feature_set.to_string(),
            })?;
        let key = (path.clone(), pooling);
        if let Some(v) = self.cache.lock().expect("feature cache poisoned").get(&key) {
            return Ok(Arc::clone(v));
        }
        let matrix = read_feature_matrix(path).map_err(|source| FeatureError::Matrix {
            session: session.session_id.clone(),
            source,
        })?;
        let pooled = pool_vector(&matrix, pooling).map_err(|source| FeatureError::Pooling {
            session: session.session_id.clone(),
            source,
        })?;
        let pooled = Arc::new(pooled);
        self.cache
            .lock()
            .expect("feature cache poisoned")
            .insert(key, Arc::clone(&pooled));
        Ok(pooled)
    }

    /// Pooled vectors for `sessions`, in order, checked for a common dim.
    pub fn design_matrix(
        &self,
        sessions: &[&SessionRecord],
        feature_set: &str,
        pooling: PoolingKind,
    ) -> Result<Vec<Vec<f64>>, FeatureError> {
        let mut rows = Vec::with_capacity(sessions.len());
        let mut dim = None;
        for s in sessions {
            let v = self.pooled(s, feature_set, pooling)?;
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(FeatureError::DimMismatch {
                        feature_set: feature_set.to_string(),
                        session: s.session_id.clone(),
                        expected: d,
                        found: v.len(),
                    })
                }
                Some(_) => {}
            }
            rows.push(v.as_ref().clone());
        }
        Ok(rows)
    }

    pub fn cached_len(&self) -> usize {
        self.cache.lock().expect("feature cache poisoned").len()
    }
}
