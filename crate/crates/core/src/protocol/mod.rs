//! Fold construction, nested grid search and the within-, cross- and
//! mixed-corpus evaluation protocols.

mod grid;
mod run;
mod split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, LabelKind};
use crate::features::FeatureError;
use crate::metrics::MetricsError;
use crate::pooling::PoolingKind;
use crate::svm::SvmError;

pub use grid::{layer_feature_set, FamilySets, HyperGrid, HyperPoint, DEFAULT_C, DEFAULT_GAMMA, W2V2_LAYERS};
pub use run::{
    evaluate_point, grid_search, run_cross, run_mixed, run_within, ExperimentResult, FoldResult, GridChoice,
    SessionPrediction,
};
pub use split::{make_split, make_split_sessions, FoldAssignment, SpeakerKey, SplitPlan};

/// Offset added to the outer seed (plus the fold index) for inner splits.
pub const INNER_SEED_OFFSET: u64 = 1000;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("class {class} has {speakers} speaker(s), fewer than the {k} folds")]
    InfeasibleSplit { class: u8, speakers: usize, k: usize },
    #[error("speaker {speaker:?} has sessions with different {label} labels")]
    InconsistentSpeakerLabel { speaker: String, label: LabelKind },
    #[error("missing {label} label on session(s) {sessions:?}")]
    MissingLabel { label: LabelKind, sessions: Vec<String> },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no feature set or layered sets for family {0:?}")]
    UnknownFamily(String),
    #[error("feature family {family:?} has no layer {layer}")]
    MissingLayer { family: String, layer: u32 },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("training {point}: {source}")]
    Training {
        point: String,
        #[source]
        source: SvmError,
    },
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Within,
    Cross,
    Mixed,
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "within" => Ok(Protocol::Within),
            "cross" => Ok(Protocol::Cross),
            "mixed" => Ok(Protocol::Mixed),
            other => Err(format!("unknown protocol {other:?} (within|cross|mixed)")),
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::Within => "within",
            Protocol::Cross => "cross",
            Protocol::Mixed => "mixed",
        })
    }
}

/// Everything that identifies one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub protocol: Protocol,
    /// For MIXED: the first corpus.
    pub train_corpus: String,
    /// For MIXED: the second corpus.
    pub test_corpus: String,
    pub test_id: String,
    pub feature_family: String,
    pub target_label: LabelKind,
    pub pooling: PoolingKind,
    pub k: usize,
    pub seed: u64,
}

impl ExperimentSpec {
    /// Spec with five folds, the cognitive target and the family's usual
    /// pooling (sum for text embeddings, mean otherwise).
    pub fn new(protocol: Protocol, train_corpus: &str, test_corpus: &str, test_id: &str, feature_family: &str, seed: u64) -> Self {
        Self {
            protocol,
            train_corpus: train_corpus.to_string(),
            test_corpus: test_corpus.to_string(),
            test_id: test_id.to_string(),
            feature_family: feature_family.to_string(),
            target_label: LabelKind::Cognitive,
            pooling: default_pooling(feature_family),
            k: 5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let same = self.train_corpus == self.test_corpus;
        match self.protocol {
            Protocol::Within if !same => Err(ProtocolError::Precondition(format!(
                "within-corpus protocol needs train == test corpus, got {:?} and {:?}",
                self.train_corpus, self.test_corpus
            ))),
            Protocol::Cross | Protocol::Mixed if same => Err(ProtocolError::Precondition(format!(
                "{} protocol needs two different corpora, got {:?} twice",
                self.protocol, self.train_corpus
            ))),
            _ if self.k < 2 => Err(ProtocolError::Precondition(format!("need at least 2 folds, got {}", self.k))),
            _ => Ok(()),
        }
    }
}

pub fn default_pooling(feature_family: &str) -> PoolingKind {
    if feature_family.eq_ignore_ascii_case("bert") {
        PoolingKind::Sum
    } else {
        PoolingKind::Mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_guards() {
        let s = ExperimentSpec::new(Protocol::Cross, "A", "A", "sVFT", "pad", 0);
        assert!(s.validate().is_err());
        let s = ExperimentSpec::new(Protocol::Within, "A", "B", "sVFT", "pad", 0);
        assert!(s.validate().is_err());
        let s = ExperimentSpec::new(Protocol::Mixed, "A", "B", "sVFT", "bert", 0);
        assert!(s.validate().is_ok());
        assert_eq!(s.pooling, PoolingKind::Sum);
        assert_eq!(ExperimentSpec::new(Protocol::Within, "A", "A", "BNT", "w2v2", 0).pooling, PoolingKind::Mean);
    }
}
