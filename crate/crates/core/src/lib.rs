//! Cross-corpus evaluation harness for 3-class cognitive impairment
//! classification (HC / MCI / DEM) from precomputed speech and text
//! embeddings.

pub mod analysis;
pub mod corpus;
pub mod features;
pub mod matrix;
pub mod metrics;
pub mod pooling;
pub mod protocol;
pub mod report;
pub mod svm;
pub mod synth;
