//! Mid-level motion atoms and AND/OR motion phrases for recognizing events and
//! anomalies in crowd videos.
//!
//! The pipeline runs in stages:
//!
//! 1. [`ingest`]: per-frame HOG/HOF/MBHX/MBHY descriptors are quantized against
//!    per-channel k-means codebooks into L1-normalized segment histograms.
//! 2. [`similarity`]: a normalized chi-square distance per channel and the
//!    4-channel exponential similarity between segments.
//! 3. [`atoms`]: segments are clustered into motion atoms by alternating
//!    one-vs-rest classifier training and score-based reassignment.
//! 4. [`phrases`]: AND/OR compositions of atoms are mined greedily, ranked by
//!    representativeness and discriminativeness.
//! 5. [`encode`]: each video is max-pooled into a vector of atom and phrase
//!    responses.
//! 6. [`svm`]: linear ε-insensitive regression and hinge-loss classification.
//! 7. [`eval`]: ROC/AUC scoring against binary ground truth.
//!
//! [`pipeline`] ties the stages together behind the `crowd-motion` binary.

pub mod atoms;
pub mod encode;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod kmeans;
pub mod phrases;
pub mod pipeline;
pub mod seed;
pub mod similarity;
pub mod svm;

pub use error::{Error, Result};
