//! Fusion of a task-specific time-series anomaly detector with a language
//! model scorer.
//!
//! The detector's raw scores are range-scaled, passed through a learned
//! monotone map so their distribution matches the language model's
//! half-normal score profile, and then fused with the language-model scores
//! by a small conditional network trained on a pairwise loss whose per-slot
//! weights come from intra- and inter-patch distances.

pub mod alignment;
pub mod checkpoint;
pub mod collab;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod llm;
pub mod math;
pub mod optim;
pub mod patch;
pub mod scaling;
pub mod series;
pub mod theory;
pub mod tsadm;

pub use error::{Error, Result};
pub use patch::{patch_weights, LossWeights, PatchWeights};
pub use scaling::{normalize_scores, NormalizationConfig, ScoreRange};
pub use series::{ScoreKind, ScoreSeries, TimeSeriesWindow};
