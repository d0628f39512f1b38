//! Per-attribute diversity evaluation for text-to-image models.
//!
//! Embedding sets are scored with the Vendi Score, human side-by-side
//! ratings are aggregated and tested for agreement, models are ranked with
//! exact sign tests or Wilcoxon signed-rank tests, and autoraters are
//! checked against human verdicts. [`synth`] builds corpora with planted
//! answers for end-to-end checks.

pub mod annotations;
pub mod autorater;
pub mod domain;
pub mod embed_io;
pub mod json;
pub mod linalg;
pub mod metric_eval;
pub mod ranking;
pub mod stats;
pub mod synth;
pub mod vendi;

pub use annotations::{AggregatedComparison, RatingRecord, TemplateVariant, Verdict};
pub use domain::{ConceptAttribute, ModelId, RunConfig, SetRef};
pub use embed_io::{ConditioningSpec, EmbeddingSet};
pub use ranking::{ComparisonMatrix, WinRateMatrix};
pub use stats::Outcome;
pub use vendi::ScoreRecord;
