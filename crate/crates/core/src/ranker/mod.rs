//! Similarity ranking of sampled documents against benchmark targets.
//!
//! Every target ranks all sampled documents by cosine similarity (1 = most
//! similar, ties broken by ascending document id). A document's score
//! aggregates a value function of its ranks across targets; the top fraction
//! by score becomes the positive class for the n-gram scorer.

mod aggregate;
mod diagnostics;
mod rank;
mod targets;

pub use aggregate::{
    aggregate_scores, label_top_fraction, positive_count, value_function, Aggregation, Attribution,
    Label, ScoreRecord, SelectionScore, ValueKind,
};
pub use diagnostics::{selection_diagnostics, AttributionShare, DiagnosticsReport, HistogramBin};
pub use rank::{rank_documents, RankMatrix, RankMode, RankOptions, TargetRef};
pub use targets::{build_targets, Granularity, Target, TargetSampling, TargetSet};
