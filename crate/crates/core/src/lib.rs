//! Benchmark-targeted pretraining data selection.
//!
//! The crate covers the whole selection workflow: documents and benchmark
//! examples are embedded elsewhere and ingested here, documents are ranked by
//! similarity against benchmark targets, the rank labels are distilled into a
//! cheap n-gram classifier that scores the full pool, and a token-share
//! threshold filters it. A separate [`scaling`] module fits loss and accuracy
//! scaling laws to training-run records and derives compute multipliers and
//! optimal filtering rates.

pub mod corpus;
pub mod decontam;
pub mod error;
pub mod hash;
pub mod pipeline;
pub mod ranker;
pub mod report;
pub mod scaling;
pub mod scorer;
pub mod selection;

pub use corpus::{
    BenchmarkExample, BenchmarkRecord, Document, EmbeddingStore, SampleManifest, Split,
    TokenCounter, WhitespaceCounter,
};
pub use error::{Error, Result};
pub use pipeline::{run_pipeline, PipelineConfig, RunManifest, Stage};
pub use ranker::{
    Aggregation, Granularity, Label, RankMatrix, RankMode, SelectionScore, TargetSampling,
    TargetSet, ValueKind,
};
pub use scaling::{LossLawFit, LossLawParams, RunRecord, SigmoidFit, SigmoidParams};
pub use scorer::{Hyperparams, NGramLinearClassifier, TrainingSet};
pub use selection::{FilterStats, ThresholdCalibration};
