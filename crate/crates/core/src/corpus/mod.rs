//! Documents, benchmark examples, embedding sidecars and pool sampling.

mod benchmark;
mod document;
mod embedding;
mod sample;

pub use benchmark::{
    read_benchmarks, render_benchmark, render_fields, BenchmarkExample, BenchmarkRecord, Split,
};
pub use document::Document;
pub use document::{
    ingest_documents, read_documents, write_documents, DocumentReader, IngestOptions, TokenCounter,
    WhitespaceCounter,
};
pub use embedding::{EmbeddingStore, EMBEDDING_MAGIC};
pub use sample::{sample_pool, sample_pool_excluding, Reservoir, SampleManifest};
