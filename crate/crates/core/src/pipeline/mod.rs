//! End-to-end selection runs driven by one TOML config.
//!
//! Stages run in a fixed order and communicate through files in the run
//! root. Each stage writes a [`RunManifest`] recording the resolved config,
//! seeds and the digests of what it read and wrote; a stage's input digests
//! match the output digests of the stage that produced them.

mod config;
mod manifest;

use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use config::{
    derive_seed, env_key, CalibrateSection, DecontamSection, IngestSection, InputsSection,
    PipelineConfig, RankSection, RunSection, SampleSection, ScorerSection, Stage, TargetsSection,
    ENV_PREFIX,
};
pub use manifest::{
    display_path, sha256_file, verify_chain, FileDigest, RunManifest, TOOL_VERSION,
};

use crate::corpus::{
    read_benchmarks, read_documents, render_benchmark, sample_pool, write_documents,
    BenchmarkExample, Document, EmbeddingStore, IngestOptions, SampleManifest, WhitespaceCounter,
};
use crate::decontam::{build_index, decontaminate_corpus};
use crate::error::{Error, Result};
use crate::ranker::{
    aggregate_scores, build_targets, label_top_fraction, rank_documents, selection_diagnostics,
    Aggregation, Label, RankOptions, ScoreRecord, TargetSet,
};
use crate::report::{read_json, write_diagnostics, write_json};
use crate::scorer::{train, train_parallel, LabeledText, NGramLinearClassifier, TrainingSet};
use crate::selection::{calibrate_on_holdout, filter_pool, ScoredDoc, ThresholdCalibration};

/// Artifact file names inside the run root.
pub mod artifacts {
    pub const CORPUS: &str = "corpus.jsonl";
    pub const BENCHMARKS: &str = "benchmarks.jsonl";
    pub const SAMPLE: &str = "sample.json";
    pub const TARGETS: &str = "targets.json";
    pub const SCORES: &str = "scores.jsonl";
    pub const DIAGNOSTICS: &str = "diagnostics.json";
    pub const MODEL: &str = "model.bin";
    pub const TRAIN_REPORT: &str = "train_report.json";
    pub const POOL_SCORES: &str = "pool_scores.jsonl";
    pub const CALIBRATION: &str = "calibration.json";
    pub const FILTERED: &str = "filtered.jsonl";
    pub const FILTER_STATS: &str = "filter_stats.json";
    pub const DECONTAMINATED: &str = "decontaminated.jsonl";
    pub const DECONTAM_REPORT: &str = "decontam_report.json";
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::file(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::file(path, e))?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_documents(BufWriter::new(file), docs)
}

/// Scores every document with the classifier, in corpus order.
pub fn score_corpus(model: &NGramLinearClassifier, docs: &[Document]) -> Vec<ScoredDoc> {
    docs.par_iter()
        .map(|d| ScoredDoc {
            id: d.id.clone(),
            score: model.predict(&d.text),
            token_count: d.token_count,
        })
        .collect()
}

/// Pairs each labeled sample document with its text, in label-file order.
pub fn labeled_texts(labels: &[ScoreRecord], docs: &[Document]) -> Result<Vec<LabeledText>> {
    let text: HashMap<&str, &str> = docs
        .iter()
        .map(|d| (d.id.as_str(), d.text.as_str()))
        .collect();
    labels
        .iter()
        .map(|r| {
            let label = r
                .label
                .ok_or_else(|| Error::invalid(format!("score record {:?} has no label", r.id)))?;
            let t = text
                .get(r.id.as_str())
                .ok_or_else(|| Error::invalid(format!("labeled id {:?} not in corpus", r.id)))?;
            Ok(LabeledText {
                text: t.to_string(),
                positive: label == Label::Positive,
            })
        })
        .collect()
}

/// Result of a pipeline run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineOutcome {
    pub stages: Vec<Stage>,
    pub manifests: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    root: PathBuf,
    base: PathBuf,
}

impl Ctx<'_> {
    fn out(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn manifest(&self, stage: Stage) -> RunManifest {
        RunManifest::new(stage.name(), self.cfg.to_json())
    }

    fn input(&self, m: &mut RunManifest, path: &Path) -> Result<()> {
        let root = if path.starts_with(&self.root) {
            &self.root
        } else {
            &self.base
        };
        m.input(path, root)?;
        Ok(())
    }

    fn external(&self, p: &str) -> PathBuf {
        self.cfg.resolve_path(p)
    }
}

/// Runs the configured stages in order. A failing stage stops the run with
/// [`Error::Stage`]; manifests of the stages before it stay on disk.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let root = cfg.output_dir();
    let manifest_dir = cfg.manifest_dir();
    for stage in &cfg.run.stages {
        for dep in stage.dependencies() {
            let planned = cfg.run.stages.contains(dep);
            let done = manifest_dir.join(format!("{}.json", dep.name())).is_file();
            if !planned && !done {
                return Err(Error::invalid(format!(
                    "stage {} needs {}, which is neither configured nor already run",
                    stage.name(),
                    dep.name()
                )));
            }
        }
    }
    fs::create_dir_all(&root).map_err(|e| Error::file(&root, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let ctx = Ctx {
        cfg,
        base: cfg.base_dir.clone(),
        root,
    };

    let mut outcome = PipelineOutcome::default();
    for &stage in &cfg.run.stages {
        let started = Instant::now();
        let mut m = ctx.manifest(stage);
        let result = pool.install(|| {
            m.workers = rayon::current_num_threads();
            run_stage(&ctx, stage, &mut m)
        });
        if let Err(source) = result {
            let inputs = m
                .inputs
                .iter()
                .map(|d| format!("{}@sha256:{}", d.path, d.sha256))
                .collect();
            return Err(Error::Stage {
                stage: stage.name().to_string(),
                inputs,
                source: Box::new(source),
            });
        }
        let path = m.write(&manifest_dir, stage.name(), started.elapsed().as_secs_f64())?;
        outcome
            .warnings
            .extend(m.warnings.iter().map(|w| format!("{}: {w}", stage.name())));
        outcome.stages.push(stage);
        outcome.manifests.push(path);
    }
    Ok(outcome)
}

fn run_stage(ctx: &Ctx, stage: Stage, m: &mut RunManifest) -> Result<()> {
    match stage {
        Stage::Ingest => ingest(ctx, m),
        Stage::Sample => sample(ctx, m),
        Stage::BuildTargets => targets(ctx, m),
        Stage::Rank => rank(ctx, m),
        Stage::Diagnostics => diagnostics(ctx, m),
        Stage::TrainScorer => train_scorer(ctx, m),
        Stage::Score => score(ctx, m),
        Stage::Calibrate => calibrate(ctx, m),
        Stage::Filter => filter(ctx, m),
        Stage::Decontam => decontam(ctx, m),
    }
}

fn load_corpus(ctx: &Ctx, m: &mut RunManifest) -> Result<Vec<Document>> {
    let path = ctx.out(artifacts::CORPUS);
    ctx.input(m, &path)?;
    read_documents(&path, IngestOptions::default())
}

fn load_benchmarks(ctx: &Ctx, m: &mut RunManifest) -> Result<Vec<BenchmarkExample>> {
    let path = ctx.out(artifacts::BENCHMARKS);
    ctx.input(m, &path)?;
    read_jsonl(&path)
}

fn load_sample(ctx: &Ctx, m: &mut RunManifest) -> Result<SampleManifest> {
    let path = ctx.out(artifacts::SAMPLE);
    ctx.input(m, &path)?;
    read_json(&path)
}

fn ingest(ctx: &Ctx, m: &mut RunManifest) -> Result<()> {
    let docs_path = ctx.external(&ctx.cfg.inputs.documents);
    let bench_path = ctx.external(&ctx.cfg.inputs.benchmarks);
    ctx.input(m, &docs_path)?;
    ctx.input(m, &bench_path)?;
    let opts = IngestOptions {
        recount: ctx.cfg.ingest.recount,
        ..Default::default()
    };
    let docs = read_documents(&docs_path, opts)?;
    let benchmarks: Vec<BenchmarkExample> = read_benchmarks(&bench_path)?
        .iter()
        .map(render_benchmark)
        .collect::<Result<_>>()?;
    if docs.is_empty() {
        m.warn("document file is empty");
    }
    let corpus = ctx.out(artifacts::CORPUS);
    let bench = ctx.out(artifacts::BENCHMARKS);
    write_corpus(&corpus, &docs)?;
    write_jsonl(&bench, &benchmarks)?;
    m.output(&corpus, &ctx.root)?.output(&bench, &ctx.root)?;
    m.stats = serde_json::json!({
        "documents": docs.len(),
        "tokens": docs.iter().map(|d| d.token_count).sum::<u64>(),
        "benchmark_examples": benchmarks.len(),
    });
    Ok(())
}

fn sample(ctx: &Ctx, m: &mut RunManifest) -> Result<()> {
    let docs = load_corpus(ctx, m)?;
    let seed = ctx.cfg.sample.seed.expect("materialized");
    m.seed("sample", seed);
    let manifest = sample_pool(docs.into_iter().map(Ok), ctx.cfg.sample.size, seed)?;
    let out = ctx.out(artifacts::SAMPLE);
    write_json(&manifest, &out)?;
    m.output(&out, &ctx.root)?;
    m.stats = serde_json::json!({
        "pool_size": manifest.pool_size,
        "sample_size": manifest.sample_size,
    });
    Ok(())
}

fn targets(ctx: &Ctx, m: &mut RunManifest) -> Result<()> {
    let t = &ctx.cfg.targets;
    let examples: Vec<BenchmarkExample> = load_benchmarks(ctx, m)?
        .into_iter()
        .filter(|e| t.splits.contains(&e.split))
        .collect();
    let emb_path = ctx.external(&ctx.cfg.inputs.benchmark_embeddings);
    ctx.input(m, &emb_path)?;
    let store = EmbeddingStore::load(&emb_path)?;
    let seed = t.seed.expect("materialized");
    m.seed("build-targets", seed);
    let set = build_targets(&examples, &store, t.granularity, t.sampling, seed)?;
    let out = ctx.out(artifacts::TARGETS);
    write_json(&set, &out)?;
    m.output(&out, &ctx.root)?;
    m.stats = serde_json::json!({ "examples": examples.len(), "targets": set.len() });
    Ok(())
}

fn rank(ctx: &Ctx, m: &mut RunManifest) -> Result<()> {
    let r = &ctx.cfg.rank;
    let sample = load_sample(ctx, m)?;
    let targets_path = ctx.out(artifacts::TARGETS);
    ctx.input(m, &targets_path)?;
    let targets: TargetSet = read_json(&targets_path)?;
    let emb_path = ctx.external(&ctx.cfg.inputs.document_embeddings);
    ctx.input(m, &emb_path)?;
    let store = EmbeddingStore::load_normalized(&emb_path)?.subset(&sample.sampled_ids)?;
    let opts = RankOptions {
        mode: r.mode,
        block_size: r.block_size,
    };
    let ranks = rank_documents(&store, &targets, &opts)?;
    let scores = aggregate_scores(&ranks, r.value, r.aggregation);
    let labels: HashMap<String, Label> = label_top_fraction(&scores, r.label_fraction)?
        .into_iter()
        .collect();
    let records: Vec<ScoreRecord> = scores
        .iter()
        .map(|s| ScoreRecord::new(s, labels.get(&s.doc_id).copied()))
        .collect();
    let out = ctx.out(artifacts::SCORES);
    write_jsonl(&out, &records)?;
    m.output(&out, &ctx.root)?;
    let positives = labels.values().filter(|l| **l == Label::Positive).count();
    m.stats = serde_json::json!({ "documents": records.len(), "positives": positives });
    Ok(())
}

fn diagnostics(ctx: &Ctx, m: &mut RunManifest) -> Result<()> {
    let path = ctx.out(artifacts::SCORES);
    ctx.input(m, &path)?;
    let records: Vec<ScoreRecord> = read_jsonl(&path)?;
    if ctx.cfg.rank.aggregation == Aggregation::Mean {
        m.warn("mean aggregation carries no attribution; diagnostics skipped");
        return Ok(());
    }
    let scores: Vec<_> = records
        .iter()
        .map(ScoreRecord::to_selection_score)
        .collect();
    let report = selection_diagnostics(&scores, ctx.cfg.rank.label_fraction)?;
    let out = ctx.out(artifacts::DIAGNOSTICS);
    write_json(&report, &out)?;
    m.output(&out, &ctx.root)?;
    for csv in write_diagnostics(&report, &ctx.root)? {
        m.output(&csv, &ctx.root)?;
    }
    Ok(())
}

fn train_scorer(ctx: &Ctx, m: &mut RunManifest) -> Result<()> {
    let s = &ctx.cfg.scorer;
    let docs = load_corpus(ctx, m)?;
    let path = ctx.out(artifacts::SCORES);
    ctx.input(m, &path)?;
    let records: Vec<ScoreRecord> = read_jsonl(&path)?;
    let ts = TrainingSet {
        examples: labeled_texts(&records, &docs)?,
        balancing: s.balancing,
        holdout_fraction: s.holdout_fraction,
    };
    let seed = s.seed.expect("materialized");
    m.seed("train-scorer", seed);
    let (model, report) = if s.threads > 1 {
        m.warn("parallel scorer training is not reproducible");
        train_parallel(&ts, &s.hyperparams, seed, s.threads)?
    } else {
        train(&ts, &s.hyperparams, seed)?
    };
    let model_path = ctx.out(artifacts::MODEL);
    let report_path = ctx.out(artifacts::TRAIN_REPORT);
    model.save(&model_path)?;
    write_json(&report, &report_path)?;
    m.output(&model_path, &ctx.root)?
        .output(&report_path, &ctx.root)?;
    m.stats = serde_json::to_value(&report)?;
    Ok(())
}

fn score(ctx: &Ctx, m: &mut RunManifest) -> Result<()> {
    let docs = load_corpus(ctx, m)?;
    let model_path = ctx.out(artifacts::MODEL);
    ctx.input(m, &model_path)?;
    let model = NGramLinearClassifier::load(&model_path)?;
    let scored = score_corpus(&model, &docs);
    let out = ctx.out(artifacts::POOL_SCORES);
    write_jsonl(&out, &scored)?;
    m.output(&out, &ctx.root)?;
    m.stats = serde_json::json!({ "documents": scored.len() });
    Ok(())
}

fn calibrate(ctx: &Ctx, m: &mut RunManifest) -> Result<()> {
    let c = &ctx.cfg.calibrate;
    let sample = load_sample(ctx, m)?;
    let path = ctx.out(artifacts::POOL_SCORES);
    ctx.input(m, &path)?;
    let scored: Vec<ScoredDoc> = read_jsonl(&path)?;
    let exclude: HashSet<String> = if c.disjoint_from_sample {
        sample.sampled_ids.into_iter().collect()
    } else {
        HashSet::new()
    };
    let seed = c.seed.expect("materialized");
    m.seed("calibrate", seed);
    let cal = calibrate_on_holdout(scored, c.target_fraction, c.holdout_size, seed, &exclude)?;
    if cal.warning {
        m.warn(format!(
            "one boundary document overshoots the target: achieved {} for target {}",
            cal.achieved_fraction, cal.target_fraction
        ));
    }
    if (cal.holdout_size as usize) < c.holdout_size {
        m.warn(format!(
            "holdout has {} documents, fewer than the requested {}",
            cal.holdout_size, c.holdout_size
        ));
    }
    let out = ctx.out(artifacts::CALIBRATION);
    write_json(&cal, &out)?;
    m.output(&out, &ctx.root)?;
    m.stats = serde_json::to_value(&cal)?;
    Ok(())
}

fn filter(ctx: &Ctx, m: &mut RunManifest) -> Result<()> {
    let docs = load_corpus(ctx, m)?;
    let scores_path = ctx.out(artifacts::POOL_SCORES);
    let cal_path = ctx.out(artifacts::CALIBRATION);
    ctx.input(m, &scores_path)?;
    ctx.input(m, &cal_path)?;
    let scores: HashMap<String, f64> = read_jsonl::<ScoredDoc>(&scores_path)?
        .into_iter()
        .map(|d| (d.id, d.score))
        .collect();
    let cal: ThresholdCalibration = read_json(&cal_path)?;
    let (kept, stats) = filter_pool(&docs, &scores, cal.threshold)?;
    if kept.is_empty() {
        m.warn("filter kept no documents");
    }
    let out = ctx.out(artifacts::FILTERED);
    let stats_path = ctx.out(artifacts::FILTER_STATS);
    write_corpus(&out, &kept)?;
    write_json(&stats, &stats_path)?;
    m.output(&out, &ctx.root)?.output(&stats_path, &ctx.root)?;
    m.stats = serde_json::to_value(stats)?;
    Ok(())
}

fn decontam(ctx: &Ctx, m: &mut RunManifest) -> Result<()> {
    let d = &ctx.cfg.decontam;
    let benchmarks = load_benchmarks(ctx, m)?;
    let path = ctx.out(artifacts::FILTERED);
    ctx.input(m, &path)?;
    let docs = read_documents(&path, IngestOptions::default())?;
    let tests: Vec<(&str, &str)> = benchmarks
        .iter()
        .filter(|b| d.splits.contains(&b.split))
        .map(|b| (b.benchmark_id.as_str(), b.rendered_text.as_str()))
        .collect();
    if tests.is_empty() {
        m.warn("no benchmark texts in the configured splits; corpus passed through");
    }
    let (clean, report) = if tests.is_empty() {
        (docs, Default::default())
    } else {
        let index = build_index(tests, &docs, d.config())?;
        decontaminate_corpus(&docs, &index, &WhitespaceCounter)
    };
    let out = ctx.out(artifacts::DECONTAMINATED);
    let report_path = ctx.out(artifacts::DECONTAM_REPORT);
    write_corpus(&out, &clean)?;
    write_json(&report, &report_path)?;
    m.output(&out, &ctx.root)?.output(&report_path, &ctx.root)?;
    m.stats = serde_json::to_value(&report)?;
    Ok(())
}

/// Loads every stage manifest present in `dir`, in stage order.
pub fn load_manifests(dir: &Path) -> Result<Vec<RunManifest>> {
    let mut out = Vec::new();
    for stage in Stage::ALL {
        let path = dir.join(format!("{}.json", stage.name()));
        if path.is_file() {
            out.push(RunManifest::load(&path)?);
        }
    }
    Ok(out)
}
