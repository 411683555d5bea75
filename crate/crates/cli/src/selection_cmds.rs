use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use betr_core::corpus::{
    read_benchmarks, read_documents, render_benchmark, sample_pool, BenchmarkExample, Document,
    EmbeddingStore, IngestOptions, SampleManifest, Split, WhitespaceCounter,
};
use betr_core::decontam::{build_index, decontaminate_corpus, rescan, DecontamConfig};
use betr_core::pipeline::{
    labeled_texts, read_jsonl, run_pipeline, score_corpus, write_corpus, write_jsonl,
    PipelineConfig,
};
use betr_core::ranker::{
    aggregate_scores, build_targets as make_targets, label_top_fraction, rank_documents,
    selection_diagnostics, Aggregation, Granularity, Label, RankMode, RankOptions, ScoreRecord,
    TargetSampling, TargetSet, ValueKind,
};
use betr_core::report::{read_json, write_diagnostics, write_json};
use betr_core::scorer::{
    train, train_parallel, Balancing, Hyperparams, NGramLinearClassifier, TrainingSet,
};
use betr_core::selection::{
    calibrate_on_holdout, filter_pool, filter_stats, ScoredDoc, ThresholdCalibration,
};
use betr_core::{Error, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::Ctx;

#[derive(Args, Debug, Serialize)]
pub struct IngestArgs {
    /// Documents as JSON Lines.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Recount tokens even where a count is given.
    #[arg(long)]
    recount: bool,
    /// Benchmark JSON Lines to validate and render alongside.
    #[arg(long, requires = "benchmarks_out")]
    benchmarks: Option<PathBuf>,
    #[arg(long)]
    benchmarks_out: Option<PathBuf>,
}

pub fn ingest(a: IngestArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    ctx.input(&a.input)?;
    let opts = IngestOptions {
        recount: a.recount,
        ..Default::default()
    };
    let docs = read_documents(&a.input, opts)?;
    write_corpus(&a.out, &docs)?;
    ctx.output(&a.out)?;
    let mut rendered = 0;
    if let (Some(path), Some(out)) = (&a.benchmarks, &a.benchmarks_out) {
        ctx.input(path)?;
        let examples: Vec<BenchmarkExample> = read_benchmarks(path)?
            .iter()
            .map(render_benchmark)
            .collect::<Result<_>>()?;
        write_jsonl(out, &examples)?;
        ctx.output(out)?;
        rendered = examples.len();
    }
    if docs.is_empty() {
        ctx.warn("document file is empty");
    }
    ctx.stats(&serde_json::json!({
        "documents": docs.len(),
        "tokens": docs.iter().map(|d| d.token_count).sum::<u64>(),
        "benchmark_examples": rendered,
    }))
}

#[derive(Args, Debug, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    input: PathBuf,
    /// Sample size.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
}

pub fn sample(a: SampleArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    ctx.input(&a.input)?;
    let seed = ctx.seed("sample");
    let docs = betr_core::corpus::ingest_documents(&a.input, IngestOptions::default())?;
    let manifest = sample_pool(docs, a.n, seed)?;
    write_json(&manifest, &a.out)?;
    ctx.output(&a.out)?;
    ctx.stats(&serde_json::json!({
        "pool_size": manifest.pool_size,
        "sample_size": manifest.sample_size,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum GranularityArg {
    PerExample,
    PerBenchmarkCentroid,
    GlobalCentroid,
    Kmeans,
}

fn parse_splits(list: &str) -> Result<Vec<Split>> {
    list.split(',').map(|s| s.trim().parse()).collect()
}

#[derive(Args, Debug, Serialize)]
pub struct BuildTargetsArgs {
    #[arg(long)]
    benchmarks: PathBuf,
    /// Embeddings keyed `benchmark_id/example_id`.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, value_enum, default_value = "per-example")]
    granularity: GranularityArg,
    /// Cluster count for k-means; defaults to the number of benchmarks.
    #[arg(long)]
    k: Option<usize>,
    /// Use exactly this many examples per benchmark.
    #[arg(long)]
    per_benchmark: Option<usize>,
    /// Comma-separated splits to draw targets from.
    #[arg(long, default_value = "train,unsplit")]
    splits: String,
    #[arg(long)]
    out: PathBuf,
}

pub fn build_targets(a: BuildTargetsArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    ctx.input(&a.benchmarks)?;
    ctx.input(&a.embeddings)?;
    let splits = parse_splits(&a.splits)?;
    let examples: Vec<BenchmarkExample> = read_benchmarks(&a.benchmarks)?
        .iter()
        .map(render_benchmark)
        .filter(|e| e.as_ref().map_or(true, |e| splits.contains(&e.split)))
        .collect::<Result<_>>()?;
    let store = EmbeddingStore::load(&a.embeddings)?;
    let benchmarks: HashSet<&str> = examples.iter().map(|e| e.benchmark_id.as_str()).collect();
    let granularity = match a.granularity {
        GranularityArg::PerExample => Granularity::PerExample,
        GranularityArg::PerBenchmarkCentroid => Granularity::PerBenchmarkCentroid,
        GranularityArg::GlobalCentroid => Granularity::GlobalCentroid,
        GranularityArg::Kmeans => Granularity::Kmeans {
            k: a.k.unwrap_or(benchmarks.len()),
        },
    };
    let sampling = match a.per_benchmark {
        Some(m) => TargetSampling::EqualPerBenchmark { m },
        None => TargetSampling::AllExamples,
    };
    let seed = ctx.seed("build-targets");
    let set = make_targets(&examples, &store, granularity, sampling, seed)?;
    write_json(&set, &a.out)?;
    ctx.output(&a.out)?;
    ctx.stats(&serde_json::json!({ "examples": examples.len(), "targets": set.len() }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ValueArg {
    Log2Inv,
    Inv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum AggregationArg {
    Max,
    Mean,
}

#[derive(Args, Debug, Serialize)]
pub struct RankArgs {
    /// Document embeddings.
    #[arg(long)]
    embeddings: PathBuf,
    /// Sample manifest; every embedded document is ranked when absent.
    #[arg(long)]
    sample: Option<PathBuf>,
    #[arg(long)]
    targets: PathBuf,
    /// Keep only each target's k best documents (approximate).
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long, default_value_t = 8192)]
    block_size: usize,
    #[arg(long, value_enum, default_value = "log2-inv")]
    value: ValueArg,
    #[arg(long, value_enum, default_value = "max")]
    aggregation: AggregationArg,
    #[arg(long, default_value_t = 0.1)]
    label_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

pub fn rank(a: RankArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    ctx.input(&a.embeddings)?;
    ctx.input(&a.targets)?;
    let store = EmbeddingStore::load_normalized(&a.embeddings)?;
    let store = match &a.sample {
        Some(path) => {
            ctx.input(path)?;
            let sample: SampleManifest = read_json(path)?;
            store.subset(&sample.sampled_ids)?
        }
        None => store,
    };
    let targets: TargetSet = read_json(&a.targets)?;
    let opts = RankOptions {
        mode: match a.top_k {
            Some(k) => RankMode::TopK { k },
            None => RankMode::Exact,
        },
        block_size: a.block_size,
    };
    let value = match a.value {
        ValueArg::Log2Inv => ValueKind::Log2Inv,
        ValueArg::Inv => ValueKind::Inv,
    };
    let aggregation = match a.aggregation {
        AggregationArg::Max => Aggregation::Max,
        AggregationArg::Mean => Aggregation::Mean,
    };
    let ranks = rank_documents(&store, &targets, &opts)?;
    let scores = aggregate_scores(&ranks, value, aggregation);
    let labels: HashMap<String, Label> = label_top_fraction(&scores, a.label_fraction)?
        .into_iter()
        .collect();
    let records: Vec<ScoreRecord> = scores
        .iter()
        .map(|s| ScoreRecord::new(s, labels.get(&s.doc_id).copied()))
        .collect();
    write_jsonl(&a.out, &records)?;
    ctx.output(&a.out)?;
    let positives = labels.values().filter(|l| **l == Label::Positive).count();
    ctx.stats(&serde_json::json!({ "documents": records.len(), "positives": positives }))
}

#[derive(Args, Debug, Serialize)]
pub struct DiagnosticsArgs {
    /// Scores written by `rank` with max aggregation.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    fraction: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

pub fn diagnostics(a: DiagnosticsArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    ctx.input(&a.scores)?;
    let records: Vec<ScoreRecord> = read_jsonl(&a.scores)?;
    let scores: Vec<_> = records
        .iter()
        .map(ScoreRecord::to_selection_score)
        .collect();
    let report = selection_diagnostics(&scores, a.fraction)?;
    std::fs::create_dir_all(&a.out_dir).map_err(Error::Io)?;
    let json = a.out_dir.join("diagnostics.json");
    write_json(&report, &json)?;
    ctx.output(&json)?;
    for path in write_diagnostics(&report, &a.out_dir)? {
        ctx.output(&path)?;
    }
    ctx.stats(&report.attribution)
}

#[derive(Args, Debug, Serialize)]
pub struct TrainScorerArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Labeled scores from `rank`.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Training report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Classifier hyperparameters as JSON; missing fields keep defaults.
    #[arg(long)]
    hyperparams: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    holdout_fraction: f64,
    /// Train on every example instead of downsampling the majority class.
    #[arg(long)]
    no_balance: bool,
    /// More than one thread is faster but not reproducible.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

pub fn train_scorer(a: TrainScorerArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    ctx.input(&a.corpus)?;
    ctx.input(&a.labels)?;
    let hyper: Hyperparams = match &a.hyperparams {
        Some(json) => serde_json::from_str(json)?,
        None => Hyperparams::default(),
    };
    let docs = read_documents(&a.corpus, IngestOptions::default())?;
    let records: Vec<ScoreRecord> = read_jsonl(&a.labels)?;
    let ts = TrainingSet {
        examples: labeled_texts(&records, &docs)?,
        balancing: if a.no_balance {
            Balancing::None
        } else {
            Balancing::DownsampleMajority
        },
        holdout_fraction: a.holdout_fraction,
    };
    let seed = ctx.seed("train-scorer");
    let (model, report) = if a.threads > 1 {
        ctx.warn("parallel scorer training is not reproducible");
        train_parallel(&ts, &hyper, seed, a.threads)?
    } else {
        train(&ts, &hyper, seed)?
    };
    model.save(&a.out)?;
    ctx.output(&a.out)?;
    if let Some(path) = &a.report {
        write_json(&report, path)?;
        ctx.output(path)?;
    }
    ctx.stats(&report)
}

#[derive(Args, Debug, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn score(a: ScoreArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    ctx.input(&a.model)?;
    ctx.input(&a.corpus)?;
    let model = NGramLinearClassifier::load(&a.model)?;
    let docs = read_documents(&a.corpus, IngestOptions::default())?;
    let scored = score_corpus(&model, &docs);
    write_jsonl(&a.out, &scored)?;
    ctx.output(&a.out)?;
    ctx.stats(&serde_json::json!({ "documents": scored.len() }))
}

fn load_exclusions(path: Option<&PathBuf>, ctx: &mut Ctx) -> Result<HashSet<String>> {
    match path {
        Some(p) => {
            ctx.input(p)?;
            let sample: SampleManifest = read_json(p)?;
            Ok(sample.sampled_ids.into_iter().collect())
        }
        None => Ok(HashSet::new()),
    }
}

fn check_calibration(cal: &ThresholdCalibration, requested: usize, ctx: &mut Ctx) {
    if cal.warning {
        ctx.warn(format!(
            "one boundary document overshoots the target: achieved {} for target {}",
            cal.achieved_fraction, cal.target_fraction
        ));
    }
    if (cal.holdout_size as usize) < requested {
        ctx.warn(format!(
            "holdout has {} documents, fewer than the requested {requested}",
            cal.holdout_size
        ));
    }
}

#[derive(Args, Debug, Serialize)]
pub struct CalibrateArgs {
    /// Classifier scores (`id`, `score`, `token_count` per line).
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    target_fraction: f64,
    #[arg(long, default_value_t = 100_000)]
    holdout: usize,
    /// Sample manifest whose documents are kept out of the holdout.
    #[arg(long)]
    exclude: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

pub fn calibrate(a: CalibrateArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    ctx.input(&a.scores)?;
    let exclude = load_exclusions(a.exclude.as_ref(), ctx)?;
    let scored: Vec<ScoredDoc> = read_jsonl(&a.scores)?;
    let seed = ctx.seed("calibrate");
    let cal = calibrate_on_holdout(scored, a.target_fraction, a.holdout, seed, &exclude)?;
    check_calibration(&cal, a.holdout, ctx);
    write_json(&cal, &a.out)?;
    ctx.output(&a.out)?;
    ctx.stats(&cal)
}

#[derive(Args, Debug, Serialize)]
pub struct FilterArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Corpus to filter; without it only statistics are reported.
    #[arg(long, requires = "out")]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["calibration", "target_fraction"])]
    threshold: Option<f64>,
    /// Threshold from a `calibrate` result.
    #[arg(long, conflicts_with = "target_fraction")]
    calibration: Option<PathBuf>,
    /// Calibrate on a holdout drawn from the scores first.
    #[arg(long)]
    target_fraction: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    holdout: usize,
    #[arg(long)]
    exclude: Option<PathBuf>,
}

pub fn filter(a: FilterArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    ctx.input(&a.scores)?;
    let scored: Vec<ScoredDoc> = read_jsonl(&a.scores)?;
    let threshold = match (a.threshold, &a.calibration, a.target_fraction) {
        (Some(t), _, _) => t,
        (None, Some(path), _) => {
            ctx.input(path)?;
            read_json::<ThresholdCalibration>(path)?.threshold
        }
        (None, None, Some(target)) => {
            let exclude = load_exclusions(a.exclude.as_ref(), ctx)?;
            let seed = ctx.seed("calibrate");
            let cal =
                calibrate_on_holdout(scored.iter().cloned(), target, a.holdout, seed, &exclude)?;
            check_calibration(&cal, a.holdout, ctx);
            cal.threshold
        }
        (None, None, None) => {
            return Err(Error::Invalid(
                "give one of --threshold, --calibration or --target-fraction".into(),
            ))
        }
    };
    let stats = match (&a.corpus, &a.out) {
        (Some(corpus), Some(out)) => {
            ctx.input(corpus)?;
            let docs = read_documents(corpus, IngestOptions::default())?;
            let scores: HashMap<String, f64> =
                scored.iter().map(|d| (d.id.clone(), d.score)).collect();
            let (kept, stats) = filter_pool(&docs, &scores, threshold)?;
            write_corpus(out, &kept)?;
            ctx.output(out)?;
            stats
        }
        _ => filter_stats(&scored, threshold),
    };
    if stats.docs_kept == 0 {
        ctx.warn("filter kept no documents");
    }
    ctx.stats(&serde_json::json!({ "threshold": threshold, "stats": stats }))
}

#[derive(Args, Debug, Serialize)]
pub struct DecontamArgs {
    /// Benchmark JSON Lines; examples in `--splits` are indexed.
    #[arg(long)]
    benchmarks: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    splits: String,
    #[arg(long, default_value_t = 8)]
    ngram_min: usize,
    #[arg(long, default_value_t = 13)]
    ngram_max: usize,
    #[arg(long, default_value_t = 200)]
    radius: usize,
    #[arg(long, default_value_t = 10)]
    max_splits: usize,
    #[arg(long, default_value_t = 10_000)]
    skip_count: u64,
}

pub fn decontam(a: DecontamArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    ctx.input(&a.benchmarks)?;
    ctx.input(&a.corpus)?;
    let splits = parse_splits(&a.splits)?;
    let examples: Vec<BenchmarkExample> = read_benchmarks(&a.benchmarks)?
        .iter()
        .map(render_benchmark)
        .collect::<Result<_>>()?;
    let tests: Vec<(&str, &str)> = examples
        .iter()
        .filter(|e| splits.contains(&e.split))
        .map(|e| (e.benchmark_id.as_str(), e.rendered_text.as_str()))
        .collect();
    let docs: Vec<Document> = read_documents(&a.corpus, IngestOptions::default())?;
    let cfg = DecontamConfig {
        ngram_min: a.ngram_min,
        ngram_max: a.ngram_max,
        excision_radius_chars: a.radius,
        max_splits: a.max_splits,
        common_ngram_skip_count: a.skip_count,
    };
    let index = build_index(tests, &docs, cfg)?;
    let (clean, report) = decontaminate_corpus(&docs, &index, &WhitespaceCounter);
    let residual = rescan(&clean, &index);
    if !residual.is_empty() {
        return Err(Error::Invalid(format!(
            "{} documents still match after decontamination",
            residual.len()
        )));
    }
    write_corpus(&a.out, &clean)?;
    ctx.output(&a.out)?;
    if let Some(path) = &a.report {
        write_json(&report, path)?;
        ctx.output(path)?;
    }
    ctx.stats(&report)
}

#[derive(Args, Debug, Serialize)]
pub struct RunArgs {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a config value: `section.key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

pub fn run(a: RunArgs, ctx: &mut Ctx) -> Result<()> {
    let mut flags = Vec::new();
    for o in &a.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("--set expects KEY=VALUE, got {o:?}")))?;
        flags.push((k.trim().to_string(), v.trim().to_string()));
    }
    if ctx.seed_given {
        flags.push(("run.seed".into(), ctx.seed.to_string()));
    }
    if let Some(w) = ctx.workers {
        flags.push(("run.workers".into(), w.to_string()));
    }
    if let Some(dir) = &ctx.manifest_dir {
        let dir = std::path::absolute(dir).map_err(Error::Io)?;
        flags.push((
            "run.manifest_dir".into(),
            format!("{:?}", dir.display().to_string()),
        ));
    }
    let cfg = PipelineConfig::resolve(Some(&a.config), std::env::vars(), &flags)?;
    let outcome = run_pipeline(&cfg)?;
    for w in &outcome.warnings {
        ctx.warn(w.clone());
    }
    let stages: Vec<&str> = outcome.stages.iter().map(|s| s.name()).collect();
    ctx.stats(&serde_json::json!({
        "stages": stages,
        "manifests": outcome.manifests,
    }))
}
