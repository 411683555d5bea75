//! `betr`: benchmark-targeted data selection and scaling-law analysis.
//!
//! Exit codes: 0 success, 2 invalid input, 3 runtime failure, 4 a warning
//! escalated by `--strict`.

mod scaling_cmds;
mod selection_cmds;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use betr_core::pipeline::RunManifest;
use betr_core::{Error, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "betr",
    version,
    about = "Benchmark-targeted pretraining data selection"
)]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, env = "BETR_SEED")]
    seed: Option<u64>,

    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, env = "BETR_WORKERS")]
    workers: Option<usize>,

    /// Write a manifest for this invocation into the directory.
    #[arg(long, global = true)]
    manifest_dir: Option<PathBuf>,

    /// Treat degenerate-result warnings as failures (exit code 4).
    #[arg(long, global = true)]
    strict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a document file and write it with token counts filled in.
    Ingest(selection_cmds::IngestArgs),
    /// Uniform reservoir sample of document ids.
    Sample(selection_cmds::SampleArgs),
    /// Build benchmark targets from example embeddings.
    BuildTargets(selection_cmds::BuildTargetsArgs),
    /// Rank sampled documents against targets and label the top fraction.
    Rank(selection_cmds::RankArgs),
    /// Rank and cosine histograms plus benchmark attribution.
    Diagnostics(selection_cmds::DiagnosticsArgs),
    /// Train the n-gram classifier on rank labels.
    TrainScorer(selection_cmds::TrainScorerArgs),
    /// Score a corpus with a trained classifier.
    Score(selection_cmds::ScoreArgs),
    /// Find the score threshold that keeps a target share of tokens.
    Calibrate(selection_cmds::CalibrateArgs),
    /// Keep documents scoring at or above a threshold.
    Filter(selection_cmds::FilterArgs),
    /// Remove benchmark n-gram matches from a corpus.
    Decontam(selection_cmds::DecontamArgs),
    /// Fit the loss law to run records.
    FitLoss(scaling_cmds::FitLossArgs),
    /// Fit the loss-to-accuracy sigmoid for one benchmark.
    FitAcc(scaling_cmds::FitAccArgs),
    /// Predict loss and accuracy at a model and data size.
    Predict(scaling_cmds::PredictArgs),
    /// Compute-optimal loss or mean-accuracy curve.
    Curve(scaling_cmds::CurveArgs),
    /// Compute multipliers between curves.
    Cm(scaling_cmds::CmArgs),
    /// Fit the optimal filtering-rate power law.
    FitFopt(scaling_cmds::FitFoptArgs),
    /// Batch size for a token budget.
    BatchSize(scaling_cmds::BatchSizeArgs),
    /// Turn stored artifacts into plot-ready CSV and JSON.
    Report(scaling_cmds::ReportArgs),
    /// Run the selection pipeline from a TOML config.
    Run(selection_cmds::RunArgs),
}

/// Per-invocation state: seed, manifest under construction and warnings.
pub struct Ctx {
    pub seed: u64,
    pub seed_given: bool,
    pub workers: Option<usize>,
    pub strict: bool,
    pub manifest_dir: Option<PathBuf>,
    pub manifest: RunManifest,
    root: PathBuf,
}

impl Ctx {
    pub fn config(&mut self, args: &impl Serialize) {
        self.manifest.config = serde_json::to_value(args).expect("arguments serialize");
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.input(path, &self.root)?;
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.manifest.output(path, &self.root)?;
        Ok(())
    }

    pub fn seed(&mut self, name: &str) -> u64 {
        self.manifest.seed(name, self.seed);
        self.seed
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        eprintln!("warning: {message}");
        self.manifest.warn(message);
    }

    pub fn stats(&mut self, value: &impl Serialize) -> Result<()> {
        let value = serde_json::to_value(value)?;
        println!("{}", serde_json::to_string_pretty(&value)?);
        self.manifest.stats = value;
        Ok(())
    }
}

fn name_of(command: &Command) -> &'static str {
    match command {
        Command::Ingest(_) => "ingest",
        Command::Sample(_) => "sample",
        Command::BuildTargets(_) => "build-targets",
        Command::Rank(_) => "rank",
        Command::Diagnostics(_) => "diagnostics",
        Command::TrainScorer(_) => "train-scorer",
        Command::Score(_) => "score",
        Command::Calibrate(_) => "calibrate",
        Command::Filter(_) => "filter",
        Command::Decontam(_) => "decontam",
        Command::FitLoss(_) => "fit-loss",
        Command::FitAcc(_) => "fit-acc",
        Command::Predict(_) => "predict",
        Command::Curve(_) => "curve",
        Command::Cm(_) => "cm",
        Command::FitFopt(_) => "fit-fopt",
        Command::BatchSize(_) => "batch-size",
        Command::Report(_) => "report",
        Command::Run(_) => "run",
    }
}

fn dispatch(command: Command, ctx: &mut Ctx) -> Result<()> {
    use scaling_cmds as sc;
    use selection_cmds as sel;
    match command {
        Command::Ingest(a) => sel::ingest(a, ctx),
        Command::Sample(a) => sel::sample(a, ctx),
        Command::BuildTargets(a) => sel::build_targets(a, ctx),
        Command::Rank(a) => sel::rank(a, ctx),
        Command::Diagnostics(a) => sel::diagnostics(a, ctx),
        Command::TrainScorer(a) => sel::train_scorer(a, ctx),
        Command::Score(a) => sel::score(a, ctx),
        Command::Calibrate(a) => sel::calibrate(a, ctx),
        Command::Filter(a) => sel::filter(a, ctx),
        Command::Decontam(a) => sel::decontam(a, ctx),
        Command::FitLoss(a) => sc::fit_loss(a, ctx),
        Command::FitAcc(a) => sc::fit_acc(a, ctx),
        Command::Predict(a) => sc::predict(a, ctx),
        Command::Curve(a) => sc::curve(a, ctx),
        Command::Cm(a) => sc::cm(a, ctx),
        Command::FitFopt(a) => sc::fit_fopt(a, ctx),
        Command::BatchSize(a) => sc::batch_size(a, ctx),
        Command::Report(a) => sc::report(a, ctx),
        Command::Run(a) => sel::run(a, ctx),
    }
}

fn exit_code(err: &Error) -> u8 {
    if err.is_validation() {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let name = name_of(&cli.command);
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
        {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(3);
        }
    }
    let mut ctx = Ctx {
        seed: cli.seed.unwrap_or(0),
        seed_given: cli.seed.is_some(),
        workers: cli.workers,
        strict: cli.strict,
        manifest_dir: cli.manifest_dir,
        manifest: RunManifest::new(name, serde_json::Value::Null),
        root: std::env::current_dir().unwrap_or_default(),
    };

    let result = dispatch(cli.command, &mut ctx).and_then(|()| match &ctx.manifest_dir {
        Some(dir) if name != "run" => ctx
            .manifest
            .write(dir, name, started.elapsed().as_secs_f64())
            .map(|_| ()),
        _ => Ok(()),
    });
    match result {
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Ok(()) if ctx.strict && !ctx.manifest.warnings.is_empty() => {
            eprintln!(
                "error: {} warning(s) under --strict",
                ctx.manifest.warnings.len()
            );
            ExitCode::from(4)
        }
        Ok(()) => ExitCode::SUCCESS,
    }
}
