use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use betr_core::report::{
    emit_report, read_json, write_json, write_multiplier_matrix_csv, ReportInputs,
};
use betr_core::scaling::{
    accuracy_curve, accuracy_points, fit_loss_law, fit_optimal_filter_law, fit_sigmoid, load_runs,
    log_grid, loss_curve, multiplier_matrix, select_batch_size, BatchSizeLaw, BenchmarkModel,
    ComputeOptimalCurve, LossFitOptions, LossLawFit, PowerLawDomain, SigmoidFit, DEFAULT_BIN_WIDTH,
};
use betr_core::{Error, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::Ctx;

#[derive(Args, Debug, Serialize)]
pub struct FitLossArgs {
    /// Run records CSV: run_id, n_params, tokens, flops, metric, value, kind.
    #[arg(long)]
    runs: PathBuf,
    /// Loss metric to fit.
    #[arg(long)]
    metric: String,
    #[arg(long, default_value_t = 4000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 1e-3)]
    huber_delta: f64,
    /// Inverse-density weight bins per decade of FLOPs; 0 disables weights.
    #[arg(long, default_value_t = 4)]
    bins_per_decade: u32,
    #[arg(long)]
    out: PathBuf,
}

pub fn fit_loss(a: FitLossArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    ctx.input(&a.runs)?;
    let runs = load_runs(&a.runs)?;
    let opts = LossFitOptions {
        huber_delta: a.huber_delta,
        bootstrap_n: a.bootstrap,
        seed: ctx.seed("bootstrap"),
        bins_per_decade: a.bins_per_decade,
        ..Default::default()
    };
    let fit = fit_loss_law(&runs, &a.metric, &opts)?;
    for w in &fit.warnings {
        ctx.warn(w.clone());
    }
    write_json(&fit, &a.out)?;
    ctx.output(&a.out)?;
    ctx.stats(&serde_json::json!({
        "A": fit.coef_a,
        "B": fit.coef_b,
        "E": fit.coef_e,
        "alpha": fit.params.alpha,
        "beta": fit.params.beta,
        "fit_mae": fit.fit_mae,
        "intervals": fit.intervals,
    }))
}

#[derive(Args, Debug, Serialize)]
pub struct FitAccArgs {
    #[arg(long)]
    runs: PathBuf,
    /// Benchmark whose loss and accuracy the runs report.
    #[arg(long)]
    benchmark: String,
    #[arg(long, default_value_t = 4000)]
    bootstrap: usize,
    #[arg(long)]
    out: PathBuf,
}

pub fn fit_acc(a: FitAccArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    ctx.input(&a.runs)?;
    let runs = load_runs(&a.runs)?;
    let points = accuracy_points(&runs, &a.benchmark);
    let seed = ctx.seed("bootstrap");
    let fit = fit_sigmoid(&a.benchmark, &points, a.bootstrap, seed)?;
    if fit.bootstrap_failures > 0 {
        ctx.warn(format!(
            "{} bootstrap refits failed",
            fit.bootstrap_failures
        ));
    }
    write_json(&fit, &a.out)?;
    ctx.output(&a.out)?;
    ctx.stats(&serde_json::json!({
        "params": fit.params,
        "fit_mae": fit.fit_mae,
        "intervals": fit.intervals,
    }))
}

#[derive(Args, Debug, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    loss_fit: PathBuf,
    /// Sigmoid fit; adds an accuracy prediction.
    #[arg(long)]
    acc_fit: Option<PathBuf>,
    /// Parameters.
    #[arg(long)]
    n: f64,
    /// Training tokens.
    #[arg(long)]
    d: f64,
}

pub fn predict(a: PredictArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    ctx.input(&a.loss_fit)?;
    let loss_fit: LossLawFit = read_json(&a.loss_fit)?;
    let loss = betr_core::scaling::predict_loss(&loss_fit, a.n, a.d)?;
    let accuracy = match &a.acc_fit {
        Some(path) => {
            ctx.input(path)?;
            let sig: SigmoidFit = read_json(path)?;
            Some(sig.predict(loss))
        }
        None => None,
    };
    ctx.stats(&serde_json::json!({
        "n": a.n,
        "d": a.d,
        "flops": 6.0 * a.n * a.d,
        "loss": loss,
        "accuracy": accuracy,
    }))
}

fn parse_pair(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .ok_or_else(|| Error::Invalid(format!("expected NAME=VALUE, got {s:?}")))
}

#[derive(Args, Debug, Serialize)]
pub struct CurveArgs {
    /// Loss law whose compute-optimal path is followed.
    #[arg(long)]
    loss_fit: PathBuf,
    /// `NAME=LOSS_FIT,SIGMOID_FIT`; with any of these the curve is mean
    /// accuracy over the listed benchmarks instead of loss.
    #[arg(long = "benchmark", value_name = "NAME=LOSS,SIGMOID")]
    benchmarks: Vec<String>,
    #[arg(long, default_value = "curve")]
    name: String,
    #[arg(long, default_value_t = 1e18)]
    lo: f64,
    #[arg(long, default_value_t = 1e23)]
    hi: f64,
    /// Grid points, log-spaced. Compute multipliers need a dense grid.
    #[arg(long, default_value_t = 2000)]
    points: usize,
    /// Plot-ready CSV.
    #[arg(long)]
    out: PathBuf,
    /// Full curve as JSON, the input of `cm`, `fit-fopt` and `report`.
    #[arg(long)]
    json: Option<PathBuf>,
}

pub fn curve(a: CurveArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    ctx.input(&a.loss_fit)?;
    let reference: LossLawFit = read_json(&a.loss_fit)?;
    let grid = log_grid(a.lo, a.hi, a.points)?;
    let mut c = if a.benchmarks.is_empty() {
        loss_curve(&reference, &grid)?
    } else {
        let mut models = BTreeMap::new();
        for spec in &a.benchmarks {
            let (name, files) = parse_pair(spec)?;
            let (loss, sig) = files
                .split_once(',')
                .ok_or_else(|| Error::Invalid(format!("expected LOSS,SIGMOID in {spec:?}")))?;
            let (loss, sig) = (PathBuf::from(loss), PathBuf::from(sig));
            ctx.input(&loss)?;
            ctx.input(&sig)?;
            models.insert(
                name.to_string(),
                BenchmarkModel {
                    loss: read_json(&loss)?,
                    sigmoid: read_json(&sig)?,
                },
            );
        }
        let names: Vec<String> = models.keys().cloned().collect();
        accuracy_curve(&a.name, &reference, &models, &names, &grid)?
    };
    c.name = a.name.clone();
    let file = File::create(&a.out).map_err(Error::Io)?;
    c.write_csv(BufWriter::new(file))?;
    ctx.output(&a.out)?;
    if let Some(path) = &a.json {
        write_json(&c, path)?;
        ctx.output(path)?;
    }
    ctx.stats(&serde_json::json!({ "name": c.name, "points": c.points.len(), "members": c.members.len() }))
}

#[derive(Args, Debug, Serialize)]
pub struct CmArgs {
    /// Curve JSON files; each is both a method and a baseline.
    #[arg(long, num_args = 1.., required = true)]
    curves: Vec<PathBuf>,
    /// Accuracy bin width in [0, 1] units.
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
    bin_width: f64,
    /// k × k table; row = method, column = baseline.
    #[arg(long)]
    out: PathBuf,
}

pub fn cm(a: CmArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    let mut curves: Vec<ComputeOptimalCurve> = Vec::new();
    for p in &a.curves {
        ctx.input(p)?;
        curves.push(read_json(p)?);
    }
    let file = File::create(&a.out).map_err(Error::Io)?;
    write_multiplier_matrix_csv(&curves, a.bin_width, BufWriter::new(file))?;
    ctx.output(&a.out)?;
    let matrix = multiplier_matrix(&curves, a.bin_width);
    if matrix.iter().flatten().any(Option::is_none) {
        ctx.warn("some curve pairs share fewer than 3 accuracy bins");
    }
    let names: Vec<&str> = curves.iter().map(|c| c.name.as_str()).collect();
    ctx.stats(&serde_json::json!({ "curves": names, "matrix": matrix }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum DomainArg {
    Flops,
    Tokens,
}

#[derive(Args, Debug, Serialize)]
pub struct FitFoptArgs {
    /// `RATE=CURVE_JSON` with the rate in percent of tokens kept; all curves
    /// share one compute grid.
    #[arg(long = "curve", value_name = "RATE=PATH", required = true)]
    curves: Vec<String>,
    #[arg(long, value_enum, default_value = "flops")]
    domain: DomainArg,
    #[arg(long)]
    out: PathBuf,
}

pub fn fit_fopt(a: FitFoptArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    let mut curves = Vec::new();
    for spec in &a.curves {
        let (rate, path) = parse_pair(spec)?;
        let rate: f64 = rate
            .parse()
            .map_err(|_| Error::Invalid(format!("bad filtering rate {rate:?}")))?;
        let path = PathBuf::from(path);
        ctx.input(&path)?;
        curves.push((rate, read_json::<ComputeOptimalCurve>(&path)?));
    }
    let domain = match a.domain {
        DomainArg::Flops => PowerLawDomain::Flops,
        DomainArg::Tokens => PowerLawDomain::Tokens,
    };
    let fit = fit_optimal_filter_law(&curves, domain)?;
    if let Some(w) = &fit.law.warning {
        ctx.warn(w.clone());
    }
    write_json(&fit, &a.out)?;
    ctx.output(&a.out)?;
    ctx.stats(&fit.law)
}

#[derive(Args, Debug, Serialize)]
pub struct BatchSizeArgs {
    /// Training tokens; repeat for several budgets.
    #[arg(long, required = true)]
    tokens: Vec<f64>,
    #[arg(long, default_value_t = 22.91)]
    d: f64,
    #[arg(long, default_value_t = -0.47, allow_hyphen_values = true)]
    gamma: f64,
    #[arg(long, default_value_t = 0.2)]
    safety_reduction: f64,
}

pub fn batch_size(a: BatchSizeArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    let law = BatchSizeLaw {
        d: a.d,
        gamma: a.gamma,
        safety_reduction: a.safety_reduction,
    };
    let rows = a
        .tokens
        .iter()
        .map(|&t| {
            Ok(serde_json::json!({
                "tokens": t,
                "critical": law.critical(t),
                "batch_tokens": select_batch_size(t, &law)?,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.stats(&rows)
}

#[derive(Args, Debug, Serialize)]
pub struct ReportArgs {
    /// Diagnostics JSON from `diagnostics` or a pipeline run.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    curves: Vec<PathBuf>,
    /// Loss-law and sigmoid fit JSON files.
    #[arg(long, num_args = 1..)]
    fits: Vec<PathBuf>,
    #[arg(long)]
    filter_law: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
    bin_width: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

pub fn report(a: ReportArgs, ctx: &mut Ctx) -> Result<()> {
    ctx.config(&a);
    let inputs = ReportInputs {
        diagnostics: a.diagnostics.clone(),
        curves: a.curves.clone(),
        fits: a.fits.clone(),
        filter_law: a.filter_law.clone(),
        bin_width: a.bin_width,
    };
    let written = emit_report(&inputs, &a.out_dir)?;
    let all = inputs
        .diagnostics
        .iter()
        .chain(&inputs.curves)
        .chain(&inputs.fits)
        .chain(inputs.filter_law.iter());
    for p in all {
        ctx.input(p)?;
    }
    for p in &written {
        ctx.output(p)?;
    }
    ctx.stats(&written)
}
