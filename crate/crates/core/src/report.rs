//! Plot-ready CSV and JSON files built from stored artifacts.
//!
//! Every writer is a pure function of its input: floats use the shortest
//! round-trip representation and rows follow input order, so emitting the
//! same artifacts twice gives identical bytes. Nothing is rendered.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranker::{DiagnosticsReport, HistogramBin};
use crate::scaling::{multiplier_matrix, ComputeOptimalCurve, FilterLawFit, DEFAULT_BIN_WIDTH};

fn num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

pub fn write_histogram_csv(bins: &[HistogramBin], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bin_low", "bin_high", "count", "in_top_fraction"])?;
    for b in bins {
        w.write_record([
            num(b.bin_low),
            num(b.bin_high),
            b.count.to_string(),
            b.in_top_fraction.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_attribution_csv(report: &DiagnosticsReport, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["benchmark_id", "count", "share_percent"])?;
    for a in &report.attribution {
        w.write_record([
            a.benchmark_id.clone(),
            a.count.to_string(),
            num(a.share_percent),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `k × k` compute-multiplier table; row = method, column = baseline. Cells
/// without enough shared accuracy bins are left empty.
pub fn write_multiplier_matrix_csv(
    curves: &[ComputeOptimalCurve],
    bin_width: f64,
    writer: impl Write,
) -> Result<()> {
    let matrix = multiplier_matrix(curves, bin_width);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["method".to_string()];
    header.extend(curves.iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    for (curve, row) in curves.iter().zip(&matrix) {
        let mut rec = vec![curve.name.clone()];
        rec.extend(row.iter().map(|v| v.map(num).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one row per (compute, fraction) with the share of ensemble
/// members in which that fraction is best.
pub fn write_probability_panel_csv(fit: &FilterLawFit, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["compute", "fraction", "probability"])?;
    for (c, row) in fit.compute.iter().zip(&fit.probabilities) {
        for (f, p) in fit.fractions.iter().zip(row) {
            w.write_record([num(*c), num(*f), num(*p)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per compute point: most probable fraction, point-estimate argmax and the
/// fitted power law.
pub fn write_optimal_fraction_csv(fit: &FilterLawFit, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["compute", "optimal", "central_optimal", "fitted"])?;
    for (i, c) in fit.compute.iter().enumerate() {
        w.write_record([
            num(*c),
            num(fit.optimal[i]),
            num(fit.central_optimal[i]),
            num(fit.law.eval(*c)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::file(path, e))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::file(path, e))?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes the three diagnostics tables into `dir` and returns their paths.
pub fn write_diagnostics(report: &DiagnosticsReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let files = [
        dir.join("diagnostics_rank_percentile.csv"),
        dir.join("diagnostics_best_cosine.csv"),
        dir.join("diagnostics_attribution.csv"),
    ];
    write_file(&files[0], |w| {
        write_histogram_csv(&report.rank_percentile, w)
    })?;
    write_file(&files[1], |w| write_histogram_csv(&report.best_cosine, w))?;
    write_file(&files[2], |w| write_attribution_csv(report, w))?;
    Ok(files.to_vec())
}

/// Artifacts to turn into a report bundle. Paths point at JSON files as
/// written by the pipeline and the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportInputs {
    pub diagnostics: Option<PathBuf>,
    /// Compute-optimal curves; also the rows and columns of the multiplier
    /// table.
    pub curves: Vec<PathBuf>,
    /// Loss-law and sigmoid fits, bundled verbatim.
    pub fits: Vec<PathBuf>,
    pub filter_law: Option<PathBuf>,
    pub bin_width: f64,
}

impl Default for ReportInputs {
    fn default() -> Self {
        ReportInputs {
            diagnostics: None,
            curves: Vec::new(),
            fits: Vec::new(),
            filter_law: None,
            bin_width: DEFAULT_BIN_WIDTH,
        }
    }
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::file(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "missing artifact"),
        ))
    }
}

/// Writes the report bundle into `out_dir` and returns the written paths in
/// a fixed order. Every referenced artifact is checked before anything is
/// written.
pub fn emit_report(inputs: &ReportInputs, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let all = inputs
        .diagnostics
        .iter()
        .chain(&inputs.curves)
        .chain(&inputs.fits)
        .chain(inputs.filter_law.iter());
    for path in all {
        require(path)?;
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
    let mut written = Vec::new();

    if let Some(path) = &inputs.diagnostics {
        let report: DiagnosticsReport = read_json(path)?;
        written.extend(write_diagnostics(&report, out_dir)?);
    }

    if !inputs.curves.is_empty() {
        let curves: Vec<ComputeOptimalCurve> = inputs
            .curves
            .iter()
            .map(|p| read_json(p))
            .collect::<Result<_>>()?;
        for (i, curve) in curves.iter().enumerate() {
            let path = out_dir.join(format!("curve_{i:02}_{}.csv", file_safe(&curve.name)));
            write_file(&path, |w| curve.write_csv(w))?;
            written.push(path);
        }
        let path = out_dir.join("compute_multipliers.csv");
        write_file(&path, |w| {
            write_multiplier_matrix_csv(&curves, inputs.bin_width, w)
        })?;
        written.push(path);
    }

    if !inputs.fits.is_empty() {
        let fits: Vec<serde_json::Value> = inputs
            .fits
            .iter()
            .map(|p| read_json(p))
            .collect::<Result<_>>()?;
        let path = out_dir.join("fits.json");
        write_json(&serde_json::json!({ "fits": fits }), &path)?;
        written.push(path);
    }

    if let Some(path) = &inputs.filter_law {
        let fit: FilterLawFit = read_json(path)?;
        let probs = out_dir.join("fopt_probabilities.csv");
        write_file(&probs, |w| write_probability_panel_csv(&fit, w))?;
        let opt = out_dir.join("fopt_optimal.csv");
        write_file(&opt, |w| write_optimal_fraction_csv(&fit, w))?;
        let law = out_dir.join("fopt_law.json");
        write_json(&fit.law, &law)?;
        written.extend([probs, opt, law]);
    }
    Ok(written)
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
