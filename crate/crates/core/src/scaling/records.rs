//! Training-run observations, stored as long-format CSV with one row per
//! (run, metric).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trained model: size, tokens, compute and its measured metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub n_params: f64,
    pub tokens: f64,
    /// Training FLOPs; `6 · N · D` unless given.
    pub flops: f64,
    /// Validation loss or per-benchmark bits-per-byte, by metric name.
    pub losses: BTreeMap<String, f64>,
    /// Per-benchmark accuracy in [0, 1].
    pub accuracies: BTreeMap<String, f64>,
}

impl RunRecord {
    pub fn new(run_id: impl Into<String>, n_params: f64, tokens: f64) -> Self {
        RunRecord {
            run_id: run_id.into(),
            n_params,
            tokens,
            flops: 6.0 * n_params * tokens,
            losses: BTreeMap::new(),
            accuracies: BTreeMap::new(),
        }
    }

    pub fn with_loss(mut self, metric: &str, value: f64) -> Self {
        self.losses.insert(metric.to_string(), value);
        self
    }

    pub fn with_accuracy(mut self, benchmark: &str, value: f64) -> Self {
        self.accuracies.insert(benchmark.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("run {:?}: {what}", self.run_id)));
        if !(self.n_params > 0.0 && self.n_params.is_finite()) {
            return bad("n_params must be positive");
        }
        if !(self.tokens > 0.0 && self.tokens.is_finite()) {
            return bad("tokens must be positive");
        }
        if !(self.flops > 0.0 && self.flops.is_finite()) {
            return bad("flops must be positive");
        }
        if let Some((m, _)) = self
            .losses
            .iter()
            .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
        {
            return bad(&format!("loss {m:?} must be positive"));
        }
        if let Some((m, _)) = self
            .accuracies
            .iter()
            .find(|(_, &v)| !(0.0..=1.0).contains(&v))
        {
            return bad(&format!("accuracy {m:?} must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Loss,
    Accuracy,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    run_id: String,
    n_params: f64,
    tokens: f64,
    flops: Option<f64>,
    metric: String,
    value: f64,
    kind: MetricKind,
}

/// Reads long-format rows and groups them by `run_id`, in first-seen order.
pub fn read_runs(reader: impl Read) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut runs: Vec<RunRecord> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row?;
        let flops = row.flops.unwrap_or(6.0 * row.n_params * row.tokens);
        let slot = *index.entry(row.run_id.clone()).or_insert_with(|| {
            runs.push(RunRecord {
                flops,
                ..RunRecord::new(row.run_id.clone(), row.n_params, row.tokens)
            });
            runs.len() - 1
        });
        let run = &mut runs[slot];
        if run.n_params != row.n_params || run.tokens != row.tokens || run.flops != flops {
            return Err(Error::invalid(format!(
                "line {line}: run {:?} has inconsistent size, tokens or flops",
                row.run_id
            )));
        }
        let map = match row.kind {
            MetricKind::Loss => &mut run.losses,
            MetricKind::Accuracy => &mut run.accuracies,
        };
        if map.insert(row.metric.clone(), row.value).is_some() {
            return Err(Error::invalid(format!(
                "line {line}: duplicate {:?} metric {:?} for run {:?}",
                row.kind, row.metric, row.run_id
            )));
        }
    }
    for run in &runs {
        run.validate()?;
    }
    Ok(runs)
}

pub fn load_runs(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    read_runs(std::io::BufReader::new(file))
}

pub fn write_runs(writer: impl Write, runs: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for run in runs {
        let rows = run
            .losses
            .iter()
            .map(|(m, v)| (m, v, MetricKind::Loss))
            .chain(
                run.accuracies
                    .iter()
                    .map(|(m, v)| (m, v, MetricKind::Accuracy)),
            );
        for (metric, &value, kind) in rows {
            w.serialize(Row {
                run_id: run.run_id.clone(),
                n_params: run.n_params,
                tokens: run.tokens,
                flops: Some(run.flops),
                metric: metric.clone(),
                value,
                kind,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}
