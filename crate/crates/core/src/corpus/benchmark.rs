use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Unsplit,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "unsplit" => Ok(Split::Unsplit),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

/// A benchmark example as stored on disk: the raw fields in declared order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub benchmark_id: String,
    pub example_id: String,
    pub split: Split,
    pub fields: Map<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkExample {
    pub benchmark_id: String,
    pub example_id: String,
    pub split: Split,
    pub rendered_text: String,
}

impl BenchmarkExample {
    /// Key used to look the example up in an embedding sidecar.
    pub fn key(&self) -> String {
        format!("{}/{}", self.benchmark_id, self.example_id)
    }
}

fn render_value(value: &Value, out: &mut Vec<String>) {
    match value {
        Value::Null => {}
        Value::String(s) => {
            if !s.is_empty() {
                out.push(s.clone());
            }
        }
        Value::Array(items) => items.iter().for_each(|v| render_value(v, out)),
        Value::Bool(_) | Value::Number(_) | Value::Object(_) => out.push(value.to_string()),
    }
}

/// Joins the fields of one example with newlines, in declared order. The
/// first field is the question or prompt and must be a non-empty string;
/// later empty or null fields are skipped. Arrays (e.g. answer choices)
/// contribute one line per element.
pub fn render_fields(fields: &Map<String, Value>) -> Result<String> {
    let mut iter = fields.iter();
    let (name, prompt) = iter
        .next()
        .ok_or_else(|| Error::invalid("benchmark example has no fields"))?;
    let prompt = match prompt {
        Value::String(s) if !s.trim().is_empty() => s.clone(),
        _ => {
            return Err(Error::invalid(format!(
                "benchmark prompt field {name:?} is empty"
            )))
        }
    };
    let mut parts = vec![prompt];
    for (_, value) in iter {
        render_value(value, &mut parts);
    }
    Ok(parts.join("\n"))
}

pub fn render_benchmark(raw: &BenchmarkRecord) -> Result<BenchmarkExample> {
    let rendered_text = render_fields(&raw.fields).map_err(|e| match e {
        Error::Invalid(msg) => {
            Error::Invalid(format!("{}/{}: {msg}", raw.benchmark_id, raw.example_id))
        }
        other => other,
    })?;
    Ok(BenchmarkExample {
        benchmark_id: raw.benchmark_id.clone(),
        example_id: raw.example_id.clone(),
        split: raw.split,
        rendered_text,
    })
}

/// Reads a benchmark JSON Lines file, rejecting duplicate
/// `(benchmark_id, example_id)` pairs.
pub fn read_benchmarks(path: impl AsRef<Path>) -> Result<Vec<BenchmarkRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: BenchmarkRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert((rec.benchmark_id.clone(), rec.example_id.clone())) {
            return Err(Error::DuplicateId {
                id: format!("{}/{}", rec.benchmark_id, rec.example_id),
                line: i + 1,
            });
        }
        out.push(rec);
    }
    Ok(out)
}
