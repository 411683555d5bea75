use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranker::aggregate::{positive_count, score_order, SelectionScore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: u64,
    pub in_top_fraction: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionShare {
    pub benchmark_id: String,
    pub count: u64,
    pub share_percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub sample_size: usize,
    pub top_count: usize,
    /// Best rank as a percentage of the sample size.
    pub rank_percentile: Vec<HistogramBin>,
    pub best_cosine: Vec<HistogramBin>,
    /// Benchmarks that attract top-fraction documents, by id.
    pub attribution: Vec<AttributionShare>,
}

/// Percentile bin edges: `[0, 1e-4)` then four log-spaced bins per decade up
/// to 100.
pub(crate) fn percentile_edges() -> Vec<f64> {
    let mut edges = vec![0.0];
    for i in 0..=24 {
        edges.push(10f64.powf(-4.0 + i as f64 / 4.0));
    }
    *edges.last_mut().unwrap() = 100.0;
    edges
}

pub(crate) fn cosine_edges() -> Vec<f64> {
    (0..=40).map(|i| -1.0 + i as f64 * 0.05).collect()
}

/// Index of the bin holding `x`; the last bin is closed on the right and
/// out-of-range values clamp to the end bins.
fn bin_index(edges: &[f64], x: f64) -> usize {
    let bins = edges.len() - 1;
    match edges.partition_point(|&e| e <= x) {
        0 => 0,
        i if i > bins => bins - 1,
        i => i - 1,
    }
}

fn histogram(edges: &[f64], values: impl Iterator<Item = (f64, bool)>) -> Vec<HistogramBin> {
    let bins = edges.len() - 1;
    let mut counts = vec![[0u64; 2]; bins];
    for (x, top) in values {
        counts[bin_index(edges, x)][top as usize] += 1;
    }
    let mut out = Vec::with_capacity(bins * 2);
    for (i, c) in counts.iter().enumerate() {
        for top in [true, false] {
            out.push(HistogramBin {
                bin_low: edges[i],
                bin_high: edges[i + 1],
                count: c[top as usize],
                in_top_fraction: top,
            });
        }
    }
    out
}

/// Best-rank and best-cosine histograms split by top-fraction membership,
/// plus each benchmark's share of the top fraction.
pub fn selection_diagnostics(
    scores: &[SelectionScore],
    fraction: f64,
) -> Result<DiagnosticsReport> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "fraction must be in (0, 1), got {fraction}"
        )));
    }
    if scores.iter().any(|s| s.attribution.is_none()) {
        return Err(Error::invalid(
            "scores carry no attribution; rerun ranking with max aggregation",
        ));
    }
    let mut order: Vec<&SelectionScore> = scores.iter().collect();
    order.sort_by(|a, b| score_order(a, b));
    let n = order.len();
    let top = positive_count(n, fraction);
    let attr = |s: &SelectionScore| s.attribution.clone().expect("checked above");

    let rank_percentile = histogram(
        &percentile_edges(),
        order
            .iter()
            .enumerate()
            .map(|(i, s)| (100.0 * attr(s).best_rank as f64 / n as f64, i < top)),
    );
    let best_cosine = histogram(
        &cosine_edges(),
        order
            .iter()
            .enumerate()
            .map(|(i, s)| (attr(s).best_cosine, i < top)),
    );

    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for s in &order[..top] {
        *counts.entry(attr(s).best_benchmark_id).or_default() += 1;
    }
    let attribution = counts
        .into_iter()
        .map(|(benchmark_id, count)| AttributionShare {
            benchmark_id,
            count,
            share_percent: 100.0 * count as f64 / top as f64,
        })
        .collect();

    Ok(DiagnosticsReport {
        sample_size: n,
        top_count: top,
        rank_percentile,
        best_cosine,
        attribution,
    })
}
