use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranker::rank::{Entries, RankMatrix};

/// Maps a rank to a value; both kinds are strictly decreasing in the rank.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    /// `log2(1 / r)`
    Log2Inv,
    /// `1 / r`
    Inv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Max,
    Mean,
}

pub fn value_function(rank: u64, kind: ValueKind) -> Result<f64> {
    if rank < 1 {
        return Err(Error::invalid("ranks start at 1"));
    }
    Ok(value_unchecked(rank, kind))
}

#[inline]
fn value_unchecked(rank: u64, kind: ValueKind) -> f64 {
    match kind {
        ValueKind::Log2Inv => 0.0 - (rank as f64).log2(),
        ValueKind::Inv => 1.0 / rank as f64,
    }
}

/// Where a document's best rank came from (max aggregation only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub best_rank: u32,
    pub best_target_id: String,
    pub best_benchmark_id: String,
    pub best_cosine: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionScore {
    pub doc_id: String,
    pub aggregate_value: f64,
    pub attribution: Option<Attribution>,
}

/// Descending score, ascending id.
pub(crate) fn score_order(a: &SelectionScore, b: &SelectionScore) -> Ordering {
    b.aggregate_value
        .partial_cmp(&a.aggregate_value)
        .expect("scores are finite")
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Aggregates each document's ranks into one score. The result is sorted by
/// descending score with ascending-id tie-break.
///
/// Under max aggregation the best target is the one with the lowest rank;
/// equal ranks prefer the higher cosine, then the lower target index.
pub fn aggregate_scores(
    ranks: &RankMatrix,
    kind: ValueKind,
    aggregation: Aggregation,
) -> Vec<SelectionScore> {
    let n = ranks.sample_size();
    let m = ranks.num_targets();
    let floor = ranks.floor_rank();
    let values: Vec<f64> = (0..=n as u64)
        .map(|r| {
            if r == 0 {
                f64::NAN
            } else {
                value_unchecked(r, kind)
            }
        })
        .collect();

    let mut out: Vec<SelectionScore> = (0..n)
        .map(|d| {
            let (value, attribution) = match aggregation {
                Aggregation::Mean => {
                    let sum: f64 = match &ranks.entries {
                        Entries::Exact { ranks: r, .. } => r[d * m..(d + 1) * m]
                            .iter()
                            .map(|&r| values[r as usize])
                            .sum(),
                        Entries::TopK { per_doc, .. } => {
                            let mut row = vec![floor; m];
                            for h in &per_doc[d] {
                                row[h.target as usize] = h.rank;
                            }
                            row.iter().map(|&r| values[r as usize]).sum()
                        }
                    };
                    (sum / m as f64, None)
                }
                Aggregation::Max => {
                    let (rank, target, cosine) = best_for_doc(ranks, d);
                    let t = &ranks.targets[target];
                    (
                        values[rank as usize],
                        Some(Attribution {
                            best_rank: rank,
                            best_target_id: t.target_id.clone(),
                            best_benchmark_id: t.benchmark_id.clone(),
                            best_cosine: cosine,
                        }),
                    )
                }
            };
            SelectionScore {
                doc_id: ranks.doc_ids[d].clone(),
                aggregate_value: value,
                attribution,
            }
        })
        .collect();
    out.sort_by(score_order);
    out
}

fn better(rank: u32, cos: f64, best: (u32, usize, f64)) -> bool {
    rank < best.0 || (rank == best.0 && cos > best.2)
}

fn best_for_doc(ranks: &RankMatrix, d: usize) -> (u32, usize, f64) {
    let m = ranks.num_targets();
    match &ranks.entries {
        Entries::Exact { ranks: r, sims } => {
            let mut best = (r[d * m], 0usize, sims[d * m]);
            for t in 1..m {
                let (rank, cos) = (r[d * m + t], sims[d * m + t]);
                if better(rank, cos, best) {
                    best = (rank, t, cos);
                }
            }
            best
        }
        Entries::TopK { per_doc, best } => {
            let hits = &per_doc[d];
            if hits.is_empty() {
                let (cos, t) = best[d];
                return (ranks.floor_rank(), t as usize, cos);
            }
            let mut out = (hits[0].rank, hits[0].target as usize, hits[0].sim);
            for h in &hits[1..] {
                if better(h.rank, h.sim, out) {
                    out = (h.rank, h.target as usize, h.sim);
                }
            }
            out
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

/// Number of positives for `n` documents: `ceil(fraction · n)`, guarded
/// against products like `0.7 · 10 = 7.000000000000001`.
pub fn positive_count(n: usize, fraction: f64) -> usize {
    let raw = (fraction * n as f64 * (1.0 - 1e-12)).ceil();
    (raw.max(0.0) as usize).min(n)
}

/// Labels the top `ceil(fraction · N)` documents positive. Input order does
/// not matter; the score order of [`aggregate_scores`] is applied.
pub fn label_top_fraction(
    scores: &[SelectionScore],
    fraction: f64,
) -> Result<Vec<(String, Label)>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "label fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut order: Vec<&SelectionScore> = scores.iter().collect();
    order.sort_by(|a, b| score_order(a, b));
    let k = positive_count(scores.len(), fraction);
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let label = if i < k {
                Label::Positive
            } else {
                Label::Negative
            };
            (s.doc_id.clone(), label)
        })
        .collect())
}

/// One line of a persisted scores file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub score: f64,
    pub best_rank: Option<u32>,
    #[serde(default)]
    pub best_target: Option<String>,
    pub best_benchmark: Option<String>,
    pub best_cosine: Option<f64>,
    pub label: Option<Label>,
}

impl ScoreRecord {
    pub fn new(score: &SelectionScore, label: Option<Label>) -> Self {
        let a = score.attribution.as_ref();
        ScoreRecord {
            id: score.doc_id.clone(),
            score: score.aggregate_value,
            best_rank: a.map(|a| a.best_rank),
            best_target: a.map(|a| a.best_target_id.clone()),
            best_benchmark: a.map(|a| a.best_benchmark_id.clone()),
            best_cosine: a.map(|a| a.best_cosine),
            label,
        }
    }

    pub fn to_selection_score(&self) -> SelectionScore {
        let attribution = match (&self.best_rank, &self.best_benchmark, &self.best_cosine) {
            (Some(rank), Some(bench), Some(cos)) => Some(Attribution {
                best_rank: *rank,
                best_target_id: self.best_target.clone().unwrap_or_default(),
                best_benchmark_id: bench.clone(),
                best_cosine: *cos,
            }),
            _ => None,
        };
        SelectionScore {
            doc_id: self.id.clone(),
            aggregate_value: self.score,
            attribution,
        }
    }
}
