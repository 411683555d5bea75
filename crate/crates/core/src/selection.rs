//! Token-share threshold calibration and pool filtering.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Reservoir};
use crate::error::{Error, Result};

/// A document's classifier score and token count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub id: String,
    pub score: f64,
    pub token_count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub target_fraction: f64,
    pub holdout_size: u64,
    pub threshold: f64,
    /// Token share of holdout documents scoring at least `threshold`.
    pub achieved_fraction: f64,
    pub seed: Option<u64>,
    /// Set when a single boundary document overshoots the target by itself.
    pub warning: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterStats {
    pub docs_total: u64,
    pub docs_kept: u64,
    pub tokens_total: u64,
    pub tokens_kept: u64,
    pub token_fraction: f64,
}

impl FilterStats {
    fn finish(mut self) -> Self {
        self.token_fraction = if self.tokens_total == 0 {
            0.0
        } else {
            self.tokens_kept as f64 / self.tokens_total as f64
        };
        self
    }

    fn merge(self, other: Self) -> Self {
        FilterStats {
            docs_total: self.docs_total + other.docs_total,
            docs_kept: self.docs_kept + other.docs_kept,
            tokens_total: self.tokens_total + other.tokens_total,
            tokens_kept: self.tokens_kept + other.tokens_kept,
            token_fraction: 0.0,
        }
    }
}

fn by_score_desc(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.id.cmp(&b.id))
}

/// Picks the threshold at which the cumulative token share of the
/// descending-score order first reaches `target_fraction`. Target 1.0 keeps
/// every document.
pub fn calibrate_threshold(
    scored_holdout: &[ScoredDoc],
    target_fraction: f64,
) -> Result<ThresholdCalibration> {
    if !(target_fraction > 0.0 && target_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "target fraction must be in (0, 1], got {target_fraction}"
        )));
    }
    if scored_holdout.is_empty() {
        return Err(Error::invalid("calibration holdout is empty"));
    }
    if let Some(d) = scored_holdout.iter().find(|d| !d.score.is_finite()) {
        return Err(Error::invalid(format!("non-finite score for {:?}", d.id)));
    }
    let total: u64 = scored_holdout.iter().map(|d| d.token_count).sum();
    if total == 0 {
        return Err(Error::invalid("calibration holdout has no tokens"));
    }

    let mut sorted: Vec<&ScoredDoc> = scored_holdout.iter().collect();
    sorted.sort_by(|a, b| by_score_desc(a, b));
    let goal = target_fraction * total as f64;
    let mut cum = 0u64;
    let mut boundary = sorted.len() - 1;
    for (i, d) in sorted.iter().enumerate() {
        cum += d.token_count;
        // Tolerance keeps e.g. 0.1 · 1000 from missing 100 by one ulp.
        if cum as f64 >= goal * (1.0 - 1e-12) {
            boundary = i;
            break;
        }
    }
    let threshold = sorted[boundary].score;
    let kept: u64 = sorted
        .iter()
        .take_while(|d| d.score >= threshold)
        .map(|d| d.token_count)
        .sum();
    let warning = sorted[boundary].token_count as f64 > goal;
    Ok(ThresholdCalibration {
        target_fraction,
        holdout_size: scored_holdout.len() as u64,
        threshold,
        achieved_fraction: kept as f64 / total as f64,
        seed: None,
        warning,
    })
}

/// Draws a uniform holdout of `holdout_size` documents (skipping `exclude`)
/// and calibrates on it. Small pools are used whole.
pub fn calibrate_on_holdout(
    scored: impl IntoIterator<Item = ScoredDoc>,
    target_fraction: f64,
    holdout_size: usize,
    seed: u64,
    exclude: &HashSet<String>,
) -> Result<ThresholdCalibration> {
    let mut reservoir = Reservoir::new(holdout_size, seed);
    for d in scored {
        if !exclude.contains(&d.id) {
            reservoir.offer(d);
        }
    }
    let holdout = reservoir.into_sorted();
    let mut cal = calibrate_threshold(&holdout, target_fraction)?;
    cal.seed = Some(seed);
    Ok(cal)
}

/// Calibrates one threshold per target fraction on the same holdout.
pub fn calibrate_sweep(
    scored_holdout: &[ScoredDoc],
    targets: &[f64],
) -> Result<Vec<ThresholdCalibration>> {
    targets
        .iter()
        .map(|&t| calibrate_threshold(scored_holdout, t))
        .collect()
}

const SHARD: usize = 4096;

/// Keeps documents scoring at least `threshold`, preserving order. Shards
/// are filtered in parallel and their stats summed.
pub fn filter_pool(
    corpus: &[Document],
    scores: &HashMap<String, f64>,
    threshold: f64,
) -> Result<(Vec<Document>, FilterStats)> {
    let shards: Vec<Result<(Vec<Document>, FilterStats)>> = corpus
        .par_chunks(SHARD)
        .map(|shard| {
            let mut kept = Vec::new();
            let mut stats = FilterStats::default();
            for doc in shard {
                let score = *scores
                    .get(&doc.id)
                    .ok_or_else(|| Error::MissingScore(doc.id.clone()))?;
                stats.docs_total += 1;
                stats.tokens_total += doc.token_count;
                if score >= threshold {
                    stats.docs_kept += 1;
                    stats.tokens_kept += doc.token_count;
                    kept.push(doc.clone());
                }
            }
            Ok((kept, stats))
        })
        .collect();
    let mut out = Vec::new();
    let mut stats = FilterStats::default();
    for shard in shards {
        let (kept, s) = shard?;
        out.extend(kept);
        stats = stats.merge(s);
    }
    Ok((out, stats.finish()))
}

/// Stats-only filter over scored records.
pub fn filter_stats(scored: &[ScoredDoc], threshold: f64) -> FilterStats {
    scored
        .par_chunks(SHARD)
        .map(|shard| {
            let mut s = FilterStats::default();
            for d in shard {
                s.docs_total += 1;
                s.tokens_total += d.token_count;
                if d.score >= threshold {
                    s.docs_kept += 1;
                    s.tokens_kept += d.token_count;
                }
            }
            s
        })
        .reduce(FilterStats::default, FilterStats::merge)
        .finish()
}
