use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingStore;
use crate::error::{Error, Result};
use crate::ranker::TargetSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RankMode {
    /// Full per-target ranking of every sampled document.
    Exact,
    /// Keep each target's `k` best documents; every other (target, document)
    /// pair gets the floor rank, i.e. the sample size.
    TopK { k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankOptions {
    pub mode: RankMode,
    /// Documents per similarity tile. Results do not depend on it.
    pub block_size: usize,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions {
            mode: RankMode::Exact,
            block_size: 8192,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetRef {
    pub target_id: String,
    pub benchmark_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Hit {
    pub target: u32,
    pub rank: u32,
    pub sim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Entries {
    /// Document-major `n × m` matrices.
    Exact { ranks: Vec<u32>, sims: Vec<f64> },
    TopK {
        per_doc: Vec<Vec<Hit>>,
        /// Highest cosine over all targets and the target reaching it.
        best: Vec<(f64, u32)>,
    },
}

/// Ranks of every sampled document under every target.
#[derive(Clone, Debug, PartialEq)]
pub struct RankMatrix {
    pub(crate) mode: RankMode,
    pub(crate) doc_ids: Vec<String>,
    pub(crate) targets: Vec<TargetRef>,
    pub(crate) entries: Entries,
}

impl RankMatrix {
    pub fn mode(&self) -> RankMode {
        self.mode
    }

    pub fn sample_size(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn targets(&self) -> &[TargetRef] {
        &self.targets
    }

    /// The floor rank given to unlisted pairs in top-k mode.
    pub fn floor_rank(&self) -> u32 {
        self.doc_ids.len() as u32
    }

    pub fn rank(&self, doc: usize, target: usize) -> u32 {
        match &self.entries {
            Entries::Exact { ranks, .. } => ranks[doc * self.targets.len() + target],
            Entries::TopK { per_doc, .. } => per_doc[doc]
                .iter()
                .find(|h| h.target as usize == target)
                .map_or(self.floor_rank(), |h| h.rank),
        }
    }

    /// Cosine similarity of a pair; in top-k mode only listed pairs are known.
    pub fn cosine(&self, doc: usize, target: usize) -> Option<f64> {
        match &self.entries {
            Entries::Exact { sims, .. } => Some(sims[doc * self.targets.len() + target]),
            Entries::TopK { per_doc, .. } => per_doc[doc]
                .iter()
                .find(|h| h.target as usize == target)
                .map(|h| h.sim),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Descending similarity, then ascending id.
fn rank_order(sa: f64, sb: f64, ida: &str, idb: &str) -> Ordering {
    sb.partial_cmp(&sa)
        .expect("similarities are finite")
        .then_with(|| ida.cmp(idb))
}

fn doc_norms(sample: &EmbeddingStore) -> Result<Vec<f64>> {
    (0..sample.len())
        .map(|i| {
            let norm = dot(sample.row(i), sample.row(i)).sqrt();
            if norm > 0.0 {
                Ok(norm)
            } else {
                Err(Error::invalid(format!(
                    "document embedding {:?} is the zero vector",
                    sample.ids()[i]
                )))
            }
        })
        .collect()
}

/// Fills one tile of document-major similarities.
fn tile_sims(
    sample: &EmbeddingStore,
    norms: &[f64],
    targets: &TargetSet,
    start: usize,
    out: &mut [f64],
) {
    let m = targets.len();
    for (local, row_out) in out.chunks_mut(m).enumerate() {
        let d = start + local;
        let row = sample.row(d);
        for (t, target) in targets.targets.iter().enumerate() {
            row_out[t] = dot(row, &target.vector) / norms[d];
        }
    }
}

pub fn rank_documents(
    sample: &EmbeddingStore,
    targets: &TargetSet,
    opts: &RankOptions,
) -> Result<RankMatrix> {
    if sample.is_empty() {
        return Err(Error::invalid("cannot rank an empty sample"));
    }
    if targets.is_empty() {
        return Err(Error::invalid("target set is empty"));
    }
    if sample.dim() != targets.dim {
        return Err(Error::DimMismatch {
            expected: targets.dim,
            got: sample.dim(),
        });
    }
    if let Some(t) = targets
        .targets
        .iter()
        .find(|t| t.vector.len() != targets.dim)
    {
        return Err(Error::DimMismatch {
            expected: targets.dim,
            got: t.vector.len(),
        });
    }
    if opts.block_size == 0 {
        return Err(Error::invalid("block size must be positive"));
    }
    if sample.len() > u32::MAX as usize || targets.len() > u32::MAX as usize {
        return Err(Error::invalid("sample or target set too large"));
    }
    let norms = doc_norms(sample)?;
    let refs = targets
        .targets
        .iter()
        .map(|t| TargetRef {
            target_id: t.target_id.clone(),
            benchmark_id: t.benchmark_id.clone(),
        })
        .collect();
    let entries = match opts.mode {
        RankMode::Exact => rank_exact(sample, &norms, targets, opts.block_size),
        RankMode::TopK { k } => {
            if k == 0 {
                return Err(Error::invalid("top-k mode needs k >= 1"));
            }
            rank_topk(sample, &norms, targets, opts.block_size, k)
        }
    };
    Ok(RankMatrix {
        mode: opts.mode,
        doc_ids: sample.ids().to_vec(),
        targets: refs,
        entries,
    })
}

fn rank_exact(
    sample: &EmbeddingStore,
    norms: &[f64],
    targets: &TargetSet,
    block: usize,
) -> Entries {
    let (n, m) = (sample.len(), targets.len());
    let ids = sample.ids();
    let mut sims = vec![0.0; n * m];
    sims.par_chunks_mut(block * m)
        .enumerate()
        .for_each(|(b, chunk)| tile_sims(sample, norms, targets, b * block, chunk));

    let per_target: Vec<Vec<u32>> = (0..m)
        .into_par_iter()
        .map(|t| {
            let mut order: Vec<u32> = (0..n as u32).collect();
            order.sort_unstable_by(|&a, &b| {
                let (a, b) = (a as usize, b as usize);
                rank_order(sims[a * m + t], sims[b * m + t], &ids[a], &ids[b])
            });
            order
        })
        .collect();
    let mut ranks = vec![0u32; n * m];
    for (t, order) in per_target.iter().enumerate() {
        for (pos, &d) in order.iter().enumerate() {
            ranks[d as usize * m + t] = pos as u32 + 1;
        }
    }
    Entries::Exact { ranks, sims }
}

struct TileTop {
    /// Per target, the tile's best `k` as `(sim, doc)`.
    lists: Vec<Vec<(f64, u32)>>,
    best: Vec<(f64, u32)>,
}

fn rank_topk(
    sample: &EmbeddingStore,
    norms: &[f64],
    targets: &TargetSet,
    block: usize,
    k: usize,
) -> Entries {
    let (n, m) = (sample.len(), targets.len());
    let ids = sample.ids();
    let cmp = |a: &(f64, u32), b: &(f64, u32)| {
        rank_order(a.0, b.0, &ids[a.1 as usize], &ids[b.1 as usize])
    };
    let n_blocks = n.div_ceil(block);
    let tiles: Vec<TileTop> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * block;
            let len = block.min(n - start);
            let mut sims = vec![0.0; len * m];
            tile_sims(sample, norms, targets, start, &mut sims);
            let best = sims
                .chunks(m)
                .map(|row| {
                    let mut best = (row[0], 0u32);
                    for (t, &s) in row.iter().enumerate().skip(1) {
                        if s > best.0 {
                            best = (s, t as u32);
                        }
                    }
                    best
                })
                .collect();
            let lists = (0..m)
                .map(|t| {
                    let mut cand: Vec<(f64, u32)> = (0..len)
                        .map(|i| (sims[i * m + t], (start + i) as u32))
                        .collect();
                    if cand.len() > k {
                        cand.select_nth_unstable_by(k - 1, cmp);
                        cand.truncate(k);
                    }
                    cand
                })
                .collect();
            TileTop { lists, best }
        })
        .collect();

    let mut per_doc: Vec<Vec<Hit>> = vec![Vec::new(); n];
    for t in 0..m {
        let mut merged: Vec<(f64, u32)> = tiles
            .iter()
            .flat_map(|tile| tile.lists[t].iter().copied())
            .collect();
        merged.sort_unstable_by(cmp);
        merged.truncate(k);
        for (pos, (sim, d)) in merged.into_iter().enumerate() {
            per_doc[d as usize].push(Hit {
                target: t as u32,
                rank: pos as u32 + 1,
                sim,
            });
        }
    }
    let best = tiles.into_iter().flat_map(|tile| tile.best).collect();
    Entries::TopK { per_doc, best }
}
