use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};

/// The outcome of one reservoir pass over the pool.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub seed: u64,
    pub pool_size: u64,
    pub sample_size: u64,
    /// Sampled ids in pool order.
    pub sampled_ids: Vec<String>,
}

/// Algorithm R over a stream, remembering each item's stream position.
#[derive(Debug)]
pub struct Reservoir<T> {
    capacity: usize,
    seen: u64,
    items: Vec<(u64, T)>,
    rng: ChaCha8Rng,
}

impl<T> Reservoir<T> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Reservoir {
            capacity,
            seen: 0,
            items: Vec::with_capacity(capacity.min(1 << 20)),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn offer(&mut self, item: T) {
        let pos = self.seen;
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push((pos, item));
        } else if self.capacity > 0 {
            let j = self.rng.gen_range(0..self.seen);
            if (j as usize) < self.capacity {
                self.items[j as usize] = (pos, item);
            }
        }
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// Sampled items in stream order.
    pub fn into_sorted(mut self) -> Vec<T> {
        self.items.sort_unstable_by_key(|(pos, _)| *pos);
        self.items.into_iter().map(|(_, item)| item).collect()
    }
}

/// Uniform sample of `n` document ids without replacement.
pub fn sample_pool<I>(docs: I, n: usize, seed: u64) -> Result<SampleManifest>
where
    I: IntoIterator<Item = Result<Document>>,
{
    sample_pool_excluding(docs, n, seed, &HashSet::new())
}

/// Like [`sample_pool`], drawing only from documents whose id is not in
/// `exclude` (used to keep the calibration holdout disjoint from the ranking
/// sample). `pool_size` counts eligible documents only.
pub fn sample_pool_excluding<I>(
    docs: I,
    n: usize,
    seed: u64,
    exclude: &HashSet<String>,
) -> Result<SampleManifest>
where
    I: IntoIterator<Item = Result<Document>>,
{
    let mut reservoir = Reservoir::new(n, seed);
    for doc in docs {
        let doc = doc?;
        if !exclude.contains(&doc.id) {
            reservoir.offer(doc.id);
        }
    }
    let pool_size = reservoir.seen();
    if (n as u64) > pool_size {
        return Err(Error::invalid(format!(
            "sample size {n} exceeds pool size {pool_size}"
        )));
    }
    Ok(SampleManifest {
        seed,
        pool_size,
        sample_size: n as u64,
        sampled_ids: reservoir.into_sorted(),
    })
}
