use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BenchmarkExample, EmbeddingStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Granularity {
    PerExample,
    PerBenchmarkCentroid,
    GlobalCentroid,
    /// Lloyd's k-means over the pooled selected examples of all benchmarks.
    Kmeans {
        k: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSampling {
    /// Exactly `m` examples per benchmark.
    EqualPerBenchmark {
        m: usize,
    },
    AllExamples,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub target_id: String,
    pub benchmark_id: String,
    /// Unit L2 norm.
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSet {
    pub dim: usize,
    pub granularity: Granularity,
    pub sampling: TargetSampling,
    pub targets: Vec<Target>,
}

impl TargetSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

pub(crate) fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| x / norm).collect())
}

fn mean_normalized<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for row in rows {
        acc.iter_mut().zip(row).for_each(|(a, x)| *a += x);
        n += 1;
    }
    if n == 0 {
        return None;
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    normalized(&acc)
}

struct Selected<'a> {
    example: &'a BenchmarkExample,
    vector: Vec<f64>,
}

/// Builds the target set.
///
/// Benchmarks are processed in ascending id order and examples in input
/// order. Example vectors are L2-normalized before use; centroids are
/// normalized again after averaging.
pub fn build_targets(
    benchmarks: &[BenchmarkExample],
    embeddings: &EmbeddingStore,
    granularity: Granularity,
    sampling: TargetSampling,
    seed: u64,
) -> Result<TargetSet> {
    let mut by_benchmark: BTreeMap<&str, Vec<&BenchmarkExample>> = BTreeMap::new();
    for ex in benchmarks {
        by_benchmark.entry(&ex.benchmark_id).or_default().push(ex);
    }
    if by_benchmark.is_empty() {
        return Err(Error::invalid(
            "no benchmark examples to build targets from",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: Vec<(&str, Vec<Selected>)> = Vec::with_capacity(by_benchmark.len());
    for (bench, examples) in by_benchmark {
        let chosen: Vec<&BenchmarkExample> = match sampling {
            TargetSampling::AllExamples => examples,
            TargetSampling::EqualPerBenchmark { m } => {
                if m == 0 {
                    return Err(Error::invalid("equal_per_benchmark needs m >= 1"));
                }
                if examples.len() < m {
                    return Err(Error::invalid(format!(
                        "benchmark {bench:?} has {} examples, fewer than {m}",
                        examples.len()
                    )));
                }
                let mut idx: Vec<usize> = (0..examples.len()).collect();
                let (head, _) = idx.partial_shuffle(&mut rng, m);
                let mut head = head.to_vec();
                head.sort_unstable();
                head.into_iter().map(|i| examples[i]).collect()
            }
        };
        let mut selected = Vec::with_capacity(chosen.len());
        for example in chosen {
            let key = example.key();
            let row = embeddings
                .get(&key)
                .ok_or_else(|| Error::MissingEmbedding(key.clone()))?;
            let vector = normalized(row)
                .ok_or_else(|| Error::invalid(format!("embedding {key:?} is the zero vector")))?;
            selected.push(Selected { example, vector });
        }
        groups.push((bench, selected));
    }

    let dim = embeddings.dim();
    let targets = match granularity {
        Granularity::PerExample => groups
            .iter()
            .flat_map(|(_, sel)| sel.iter())
            .map(|s| Target {
                target_id: s.example.key(),
                benchmark_id: s.example.benchmark_id.clone(),
                vector: s.vector.clone(),
            })
            .collect(),
        Granularity::PerBenchmarkCentroid => groups
            .iter()
            .map(|(bench, sel)| {
                let vector = mean_normalized(sel.iter().map(|s| s.vector.as_slice()), dim)
                    .ok_or_else(|| {
                        Error::invalid(format!("centroid of benchmark {bench:?} is degenerate"))
                    })?;
                Ok(Target {
                    target_id: bench.to_string(),
                    benchmark_id: bench.to_string(),
                    vector,
                })
            })
            .collect::<Result<_>>()?,
        Granularity::GlobalCentroid => {
            let vector = mean_normalized(
                groups
                    .iter()
                    .flat_map(|(_, sel)| sel.iter().map(|s| s.vector.as_slice())),
                dim,
            )
            .ok_or_else(|| Error::invalid("global centroid is degenerate"))?;
            vec![Target {
                target_id: "global".into(),
                benchmark_id: "global".into(),
                vector,
            }]
        }
        Granularity::Kmeans { k } => {
            let pooled: Vec<&Selected> = groups.iter().flat_map(|(_, sel)| sel.iter()).collect();
            kmeans_targets(&pooled, k, dim, &mut rng)?
        }
    };

    Ok(TargetSet {
        dim,
        granularity,
        sampling,
        targets,
    })
}

const KMEANS_MAX_ITERS: usize = 100;
const KMEANS_REL_SHIFT: f64 = 1e-6;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

fn kmeans_targets(
    points: &[&Selected],
    k: usize,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Target>> {
    if k == 0 || k > points.len() {
        return Err(Error::invalid(format!(
            "k-means needs 1 <= k <= {} examples, got k = {k}",
            points.len()
        )));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(rng);
    let mut centroids: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&i| points[i].vector.clone())
        .collect();
    let mut assign = vec![0usize; points.len()];

    for _ in 0..KMEANS_MAX_ITERS {
        for (a, p) in assign.iter_mut().zip(points) {
            *a = nearest(&p.vector, &centroids);
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(points) {
            counts[a] += 1;
            sums[a].iter_mut().zip(&p.vector).for_each(|(s, x)| *s += x);
        }
        let mut max_shift = 0.0f64;
        for c in 0..k {
            // Empty clusters keep their previous centroid.
            if counts[c] == 0 {
                continue;
            }
            let updated: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            let scale = centroids[c]
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
                .max(1e-12);
            max_shift = max_shift.max(sq_dist(&updated, &centroids[c]).sqrt() / scale);
            centroids[c] = updated;
        }
        if max_shift < KMEANS_REL_SHIFT {
            break;
        }
    }

    for (a, p) in assign.iter_mut().zip(points) {
        *a = nearest(&p.vector, &centroids);
    }
    let mut targets = Vec::with_capacity(k);
    for (c, centroid) in centroids.iter().enumerate() {
        let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
        for (&a, p) in assign.iter().zip(points) {
            if a == c {
                *votes.entry(&p.example.benchmark_id).or_default() += 1;
            }
        }
        let benchmark_id = match votes.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) {
            Some((bench, _)) => bench.to_string(),
            None => {
                let closest = points
                    .iter()
                    .min_by(|a, b| {
                        sq_dist(&a.vector, centroid).total_cmp(&sq_dist(&b.vector, centroid))
                    })
                    .expect("k <= points");
                closest.example.benchmark_id.clone()
            }
        };
        let vector = normalized(centroid)
            .ok_or_else(|| Error::invalid(format!("k-means centroid {c} collapsed to zero")))?;
        targets.push(Target {
            target_id: format!("cluster-{c}"),
            benchmark_id,
            vector,
        });
    }
    Ok(targets)
}
