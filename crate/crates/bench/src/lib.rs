//! Seeded fixtures shared by the benchmarks.

use betr_core::corpus::EmbeddingStore;
use betr_core::ranker::{Granularity, Target, TargetSampling, TargetSet};
use betr_core::scaling::{LossLawParams, LossPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn row(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// `n` random documents with normalized rows.
pub fn sample_store(n: usize, dim: usize, seed: u64) -> EmbeddingStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = EmbeddingStore::new(dim).unwrap();
    for i in 0..n {
        store.push(format!("d{i:07}"), &row(&mut rng, dim)).unwrap();
    }
    store.normalize().unwrap();
    store
}

pub fn target_set(m: usize, dim: usize, seed: u64) -> TargetSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = (0..m)
        .map(|i| {
            let v = row(&mut rng, dim);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            Target {
                target_id: format!("t{i}"),
                benchmark_id: format!("b{}", i % 4),
                vector: v.into_iter().map(|x| x / norm).collect(),
            }
        })
        .collect();
    TargetSet {
        dim,
        granularity: Granularity::PerExample,
        sampling: TargetSampling::AllExamples,
        targets,
    }
}

/// Whitespace-separated text of `words` tokens over a small vocabulary.
pub fn texts(n: usize, words: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..words)
                .map(|_| format!("w{}", rng.gen_range(0..2000)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// The 8 × 8 model-size by token grid with losses from a known law and
/// 1% multiplicative noise.
pub fn loss_grid(seed: u64) -> Vec<LossPoint> {
    let truth = LossLawParams::from_linear(400.0, 900.0, 1.8, 0.33, 0.28);
    let ns = [50e6, 91e6, 175e6, 343e6, 790e6, 1.6e9, 3.1e9, 6.6e9];
    let ds = [1.1e9, 2.3e9, 4.7e9, 9.4e9, 19e9, 38e9, 76e9, 152e9];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ns.iter()
        .flat_map(|&n| ds.iter().map(move |&d| (n, d)))
        .map(|(n, d)| {
            let u: f64 = rng.gen_range(f64::EPSILON..1.0);
            let v: f64 = rng.gen();
            let z = (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos();
            LossPoint {
                n,
                d,
                loss: truth.predict(n, d) * (0.01 * z).exp(),
            }
        })
        .collect()
}
