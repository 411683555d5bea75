#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use betr_core::corpus::EmbeddingStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub fn gauss(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

fn unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| gauss(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn jitter(rng: &mut impl Rng, center: &[f64], scale: f64) -> Vec<f64> {
    center.iter().map(|c| c + scale * gauss(rng)).collect()
}

fn words(rng: &mut impl Rng, prefix: &str, vocab: usize, n: usize) -> Vec<String> {
    (0..n)
        .map(|_| format!("{prefix}{}", rng.gen_range(0..vocab)))
        .collect()
}

pub struct SynthSpec {
    pub docs: usize,
    pub benchmarks: usize,
    pub dim: usize,
    pub train_per_benchmark: usize,
    pub test_per_benchmark: usize,
    /// On-topic documents that quote a test question verbatim.
    pub contaminated: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            docs: 1000,
            benchmarks: 2,
            dim: 16,
            train_per_benchmark: 30,
            test_per_benchmark: 10,
            contaminated: 5,
            seed: 3,
        }
    }
}

/// Writes documents, benchmarks and both embedding files into `dir`. A
/// sixth of the documents are on a benchmark's topic, in text and in
/// embedding space.
pub fn write_inputs(dir: &Path, spec: &SynthSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<Vec<f64>> = (0..spec.benchmarks)
        .map(|_| unit(&mut rng, spec.dim))
        .collect();

    let mut bench_lines = String::new();
    let mut bench_emb = EmbeddingStore::new(spec.dim).unwrap();
    let mut test_questions = Vec::new();
    for (b, center) in centers.iter().enumerate() {
        let per = spec.train_per_benchmark + spec.test_per_benchmark;
        for i in 0..per {
            let split = if i < spec.train_per_benchmark {
                "train"
            } else {
                "test"
            };
            let question = words(&mut rng, &format!("b{b}w"), 60, 12).join(" ");
            let answer = words(&mut rng, &format!("b{b}w"), 60, 3).join(" ");
            if split == "test" {
                test_questions.push(question.clone());
            }
            let rec = json!({
                "benchmark_id": format!("bench{b}"),
                "example_id": format!("ex{i}"),
                "split": split,
                "fields": { "question": question, "answer": answer },
            });
            bench_lines.push_str(&rec.to_string());
            bench_lines.push('\n');
            bench_emb
                .push(format!("bench{b}/ex{i}"), &jitter(&mut rng, center, 0.3))
                .unwrap();
        }
    }

    let mut doc_lines = String::new();
    let mut doc_emb = EmbeddingStore::new(spec.dim).unwrap();
    let mut planted = 0;
    for i in 0..spec.docs {
        let id = format!("doc{i:05}");
        let len = rng.gen_range(40..120);
        let topical = rng.gen_range(0..6) == 0;
        let (mut text, vector) = if topical {
            let b = rng.gen_range(0..spec.benchmarks);
            let mut t = words(&mut rng, &format!("b{b}w"), 60, len / 2);
            t.extend(words(&mut rng, "g", 500, len - len / 2));
            (t.join(" "), jitter(&mut rng, &centers[b], 0.5))
        } else {
            (
                words(&mut rng, "g", 500, len).join(" "),
                unit(&mut rng, spec.dim),
            )
        };
        if topical && planted < spec.contaminated {
            let q = &test_questions[planted % test_questions.len()];
            planted += 1;
            text = format!("{text} {q} {}", words(&mut rng, "g", 500, 30).join(" "));
        }
        doc_lines.push_str(&json!({ "id": id, "text": text }).to_string());
        doc_lines.push('\n');
        doc_emb.push(id, &vector).unwrap();
    }

    fs::write(dir.join("docs.jsonl"), doc_lines).unwrap();
    fs::write(dir.join("bench.jsonl"), bench_lines).unwrap();
    doc_emb.save(dir.join("docs.emb")).unwrap();
    bench_emb.save(dir.join("bench.emb")).unwrap();
}

pub const CONFIG: &str = r#"[run]
seed = 17
workers = 2
output_dir = "out"

[inputs]
documents = "docs.jsonl"
benchmarks = "bench.jsonl"
document_embeddings = "docs.emb"
benchmark_embeddings = "bench.emb"

[sample]
size = 400

[targets]
granularity = { kind = "per_example" }
sampling = { kind = "equal_per_benchmark", m = 20 }

[rank]
label_fraction = 0.1

[scorer]
holdout_fraction = 0.1

[scorer.hyperparams]
dim = 16
bucket_count = 4096
min_count = 1
epochs = 5
lr = 0.1

[calibrate]
target_fraction = 0.1
holdout_size = 400
"#;

/// Inputs plus `run.toml` (with `extra` appended) in `dir`; returns the
/// config path.
pub fn setup_run(dir: &Path, spec: &SynthSpec, extra: &str) -> PathBuf {
    write_inputs(dir, spec);
    let path = dir.join("run.toml");
    fs::write(&path, format!("{CONFIG}{extra}")).unwrap();
    path
}
