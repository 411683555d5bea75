use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::features::Vocab;
use crate::scorer::model::{softmax2, Hyperparams, NGramLinearClassifier, NEGATIVE, POSITIVE};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText {
    pub text: String,
    pub positive: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Balancing {
    DownsampleMajority,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub examples: Vec<LabeledText>,
    pub balancing: Balancing,
    pub holdout_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub positives: usize,
    pub negatives: usize,
    pub train_examples: usize,
    pub holdout_examples: usize,
    pub holdout_accuracy: Option<f64>,
    pub vocab_size: usize,
    /// False for the shared-weight parallel trainer.
    pub deterministic: bool,
    pub threads: usize,
}

// Independent ChaCha streams per purpose, all derived from the one seed.
const STREAM_BALANCE: u64 = 1;
const STREAM_HOLDOUT: u64 = 2;
const STREAM_INIT: u64 = 3;
const STREAM_ORDER: u64 = 4;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Downsamples the majority class to the minority count. Kept examples stay
/// in input order; the result is a pure function of `(examples, seed)`.
pub fn balance(examples: &[LabeledText], balancing: Balancing, seed: u64) -> Vec<LabeledText> {
    if balancing == Balancing::None {
        return examples.to_vec();
    }
    let pos: Vec<usize> = (0..examples.len())
        .filter(|&i| examples[i].positive)
        .collect();
    let neg: Vec<usize> = (0..examples.len())
        .filter(|&i| !examples[i].positive)
        .collect();
    let (mut major, minor) = if pos.len() >= neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };
    let (kept, _) = major.partial_shuffle(&mut rng(seed, STREAM_BALANCE), minor.len());
    let mut keep: Vec<usize> = kept.iter().copied().chain(minor).collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| examples[i].clone()).collect()
}

/// Shuffles and splits off `round(fraction · n)` holdout examples.
pub fn split_holdout(
    mut examples: Vec<LabeledText>,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledText>, Vec<LabeledText>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "holdout fraction must be in [0, 1), got {fraction}"
        )));
    }
    examples.shuffle(&mut rng(seed, STREAM_HOLDOUT));
    let n_holdout = (fraction * examples.len() as f64).round() as usize;
    let train = examples.split_off(n_holdout);
    Ok((train, examples))
}

fn prepare(
    ts: &TrainingSet,
    hyper: &Hyperparams,
    seed: u64,
) -> Result<(Vec<LabeledText>, Vec<LabeledText>, usize, usize)> {
    if hyper.dim == 0 || hyper.epochs == 0 || hyper.order == 0 {
        return Err(Error::invalid("dim, epochs and order must be positive"));
    }
    if !(hyper.lr > 0.0 && hyper.lr.is_finite()) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    let balanced = balance(&ts.examples, ts.balancing, seed);
    let positives = balanced.iter().filter(|e| e.positive).count();
    let negatives = balanced.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid(format!(
            "training needs both classes, got {positives} positive and {negatives} negative"
        )));
    }
    let (train, holdout) = split_holdout(balanced, ts.holdout_fraction, seed)?;
    Ok((train, holdout, positives, negatives))
}

fn init_model(train: &[LabeledText], hyper: &Hyperparams, seed: u64) -> NGramLinearClassifier {
    let vocab = Vocab::build(train.iter().map(|e| e.text.as_str()), hyper.min_count);
    let mut model = NGramLinearClassifier::zeros(hyper.clone(), vocab);
    let bound = 1.0 / hyper.dim as f32;
    let mut r = rng(seed, STREAM_INIT);
    model
        .input
        .iter_mut()
        .for_each(|w| *w = r.gen_range(-bound..bound));
    model
}

fn holdout_accuracy(model: &NGramLinearClassifier, holdout: &[LabeledText]) -> Option<f64> {
    if holdout.is_empty() {
        return None;
    }
    let correct = holdout
        .iter()
        .filter(|e| (model.predict(&e.text) > 0.5) == e.positive)
        .count();
    Some(correct as f64 / holdout.len() as f64)
}

/// One softmax SGD step on a single example, updating weights in place.
fn sgd_step(
    model: &mut NGramLinearClassifier,
    feats: &[u64],
    label: usize,
    lr: f32,
    hidden: &mut [f32],
    grad: &mut [f32],
) {
    if !model.hidden(feats, hidden) {
        return;
    }
    let dim = model.hyper.dim;
    let probs = model.class_probs(hidden);
    grad.iter_mut().for_each(|g| *g = 0.0);
    for c in [NEGATIVE, POSITIVE] {
        let target = if c == label { 1.0 } else { 0.0 };
        let alpha = lr * (target - probs[c]);
        let row = &mut model.output[c * dim..(c + 1) * dim];
        for ((g, w), h) in grad.iter_mut().zip(row.iter_mut()).zip(hidden.iter()) {
            *g += alpha * *w;
            *w += alpha * h;
        }
    }
    let scale = 1.0 / feats.len() as f32;
    for &f in feats {
        let row = &mut model.input[f as usize * dim..(f as usize + 1) * dim];
        row.iter_mut()
            .zip(grad.iter())
            .for_each(|(w, g)| *w += g * scale);
    }
}

fn label_of(e: &LabeledText) -> usize {
    if e.positive {
        POSITIVE
    } else {
        NEGATIVE
    }
}

/// Single-threaded training; `(examples, hyper, seed)` determine the model
/// bit for bit. The learning rate decays linearly from `lr` to 0 over all
/// example visits.
pub fn train(
    ts: &TrainingSet,
    hyper: &Hyperparams,
    seed: u64,
) -> Result<(NGramLinearClassifier, TrainReport)> {
    let (train, holdout, positives, negatives) = prepare(ts, hyper, seed)?;
    let mut model = init_model(&train, hyper, seed);
    let feats: Vec<Vec<u64>> = train.iter().map(|e| model.features(&e.text)).collect();
    let labels: Vec<usize> = train.iter().map(label_of).collect();

    let total = (hyper.epochs * train.len()).max(1) as f64;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = rng(seed, STREAM_ORDER);
    let mut hidden = vec![0f32; hyper.dim];
    let mut grad = vec![0f32; hyper.dim];
    let mut step = 0usize;
    for _ in 0..hyper.epochs {
        order.shuffle(&mut shuffle_rng);
        for &i in &order {
            let lr = (hyper.lr * (1.0 - step as f64 / total)) as f32;
            step += 1;
            sgd_step(&mut model, &feats[i], labels[i], lr, &mut hidden, &mut grad);
        }
    }

    let report = TrainReport {
        positives,
        negatives,
        train_examples: train.len(),
        holdout_examples: holdout.len(),
        holdout_accuracy: holdout_accuracy(&model, &holdout),
        vocab_size: model.vocab.len(),
        deterministic: true,
        threads: 1,
    };
    Ok((model, report))
}

fn load(w: &AtomicU32) -> f32 {
    f32::from_bits(w.load(Ordering::Relaxed))
}

fn add(w: &AtomicU32, delta: f32) {
    w.store((load(w) + delta).to_bits(), Ordering::Relaxed);
}

/// Lock-free parallel training: threads share the weights and update them
/// without synchronization, so results vary from run to run.
pub fn train_parallel(
    ts: &TrainingSet,
    hyper: &Hyperparams,
    seed: u64,
    threads: usize,
) -> Result<(NGramLinearClassifier, TrainReport)> {
    let threads = threads.max(1);
    let (train, holdout, positives, negatives) = prepare(ts, hyper, seed)?;
    let mut model = init_model(&train, hyper, seed);
    let feats: Vec<Vec<u64>> = train.iter().map(|e| model.features(&e.text)).collect();
    let labels: Vec<usize> = train.iter().map(label_of).collect();

    let input: Vec<AtomicU32> = model
        .input
        .iter()
        .map(|w| AtomicU32::new(w.to_bits()))
        .collect();
    let output: Vec<AtomicU32> = model
        .output
        .iter()
        .map(|w| AtomicU32::new(w.to_bits()))
        .collect();
    let dim = hyper.dim;
    let total = (hyper.epochs * train.len()).max(1) as f64;
    let progress = AtomicU64::new(0);

    std::thread::scope(|scope| {
        for t in 0..threads {
            let (input, output, feats, labels, progress) =
                (&input, &output, &feats, &labels, &progress);
            scope.spawn(move || {
                let mut shard: Vec<usize> = (t..feats.len()).step_by(threads).collect();
                let mut r = rng(
                    seed ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                    STREAM_ORDER,
                );
                let mut hidden = vec![0f32; dim];
                let mut grad = vec![0f32; dim];
                for _ in 0..hyper.epochs {
                    shard.shuffle(&mut r);
                    for &i in &shard {
                        let step = progress.fetch_add(1, Ordering::Relaxed);
                        let lr = (hyper.lr * (1.0 - step as f64 / total).max(0.0)) as f32;
                        let f = &feats[i];
                        if f.is_empty() {
                            continue;
                        }
                        hidden.iter_mut().for_each(|h| *h = 0.0);
                        for &id in f {
                            let row = &input[id as usize * dim..(id as usize + 1) * dim];
                            hidden.iter_mut().zip(row).for_each(|(h, w)| *h += load(w));
                        }
                        let inv = 1.0 / f.len() as f32;
                        hidden.iter_mut().for_each(|h| *h *= inv);
                        let mut logits = [0f32; 2];
                        for (c, logit) in logits.iter_mut().enumerate() {
                            *logit = output[c * dim..(c + 1) * dim]
                                .iter()
                                .zip(&hidden)
                                .map(|(w, h)| load(w) * h)
                                .sum();
                        }
                        let probs = softmax2(logits);
                        grad.iter_mut().for_each(|g| *g = 0.0);
                        for c in [NEGATIVE, POSITIVE] {
                            let target = if c == labels[i] { 1.0 } else { 0.0 };
                            let alpha = lr * (target - probs[c]);
                            let row = &output[c * dim..(c + 1) * dim];
                            for ((g, w), h) in grad.iter_mut().zip(row).zip(&hidden) {
                                *g += alpha * load(w);
                                add(w, alpha * h);
                            }
                        }
                        for &id in f {
                            let row = &input[id as usize * dim..(id as usize + 1) * dim];
                            row.iter().zip(&grad).for_each(|(w, g)| add(w, g * inv));
                        }
                    }
                }
            });
        }
    });

    model.input = input
        .into_iter()
        .map(|w| f32::from_bits(w.into_inner()))
        .collect();
    model.output = output
        .into_iter()
        .map(|w| f32::from_bits(w.into_inner()))
        .collect();
    let report = TrainReport {
        positives,
        negatives,
        train_examples: train.len(),
        holdout_examples: holdout.len(),
        holdout_accuracy: holdout_accuracy(&model, &holdout),
        vocab_size: model.vocab.len(),
        deterministic: false,
        threads,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable(n: usize, seed: u64) -> Vec<LabeledText> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let positive = i % 3 == 0;
                let prefix = if positive { "alpha" } else { "beta" };
                let len = r.gen_range(5..15);
                let text = (0..len)
                    .map(|_| format!("{prefix}{}", r.gen_range(0..50)))
                    .collect::<Vec<_>>()
                    .join(" ");
                LabeledText { text, positive }
            })
            .collect()
    }

    fn small_hyper() -> Hyperparams {
        Hyperparams {
            dim: 16,
            bucket_count: 4096,
            min_count: 1,
            ..Default::default()
        }
    }

    #[test]
    fn downsampling_balances_exactly() {
        let ex = separable(1000, 1);
        let b = balance(&ex, Balancing::DownsampleMajority, 9);
        let pos = b.iter().filter(|e| e.positive).count();
        assert_eq!(pos, b.len() - pos);
        assert_eq!(b, balance(&ex, Balancing::DownsampleMajority, 9));
        assert_eq!(balance(&ex, Balancing::None, 9), ex);
    }

    #[test]
    fn holdout_is_disjoint() {
        let ex: Vec<LabeledText> = (0..100)
            .map(|i| LabeledText {
                text: format!("t{i}"),
                positive: i % 2 == 0,
            })
            .collect();
        let (train, holdout) = split_holdout(ex, 0.2, 4).unwrap();
        assert_eq!((train.len(), holdout.len()), (80, 20));
        assert!(holdout.iter().all(|h| !train.contains(h)));
    }

    #[test]
    fn single_class_is_rejected() {
        let ts = TrainingSet {
            examples: vec![
                LabeledText {
                    text: "a".into(),
                    positive: true,
                };
                4
            ],
            balancing: Balancing::None,
            holdout_fraction: 0.0,
        };
        assert!(train(&ts, &small_hyper(), 0).is_err());
    }

    #[test]
    fn separable_corpus_is_learned_deterministically() {
        let ts = TrainingSet {
            examples: separable(2000, 3),
            balancing: Balancing::DownsampleMajority,
            holdout_fraction: 0.2,
        };
        let (m1, r1) = train(&ts, &small_hyper(), 11).unwrap();
        let (m2, _) = train(&ts, &small_hyper(), 11).unwrap();
        assert_eq!(m1, m2);
        assert!(r1.holdout_accuracy.unwrap() >= 0.99, "{r1:?}");
        assert!(m1.predict("alpha1 alpha2 alpha3") > 0.5);
        assert!(m1.predict("beta1 beta2 beta3") < 0.5);

        let hot = Hyperparams {
            lr: 0.5,
            epochs: 20,
            ..small_hyper()
        };
        let (m3, _) = train(&ts, &hot, 11).unwrap();
        assert!(m3.predict("alpha1 alpha2 alpha3") > 0.9);
        assert!(m3.predict("beta1 beta2 beta3") < 0.1);
    }

    #[test]
    fn parallel_mode_learns_and_is_flagged() {
        let ts = TrainingSet {
            examples: separable(2000, 5),
            balancing: Balancing::DownsampleMajority,
            holdout_fraction: 0.2,
        };
        let (_, report) = train_parallel(&ts, &small_hyper(), 2, 3).unwrap();
        assert!(!report.deterministic);
        assert_eq!(report.threads, 3);
        assert!(report.holdout_accuracy.unwrap() >= 0.95, "{report:?}");
    }
}
