use serde::{Deserialize, Serialize};

use crate::scorer::features::{featurize, Vocab};

pub const NEGATIVE: usize = 0;
pub const POSITIVE: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub lr: f64,
    pub dim: usize,
    pub epochs: usize,
    pub min_count: u64,
    pub order: usize,
    pub bucket_count: usize,
    /// Accepted and recorded, unused by supervised bag-of-n-grams training.
    pub window: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lr: 0.03,
            dim: 128,
            epochs: 5,
            min_count: 5,
            order: 2,
            bucket_count: 2_000_000,
            window: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NGramLinearClassifier {
    pub(crate) hyper: Hyperparams,
    pub(crate) vocab: Vocab,
    /// `(vocab.len() + bucket_count) × dim`, row-major.
    pub(crate) input: Vec<f32>,
    /// `2 × dim`, one row per class.
    pub(crate) output: Vec<f32>,
}

impl NGramLinearClassifier {
    /// A model whose weights are all zero; it predicts 0.5 everywhere.
    pub fn zeros(hyper: Hyperparams, vocab: Vocab) -> Self {
        let rows = vocab.len() + hyper.bucket_count;
        NGramLinearClassifier {
            input: vec![0.0; rows * hyper.dim],
            output: vec![0.0; 2 * hyper.dim],
            hyper,
            vocab,
        }
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn features(&self, text: &str) -> Vec<u64> {
        featurize(text, self.hyper.order, &self.vocab, self.hyper.bucket_count)
    }

    /// Writes the mean of the feature rows; false when there are no features.
    pub(crate) fn hidden(&self, features: &[u64], out: &mut [f32]) -> bool {
        out.iter_mut().for_each(|v| *v = 0.0);
        if features.is_empty() {
            return false;
        }
        let dim = self.hyper.dim;
        for &f in features {
            let row = &self.input[f as usize * dim..(f as usize + 1) * dim];
            out.iter_mut().zip(row).for_each(|(h, w)| *h += w);
        }
        let inv = 1.0 / features.len() as f32;
        out.iter_mut().for_each(|h| *h *= inv);
        true
    }

    pub(crate) fn class_probs(&self, hidden: &[f32]) -> [f32; 2] {
        let dim = self.hyper.dim;
        let mut logits = [0f32; 2];
        for (c, logit) in logits.iter_mut().enumerate() {
            *logit = self.output[c * dim..(c + 1) * dim]
                .iter()
                .zip(hidden)
                .map(|(w, h)| w * h)
                .sum();
        }
        softmax2(logits)
    }

    /// Probability that `text` belongs to the positive class. Texts without
    /// features have a zero hidden vector and get exactly 0.5.
    pub fn predict(&self, text: &str) -> f64 {
        let feats = self.features(text);
        let mut hidden = vec![0f32; self.hyper.dim];
        self.hidden(&feats, &mut hidden);
        self.class_probs(&hidden)[POSITIVE] as f64
    }
}

pub(crate) fn softmax2(logits: [f32; 2]) -> [f32; 2] {
    let max = logits[0].max(logits[1]);
    let e0 = (logits[0] - max).exp();
    let e1 = (logits[1] - max).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}
