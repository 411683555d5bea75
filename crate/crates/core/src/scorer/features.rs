use std::collections::HashMap;

use crate::hash::Fnv1a;

/// Word vocabulary: words seen at least `min_count` times, ordered by
/// descending count then ascending word.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: u64) -> Self {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for text in texts {
            for tok in text.split_whitespace() {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count.max(1))
            .collect();
        kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_entries(kept.into_iter().map(|(w, c)| (w.to_string(), c)))
    }

    pub(crate) fn from_entries(entries: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut vocab = Vocab::default();
        for (word, count) in entries {
            vocab.index.insert(word.clone(), vocab.words.len() as u32);
            vocab.words.push(word);
            vocab.counts.push(count);
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, u64)> {
        self.words
            .iter()
            .map(String::as_str)
            .zip(self.counts.iter().copied())
    }
}

/// Feature ids of `text`. Vocabulary words map to `0..vocab.len()`; every
/// n-gram of order `2..=order` (over all tokens, known or not) maps to
/// `vocab.len() + fnv1a(tokens joined by ' ') % bucket_count`. Ids come out
/// in text order, unigrams first for each position.
pub fn featurize(text: &str, order: usize, vocab: &Vocab, bucket_count: usize) -> Vec<u64> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let nwords = vocab.len() as u64;
    let mut out = Vec::with_capacity(tokens.len() * order.max(1));
    for (i, tok) in tokens.iter().enumerate() {
        if let Some(id) = vocab.get(tok) {
            out.push(id as u64);
        }
        if bucket_count == 0 {
            continue;
        }
        let mut h = Fnv1a::default();
        h.write(tok.as_bytes());
        for next in tokens.iter().skip(i + 1).take(order.saturating_sub(1)) {
            h.write(b" ");
            h.write(next.as_bytes());
            out.push(nwords + h.finish() % bucket_count as u64);
        }
    }
    out
}
