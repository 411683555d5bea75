//! N-gram decontamination of a corpus against benchmark test sets.
//!
//! Text is matched on normalized tokens: whitespace split, lowercased, with
//! every non-alphanumeric character removed and empty tokens dropped. Each
//! token remembers its byte span in the original text, so excision works on
//! the untouched original.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, TokenCounter};
use crate::error::{Error, Result};
use crate::hash::Fnv1a;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecontamConfig {
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub excision_radius_chars: usize,
    pub max_splits: usize,
    pub common_ngram_skip_count: u64,
}

impl Default for DecontamConfig {
    fn default() -> Self {
        DecontamConfig {
            ngram_min: 8,
            ngram_max: 13,
            excision_radius_chars: 200,
            max_splits: 10,
            common_ngram_skip_count: 10_000,
        }
    }
}

impl DecontamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(Error::invalid(format!(
                "need 1 <= ngram_min <= ngram_max, got {}..{}",
                self.ngram_min, self.ngram_max
            )));
        }
        if self.max_splits == 0 || self.common_ngram_skip_count == 0 {
            return Err(Error::invalid(
                "max_splits and common_ngram_skip_count must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Token {
    pub norm: String,
    pub start: usize,
    pub end: usize,
}

pub(crate) fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut start = None;
    let push = |s: usize, e: usize, out: &mut Vec<Token>| {
        let norm: String = text[s..e]
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        if !norm.is_empty() {
            out.push(Token {
                norm,
                start: s,
                end: e,
            });
        }
    };
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                push(s, i, &mut out);
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        push(s, text.len(), &mut out);
    }
    out
}

/// Normalized form of `text`: its matching tokens joined by single spaces.
pub fn normalize(text: &str) -> String {
    join(&tokenize(text))
}

fn join(tokens: &[Token]) -> String {
    let mut s = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(&t.norm);
    }
    s
}

/// Calls `f(start, len, hash)` for every n-gram with `min <= len <= max`.
fn for_each_ngram(tokens: &[Token], min: usize, max: usize, mut f: impl FnMut(usize, usize, u64)) {
    for i in 0..tokens.len() {
        let mut h = Fnv1a::default();
        for len in 1..=max.min(tokens.len() - i) {
            if len > 1 {
                h.write(b" ");
            }
            h.write(tokens[i + len - 1].norm.as_bytes());
            if len >= min {
                f(i, len, h.finish());
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct IndexedNgram {
    text: String,
    benchmarks: BTreeSet<String>,
}

/// Benchmark n-grams to remove, after dropping those that are common in
/// the corpus.
#[derive(Clone, Debug, Default)]
pub struct ContaminationIndex {
    cfg: DecontamConfig,
    ngrams: HashMap<u64, Vec<IndexedNgram>>,
    len: usize,
    skipped: BTreeMap<String, u64>,
}

impl ContaminationIndex {
    pub fn config(&self) -> &DecontamConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Whether the normalized n-gram is indexed.
    pub fn contains(&self, ngram: &str) -> bool {
        let ngram = normalize(ngram);
        let mut h = Fnv1a::default();
        h.write(ngram.as_bytes());
        self.ngrams
            .get(&h.finish())
            .is_some_and(|v| v.iter().any(|g| g.text == ngram))
    }

    /// N-grams excluded by the common-n-gram rule, with their corpus counts.
    pub fn skipped(&self) -> &BTreeMap<String, u64> {
        &self.skipped
    }

    fn lookup(&self, hash: u64, tokens: &[Token]) -> Option<&IndexedNgram> {
        let candidates = self.ngrams.get(&hash)?;
        let text = join(tokens);
        candidates.iter().find(|g| g.text == text)
    }

    /// Byte spans of indexed n-gram occurrences in `text`, with the
    /// benchmarks each one came from.
    pub fn find_matches(&self, text: &str) -> Vec<Match> {
        let tokens = tokenize(text);
        let mut out = Vec::new();
        if self.is_empty() {
            return out;
        }
        for_each_ngram(
            &tokens,
            self.cfg.ngram_min,
            self.cfg.ngram_max,
            |i, len, h| {
                if let Some(g) = self.lookup(h, &tokens[i..i + len]) {
                    out.push(Match {
                        start: tokens[i].start,
                        end: tokens[i + len - 1].end,
                        benchmarks: g.benchmarks.iter().cloned().collect(),
                    });
                }
            },
        );
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Match {
    pub start: usize,
    pub end: usize,
    pub benchmarks: Vec<String>,
}

/// Two-pass index construction: collect benchmark n-grams, then count them
/// over the corpus.
#[derive(Debug)]
pub struct IndexBuilder {
    cfg: DecontamConfig,
    candidates: HashMap<u64, Vec<IndexedNgram>>,
    counts: HashMap<String, u64>,
}

impl IndexBuilder {
    pub fn new(cfg: DecontamConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(IndexBuilder {
            cfg,
            candidates: HashMap::new(),
            counts: HashMap::new(),
        })
    }

    pub fn add_benchmark(&mut self, benchmark_id: &str, text: &str) {
        let tokens = tokenize(text);
        let candidates = &mut self.candidates;
        for_each_ngram(
            &tokens,
            self.cfg.ngram_min,
            self.cfg.ngram_max,
            |i, len, h| {
                let ngram = join(&tokens[i..i + len]);
                let bucket = candidates.entry(h).or_default();
                match bucket.iter_mut().find(|g| g.text == ngram) {
                    Some(g) => {
                        g.benchmarks.insert(benchmark_id.to_string());
                    }
                    None => bucket.push(IndexedNgram {
                        text: ngram,
                        benchmarks: BTreeSet::from([benchmark_id.to_string()]),
                    }),
                }
            },
        );
    }

    fn count_text(&self, text: &str, counts: &mut HashMap<String, u64>) {
        let tokens = tokenize(text);
        for_each_ngram(
            &tokens,
            self.cfg.ngram_min,
            self.cfg.ngram_max,
            |i, len, h| {
                if let Some(bucket) = self.candidates.get(&h) {
                    let ngram = join(&tokens[i..i + len]);
                    if bucket.iter().any(|g| g.text == ngram) {
                        *counts.entry(ngram).or_default() += 1;
                    }
                }
            },
        );
    }

    /// Adds corpus occurrence counts for a batch of texts, counting shards
    /// in parallel.
    pub fn count_corpus<'a>(&mut self, texts: &[&'a str]) {
        let merged = texts
            .par_chunks(1024)
            .map(|chunk| {
                let mut counts = HashMap::new();
                for text in chunk {
                    self.count_text(text, &mut counts);
                }
                counts
            })
            .reduce(HashMap::new, |mut a, b| {
                for (k, v) in b {
                    *a.entry(k).or_default() += v;
                }
                a
            });
        for (k, v) in merged {
            *self.counts.entry(k).or_default() += v;
        }
    }

    pub fn finish(self) -> ContaminationIndex {
        let limit = self.cfg.common_ngram_skip_count;
        let mut index = ContaminationIndex {
            cfg: self.cfg,
            ..Default::default()
        };
        for (h, bucket) in self.candidates {
            let kept: Vec<IndexedNgram> = bucket
                .into_iter()
                .filter(|g| match self.counts.get(&g.text) {
                    Some(&c) if c > limit => {
                        index.skipped.insert(g.text.clone(), c);
                        false
                    }
                    _ => true,
                })
                .collect();
            if !kept.is_empty() {
                index.len += kept.len();
                index.ngrams.insert(h, kept);
            }
        }
        index
    }
}

/// Builds the index from `(benchmark_id, test text)` pairs and an in-memory
/// corpus.
pub fn build_index<'a>(
    benchmarks: impl IntoIterator<Item = (&'a str, &'a str)>,
    corpus: &[Document],
    cfg: DecontamConfig,
) -> Result<ContaminationIndex> {
    let mut builder = IndexBuilder::new(cfg)?;
    let mut any = false;
    for (id, text) in benchmarks {
        any = true;
        builder.add_benchmark(id, text);
    }
    if !any {
        return Err(Error::invalid("no benchmark texts to index"));
    }
    let texts: Vec<&str> = corpus.iter().map(|d| d.text.as_str()).collect();
    builder.count_corpus(&texts);
    Ok(builder.finish())
}

/// What happened to one document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecontamOutcome {
    pub fragments: Vec<Document>,
    /// Byte range of each fragment in the original text.
    pub spans: Vec<(usize, usize)>,
    /// Excised regions; zero means the document passed through untouched.
    pub regions: usize,
    pub discarded: bool,
    /// Per-benchmark count of excised regions containing its n-grams.
    pub matches: BTreeMap<String, u64>,
}

fn char_back(text: &str, pos: usize, n: usize) -> usize {
    if n == 0 {
        return pos;
    }
    text[..pos]
        .char_indices()
        .rev()
        .nth(n - 1)
        .map_or(0, |(i, _)| i)
}

fn char_forward(text: &str, pos: usize, n: usize) -> usize {
    text[pos..]
        .char_indices()
        .nth(n)
        .map_or(text.len(), |(i, _)| pos + i)
}

/// Merged excision regions for the matches in `text[lo..hi]`, as byte
/// ranges of `text`.
fn regions_in(
    text: &str,
    lo: usize,
    hi: usize,
    index: &ContaminationIndex,
) -> Vec<(usize, usize, BTreeSet<String>)> {
    let radius = index.cfg.excision_radius_chars;
    let piece = &text[lo..hi];
    let mut spans: Vec<(usize, usize, Vec<String>)> = index
        .find_matches(piece)
        .into_iter()
        .map(|m| {
            (
                lo + char_back(piece, m.start, radius),
                lo + char_forward(piece, m.end, radius),
                m.benchmarks,
            )
        })
        .collect();
    spans.sort_by_key(|s| (s.0, s.1));
    let mut merged: Vec<(usize, usize, BTreeSet<String>)> = Vec::new();
    for (s, e, b) in spans {
        match merged.last_mut() {
            Some(last) if s <= last.1 => {
                last.1 = last.1.max(e);
                last.2.extend(b);
            }
            _ => merged.push((s, e, b.into_iter().collect())),
        }
    }
    merged
}

/// Excises every indexed n-gram occurrence plus its flanks and splits the
/// document there. Fragments are re-scanned until clean, since cutting a
/// token in half can complete a new match. Documents split more than
/// `max_splits` times are dropped.
pub fn decontaminate(
    doc: &Document,
    index: &ContaminationIndex,
    counter: &dyn TokenCounter,
) -> DecontamOutcome {
    let text = doc.text.as_str();
    let mut pieces = vec![(0usize, text.len())];
    let mut regions = 0usize;
    let mut matches: BTreeMap<String, u64> = BTreeMap::new();
    loop {
        let mut changed = false;
        let mut next = Vec::with_capacity(pieces.len());
        for (lo, hi) in pieces {
            let found = regions_in(text, lo, hi, index);
            if found.is_empty() {
                next.push((lo, hi));
                continue;
            }
            changed = true;
            let mut cursor = lo;
            for (s, e, benches) in found {
                regions += 1;
                for b in benches {
                    *matches.entry(b).or_default() += 1;
                }
                next.push((cursor, s));
                cursor = e;
            }
            next.push((cursor, hi));
        }
        pieces = next.into_iter().filter(|(lo, hi)| hi > lo).collect();
        if !changed || regions > index.cfg.max_splits {
            break;
        }
    }

    if regions == 0 {
        return DecontamOutcome {
            fragments: vec![doc.clone()],
            spans: vec![(0, text.len())],
            regions,
            discarded: false,
            matches,
        };
    }
    let discarded = regions > index.cfg.max_splits;
    if discarded {
        pieces.clear();
    }
    let fragments = pieces
        .iter()
        .enumerate()
        .map(|(k, &(lo, hi))| Document {
            id: format!("{}#{k}", doc.id),
            text: text[lo..hi].to_string(),
            token_count: counter.count(&text[lo..hi]),
            source: doc.source.clone(),
        })
        .collect();
    DecontamOutcome {
        fragments,
        spans: pieces,
        regions,
        discarded,
        matches,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecontamReport {
    pub documents_in: u64,
    pub documents_out: u64,
    pub documents_modified: u64,
    pub documents_discarded: u64,
    pub regions_excised: u64,
    pub index_size: u64,
    pub skipped_ngrams: u64,
    pub matches_by_benchmark: BTreeMap<String, u64>,
}

/// Decontaminates a corpus in parallel, keeping document order.
pub fn decontaminate_corpus(
    docs: &[Document],
    index: &ContaminationIndex,
    counter: &dyn TokenCounter,
) -> (Vec<Document>, DecontamReport) {
    let outcomes: Vec<DecontamOutcome> = docs
        .par_iter()
        .map(|d| decontaminate(d, index, counter))
        .collect();
    let mut report = DecontamReport {
        documents_in: docs.len() as u64,
        index_size: index.len() as u64,
        skipped_ngrams: index.skipped().len() as u64,
        ..Default::default()
    };
    let mut out = Vec::new();
    for o in outcomes {
        if o.regions > 0 {
            report.documents_modified += 1;
        }
        if o.discarded {
            report.documents_discarded += 1;
        }
        report.regions_excised += o.regions as u64;
        for (b, n) in o.matches {
            *report.matches_by_benchmark.entry(b).or_default() += n;
        }
        out.extend(o.fragments);
    }
    report.documents_out = out.len() as u64;
    (out, report)
}

/// Ids of `docs` that still contain an indexed n-gram.
pub fn rescan(docs: &[Document], index: &ContaminationIndex) -> HashSet<String> {
    docs.par_iter()
        .filter(|d| !index.find_matches(&d.text).is_empty())
        .map(|d| d.id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::WhitespaceCounter;
    use proptest::prelude::*;

    fn doc(id: &str, text: &str) -> Document {
        Document {
            id: id.into(),
            text: text.into(),
            token_count: WhitespaceCounter.count(text),
            source: None,
        }
    }

    fn filler(words: usize, tag: &str) -> String {
        (0..words)
            .map(|i| format!("{tag}{i}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn tokenization_normalizes_and_keeps_offsets() {
        let toks = tokenize("  Hello, World!  -- x.y ");
        let norms: Vec<&str> = toks.iter().map(|t| t.norm.as_str()).collect();
        assert_eq!(norms, ["hello", "world", "xy"]);
        assert_eq!((toks[0].start, toks[0].end), (2, 8));
        assert_eq!(normalize("A  b\tC"), "a b c");
    }

    #[test]
    fn single_window() {
        let index =
            build_index([("b", "a b c d e f g h")], &[], DecontamConfig::default()).unwrap();
        assert_eq!(index.len(), 1);
        assert!(index.contains("A B C D E F G H"));
        let short = build_index([("b", "a b c d e f g")], &[], DecontamConfig::default()).unwrap();
        assert!(short.is_empty());
        assert!(build_index(std::iter::empty(), &[], DecontamConfig::default()).is_err());
    }

    #[test]
    fn common_ngrams_are_skipped() {
        let corpus: Vec<Document> = (0..10_001)
            .map(|i| doc(&format!("c{i}"), "a b c d e f g h"))
            .collect();
        let index = build_index(
            [("b", "a b c d e f g h")],
            &corpus,
            DecontamConfig::default(),
        )
        .unwrap();
        assert!(index.is_empty());
        assert_eq!(index.skipped().get("a b c d e f g h"), Some(&10_001));
        let (out, report) = decontaminate_corpus(&corpus[..5], &index, &WhitespaceCounter);
        assert_eq!(out, corpus[..5].to_vec());
        assert_eq!(report.documents_modified, 0);

        let at_limit = &corpus[..10_000];
        let index = build_index(
            [("b", "a b c d e f g h")],
            at_limit,
            DecontamConfig::default(),
        )
        .unwrap();
        assert_eq!(index.len(), 1);
    }

    #[test]
    fn clean_document_passes_through() {
        let bench = filler(20, "q");
        let index = build_index([("b", bench.as_str())], &[], DecontamConfig::default()).unwrap();
        let d = doc("x", &filler(300, "w"));
        let out = decontaminate(&d, &index, &WhitespaceCounter);
        assert_eq!(out.fragments, vec![d]);
        assert_eq!(out.regions, 0);
    }

    #[test]
    fn planted_13gram_is_excised_with_flanks() {
        let planted = filler(13, "bench");
        let index = build_index([("b", planted.as_str())], &[], DecontamConfig::default()).unwrap();
        let left = filler(100, "l");
        let right = filler(100, "r");
        let text = format!("{left} {planted} {right}");
        let out = decontaminate(&doc("p", &text), &index, &WhitespaceCounter);
        assert_eq!(out.regions, 1);
        assert_eq!(out.fragments.len(), 2);
        let start = left.len() + 1;
        let end = start + planted.len();
        assert_eq!(out.fragments[0].text, text[..start - 200]);
        assert_eq!(out.fragments[1].text, text[end + 200..]);
        assert_eq!(out.fragments[0].id, "p#0");
        assert_eq!(out.fragments[1].id, "p#1");
        for f in &out.fragments {
            assert!(!f.text.contains("bench0"));
        }
        assert_eq!(out.matches.get("b"), Some(&1));
    }

    #[test]
    fn too_many_splits_discard() {
        let planted = filler(8, "z");
        let index = build_index([("b", planted.as_str())], &[], DecontamConfig::default()).unwrap();
        let gap = filler(150, "g");
        let mut text = gap.clone();
        for _ in 0..11 {
            text = format!("{text} {planted} {gap}");
        }
        let out = decontaminate(&doc("d", &text), &index, &WhitespaceCounter);
        assert_eq!(out.regions, 11);
        assert!(out.discarded);
        assert!(out.fragments.is_empty());

        let mut ten = gap.clone();
        for _ in 0..10 {
            ten = format!("{ten} {planted} {gap}");
        }
        let out = decontaminate(&doc("d", &ten), &index, &WhitespaceCounter);
        assert_eq!(out.regions, 10);
        assert_eq!(out.fragments.len(), 11);
    }

    #[test]
    fn overlapping_matches_merge() {
        let planted = filler(8, "m");
        let index = build_index([("b", planted.as_str())], &[], DecontamConfig::default()).unwrap();
        let text = format!(
            "{} {planted} x {planted} {}",
            filler(80, "a"),
            filler(80, "c")
        );
        let out = decontaminate(&doc("d", &text), &index, &WhitespaceCounter);
        assert_eq!(out.regions, 1);
        assert_eq!(out.matches.get("b"), Some(&1));
    }

    #[test]
    fn cut_token_rematch_is_caught() {
        // Excising the first match cuts "yyyyk0" to a fragment edge that
        // completes a second indexed n-gram; the rescan must remove it too.
        let cfg = DecontamConfig {
            ngram_min: 2,
            ngram_max: 2,
            excision_radius_chars: 2,
            ..Default::default()
        };
        let index = build_index([("b", "p q"), ("b", "k0 k1")], &[], cfg).unwrap();
        let text = "aaaa p q yyk0 k1 tail";
        let out = decontaminate(&doc("d", text), &index, &WhitespaceCounter);
        for f in &out.fragments {
            assert!(index.find_matches(&f.text).is_empty(), "{:?}", f.text);
        }
    }

    fn arb_text() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop_oneof![
                Just("alpha".to_string()),
                Just("beta".to_string()),
                Just("Gamma,".to_string()),
                Just("délta".to_string()),
                Just("\n".to_string()),
                "[a-z]{1,6}",
            ],
            0..400,
        )
        .prop_map(|w| w.join(" "))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn outputs_are_clean_ordered_and_length_consistent(text in arb_text()) {
            let cfg = DecontamConfig {
                ngram_min: 2,
                ngram_max: 3,
                excision_radius_chars: 7,
                max_splits: 1000,
                ..Default::default()
            };
            let index = build_index(
                [("b", "alpha beta gamma"), ("c", "délta alpha")],
                &[],
                cfg,
            )
            .unwrap();
            let d = doc("d", &text);
            let out = decontaminate(&d, &index, &WhitespaceCounter);
            for f in &out.fragments {
                prop_assert!(index.find_matches(&f.text).is_empty());
            }
            // Fragments are in text order; they and the excised gaps
            // between them tile the original.
            let mut pos = 0;
            let mut total = 0;
            for (f, &(lo, hi)) in out.fragments.iter().zip(&out.spans) {
                prop_assert!(lo >= pos && (hi > lo || out.regions == 0));
                prop_assert_eq!(&f.text, &text[lo..hi]);
                total += (lo - pos) + (hi - lo);
                pos = hi;
            }
            total += text.len() - pos;
            prop_assert_eq!(total, text.len());
            let again = decontaminate(&d, &index, &WhitespaceCounter);
            prop_assert_eq!(again, out);
        }
    }
}
