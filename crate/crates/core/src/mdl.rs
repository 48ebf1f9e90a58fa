//! Online recursive segmentation under a two-part MDL cost.
//!
//! Every word type seen so far lives in a [`ChunkStore`]: a shared binary
//! splitting structure in which each chunk carries an occurrence count and
//! a split position (0 marks a leaf, i.e. a morph). Counts flow from a
//! chunk to both of its parts, so a chunk's count is the number of word
//! tokens it was inserted as directly plus the counts of every chunk that
//! splits into it.
//!
//! The cost of the current model is
//!
//! ```text
//! corpus   = sum over morph tokens of -log2 p(m),  p(m) = count(m) / N
//!          = N log2 N - sum over morphs of count(m) log2 count(m)
//! codebook = char_bits * sum over morph types of len(m)
//! ```
//!
//! `N`, the summed leaf length and the `count log2 count` sum are kept up to
//! date on every count change. The last one is accumulated in fixed point so
//! that applying and undoing a candidate split restores it exactly and the
//! running total does not depend on the order of updates.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const DEFAULT_CHAR_BITS: u32 = 5;
pub const DEFAULT_DREAM_INTERVAL: usize = 20_000;

const FIXED_SCALE: f64 = (1u64 << 32) as f64;

fn xlog2x_fixed(count: u64) -> i128 {
    if count <= 1 {
        return 0;
    }
    let c = count as f64;
    (c * c.log2() * FIXED_SCALE).round() as i128
}

/// Splits `text` before its `at`-th character.
pub(crate) fn split_at_char(text: &str, at: usize) -> (&str, &str) {
    let byte = text.char_indices().nth(at).map(|(i, _)| i).unwrap_or(text.len());
    text.split_at(byte)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub count: u64,
    /// Character offset of the split; 0 for a leaf.
    pub split: usize,
}

impl Chunk {
    pub fn is_leaf(&self) -> bool {
        self.split == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdlCost {
    pub corpus_bits: f64,
    pub codebook_bits: f64,
    pub total_bits: f64,
}

impl MdlCost {
    fn new(corpus_bits: f64, codebook_bits: f64) -> Self {
        let corpus_bits = corpus_bits.max(0.0);
        MdlCost {
            corpus_bits,
            codebook_bits,
            total_bits: corpus_bits + codebook_bits,
        }
    }

    /// Share of the total going into the codebook, 0 for an empty model.
    pub fn relative_codebook_cost(&self) -> f64 {
        if self.total_bits > 0.0 {
            self.codebook_bits / self.total_bits
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Aggregates {
    leaf_tokens: u64,
    leaf_chars: u64,
    xlogx: i128,
}

#[derive(Debug, Clone)]
pub struct ChunkStore {
    chunks: HashMap<String, Chunk>,
    words: HashMap<String, u64>,
    char_bits: u32,
    agg: Aggregates,
}

impl PartialEq for ChunkStore {
    fn eq(&self, other: &Self) -> bool {
        self.chunks == other.chunks && self.words == other.words && self.char_bits == other.char_bits
    }
}

impl Default for ChunkStore {
    fn default() -> Self {
        ChunkStore::new(DEFAULT_CHAR_BITS)
    }
}

impl ChunkStore {
    pub fn new(char_bits: u32) -> Self {
        ChunkStore {
            chunks: HashMap::new(),
            words: HashMap::new(),
            char_bits,
            agg: Aggregates {
                leaf_tokens: 0,
                leaf_chars: 0,
                xlogx: 0,
            },
        }
    }

    /// Rebuilds a store from `(text, split, count)` records.
    ///
    /// The number of top-level insertions of each chunk is whatever its count
    /// has left after subtracting the flow from its parents.
    pub fn from_chunks<I>(char_bits: u32, records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, usize, u64)>,
    {
        let mut chunks = HashMap::new();
        for (text, split, count) in records {
            let len = text.chars().count();
            if text.is_empty() || count == 0 || (split != 0 && split >= len) {
                return Err(Error::Argument(format!(
                    "invalid chunk record {text:?} split={split} count={count}"
                )));
            }
            if chunks.insert(text.clone(), Chunk { count, split }).is_some() {
                return Err(Error::Argument(format!("duplicate chunk {text:?}")));
            }
        }

        let mut inflow: HashMap<&str, u64> = HashMap::new();
        for (text, chunk) in &chunks {
            if !chunk.is_leaf() {
                let (left, right) = split_at_char(text, chunk.split);
                for part in [left, right] {
                    if !chunks.contains_key(part) {
                        return Err(Error::Argument(format!(
                            "chunk {text:?} splits into unknown chunk {part:?}"
                        )));
                    }
                    *inflow.entry(part).or_insert(0) += chunk.count;
                }
            }
        }
        let mut words = HashMap::new();
        for (text, chunk) in &chunks {
            let parents = inflow.get(text.as_str()).copied().unwrap_or(0);
            match chunk.count.checked_sub(parents) {
                Some(0) => {}
                Some(own) => {
                    words.insert(text.clone(), own);
                }
                None => {
                    return Err(Error::Argument(format!(
                        "chunk {text:?} has count {} below its parents' total {parents}",
                        chunk.count
                    )))
                }
            }
        }

        let mut store = ChunkStore::new(char_bits);
        for (text, chunk) in &chunks {
            if chunk.is_leaf() {
                store.update_leaf(text.chars().count(), 0, chunk.count);
            }
        }
        store.chunks = chunks;
        store.words = words;
        Ok(store)
    }

    pub fn char_bits(&self) -> u32 {
        self.char_bits
    }

    pub fn chunk(&self, text: &str) -> Option<&Chunk> {
        self.chunks.get(text)
    }

    pub fn chunks(&self) -> impl Iterator<Item = (&str, &Chunk)> {
        self.chunks.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_chunks(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// Morphs (leaf chunks) with their counts.
    pub fn leaves(&self) -> impl Iterator<Item = (&str, u64)> {
        self.chunks
            .iter()
            .filter(|(_, c)| c.is_leaf())
            .map(|(k, c)| (k.as_str(), c.count))
    }

    pub fn num_morphs(&self) -> usize {
        self.chunks.values().filter(|c| c.is_leaf()).count()
    }

    /// Words inserted at the top level, with how many times each was read.
    pub fn words(&self) -> impl Iterator<Item = (&str, u64)> {
        self.words.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn word_tokens(&self) -> u64 {
        self.words.values().sum()
    }

    /// Cost maintained incrementally during training.
    pub fn tracked_cost(&self) -> MdlCost {
        let n = self.agg.leaf_tokens as f64;
        let n_log_n = if self.agg.leaf_tokens > 1 { n * n.log2() } else { 0.0 };
        let corpus = n_log_n - self.agg.xlogx as f64 / FIXED_SCALE;
        MdlCost::new(corpus, (self.char_bits as u64 * self.agg.leaf_chars) as f64)
    }

    /// Cost recomputed from the leaves, independent of the running totals.
    pub fn total_cost(&self) -> MdlCost {
        let mut leaves: Vec<(&str, u64)> = self.leaves().collect();
        leaves.sort_unstable();
        let total: u64 = leaves.iter().map(|&(_, c)| c).sum();
        if total == 0 {
            return MdlCost::new(0.0, 0.0);
        }
        let total = total as f64;
        let mut corpus = 0.0;
        let mut chars = 0u64;
        for &(morph, count) in &leaves {
            corpus -= count as f64 * (count as f64 / total).log2();
            chars += morph.chars().count() as u64;
        }
        MdlCost::new(corpus, (self.char_bits as u64 * chars) as f64)
    }

    fn update_leaf(&mut self, len: usize, old: u64, new: u64) {
        if old == 0 && new > 0 {
            self.agg.leaf_chars += len as u64;
        } else if old > 0 && new == 0 {
            self.agg.leaf_chars -= len as u64;
        }
        self.agg.leaf_tokens = self.agg.leaf_tokens + new - old;
        self.agg.xlogx += xlog2x_fixed(new) - xlog2x_fixed(old);
    }

    /// Adds `delta` to a chunk and everything below it. Missing chunks are
    /// created as leaves, chunks reaching zero are dropped.
    fn add_count(&mut self, text: &str, delta: i64) {
        let (old, new, split) = match self.chunks.get_mut(text) {
            Some(chunk) => {
                let old = chunk.count;
                chunk.count = old.checked_add_signed(delta).expect("chunk count went negative");
                (old, chunk.count, chunk.split)
            }
            None => {
                assert!(delta > 0, "decrement of unknown chunk {text:?}");
                let count = delta as u64;
                self.chunks.insert(text.to_string(), Chunk { count, split: 0 });
                (0, count, 0)
            }
        };
        if split == 0 {
            self.update_leaf(text.chars().count(), old, new);
        } else {
            let (left, right) = split_at_char(text, split);
            self.add_count(left, delta);
            self.add_count(right, delta);
        }
        if new == 0 {
            self.chunks.remove(text);
        }
    }

    /// Turns an internal chunk back into a leaf, withdrawing its count from
    /// the parts it was split into.
    fn collapse(&mut self, text: &str) {
        let chunk = self.chunks[text];
        if chunk.is_leaf() {
            return;
        }
        let (left, right) = split_at_char(text, chunk.split);
        let delta = -(chunk.count as i64);
        self.add_count(left, delta);
        self.add_count(right, delta);
        self.chunks.get_mut(text).unwrap().split = 0;
        self.update_leaf(text.chars().count(), 0, chunk.count);
    }

    /// Splits a leaf chunk, passing its full count to both parts.
    fn split_leaf(&mut self, text: &str, at: usize) {
        let chunk = self.chunks[text];
        debug_assert!(chunk.is_leaf());
        self.update_leaf(text.chars().count(), chunk.count, 0);
        self.chunks.get_mut(text).unwrap().split = at;
        let (left, right) = split_at_char(text, at);
        let delta = chunk.count as i64;
        self.add_count(left, delta);
        self.add_count(right, delta);
    }

    /// Re-decides the segmentation of an existing chunk.
    ///
    /// The chunk is collapsed to a leaf, then every two-way split is applied
    /// in turn and scored by the resulting total cost. The cheapest option is
    /// committed (ties keep the chunk whole, then prefer the leftmost split)
    /// and both parts are split recursively.
    pub fn recursive_split(&mut self, text: &str) {
        if !self.chunks.contains_key(text) {
            return;
        }
        self.collapse(text);
        let len = text.chars().count();
        if len < 2 {
            return;
        }

        let mut best_cost = self.tracked_cost().total_bits;
        let mut best_split = 0;
        for at in 1..len {
            let before = self.agg;
            self.split_leaf(text, at);
            let cost = self.tracked_cost().total_bits;
            if cost < best_cost {
                best_cost = cost;
                best_split = at;
            }
            self.collapse(text);
            debug_assert_eq!(before, self.agg);
        }

        if best_split > 0 {
            self.split_leaf(text, best_split);
            let (left, right) = split_at_char(text, best_split);
            self.recursive_split(left);
            self.recursive_split(right);
        }
    }

    /// Reads one word token: its chunk gets one more occurrence and is
    /// re-segmented from scratch.
    pub fn process_word(&mut self, word: &str) -> Result<()> {
        if word.is_empty() {
            return Err(Error::Argument("cannot process an empty word".into()));
        }
        if word.chars().any(char::is_whitespace) {
            return Err(Error::Argument(format!("word {word:?} contains whitespace")));
        }
        *self.words.entry(word.to_string()).or_insert(0) += 1;
        self.add_count(word, 1);
        self.recursive_split(word);
        Ok(())
    }

    /// Morphs of a stored chunk, found by following split positions down to the leaves.
    pub fn segment_word(&self, word: &str) -> Result<Vec<String>> {
        if !self.chunks.contains_key(word) {
            return Err(Error::NotTrained(word.to_string()));
        }
        let mut morphs = Vec::new();
        self.collect_leaves(word, &mut morphs);
        Ok(morphs)
    }

    fn collect_leaves(&self, text: &str, out: &mut Vec<String>) {
        let chunk = &self.chunks[text];
        if chunk.is_leaf() {
            out.push(text.to_string());
        } else {
            let (left, right) = split_at_char(text, chunk.split);
            self.collect_leaves(left, out);
            self.collect_leaves(right, out);
        }
    }

    /// Segments a word, first reading it into the model if it is unknown.
    pub fn segment_or_learn(&mut self, word: &str) -> Result<Vec<String>> {
        if !self.chunks.contains_key(word) {
            self.process_word(word)?;
        }
        self.segment_word(word)
    }

    /// Re-segments every known word in random order, without counting them again.
    ///
    /// Stops after `max_passes` passes or once a pass improves the total cost
    /// by less than `min_relative_gain`.
    pub fn dream<R: rand::Rng>(&mut self, rng: &mut R, config: &DreamConfig) -> DreamEvent {
        let cost_before = self.tracked_cost().total_bits;
        let mut words: Vec<String> = self.words.keys().cloned().collect();
        words.sort_unstable();

        let mut passes = 0;
        let mut pass_start = cost_before;
        while passes < config.max_passes.max(1) {
            words.shuffle(rng);
            for word in &words {
                self.recursive_split(word);
            }
            passes += 1;
            let now = self.tracked_cost().total_bits;
            if pass_start - now < config.min_relative_gain * pass_start {
                break;
            }
            pass_start = now;
        }
        DreamEvent {
            tokens_processed: self.word_tokens(),
            cost_before,
            cost_after: self.tracked_cost().total_bits,
            passes,
        }
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        let mut expected: HashMap<&str, u64> = self.words.iter().map(|(k, &v)| (k.as_str(), v)).collect();
        for (text, chunk) in &self.chunks {
            if chunk.count == 0 {
                return Err(format!("zero-count chunk {text:?}"));
            }
            let len = text.chars().count();
            if chunk.split >= len.max(1) {
                return Err(format!("chunk {text:?} has split {} out of range", chunk.split));
            }
            if !chunk.is_leaf() {
                let (left, right) = split_at_char(text, chunk.split);
                *expected.entry(left).or_insert(0) += chunk.count;
                *expected.entry(right).or_insert(0) += chunk.count;
            }
        }
        for (text, &count) in &expected {
            let actual = self.chunks.get(*text).map_or(0, |c| c.count);
            if actual != count {
                return Err(format!(
                    "chunk {text:?} has count {actual}, parents and top-level insertions give {count}"
                ));
            }
        }
        if let Some((text, _)) = self.chunks.iter().find(|(t, _)| !expected.contains_key(t.as_str())) {
            return Err(format!("chunk {text:?} is unreachable"));
        }
        let tracked = self.tracked_cost().total_bits;
        let fresh = self.total_cost().total_bits;
        if (tracked - fresh).abs() > 1e-9 * fresh.abs().max(1.0) {
            return Err(format!("tracked cost {tracked} differs from recomputed {fresh}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DreamConfig {
    pub max_passes: usize,
    pub min_relative_gain: f64,
}

impl Default for DreamConfig {
    fn default() -> Self {
        DreamConfig {
            max_passes: 3,
            min_relative_gain: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DreamEvent {
    pub tokens_processed: u64,
    pub cost_before: f64,
    pub cost_after: f64,
    pub passes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tokens_processed: u64,
    pub avg_word_cost_bits: f64,
}

#[derive(Debug, Clone)]
pub struct MdlConfig {
    pub char_bits: u32,
    /// Dream after every this many tokens; 0 disables dreaming.
    pub dream_interval: usize,
    pub dream: DreamConfig,
    /// Record a cost-curve point after every this many tokens; 0 disables the curve.
    pub curve_interval: usize,
    pub seed: u64,
}

impl Default for MdlConfig {
    fn default() -> Self {
        MdlConfig {
            char_bits: DEFAULT_CHAR_BITS,
            dream_interval: DEFAULT_DREAM_INTERVAL,
            dream: DreamConfig::default(),
            curve_interval: 1000,
            seed: 42,
        }
    }
}

/// Everything recorded while training besides the model itself.
#[derive(Debug, Clone, Default)]
pub struct TrainingTrace {
    pub curve: Vec<CurvePoint>,
    pub dreams: Vec<DreamEvent>,
}

impl TrainingTrace {
    /// `tokens_processed,avg_word_cost_bits` rows, with a header line.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("tokens_processed,avg_word_cost_bits\n");
        for p in &self.curve {
            out.push_str(&format!("{},{}\n", p.tokens_processed, p.avg_word_cost_bits));
        }
        out
    }
}

pub fn train_online(corpus: &Corpus, config: &MdlConfig) -> Result<ChunkStore> {
    train_online_traced(corpus, config).map(|(store, _)| store)
}

/// Reads the corpus token by token, dreaming at fixed intervals.
///
/// Curve points are recorded every `curve_interval` tokens and on both sides
/// of every dreaming event.
pub fn train_online_traced(corpus: &Corpus, config: &MdlConfig) -> Result<(ChunkStore, TrainingTrace)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut store = ChunkStore::new(config.char_bits);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = TrainingTrace::default();

    let point = |store: &ChunkStore, processed: usize| CurvePoint {
        tokens_processed: processed as u64,
        avg_word_cost_bits: store.tracked_cost().total_bits / processed as f64,
    };

    for (i, word) in corpus.tokens().iter().enumerate() {
        store.process_word(word)?;
        let processed = i + 1;
        let dream_now = config.dream_interval > 0 && processed % config.dream_interval == 0;
        let record = dream_now || (config.curve_interval > 0 && processed % config.curve_interval == 0);
        if record {
            trace.curve.push(point(&store, processed));
        }
        if dream_now {
            let event = store.dream(&mut rng, &config.dream);
            log::debug!(
                "dream at {processed} tokens: {:.1} -> {:.1} bits in {} passes",
                event.cost_before,
                event.cost_after,
                event.passes
            );
            trace.dreams.push(event);
            trace.curve.push(point(&store, processed));
        }
    }
    if trace.curve.last().map(|p| p.tokens_processed) != Some(corpus.len() as u64) {
        trace.curve.push(point(&store, corpus.len()));
    }
    Ok((store, trace))
}
