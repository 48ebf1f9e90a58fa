//! Batch segmentation with maximum-likelihood morph probabilities.
//!
//! Words start out cut at Poisson-distributed intervals. Each iteration then
//! re-estimates unigram morph probabilities from the current segmentation,
//! re-segments every word type with Viterbi search, and replaces suspicious
//! segmentations by fresh random ones. Random re-segmentation is the only
//! way new morphs enter the lexicon: a morph with zero count has infinite
//! cost under the unsmoothed estimate.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 5.5;
pub const DEFAULT_ITERATIONS: usize = 10;

/// Morphs per word type. Iterates in word order.
pub type Segmentation = BTreeMap<String, Vec<String>>;

/// Token counts of morphs plus the number of word types using each morph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MorphStats {
    counts: HashMap<String, u64>,
    total: u64,
    type_usage: HashMap<String, u64>,
    max_len: usize,
}

impl MorphStats {
    /// Stats from bare counts; type usage is left empty.
    pub fn from_counts<I, S>(counts: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut stats = MorphStats::default();
        for (morph, count) in counts {
            if count > 0 {
                stats.add(morph.into(), count);
            }
        }
        stats
    }

    fn add(&mut self, morph: String, count: u64) {
        self.max_len = self.max_len.max(morph.chars().count());
        *self.counts.entry(morph).or_insert(0) += count;
        self.total += count;
    }

    /// Counts every morph token of `segmentation`, weighting each word type by its token count.
    pub fn estimate(segmentation: &Segmentation, type_counts: &BTreeMap<String, u64>) -> Result<Self> {
        let mut stats = MorphStats::default();
        for (word, morphs) in segmentation {
            let weight = *type_counts
                .get(word)
                .ok_or_else(|| Error::Argument(format!("no token count for word {word:?}")))?;
            for morph in morphs {
                stats.add(morph.clone(), weight);
            }
            let mut distinct: Vec<&String> = morphs.iter().collect();
            distinct.sort_unstable();
            distinct.dedup();
            for morph in distinct {
                *stats.type_usage.entry(morph.clone()).or_insert(0) += 1;
            }
        }
        Ok(stats)
    }

    pub fn count(&self, morph: &str) -> u64 {
        self.counts.get(morph).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn num_morphs(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &HashMap<String, u64> {
        &self.counts
    }

    pub fn type_usage(&self) -> &HashMap<String, u64> {
        &self.type_usage
    }

    pub fn probability(&self, morph: &str) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(morph) as f64 / self.total as f64
        }
    }

    /// `-log2 p(morph)`, or `None` for a morph that was never counted.
    pub fn cost(&self, morph: &str) -> Option<f64> {
        self.counts.get(morph).map(|&c| -(c as f64 / self.total as f64).log2())
    }

    /// Viterbi segmentation, falling back to the whole word when the lexicon cannot cover it.
    pub fn segment(&self, word: &str) -> Vec<String> {
        viterbi_segment(word, self)
            .map(|(morphs, _)| morphs)
            .unwrap_or_else(|| vec![word.to_string()])
    }
}

/// Draws from Poisson(`lambda`) by inverting the cumulative distribution.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= lambda / k as f64;
        if p == 0.0 {
            break;
        }
        cdf += p;
    }
    k
}

/// Cuts a word from its start at Poisson-distributed intervals.
///
/// An interval reaching the end of the word ends the splitting; zero-length
/// intervals are drawn again.
pub fn random_segment<R: Rng + ?Sized>(word: &str, rng: &mut R, lambda: f64) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut morphs = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let remaining = chars.len() - start;
        if remaining == 1 {
            morphs.push(chars[start..].iter().collect());
            break;
        }
        let interval = loop {
            let k = sample_poisson(rng, lambda);
            if k > 0 {
                break k as usize;
            }
        };
        if interval >= remaining {
            morphs.push(chars[start..].iter().collect());
            break;
        }
        morphs.push(chars[start..start + interval].iter().collect());
        start += interval;
    }
    morphs
}

/// Cheapest segmentation of `word` into morphs known to `stats`, with its cost in bits.
///
/// Equal costs are resolved by fewer morphs, then by the lexicographically
/// smallest list of boundary positions. Returns `None` when no segmentation
/// exists.
pub fn viterbi_segment(word: &str, stats: &MorphStats) -> Option<(Vec<String>, f64)> {
    let offsets: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect();
    let n = offsets.len() - 1;
    if n == 0 || stats.is_empty() {
        return None;
    }

    struct Cell {
        cost: f64,
        boundaries: Vec<usize>,
    }

    let better = |a: &Cell, b: &Cell| match a.cost.total_cmp(&b.cost) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => (a.boundaries.len(), &a.boundaries) < (b.boundaries.len(), &b.boundaries),
    };

    let mut best: Vec<Option<Cell>> = Vec::with_capacity(n + 1);
    best.push(Some(Cell {
        cost: 0.0,
        boundaries: Vec::new(),
    }));
    for end in 1..=n {
        let mut cell: Option<Cell> = None;
        for start in end.saturating_sub(stats.max_len)..end {
            let Some(prev) = &best[start] else { continue };
            let Some(c) = stats.cost(&word[offsets[start]..offsets[end]]) else {
                continue;
            };
            let mut boundaries = prev.boundaries.clone();
            if start > 0 {
                boundaries.push(start);
            }
            let candidate = Cell {
                cost: prev.cost + c,
                boundaries,
            };
            if cell.as_ref().is_none_or(|cur| better(&candidate, cur)) {
                cell = Some(candidate);
            }
        }
        best.push(cell);
    }

    let last = best.pop().flatten()?;
    let mut morphs = Vec::with_capacity(last.boundaries.len() + 1);
    let mut start = 0;
    for &b in last.boundaries.iter().chain(std::iter::once(&n)) {
        morphs.push(word[offsets[start]..offsets[b]].to_string());
        start = b;
    }
    Some((morphs, last.cost))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    /// The morph was used by a single word type in the previous iteration.
    RareMorph(String),
    /// Two or more one-letter morphs in a row.
    OneLetterSequence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

pub fn reject(morphs: &[String], prev_type_usage: &HashMap<String, u64>) -> Verdict {
    if let Some(m) = morphs.iter().find(|m| prev_type_usage.get(*m) == Some(&1)) {
        return Verdict::Reject(RejectReason::RareMorph(m.clone()));
    }
    let one_letter = |m: &String| m.chars().count() == 1;
    if morphs.windows(2).any(|w| one_letter(&w[0]) && one_letter(&w[1])) {
        return Verdict::Reject(RejectReason::OneLetterSequence);
    }
    Verdict::Accept
}

/// Negative log-likelihood in bits of all morph tokens, with probabilities
/// estimated from the segmentation itself.
pub fn ml_cost(segmentation: &Segmentation, type_counts: &BTreeMap<String, u64>) -> Result<f64> {
    let stats = MorphStats::estimate(segmentation, type_counts)?;
    Ok(stats_cost(&stats))
}

/// Corpus cost `sum over morph types of -count * log2 p`, summed in morph order.
pub(crate) fn stats_cost(stats: &MorphStats) -> f64 {
    let mut counts: Vec<(&String, &u64)> = stats.counts.iter().collect();
    counts.sort_unstable();
    let total = stats.total as f64;
    counts
        .into_iter()
        .map(|(_, &c)| -(c as f64) * (c as f64 / total).log2())
        .sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmConfig {
    pub iterations: usize,
    pub lambda: f64,
    /// Apply the rejection criteria and random re-segmentation.
    pub reject: bool,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            iterations: DEFAULT_ITERATIONS,
            lambda: DEFAULT_LAMBDA,
            reject: true,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmTraining {
    pub segmentation: Segmentation,
    pub stats: MorphStats,
    /// Cost of the initial segmentation followed by the cost after each iteration.
    pub cost_history: Vec<f64>,
    /// Word types replaced by a random segmentation, per iteration.
    pub rejections: Vec<usize>,
}

pub fn train_em(corpus: &Corpus, config: &EmConfig) -> Result<EmTraining> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if config.iterations == 0 {
        return Err(Error::Argument("at least one iteration is required".into()));
    }
    if !(config.lambda > 0.0 && config.lambda.is_finite()) {
        return Err(Error::Argument(format!("invalid Poisson mean {}", config.lambda)));
    }
    let type_counts = corpus.type_counts();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut segmentation: Segmentation = type_counts
        .keys()
        .map(|w| (w.clone(), random_segment(w, &mut rng, config.lambda)))
        .collect();
    let mut cost_history = vec![ml_cost(&segmentation, type_counts)?];
    let mut rejections = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        let last = iteration + 1 == config.iterations;
        let stats = MorphStats::estimate(&segmentation, type_counts)?;

        let proposals: Vec<Option<Vec<String>>> = segmentation
            .par_iter()
            .map(|(word, _)| viterbi_segment(word, &stats).map(|(m, _)| m))
            .collect();

        let mut rejected = 0;
        for ((word, morphs), proposal) in segmentation.iter_mut().zip(proposals) {
            let resample = config.reject && !last;
            match proposal {
                Some(p) => {
                    if resample && reject(&p, stats.type_usage()) != Verdict::Accept {
                        *morphs = random_segment(word, &mut rng, config.lambda);
                        rejected += 1;
                    } else {
                        *morphs = p;
                    }
                }
                None if resample => {
                    *morphs = random_segment(word, &mut rng, config.lambda);
                    rejected += 1;
                }
                None => {}
            }
        }
        rejections.push(rejected);
        cost_history.push(ml_cost(&segmentation, type_counts)?);
        log::debug!(
            "iteration {}: {:.1} bits, {rejected} rejected",
            iteration + 1,
            cost_history.last().unwrap()
        );
    }

    let stats = MorphStats::estimate(&segmentation, type_counts)?;
    Ok(EmTraining {
        segmentation,
        stats,
        cost_history,
        rejections,
    })
}
