//! Scoring segmentations against gold morphemic analyses.
//!
//! Each word's morph sequence is aligned to its label sequence (base-form
//! constituents followed by affix tags) by dynamic programming. A morph may
//! take several consecutive labels and several consecutive morphs may share
//! a label. The cost of pairing morph `M` with label `L` is
//!
//! ```text
//! d(M, L) = -log2( c(M, L) / c(M) )
//! ```
//!
//! where `c(M, L)` counts the word tokens in which `M` was aligned with `L`
//! and `c(M)` the word tokens whose segmentation contains `M`. Distances
//! are fitted on training words by alternating alignment and recounting,
//! starting from a string-similarity alignment, then frozen to score the
//! test words. Pairs never seen in training cost `d_max`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ml::Segmentation;

pub const DEFAULT_MAX_DISTANCE_MARGIN: f64 = 10.0;
pub const DEFAULT_EM_ITERATIONS: usize = 10;
pub const DEFAULT_EM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelKind {
    /// Constituent of the base form.
    Base,
    /// Affix tag.
    Tag,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Label {
    pub text: String,
    pub kind: LabelKind,
}

impl Label {
    pub fn base(text: impl Into<String>) -> Self {
        Label {
            text: text.into(),
            kind: LabelKind::Base,
        }
    }

    pub fn tag(text: impl Into<String>) -> Self {
        Label {
            text: text.into(),
            kind: LabelKind::Tag,
        }
    }
}

/// Label sequence per word.
pub type GoldAnalysis = BTreeMap<String, Vec<Label>>;

/// One tag per line; blank lines and `#` comments are skipped.
pub fn read_tag_filter<R: BufRead>(reader: R) -> Result<HashSet<String>> {
    let mut tags = HashSet::new();
    for line in reader.lines() {
        let line = line?;
        let tag = line.trim();
        if !tag.is_empty() && !tag.starts_with('#') {
            tags.insert(tag.to_string());
        }
    }
    Ok(tags)
}

/// Reads `word<TAB>BASE#FORM TAG1 TAG2 ...` lines.
///
/// The base form is split at `#` into constituent labels. Tags outside
/// `keep_tags` are dropped (all tags are kept when it is `None`). Words left
/// without labels are skipped with a warning; for repeated words the first
/// analysis wins.
pub fn parse_gold<R: BufRead>(reader: R, keep_tags: Option<&HashSet<String>>) -> Result<GoldAnalysis> {
    let mut gold = GoldAnalysis::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (word, analysis) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(lineno, "expected word<TAB>analysis"))?;
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::parse(lineno, format!("invalid word {word:?}")));
        }
        let mut fields = analysis.split_whitespace();
        let base = fields.next().ok_or_else(|| Error::parse(lineno, "missing base form"))?;
        let mut labels = Vec::new();
        for part in base.split('#') {
            if part.is_empty() {
                return Err(Error::parse(lineno, format!("empty constituent in base form {base:?}")));
            }
            labels.push(Label::base(part));
        }
        labels.extend(
            fields
                .filter(|t| keep_tags.is_none_or(|keep| keep.contains(*t)))
                .map(Label::tag),
        );
        if gold.contains_key(word) {
            log::warn!("line {lineno}: duplicate analysis for {word:?} ignored");
            continue;
        }
        gold.insert(word.to_string(), labels);
    }
    Ok(gold)
}

/// Monotone path of `(morph index, label index)` pairs from `(0, 0)` to the last morph and label.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Alignment {
    pub pairs: Vec<(usize, usize)>,
}

impl Alignment {
    /// Whether the path starts at the origin, ends at `(n_morphs-1, n_labels-1)`
    /// and advances by one morph, one label, or both at every step.
    pub fn is_valid(&self, n_morphs: usize, n_labels: usize) -> bool {
        let Some(&first) = self.pairs.first() else {
            return false;
        };
        first == (0, 0)
            && self.pairs.last() == Some(&(n_morphs - 1, n_labels - 1))
            && self.pairs.windows(2).all(|w| {
                let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                matches!((di, dj), (1, 1) | (1, 0) | (0, 1))
            })
    }
}

/// Lowest-cost alignment path for an `n_morphs` x `n_labels` grid.
///
/// Every visited cell adds its cost. Among equal predecessors a diagonal
/// step wins, then a morph step, then a label step.
fn viterbi_path(n_morphs: usize, n_labels: usize, cell: impl Fn(usize, usize) -> f64) -> (Vec<(usize, usize)>, f64) {
    assert!(n_morphs > 0 && n_labels > 0, "alignment needs morphs and labels");
    #[derive(Clone, Copy)]
    enum Step {
        Start,
        Diagonal,
        Morph,
        Label,
    }
    let mut cost = vec![vec![f64::INFINITY; n_labels]; n_morphs];
    let mut back = vec![vec![Step::Start; n_labels]; n_morphs];
    for i in 0..n_morphs {
        for j in 0..n_labels {
            let here = cell(i, j);
            if i == 0 && j == 0 {
                cost[0][0] = here;
                continue;
            }
            let mut best = (f64::INFINITY, Step::Start);
            let candidates = [
                (i > 0 && j > 0, Step::Diagonal, i.wrapping_sub(1), j.wrapping_sub(1)),
                (i > 0, Step::Morph, i.wrapping_sub(1), j),
                (j > 0, Step::Label, i, j.wrapping_sub(1)),
            ];
            for (ok, step, pi, pj) in candidates {
                if ok && cost[pi][pj] < best.0 {
                    best = (cost[pi][pj], step);
                }
            }
            cost[i][j] = best.0 + here;
            back[i][j] = best.1;
        }
    }

    let (mut i, mut j) = (n_morphs - 1, n_labels - 1);
    let mut pairs = vec![(i, j)];
    loop {
        match back[i][j] {
            Step::Start => break,
            Step::Diagonal => {
                i -= 1;
                j -= 1;
            }
            Step::Morph => i -= 1,
            Step::Label => j -= 1,
        }
        pairs.push((i, j));
    }
    pairs.reverse();
    (pairs, cost[n_morphs - 1][n_labels - 1])
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignmentCounts {
    /// Word tokens in which a morph was aligned with a label.
    pub pair: HashMap<String, HashMap<String, u64>>,
    /// Word tokens whose segmentation contains a morph.
    pub morph: HashMap<String, u64>,
}

impl AlignmentCounts {
    /// Adds one word type, weighted by its token count. Each distinct morph
    /// and morph/label pair counts once per token.
    pub fn add(&mut self, morphs: &[String], labels: &[Label], alignment: &Alignment, weight: u64) {
        let mut seen_morphs: Vec<&str> = morphs.iter().map(String::as_str).collect();
        seen_morphs.sort_unstable();
        seen_morphs.dedup();
        for m in seen_morphs {
            *self.morph.entry(m.to_string()).or_insert(0) += weight;
        }
        let mut seen_pairs: Vec<(&str, &str)> = alignment
            .pairs
            .iter()
            .map(|&(i, j)| (morphs[i].as_str(), labels[j].text.as_str()))
            .collect();
        seen_pairs.sort_unstable();
        seen_pairs.dedup();
        for (m, l) in seen_pairs {
            *self
                .pair
                .entry(m.to_string())
                .or_default()
                .entry(l.to_string())
                .or_insert(0) += weight;
        }
    }
}

/// How the distance for unseen pairs is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MaxDistance {
    /// Largest observed distance plus this many bits.
    Margin(f64),
    /// A fixed value, raised to the largest observed distance if below it.
    Fixed(f64),
}

impl Default for MaxDistance {
    fn default() -> Self {
        MaxDistance::Margin(DEFAULT_MAX_DISTANCE_MARGIN)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DistanceTable {
    d: HashMap<String, HashMap<String, f64>>,
    d_max: f64,
}

impl DistanceTable {
    pub fn new(d_max: f64) -> Self {
        DistanceTable {
            d: HashMap::new(),
            d_max,
        }
    }

    pub fn from_counts(counts: &AlignmentCounts, max_distance: MaxDistance) -> Self {
        let mut table = DistanceTable::new(0.0);
        let mut largest: f64 = 0.0;
        for (morph, labels) in &counts.pair {
            let c_m = counts.morph[morph] as f64;
            for (label, &c_ml) in labels {
                let d = 0.0 - (c_ml as f64 / c_m).log2();
                largest = largest.max(d);
                table.insert(morph.clone(), label.clone(), d);
            }
        }
        table.d_max = match max_distance {
            MaxDistance::Margin(margin) => largest + margin,
            MaxDistance::Fixed(value) if value < largest => {
                log::warn!("maximum distance {value} is below observed distance {largest}; using the latter");
                largest
            }
            MaxDistance::Fixed(value) => value,
        };
        table
    }

    pub fn insert(&mut self, morph: String, label: String, d: f64) {
        self.d.entry(morph).or_default().insert(label, d);
    }

    pub fn set_d_max(&mut self, d_max: f64) {
        self.d_max = d_max;
    }

    /// Fitted distance, `None` for a pair never aligned in training.
    pub fn get(&self, morph: &str, label: &str) -> Option<f64> {
        self.d.get(morph)?.get(label).copied()
    }

    /// Fitted distance, or `d_max` for unseen pairs.
    pub fn distance(&self, morph: &str, label: &str) -> f64 {
        self.get(morph, label).unwrap_or(self.d_max)
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn len(&self) -> usize {
        self.d.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(morph, label, distance)` sorted by morph then label.
    pub fn entries(&self) -> Vec<(&str, &str, f64)> {
        let mut out: Vec<_> = self
            .d
            .iter()
            .flat_map(|(m, ls)| ls.iter().map(move |(l, &d)| (m.as_str(), l.as_str(), d)))
            .collect();
        out.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        out
    }
}

/// Minimum-distance alignment of a morph sequence with a label sequence.
pub fn align_word(morphs: &[String], labels: &[Label], dist: &DistanceTable) -> (Alignment, f64) {
    let (pairs, cost) = viterbi_path(morphs.len(), labels.len(), |i, j| {
        dist.distance(&morphs[i], &labels[j].text)
    });
    (Alignment { pairs }, cost)
}

/// Length of the longest common substring of `a` and `b`, case-insensitively,
/// divided by the longer length. Tags always score 0.
pub fn string_match_score(morph: &str, label: &Label) -> f64 {
    if label.kind == LabelKind::Tag {
        return 0.0;
    }
    let a: Vec<char> = morph.chars().flat_map(char::to_lowercase).collect();
    let b: Vec<char> = label.text.chars().flat_map(char::to_lowercase).collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &ca in &a {
        let mut row = vec![0usize; b.len() + 1];
        for (j, &cb) in b.iter().enumerate() {
            if ca == cb {
                row[j + 1] = prev[j] + 1;
                best = best.max(row[j + 1]);
            }
        }
        prev = row;
    }
    best as f64 / longest as f64
}

/// Initial alignment maximizing the summed string-match score.
pub fn string_match_align(morphs: &[String], labels: &[Label]) -> Alignment {
    let (pairs, _) = viterbi_path(morphs.len(), labels.len(), |i, j| {
        -string_match_score(&morphs[i], &labels[j])
    });
    Alignment { pairs }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmAlignConfig {
    pub max_iterations: usize,
    /// Stop once an iteration improves the total distance by less than this fraction.
    pub tolerance: f64,
    pub max_distance: MaxDistance,
}

impl Default for EmAlignConfig {
    fn default() -> Self {
        EmAlignConfig {
            max_iterations: DEFAULT_EM_ITERATIONS,
            tolerance: DEFAULT_EM_TOLERANCE,
            max_distance: MaxDistance::default(),
        }
    }
}

/// Result of fitting distances on training words.
#[derive(Debug, Clone)]
pub struct FittedDistances {
    /// Table used for the final alignment pass.
    pub table: DistanceTable,
    pub alignments: BTreeMap<String, Alignment>,
    /// Token-weighted total training distance after each alignment pass.
    pub history: Vec<f64>,
    /// Segmented words without a gold analysis.
    pub excluded: Vec<String>,
}

impl FittedDistances {
    pub fn training_distance(&self) -> f64 {
        self.history.last().copied().unwrap_or(0.0)
    }
}

struct WordItem<'a> {
    word: &'a str,
    morphs: &'a [String],
    labels: &'a [Label],
    weight: u64,
}

fn collect_items<'a>(
    segmented: &'a Segmentation,
    gold: &'a GoldAnalysis,
    token_counts: &BTreeMap<String, u64>,
) -> Result<(Vec<WordItem<'a>>, Vec<String>)> {
    let mut items = Vec::new();
    let mut excluded = Vec::new();
    for (word, morphs) in segmented {
        let Some(labels) = gold.get(word).filter(|l| !l.is_empty()) else {
            excluded.push(word.clone());
            continue;
        };
        if morphs.is_empty() {
            return Err(Error::Argument(format!("word {word:?} has no morphs")));
        }
        let weight = *token_counts
            .get(word)
            .ok_or_else(|| Error::Argument(format!("no token count for word {word:?}")))?;
        items.push(WordItem {
            word,
            morphs,
            labels,
            weight,
        });
    }
    if !excluded.is_empty() {
        log::warn!(
            "{} segmented words have no gold analysis and are skipped",
            excluded.len()
        );
    }
    Ok((items, excluded))
}

/// Fits the distance table on training words.
///
/// Starts from string-matching alignments, then repeats: count aligned pairs,
/// rebuild distances, realign every word. Stops after `max_iterations` or
/// when the total distance improves by less than `tolerance` relative.
pub fn em_align(
    segmented: &Segmentation,
    gold: &GoldAnalysis,
    token_counts: &BTreeMap<String, u64>,
    config: &EmAlignConfig,
) -> Result<FittedDistances> {
    let (items, excluded) = collect_items(segmented, gold, token_counts)?;
    let mut alignments: Vec<Alignment> = items
        .par_iter()
        .map(|it| string_match_align(it.morphs, it.labels))
        .collect();

    let mut history: Vec<f64> = Vec::new();
    let mut table = DistanceTable::new(0.0);
    for _ in 0..config.max_iterations.max(1) {
        let mut counts = AlignmentCounts::default();
        for (it, al) in items.iter().zip(&alignments) {
            counts.add(it.morphs, it.labels, al, it.weight);
        }
        table = DistanceTable::from_counts(&counts, config.max_distance);

        let realigned: Vec<(Alignment, f64)> = items
            .par_iter()
            .map(|it| align_word(it.morphs, it.labels, &table))
            .collect();
        let total: f64 = items
            .iter()
            .zip(&realigned)
            .map(|(it, (_, d))| it.weight as f64 * d)
            .sum();
        alignments = realigned.into_iter().map(|(a, _)| a).collect();

        let converged = history
            .last()
            .is_some_and(|&prev| prev - total < config.tolerance * prev);
        history.push(total);
        if converged || total == 0.0 {
            break;
        }
    }

    Ok(FittedDistances {
        table,
        alignments: items.iter().map(|it| it.word.to_string()).zip(alignments).collect(),
        history,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Token-weighted total alignment distance over the test words, in bits.
    pub alignment_distance: f64,
    /// Fraction of aligned test pairs never observed in training.
    pub unseen_pair_fraction: f64,
    pub aligned_pairs: u64,
    pub unseen_pairs: u64,
    pub test_words: usize,
    pub test_words_skipped: usize,
    pub training_distance: f64,
    pub training_words_skipped: usize,
    pub em_iterations: usize,
    pub d_max: f64,
}

/// Test-set alignments together with their summary.
#[derive(Debug, Clone)]
pub struct EvaluationDetail {
    pub summary: Evaluation,
    pub fitted: FittedDistances,
    pub test_alignments: BTreeMap<String, Alignment>,
}

/// Fits distances on the training segmentation and scores the test segmentation with them.
pub fn evaluate(
    train_seg: &Segmentation,
    train_counts: &BTreeMap<String, u64>,
    test_seg: &Segmentation,
    test_counts: &BTreeMap<String, u64>,
    gold: &GoldAnalysis,
    config: &EmAlignConfig,
) -> Result<EvaluationDetail> {
    let fitted = em_align(train_seg, gold, train_counts, config)?;
    let (items, skipped) = collect_items(test_seg, gold, test_counts)?;
    let table = &fitted.table;

    let scored: Vec<(Alignment, f64, u64, u64)> = items
        .par_iter()
        .map(|it| {
            let (al, d) = align_word(it.morphs, it.labels, table);
            let unseen = al
                .pairs
                .iter()
                .filter(|&&(i, j)| table.get(&it.morphs[i], &it.labels[j].text).is_none())
                .count() as u64;
            let n = al.pairs.len() as u64;
            (al, d, n, unseen)
        })
        .collect();

    let mut distance = 0.0;
    let mut aligned = 0u64;
    let mut unseen = 0u64;
    for (it, (_, d, n, u)) in items.iter().zip(&scored) {
        distance += it.weight as f64 * d;
        aligned += it.weight * n;
        unseen += it.weight * u;
    }
    let summary = Evaluation {
        alignment_distance: distance,
        unseen_pair_fraction: if aligned > 0 {
            unseen as f64 / aligned as f64
        } else {
            0.0
        },
        aligned_pairs: aligned,
        unseen_pairs: unseen,
        test_words: items.len(),
        test_words_skipped: skipped.len(),
        training_distance: fitted.training_distance(),
        training_words_skipped: fitted.excluded.len(),
        em_iterations: fitted.history.len(),
        d_max: table.d_max(),
    };
    let test_alignments = items
        .iter()
        .map(|it| it.word.to_string())
        .zip(scored.into_iter().map(|(a, ..)| a))
        .collect();
    Ok(EvaluationDetail {
        summary,
        fitted,
        test_alignments,
    })
}

/// One line per word: `word<TAB>morph:LABEL[+LABEL...] ...`.
pub fn format_alignments(
    alignments: &BTreeMap<String, Alignment>,
    segmented: &Segmentation,
    gold: &GoldAnalysis,
) -> String {
    let mut out = String::new();
    for (word, al) in alignments {
        let (Some(morphs), Some(labels)) = (segmented.get(word), gold.get(word)) else {
            continue;
        };
        let mut per_morph: Vec<Vec<&str>> = vec![Vec::new(); morphs.len()];
        for &(i, j) in &al.pairs {
            per_morph[i].push(&labels[j].text);
        }
        let fields: Vec<String> = morphs
            .iter()
            .zip(&per_morph)
            .map(|(m, ls)| format!("{m}:{}", ls.join("+")))
            .collect();
        out.push_str(word);
        out.push('\t');
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    out
}
