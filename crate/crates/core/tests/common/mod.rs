//! Seeded English-like text with known morphological analyses.
//!
//! Stems are random syllable strings with Zipfian frequencies; nouns, verbs
//! and adjectives take their usual inflectional and derivational endings,
//! some nouns form compounds, and a handful of function words make up a
//! large share of the tokens. Set `MORPHSEG_ENGLISH_CORPUS` (and optionally
//! `MORPHSEG_ENGLISH_GOLD`) to run against real files instead.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;

use morphseg::corpus::{load_corpus, Alphabet, Corpus, PreprocessConfig};
use morphseg::eval::{parse_gold, GoldAnalysis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FUNCTION_WORDS: &[&str] = &[
    "the", "of", "and", "a", "to", "in", "is", "it", "that", "was", "he", "for", "on", "as", "with", "his", "they",
    "at", "be", "this", "from", "i", "have", "or", "by", "one", "had", "not", "but", "what",
];

#[derive(Clone, Copy, PartialEq)]
enum Pos {
    Noun,
    Verb,
    Adj,
}

/// `(suffix, tags, weight)` per part of speech.
fn endings(pos: Pos) -> &'static [(&'static str, &'static [&'static str], u32)] {
    match pos {
        Pos::Noun => &[
            ("", &[], 70),
            ("s", &["PL"], 22),
            ("'s", &["GEN"], 5),
            ("ful", &["FUL"], 3),
        ],
        Pos::Verb => &[
            ("", &[], 35),
            ("s", &["3SG"], 18),
            ("ed", &["PAST"], 20),
            ("ing", &["PROG"], 17),
            ("er", &["AGT"], 6),
            ("ers", &["AGT", "PL"], 4),
        ],
        Pos::Adj => &[
            ("", &[], 70),
            ("ly", &["ADV"], 12),
            ("ness", &["NESS"], 6),
            ("er", &["CMP"], 6),
            ("est", &["SUP"], 6),
        ],
    }
}

pub struct Synthetic {
    pub tokens: Vec<String>,
    /// Gold analyses of every generated word type, in `parse_gold` format.
    pub gold_text: String,
}

impl Synthetic {
    /// Tokens separated by spaces, fifteen to a line.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for line in self.tokens.chunks(15) {
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn corpus(&self) -> Corpus {
        Corpus::from_tokens(&self.tokens).unwrap()
    }

    pub fn gold(&self) -> GoldAnalysis {
        parse_gold(self.gold_text.as_bytes(), None).unwrap()
    }
}

fn stem<R: Rng>(rng: &mut R) -> String {
    const ONSETS: &[&str] = &[
        "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "br", "cl", "dr", "fl",
        "gr", "pl", "st", "tr", "sh", "ch", "th",
    ];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ea", "oo", "ai", "ou"];
    const CODAS: &[&str] = &["", "", "n", "m", "r", "l", "t", "d", "k", "st", "nd", "rk", "sh"];
    let syllables = match rng.random_range(0..10) {
        0..=4 => 1,
        5..=8 => 2,
        _ => 3,
    };
    let mut s = String::new();
    for i in 0..syllables {
        s.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
        s.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
        if i + 1 == syllables || rng.random_bool(0.3) {
            s.push_str(CODAS[rng.random_range(0..CODAS.len())]);
        }
    }
    s
}

fn weighted<R: Rng, T: Copy>(rng: &mut R, items: &[(T, u32)]) -> T {
    let total: u32 = items.iter().map(|(_, w)| w).sum();
    let mut x = rng.random_range(0..total);
    for &(item, w) in items {
        if x < w {
            return item;
        }
        x -= w;
    }
    unreachable!()
}

/// Generates `n_tokens` tokens over a lexicon of `n_stems` stems.
pub fn english_like(n_tokens: usize, n_stems: usize, seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lexicon: Vec<(String, Pos)> = Vec::with_capacity(n_stems);
    let mut used = std::collections::HashSet::new();
    used.extend(FUNCTION_WORDS.iter().map(|w| w.to_string()));
    while lexicon.len() < n_stems {
        let s = stem(&mut rng);
        if used.insert(s.clone()) {
            let pos = weighted(&mut rng, &[(Pos::Noun, 5), (Pos::Verb, 3), (Pos::Adj, 2)]);
            lexicon.push((s, pos));
        }
    }
    let cumulative: Vec<f64> = lexicon
        .iter()
        .enumerate()
        .scan(0.0, |acc, (rank, _)| {
            *acc += 1.0 / (rank as f64 + 1.0);
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().unwrap();
    let nouns: Vec<usize> = (0..lexicon.len()).filter(|&i| lexicon[i].1 == Pos::Noun).collect();
    let pick = |rng: &mut ChaCha8Rng| {
        let x = rng.random::<f64>() * total;
        cumulative.partition_point(|&c| c < x).min(lexicon.len() - 1)
    };

    let mut tokens = Vec::with_capacity(n_tokens);
    let mut gold: BTreeMap<String, String> = BTreeMap::new();
    while tokens.len() < n_tokens {
        if rng.random_bool(0.4) {
            let w = FUNCTION_WORDS[(rng.random::<f64>().powi(2) * FUNCTION_WORDS.len() as f64) as usize];
            gold.entry(w.to_string()).or_insert_with(|| w.to_string());
            tokens.push(w.to_string());
            continue;
        }
        let (mut word, pos) = lexicon[pick(&mut rng)].clone();
        let mut base = word.clone();
        if pos == Pos::Noun && rng.random_bool(0.08) {
            let other = &lexicon[nouns[pick(&mut rng) % nouns.len()]].0;
            word.push_str(other);
            base = format!("{base}#{other}");
        }
        let (suffix, tags) = {
            let table = endings(pos);
            let idx = weighted(
                &mut rng,
                &table.iter().enumerate().map(|(i, e)| (i, e.2)).collect::<Vec<_>>(),
            );
            (table[idx].0, table[idx].1)
        };
        word.push_str(suffix);
        let mut analysis = base;
        for t in tags {
            analysis.push(' ');
            analysis.push_str(t);
        }
        gold.entry(word.clone()).or_insert(analysis);
        tokens.push(word);
    }
    let gold_text = gold.iter().map(|(w, a)| format!("{w}\t{a}\n")).collect();
    Synthetic { tokens, gold_text }
}

/// An English corpus of at least `n_tokens` tokens and its gold analyses.
///
/// Reads the files named by the environment when present, otherwise generates one.
pub fn english_corpus(n_tokens: usize, seed: u64) -> (Corpus, GoldAnalysis, &'static str) {
    if let Ok(path) = std::env::var("MORPHSEG_ENGLISH_CORPUS") {
        let file = BufReader::new(File::open(&path).expect("corpus file"));
        let corpus = load_corpus(file, &PreprocessConfig::new(Alphabet::english())).unwrap();
        let gold = std::env::var("MORPHSEG_ENGLISH_GOLD")
            .map(|g| parse_gold(BufReader::new(File::open(g).expect("gold file")), None).unwrap())
            .unwrap_or_default();
        return (corpus, gold, "external");
    }
    let s = english_like(n_tokens, 3000, seed);
    (s.corpus(), s.gold(), "synthetic")
}
