//! Corpus ingestion: whitespace tokenization, case folding and
//! alphabet filtering, plus the prefix train/test split.
//!
//! Words containing any character outside the alphabet are dropped whole;
//! characters are never stripped out of a word.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::str::FromStr;

use crate::error::{Error, Result};

const ENGLISH_EXTRA: &[char] = &['\'', '-'];
const FINNISH_EXTRA: &[char] = &['å', 'ä', 'ö', '-'];

/// Set of characters a word may consist of.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet(BTreeSet<char>);

impl Alphabet {
    pub fn new(chars: impl IntoIterator<Item = char>) -> Result<Self> {
        let set: BTreeSet<char> = chars.into_iter().collect();
        if set.is_empty() {
            return Err(Error::Argument("alphabet is empty".into()));
        }
        if let Some(c) = set.iter().find(|c| c.is_whitespace()) {
            return Err(Error::Argument(format!("alphabet contains whitespace character {c:?}")));
        }
        Ok(Alphabet(set))
    }

    /// `a`-`z`, apostrophe and hyphen.
    pub fn english() -> Self {
        Alphabet(('a'..='z').chain(ENGLISH_EXTRA.iter().copied()).collect())
    }

    /// `a`-`z`, `å`, `ä`, `ö` and hyphen.
    pub fn finnish() -> Self {
        Alphabet(('a'..='z').chain(FINNISH_EXTRA.iter().copied()).collect())
    }

    pub fn contains(&self, c: char) -> bool {
        self.0.contains(&c)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.0.iter().copied()
    }

    /// Whether every character can be written with `char_bits` bits.
    pub fn fits_in_bits(&self, char_bits: u32) -> bool {
        char_bits >= usize::BITS || self.len() <= 1usize << char_bits
    }
}

impl FromStr for Alphabet {
    type Err = Error;

    /// Accepts a preset name (`english`, `finnish`) or the literal characters.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "english" => Ok(Alphabet::english()),
            "finnish" => Ok(Alphabet::finnish()),
            other => Alphabet::new(other.chars()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    pub alphabet: Alphabet,
    pub lowercase: bool,
}

impl PreprocessConfig {
    pub fn new(alphabet: Alphabet) -> Self {
        PreprocessConfig {
            alphabet,
            lowercase: true,
        }
    }

    /// Applies case folding and the alphabet filter to one raw token.
    pub fn normalize(&self, raw: &str) -> Option<String> {
        let word = if self.lowercase {
            raw.to_lowercase()
        } else {
            raw.to_string()
        };
        if word.is_empty() || !word.chars().all(|c| self.alphabet.contains(c)) {
            return None;
        }
        Some(word)
    }
}

/// Ordered word tokens together with their type counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    tokens: Vec<String>,
    type_counts: BTreeMap<String, u64>,
}

impl Corpus {
    /// Builds a corpus from already normalized tokens.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut corpus = Corpus::default();
        for token in tokens {
            let token = token.into();
            if token.is_empty() {
                return Err(Error::Argument("empty token".into()));
            }
            corpus.push(token);
        }
        if corpus.tokens.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(corpus)
    }

    fn push(&mut self, token: String) {
        *self.type_counts.entry(token.clone()).or_insert(0) += 1;
        self.tokens.push(token);
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Word types in lexicographic order with their token counts.
    pub fn type_counts(&self) -> &BTreeMap<String, u64> {
        &self.type_counts
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_types(&self) -> usize {
        self.type_counts.len()
    }

    /// Whitespace-joined token stream; loading it again yields the same corpus.
    pub fn to_text(&self) -> String {
        let mut out = self.tokens.join(" ");
        out.push('\n');
        out
    }
}

/// Reads whitespace-separated tokens, keeping only those fully inside the alphabet.
pub fn load_corpus<R: BufRead>(reader: R, config: &PreprocessConfig) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => Error::Input(format!("line {}: stream is not valid UTF-8", lineno + 1)),
            _ => Error::Io(e),
        })?;
        for raw in line.split_whitespace() {
            if let Some(word) = config.normalize(raw) {
                corpus.push(word);
            }
        }
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(corpus)
}

/// First `n_train` tokens become the training part, the following `n_test` the test part.
pub fn split_corpus(corpus: &Corpus, n_train: usize, n_test: usize) -> Result<(Corpus, Corpus)> {
    let requested = n_train.saturating_add(n_test);
    if requested > corpus.len() {
        return Err(Error::Size {
            requested,
            available: corpus.len(),
        });
    }
    let train = Corpus::from_tokens(corpus.tokens[..n_train].iter().cloned())?;
    let test = Corpus::from_tokens(corpus.tokens[n_train..requested].iter().cloned())?;
    Ok((train, test))
}
