//! Unsupervised discovery of morph vocabularies from word corpora.
//!
//! Two learners are provided: [`mdl`], an online recursive splitter driven
//! by a two-part description length, and [`ml`], a batch Viterbi-EM
//! segmenter with maximum-likelihood morph probabilities. [`eval`] scores a
//! segmentation against gold morphemic analyses through an EM-refined
//! Viterbi alignment.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod mdl;
pub mod ml;
pub mod persistence;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
