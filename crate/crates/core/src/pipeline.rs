//! End-to-end runs: train both learners, segment held-out words, evaluate, report.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use crate::corpus::{split_corpus, Corpus};
use crate::error::Result;
use crate::eval::{evaluate, EmAlignConfig, EvaluationDetail, GoldAnalysis};
use crate::mdl::{train_online_traced, ChunkStore, MdlConfig, TrainingTrace};
use crate::ml::{train_em, EmConfig, MorphStats, Segmentation};
use crate::persistence::Model;
use crate::report::{build_report, MetricsReport, TrainedModel};

/// Segments every known word of the store.
pub fn store_segmentation(store: &ChunkStore) -> Segmentation {
    store
        .words()
        .map(|(w, _)| (w.to_string(), store.segment_word(w).expect("known word")))
        .collect()
}

/// Segments `words` with a copy of the store, reading unknown words into the copy in order.
pub fn segment_with_store<'a>(store: &ChunkStore, words: impl IntoIterator<Item = &'a str>) -> Result<Segmentation> {
    let mut working = store.clone();
    let mut seen = Vec::new();
    for w in words {
        if working.chunk(w).is_none() {
            working.process_word(w)?;
        }
        seen.push(w);
    }
    seen.into_iter()
        .map(|w| Ok((w.to_string(), working.segment_word(w)?)))
        .collect()
}

pub fn segment_with_stats<'a>(stats: &MorphStats, words: impl IntoIterator<Item = &'a str>) -> Segmentation {
    words.into_iter().map(|w| (w.to_string(), stats.segment(w))).collect()
}

impl Model {
    pub fn segment_words<'a>(&self, words: impl IntoIterator<Item = &'a str>) -> Result<Segmentation> {
        match self {
            Model::Mdl(store) => segment_with_store(store, words),
            Model::Ml(stats) => Ok(segment_with_stats(stats, words)),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CompareConfig {
    pub train_tokens: usize,
    pub test_tokens: usize,
    pub mdl: MdlConfig,
    pub em: EmConfig,
    pub align: EmAlignConfig,
    /// Record training wall time in the reports.
    pub measure_time: bool,
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub train_segmentation: Segmentation,
    pub test_segmentation: Segmentation,
    pub training_time: Duration,
    pub evaluation: Option<EvaluationDetail>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub train: Corpus,
    pub test: Corpus,
    pub store: ChunkStore,
    pub trace: TrainingTrace,
    pub stats: MorphStats,
    pub ml_cost_history: Vec<f64>,
    pub mdl: MethodRun,
    pub ml: MethodRun,
    pub reports: Vec<MetricsReport>,
}

fn first_occurrences(corpus: &Corpus) -> Vec<&str> {
    let mut seen = BTreeSet::new();
    corpus
        .tokens()
        .iter()
        .map(String::as_str)
        .filter(|t| seen.insert(*t))
        .collect()
}

fn score(
    train_seg: &Segmentation,
    train: &Corpus,
    test_seg: &Segmentation,
    test: &Corpus,
    gold: Option<&GoldAnalysis>,
    config: &EmAlignConfig,
) -> Result<Option<EvaluationDetail>> {
    gold.map(|g| evaluate(train_seg, train.type_counts(), test_seg, test.type_counts(), g, config))
        .transpose()
}

/// Trains both learners on the first `train_tokens` tokens and evaluates them on the next `test_tokens`.
pub fn run_comparison(corpus: &Corpus, gold: Option<&GoldAnalysis>, config: &CompareConfig) -> Result<Comparison> {
    let (train, test) = split_corpus(corpus, config.train_tokens, config.test_tokens)?;
    let test_words = first_occurrences(&test);

    log::info!("training recursive MDL on {} tokens", train.len());
    let start = Instant::now();
    let (store, trace) = train_online_traced(&train, &config.mdl)?;
    let mdl_time = start.elapsed();
    let mdl = MethodRun {
        train_segmentation: store_segmentation(&store),
        test_segmentation: segment_with_store(&store, test_words.iter().copied())?,
        training_time: mdl_time,
        evaluation: None,
    };

    log::info!("training sequential ML on {} tokens", train.len());
    let start = Instant::now();
    let em = train_em(&train, &config.em)?;
    let ml_time = start.elapsed();
    let ml = MethodRun {
        test_segmentation: segment_with_stats(&em.stats, test_words.iter().copied()),
        train_segmentation: em.segmentation,
        training_time: ml_time,
        evaluation: None,
    };

    let mut runs = [mdl, ml];
    for run in &mut runs {
        run.evaluation = score(
            &run.train_segmentation,
            &train,
            &run.test_segmentation,
            &test,
            gold,
            &config.align,
        )?;
    }
    let [mdl, ml] = runs;

    let time = |run: &MethodRun| config.measure_time.then_some(run.training_time);
    let reports = vec![
        build_report(
            TrainedModel::Mdl(&store),
            mdl.evaluation.as_ref().map(|e| &e.summary),
            time(&mdl),
        ),
        build_report(
            TrainedModel::Ml {
                stats: &em.stats,
                char_bits: config.mdl.char_bits,
            },
            ml.evaluation.as_ref().map(|e| &e.summary),
            time(&ml),
        ),
    ];

    Ok(Comparison {
        train,
        test,
        store,
        trace,
        stats: em.stats,
        ml_cost_history: em.cost_history,
        mdl,
        ml,
        reports,
    })
}
