use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use morphseg::corpus::{load_corpus, split_corpus, Alphabet, Corpus, PreprocessConfig};
use morphseg::eval::{
    evaluate, format_alignments, parse_gold, read_tag_filter, EmAlignConfig, GoldAnalysis, MaxDistance,
};
use morphseg::mdl::{train_online_traced, DreamConfig, MdlConfig, DEFAULT_CHAR_BITS, DEFAULT_DREAM_INTERVAL};
use morphseg::ml::{train_em, EmConfig, Segmentation, DEFAULT_ITERATIONS, DEFAULT_LAMBDA};
use morphseg::persistence::{Model, ModelFile};
use morphseg::pipeline::{run_comparison, store_segmentation, CompareConfig};
use morphseg::report::{build_report, format_table, MetricsReport, TrainedModel};
use morphseg::Error;

#[derive(Parser)]
#[command(name = "morphseg", version, about = "Unsupervised morph discovery and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one segmenter on a corpus and save the model.
    Train(TrainArgs),
    /// Segment a list of words with a saved model.
    Segment(SegmentArgs),
    /// Score segmentations against gold analyses.
    Eval(EvalArgs),
    /// Train both segmenters on the same data and tabulate their metrics.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    RecMdl,
    SeqMl,
}

#[derive(Args)]
struct CorpusArgs {
    /// Plain-text corpus, whitespace-tokenized.
    #[arg(long)]
    corpus: PathBuf,
    /// `english`, `finnish`, or a literal list of characters.
    #[arg(long, default_value = "english")]
    alphabet: Alphabet,
    /// Keep the original letter case.
    #[arg(long)]
    no_lowercase: bool,
}

#[derive(Args)]
struct LearnerArgs {
    /// Bits per codebook character.
    #[arg(long, default_value_t = DEFAULT_CHAR_BITS)]
    char_bits: u32,
    /// Tokens between dreams; 0 disables dreaming.
    #[arg(long, default_value_t = DEFAULT_DREAM_INTERVAL)]
    dream_interval: usize,
    /// Upper bound on passes per dream.
    #[arg(long, default_value_t = DreamConfig::default().max_passes)]
    dream_passes: usize,
    /// Tokens between cost-curve points.
    #[arg(long, default_value_t = 1000)]
    curve_interval: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// EM iterations for the sequential learner.
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,
    /// Poisson mean of the initial morph lengths.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    /// Disable rejection of rare morphs and one-letter runs.
    #[arg(long)]
    no_reject: bool,
}

impl LearnerArgs {
    fn mdl(&self) -> MdlConfig {
        MdlConfig {
            char_bits: self.char_bits,
            dream_interval: self.dream_interval,
            dream: DreamConfig {
                max_passes: self.dream_passes,
                ..DreamConfig::default()
            },
            curve_interval: self.curve_interval,
            seed: self.seed,
        }
    }

    fn em(&self) -> EmConfig {
        EmConfig {
            iterations: self.iterations,
            lambda: self.lambda,
            reject: !self.no_reject,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Use only the first N tokens.
    #[arg(long)]
    train_tokens: Option<usize>,
    /// Where to write the model.
    #[arg(long)]
    model: PathBuf,
    /// Also write the segmentation of the training words.
    #[arg(long)]
    segmentation: Option<PathBuf>,
    /// Write the cost curve as CSV (rec-mdl only).
    #[arg(long)]
    cost_curve: Option<PathBuf>,
    #[command(flatten)]
    learner: LearnerArgs,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    model: PathBuf,
    /// Whitespace-separated words to segment.
    #[arg(long)]
    words: PathBuf,
    /// Output file; defaults to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GoldArgs {
    /// Gold analyses, `word<TAB>base#TAG ...`.
    #[arg(long)]
    gold: PathBuf,
    /// Keep only the tags listed in this file.
    #[arg(long)]
    tags: Option<PathBuf>,
    /// Fix the maximum distance instead of deriving it from the data.
    #[arg(long)]
    max_distance: Option<f64>,
    /// Upper bound on alignment EM iterations.
    #[arg(long, default_value_t = morphseg::eval::DEFAULT_EM_ITERATIONS)]
    align_iterations: usize,
}

impl GoldArgs {
    fn load(&self) -> Result<GoldAnalysis, CliError> {
        let filter = match &self.tags {
            Some(p) => Some(read_tag_filter(open(p)?)?),
            None => None,
        };
        Ok(parse_gold(open(&self.gold)?, filter.as_ref())?)
    }

    fn config(&self) -> Result<EmAlignConfig, CliError> {
        let max_distance = match self.max_distance {
            Some(d) if d.is_finite() && d > 0.0 => MaxDistance::Fixed(d),
            Some(d) => return Err(CliError::Usage(format!("--max-distance must be positive, got {d}"))),
            None => MaxDistance::default(),
        };
        Ok(EmAlignConfig {
            max_iterations: self.align_iterations,
            max_distance,
            ..EmAlignConfig::default()
        })
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Segmentation of the training words, used to fit distances.
    #[arg(long)]
    train_seg: PathBuf,
    /// Segmentation of the test words, which is scored.
    #[arg(long)]
    test_seg: PathBuf,
    #[command(flatten)]
    gold: GoldArgs,
    /// Token counts for the training words; each type counts once without it.
    #[arg(long)]
    train_corpus: Option<PathBuf>,
    /// Token counts for the test words; each type counts once without it.
    #[arg(long)]
    test_corpus: Option<PathBuf>,
    /// Alphabet used when reading the count corpora.
    #[arg(long, default_value = "english")]
    alphabet: Alphabet,
    /// Write the test alignments here.
    #[arg(long)]
    alignments: Option<PathBuf>,
    /// Write the fitted distance table here.
    #[arg(long)]
    distances: Option<PathBuf>,
    /// Output file; defaults to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    train_tokens: usize,
    #[arg(long)]
    test_tokens: usize,
    /// Gold analyses; without them the alignment rows stay empty.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long, requires = "gold")]
    tags: Option<PathBuf>,
    #[arg(long, requires = "gold")]
    max_distance: Option<f64>,
    /// Write models, segmentations and alignments into this directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write the reports as JSON lines.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the recursive learner's cost curve as CSV.
    #[arg(long)]
    cost_curve: Option<PathBuf>,
    /// Leave wall time out of the outputs so that reruns are byte-identical.
    #[arg(long)]
    no_time: bool,
    #[command(flatten)]
    learner: LearnerArgs,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(Error::Io(e))
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(Error::Input(format!("{}: {e}", path.display()))))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Data(Error::Input(format!("{}: {e}", path.display()))))
}

fn write_output(path: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, contents),
        None => {
            io::stdout().lock().write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}

fn read_corpus(args: &CorpusArgs, char_bits: u32) -> Result<Corpus, CliError> {
    if !args.alphabet.fits_in_bits(char_bits) {
        return Err(CliError::Usage(format!(
            "an alphabet of {} characters does not fit in {char_bits} bits per character",
            args.alphabet.len()
        )));
    }
    let config = PreprocessConfig {
        alphabet: args.alphabet.clone(),
        lowercase: !args.no_lowercase,
    };
    Ok(load_corpus(open(&args.corpus)?, &config)?)
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut corpus = read_corpus(&args.corpus, args.learner.char_bits)?;
    if let Some(n) = args.train_tokens {
        corpus = split_corpus(&corpus, n, 0)?.0;
    }
    if args.cost_curve.is_some() && matches!(args.method, MethodArg::SeqMl) {
        return Err(CliError::Usage("--cost-curve applies to rec-mdl only".into()));
    }
    let start = Instant::now();
    let (report, segmentation) = match args.method {
        MethodArg::RecMdl => {
            let (store, trace) = train_online_traced(&corpus, &args.learner.mdl())?;
            let elapsed = start.elapsed();
            store.save(&args.model)?;
            if let Some(p) = &args.cost_curve {
                write_file(p, &trace.curve_csv())?;
            }
            (
                build_report(TrainedModel::Mdl(&store), None, Some(elapsed)),
                store_segmentation(&store),
            )
        }
        MethodArg::SeqMl => {
            let em = train_em(&corpus, &args.learner.em())?;
            let elapsed = start.elapsed();
            em.stats.save(&args.model)?;
            let model = TrainedModel::Ml {
                stats: &em.stats,
                char_bits: args.learner.char_bits,
            };
            (build_report(model, None, Some(elapsed)), em.segmentation)
        }
    };
    if let Some(p) = &args.segmentation {
        segmentation.save(p)?;
    }
    write_output(None, &report.to_json_line())
}

fn read_words(path: &Path) -> Result<Vec<String>, CliError> {
    let mut words = Vec::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|_| Error::Input(format!("{} is not valid UTF-8", path.display())))?;
        words.extend(line.split_whitespace().map(str::to_string));
    }
    Ok(words)
}

fn segment(args: SegmentArgs) -> Result<(), CliError> {
    let model = Model::load(&args.model)?;
    let words = read_words(&args.words)?;
    let segmentation = model.segment_words(words.iter().map(String::as_str))?;
    write_output(args.output.as_deref(), &segmentation.to_text())
}

fn token_counts(
    corpus: Option<&Path>,
    alphabet: &Alphabet,
    seg: &Segmentation,
) -> Result<BTreeMap<String, u64>, CliError> {
    match corpus {
        Some(p) => Ok(load_corpus(open(p)?, &PreprocessConfig::new(alphabet.clone()))?
            .type_counts()
            .clone()),
        None => Ok(seg.keys().map(|w| (w.clone(), 1)).collect()),
    }
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let train_seg = Segmentation::load(&args.train_seg)?;
    let test_seg = Segmentation::load(&args.test_seg)?;
    let gold = args.gold.load()?;
    let config = args.gold.config()?;
    let train_counts = token_counts(args.train_corpus.as_deref(), &args.alphabet, &train_seg)?;
    let test_counts = token_counts(args.test_corpus.as_deref(), &args.alphabet, &test_seg)?;
    let detail = evaluate(&train_seg, &train_counts, &test_seg, &test_counts, &gold, &config)?;
    if let Some(p) = &args.alignments {
        write_file(p, &format_alignments(&detail.test_alignments, &test_seg, &gold))?;
    }
    if let Some(p) = &args.distances {
        detail.fitted.table.save(p)?;
    }
    let mut json = serde_json::to_string(&detail.summary).expect("evaluation serializes");
    json.push('\n');
    write_output(args.output.as_deref(), &json)
}

fn compare(args: CompareArgs) -> Result<(), CliError> {
    let corpus = read_corpus(&args.corpus, args.learner.char_bits)?;
    let gold = match &args.gold {
        Some(path) => {
            let gold_args = GoldArgs {
                gold: path.clone(),
                tags: args.tags.clone(),
                max_distance: args.max_distance,
                align_iterations: morphseg::eval::DEFAULT_EM_ITERATIONS,
            };
            Some((gold_args.load()?, gold_args.config()?))
        }
        None => None,
    };
    let config = CompareConfig {
        train_tokens: args.train_tokens,
        test_tokens: args.test_tokens,
        mdl: args.learner.mdl(),
        em: args.learner.em(),
        align: gold.as_ref().map(|(_, c)| *c).unwrap_or_default(),
        measure_time: !args.no_time,
    };
    let cmp = run_comparison(&corpus, gold.as_ref().map(|(g, _)| g), &config)?;

    let reports: String = cmp.reports.iter().map(MetricsReport::to_json_line).collect();
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
        cmp.store.save(dir.join("rec-mdl.model"))?;
        cmp.stats.save(dir.join("seq-ml.model"))?;
        for (name, run) in [("rec-mdl", &cmp.mdl), ("seq-ml", &cmp.ml)] {
            run.train_segmentation.save(dir.join(format!("{name}.train.seg")))?;
            run.test_segmentation.save(dir.join(format!("{name}.test.seg")))?;
            if let (Some(detail), Some((g, _))) = (&run.evaluation, &gold) {
                let text = format_alignments(&detail.test_alignments, &run.test_segmentation, g);
                write_file(&dir.join(format!("{name}.alignments")), &text)?;
            }
        }
        write_file(&dir.join("cost_curve.csv"), &cmp.trace.curve_csv())?;
        write_file(&dir.join("report.jsonl"), &reports)?;
    }
    if let Some(p) = &args.report {
        write_file(p, &reports)?;
    }
    if let Some(p) = &args.cost_curve {
        write_file(p, &cmp.trace.curve_csv())?;
    }
    write_output(None, &format_table(&cmp.reports))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Segment(a) => segment(a),
        Command::Eval(a) => eval(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
