//! `dewe`: train and evaluate definition-enriched word embeddings.
//!
//! Exit codes: 0 on success, 2 for usage and input problems (bad flags,
//! unreadable files, out-of-vocabulary queries), 1 for internal failures.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dewe::corpus::{
    build_vocab, encode, normalize_links, parse_corpus_with, DocumentSet, EncodedDocument,
    ParseOptions, Vocabulary,
};
use dewe::eval;
use dewe::store;
use dewe::trainer::{train_with_progress, EmbeddingModel, TrainConfig};
use dewe::weighting::{build_idf, IdfTable, WeightScheme};

#[derive(Parser)]
#[command(name = "dewe", version, about = "Definition-enriched word embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a JSONL corpus and save it.
    Train(TrainArgs),
    /// Print the nearest neighbors of a word.
    Nearest(NearestArgs),
    /// Find words matching a description, or score a description file.
    Revdict(RevdictArgs),
    /// Evaluate a trained model.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Spearman correlation against human word-similarity judgments.
    Sim(SimArgs),
    /// Predict document links from document embeddings.
    Links(LinksArgs),
    /// Cross-validated document classification from document embeddings.
    Classify(ClassifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchiveFormat {
    Text,
    Binary,
}

#[derive(Args)]
struct TrainArgs {
    /// JSONL corpus: one {"id","title","category","text"} object per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Where to write the model archive.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: ArchiveFormat,
    /// Context window radius.
    #[arg(long, default_value_t = 3)]
    window: usize,
    /// Negative samples per (center, context) pair.
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    /// Embedding dimensionality.
    #[arg(long, default_value_t = 50)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Initial learning rate (decays linearly).
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    /// Drop tokens occurring fewer times than this.
    #[arg(long, default_value_t = 10)]
    min_count: u64,
    /// Definition prefix length, in tokens.
    #[arg(long, default_value_t = 100)]
    prefix_len: usize,
    /// Weighting for definition composition: uniform or tfidf.
    #[arg(long, default_value = "tfidf")]
    scheme: WeightScheme,
    /// Exponent on unigram counts in the negative-sampling distribution.
    #[arg(long, default_value_t = 0.75)]
    noise_power: f64,
    #[arg(long, default_value_t = 10_000_000)]
    noise_table_size: usize,
    /// The learning rate never falls below lr * this ratio.
    #[arg(long, default_value_t = 1e-4)]
    lr_floor_ratio: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; more than 1 gives up bit-reproducibility.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Train linked words as plain skip-gram, ignoring their definitions.
    #[arg(long)]
    no_definition_term: bool,
    /// Lowercase tokens and titles while parsing.
    #[arg(long)]
    lowercase: bool,
}

#[derive(Args)]
struct NearestArgs {
    /// Model archive (text or binary).
    #[arg(long)]
    model: PathBuf,
    /// Query word.
    word: String,
    /// How many neighbors to print.
    #[arg(short = 'n', long, default_value_t = 10)]
    count: usize,
}

#[derive(Args)]
struct RevdictArgs {
    /// Model archive (text or binary).
    #[arg(long)]
    model: PathBuf,
    /// Description words to query with.
    #[arg(required_unless_present = "eval", conflicts_with = "eval")]
    words: Vec<String>,
    /// Evaluate a `target word word ...` description file instead.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Weighting for description composition: uniform or tfidf.
    #[arg(long, default_value = "tfidf")]
    scheme: WeightScheme,
    /// Corpus for document frequencies; required with --scheme tfidf.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// How many candidates to print in query mode.
    #[arg(short = 'n', long, default_value_t = 10)]
    count: usize,
    /// Lowercase tokens and titles while parsing the corpus.
    #[arg(long)]
    lowercase: bool,
    /// Print the evaluation report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    model: PathBuf,
    /// `word1 word2 score` triples, one per line.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct LinksArgs {
    #[arg(long)]
    model: PathBuf,
    /// The corpus whose links to predict.
    #[arg(long)]
    corpus: PathBuf,
    /// Ranking cutoff.
    #[arg(short = 'k', long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "tfidf")]
    scheme: WeightScheme,
    #[arg(long, default_value_t = 100)]
    prefix_len: usize,
    #[arg(long)]
    lowercase: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// The corpus whose category labels to predict.
    #[arg(long)]
    corpus: PathBuf,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value = "tfidf")]
    scheme: WeightScheme,
    #[arg(long, default_value_t = 100)]
    prefix_len: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    lowercase: bool,
    #[arg(long)]
    json: bool,
}

/// Errors split by who can fix them: `Input` is the caller's to correct
/// (exit 2), `Internal` is ours (exit 1).
enum CliError {
    Input(String),
    Internal(anyhow::Error),
}

type CliResult<T = ()> = Result<T, CliError>;

fn input_err<T>(message: impl Into<String>) -> CliResult<T> {
    Err(CliError::Input(message.into()))
}

trait InputContext<T> {
    /// Converts the error into a user-correctable one, prefixed with `what`.
    fn input_context(self, what: &str) -> CliResult<T>;
}

impl<T, E: std::fmt::Display> InputContext<T> for Result<T, E> {
    fn input_context(self, what: &str) -> CliResult<T> {
        self.map_err(|e| CliError::Input(format!("{what}: {e}")))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => run_train(args),
        Command::Nearest(args) => run_nearest(args),
        Command::Revdict(args) => run_revdict(args),
        Command::Eval(EvalCommand::Sim(args)) => run_sim(args),
        Command::Eval(EvalCommand::Links(args)) => run_links(args),
        Command::Eval(EvalCommand::Classify(args)) => run_classify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(err)) => {
            eprintln!("internal error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_corpus(path: &Path, lowercase: bool) -> CliResult<DocumentSet> {
    let file = File::open(path).input_context(&format!("cannot open {}", path.display()))?;
    let set = parse_corpus_with(BufReader::new(file), &ParseOptions { lowercase })
        .input_context(&format!("cannot parse {}", path.display()))?;
    if set.docs.is_empty() {
        return input_err(format!("{} contains no usable documents", path.display()));
    }
    Ok(normalize_links(set))
}

fn load_model(path: &Path) -> CliResult<(EmbeddingModel, Vocabulary)> {
    store::load_auto(path).input_context(&format!("cannot load model {}", path.display()))
}

/// Encodes an evaluation corpus with a loaded vocabulary and builds the IDF
/// table when the scheme needs one.
fn corpus_for_eval(
    path: &Path,
    lowercase: bool,
    vocab: &Vocabulary,
    scheme: WeightScheme,
) -> CliResult<(Vec<EncodedDocument>, Option<IdfTable>)> {
    let set = load_corpus(path, lowercase)?;
    let docs = encode(&set, vocab);
    let idf = idf_for(scheme, Some(&docs), vocab)?;
    Ok((docs, idf))
}

fn idf_for(
    scheme: WeightScheme,
    docs: Option<&[EncodedDocument]>,
    vocab: &Vocabulary,
) -> CliResult<Option<IdfTable>> {
    match scheme {
        WeightScheme::Uniform => Ok(None),
        WeightScheme::TfIdf => {
            let Some(docs) = docs else {
                return input_err(
                    "--scheme tfidf needs document frequencies; pass --corpus or use --scheme uniform",
                );
            };
            let idf = build_idf(docs, vocab.len())
                .input_context("cannot compute document frequencies (corpus/model mismatch?)")?;
            Ok(Some(idf))
        }
    }
}

fn run_train(args: TrainArgs) -> CliResult {
    let cfg = TrainConfig {
        window: args.window,
        negatives: args.negatives,
        dim: args.dim,
        epochs: args.epochs,
        initial_lr: args.lr,
        min_count: args.min_count,
        prefix_len: args.prefix_len,
        weight_scheme: args.scheme,
        noise_power: args.noise_power,
        noise_table_size: args.noise_table_size,
        lr_floor_ratio: args.lr_floor_ratio,
        seed: args.seed,
        definition_term_enabled: !args.no_definition_term,
        threads: args.threads,
    };
    cfg.validate().input_context("invalid configuration")?;

    let set = load_corpus(&args.corpus, args.lowercase)?;
    let vocab = build_vocab(&set, cfg.min_count);
    if vocab.is_empty() {
        return input_err(format!(
            "no token occurs at least {} times; lower --min-count",
            cfg.min_count
        ));
    }
    let docs = encode(&set, &vocab);

    let linked = vocab.entries().iter().filter(|e| e.link.is_some()).count();
    println!(
        "documents {} (skipped {} malformed, {} dangling links, {} link conflicts)",
        set.docs.len(),
        set.skipped_records,
        set.dangling_links,
        set.link_conflicts
    );
    println!("vocabulary {} tokens, {} kept occurrences", vocab.len(), vocab.total_tokens());
    println!(
        "linked tokens {} ({:.1}% of vocabulary)",
        linked,
        100.0 * linked as f64 / vocab.len() as f64
    );

    let out = train_with_progress(&docs, &vocab, &cfg, |p| {
        eprintln!(
            "epoch {} words {}/{} lr {:.6} avg_loss {:.6}",
            p.epoch, p.words_done, p.total_words, p.lr, p.avg_loss
        );
    })
    .input_context("training failed")?;

    match args.format {
        ArchiveFormat::Text => store::save_text(&args.output, &out.model, &vocab),
        ArchiveFormat::Binary => store::save_binary(&args.output, &out.model, &vocab),
    }
    .input_context(&format!("cannot save model to {}", args.output.display()))?;
    println!("saved model to {}", args.output.display());
    Ok(())
}

fn run_nearest(args: NearestArgs) -> CliResult {
    let (model, vocab) = load_model(&args.model)?;
    let Some(id) = vocab.id(&args.word) else {
        return input_err(format!("word {:?} is not in the vocabulary", args.word));
    };
    let query: Vec<f64> = model.input_row(id).iter().map(|&v| v as f64).collect();
    for (token, cos) in eval::nearest_words(&model, &query, args.count, &[id]) {
        println!("{} {:.6}", vocab.token(token), cos);
    }
    Ok(())
}

fn run_revdict(args: RevdictArgs) -> CliResult {
    let (model, vocab) = load_model(&args.model)?;
    let idf = match &args.corpus {
        Some(path) => corpus_for_eval(path, args.lowercase, &vocab, args.scheme)?.1,
        None => idf_for(args.scheme, None, &vocab)?,
    };

    if let Some(descriptions_path) = &args.eval {
        let descriptions = eval::load_descriptions(descriptions_path)
            .input_context(&format!("cannot read {}", descriptions_path.display()))?;
        let report =
            eval::reverse_dictionary_eval(&model, &vocab, &descriptions, args.scheme, idf.as_ref())
                .input_context("reverse-dictionary evaluation failed")?;
        if args.json {
            print_json(&report)?;
        } else {
            println!("evaluated {}", report.evaluated);
            println!("skipped {}", report.skipped);
            println!("median_rank {}", report.stats.median);
            println!("acc_at_10 {:.6}", report.stats.acc_at_10);
            println!("acc_at_100 {:.6}", report.stats.acc_at_100);
            println!("rank_std {:.6}", report.stats.std_dev);
        }
        return Ok(());
    }

    let top = eval::reverse_dictionary_query(
        &model,
        &vocab,
        &args.words,
        args.scheme,
        idf.as_ref(),
        args.count,
    )
    .input_context("reverse-dictionary query failed")?;
    for (token, cos) in top {
        println!("{} {:.6}", vocab.token(token), cos);
    }
    Ok(())
}

fn run_sim(args: SimArgs) -> CliResult {
    let (model, vocab) = load_model(&args.model)?;
    let pairs = eval::load_similarity_pairs(&args.pairs)
        .input_context(&format!("cannot read {}", args.pairs.display()))?;
    let report = eval::word_similarity_eval(&model, &vocab, &pairs)
        .input_context("similarity evaluation failed")?;
    if args.json {
        print_json(&report)?;
    } else {
        println!("pairs {}", report.pairs);
        println!("used {}", report.used);
        println!("skipped_oov {}", report.skipped_oov);
        println!("spearman {:.6}", report.spearman);
    }
    Ok(())
}

fn run_links(args: LinksArgs) -> CliResult {
    let (model, vocab) = load_model(&args.model)?;
    let (docs, idf) = corpus_for_eval(&args.corpus, args.lowercase, &vocab, args.scheme)?;
    let report = eval::link_prediction_eval(
        &model,
        &docs,
        args.k,
        args.prefix_len,
        args.scheme,
        idf.as_ref(),
    )
    .input_context("link-prediction evaluation failed")?;
    if args.json {
        print_json(&report)?;
    } else {
        println!("queries {}", report.queries);
        println!("skipped_docs {}", report.skipped_docs);
        println!("map_at_{} {:.6}", report.k, report.mean_ap);
        println!("recall_at_{} {:.6}", report.k, report.mean_recall);
    }
    Ok(())
}

fn run_classify(args: ClassifyArgs) -> CliResult {
    let (model, vocab) = load_model(&args.model)?;
    let (docs, idf) = corpus_for_eval(&args.corpus, args.lowercase, &vocab, args.scheme)?;
    let report = eval::classify_eval(
        &model,
        &docs,
        args.folds,
        args.prefix_len,
        args.scheme,
        idf.as_ref(),
        args.seed,
    )
    .input_context("classification evaluation failed")?;
    if args.json {
        print_json(&report)?;
    } else {
        println!("folds {}", report.folds);
        println!("evaluated {}", report.evaluated);
        println!("skipped_docs {}", report.skipped_docs);
        println!("classes {}", report.classes);
        println!("accuracy {:.6}", report.metrics.accuracy);
        println!("macro_f1 {:.6}", report.metrics.macro_f1);
        println!("micro_f1 {:.6}", report.metrics.micro_f1);
        println!("weighted_f1 {:.6}", report.metrics.weighted_f1);
    }
    Ok(())
}

fn print_json(report: &impl Serialize) -> CliResult {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::Internal(anyhow::anyhow!("cannot serialize report: {e}")))?;
    println!("{json}");
    Ok(())
}
