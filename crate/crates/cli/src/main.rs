use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use convrank::analysis::{self, MissingQueries, OutputFormat, QueryValues};
use convrank::conversation::{load_conversations, parse_rewrites, write_resolved};
use convrank::eval::evaluate_run;
use convrank::fusion::{load_logit_table, load_score_table, Reranker, TuneRequest};
use convrank::index::load_corpus;
use convrank::pipeline::{resolve_all, run_pipeline, PipelineInputs};
use convrank::trec::{emit_run, load_qrels, load_run};
use convrank::{
    tokenize, Bm25Params, EvalParams, FusionConfig, Gain, InvertedIndex, Metric, MissingScore, PipelineConfig,
    RankedList, Resolver, Run,
};

#[derive(Parser)]
#[command(name = "convrank", version, about = "Conversational passage retrieval toolkit")]
struct Cli {
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a BM25 index snapshot from a TSV or JSON-lines corpus.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrieve passages for a batch of queries.
    Search(SearchArgs),
    /// Resolve every conversation turn into a retrieval query (`qid<TAB>text`).
    Resolve(ResolveArgs),
    /// Re-rank an initial run by fusing re-ranker and RC scores.
    Rerank(RerankArgs),
    /// Grid-search the fusion weight against qrels.
    Tune(TuneArgs),
    /// Evaluate a run (`metric<TAB>qid<TAB>value`).
    Eval(EvalArgs),
    /// Classify per-query failures at one threshold or over a sweep.
    Analyze(AnalyzeArgs),
    /// Error-analysis sweep over the default threshold grid, as CSV.
    Sweep(SweepArgs),
    /// Run the full pipeline from a config file.
    Run(RunArgs),
}

#[derive(Args)]
struct CorpusSource {
    /// Index snapshot written by `index`.
    #[arg(long, conflicts_with = "corpus")]
    index: Option<PathBuf>,
    /// Corpus to index on the fly.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

impl CorpusSource {
    fn load(&self) -> Result<InvertedIndex> {
        match (&self.index, &self.corpus) {
            (Some(path), _) => {
                let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                InvertedIndex::load(BufReader::new(file)).with_context(|| format!("loading {}", path.display()))
            }
            (None, Some(path)) => Ok(InvertedIndex::build(load_corpus(path)?)?),
            (None, None) => bail!("one of --index or --corpus is required"),
        }
    }
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    source: CorpusSource,
    /// `qid<TAB>text` file, e.g. the output of `resolve`.
    #[arg(long, required_unless_present = "query")]
    queries: Option<PathBuf>,
    /// A single query, emitted under --qid.
    #[arg(long, conflicts_with = "queries")]
    query: Option<String>,
    #[arg(long, default_value = "q")]
    qid: String,
    #[arg(long, default_value_t = 0.82)]
    k1: f64,
    #[arg(long, default_value_t = 0.68)]
    b: f64,
    #[arg(long, default_value_t = 100)]
    depth: usize,
    #[arg(long, default_value = "bm25")]
    tag: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResolverArg {
    Null,
    Oracle,
    Heuristic,
    Manual,
    Automatic,
    File,
}

impl From<ResolverArg> for Resolver {
    fn from(r: ResolverArg) -> Self {
        match r {
            ResolverArg::Null => Resolver::Null,
            ResolverArg::Oracle => Resolver::Oracle,
            ResolverArg::Heuristic => Resolver::Heuristic,
            ResolverArg::Manual => Resolver::Manual,
            ResolverArg::Automatic => Resolver::Automatic,
            ResolverArg::File => Resolver::File,
        }
    }
}

#[derive(Args)]
struct ResolveArgs {
    #[arg(long)]
    conversations: PathBuf,
    #[arg(long, value_enum, default_value = "heuristic")]
    resolver: ResolverArg,
    /// Corpus statistics for the heuristic resolver.
    #[command(flatten)]
    source: CorpusSource,
    /// `qid<TAB>text` rewrites for `--resolver file`.
    #[arg(long)]
    rewrites: Option<PathBuf>,
    /// Override the heuristic idf threshold.
    #[arg(long)]
    min_idf: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreFiles {
    /// `qid<TAB>pid<TAB>score`.
    #[arg(long)]
    rerank_scores: PathBuf,
    /// `qid<TAB>pid<TAB>start<TAB>end`.
    #[arg(long)]
    rc_logits: PathBuf,
    #[arg(long, default_value = "strict")]
    missing_score: MissingScore,
}

#[derive(Args)]
struct RerankArgs {
    /// Initial run to re-rank.
    #[arg(long)]
    run: PathBuf,
    #[command(flatten)]
    scores: ScoreFiles,
    #[arg(long, default_value_t = 0.5)]
    weight: f64,
    /// Min-max normalize both streams per query before fusing.
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = 100)]
    cutoff: usize,
    #[arg(long, default_value = "rerank")]
    tag: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[command(flatten)]
    scores: ScoreFiles,
    #[arg(long, default_value = "ndcg@3")]
    metric: Metric,
    /// Grid spacing; the default grid is 0, 0.05, ..., 1.
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = 100)]
    cutoff: usize,
    #[command(flatten)]
    eval: EvalOptions,
}

#[derive(Clone, Copy, ValueEnum)]
enum GainArg {
    Linear,
    Exponential,
}

#[derive(Args)]
struct EvalOptions {
    #[arg(long, value_enum, default_value = "linear")]
    gain: GainArg,
    /// Minimum grade counted as relevant by binary metrics.
    #[arg(long, default_value_t = 1)]
    binarize_at: u32,
}

impl EvalOptions {
    fn params(&self) -> EvalParams {
        EvalParams {
            binarize_at: self.binarize_at,
            gain: match self.gain {
                GainArg::Linear => Gain::Linear,
                GainArg::Exponential => Gain::Exponential,
            },
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// Repeatable; defaults to ndcg@3, ndcg@5, map, mrr, recall@100.
    #[arg(long = "metric")]
    metrics: Vec<Metric>,
    #[command(flatten)]
    eval: EvalOptions,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunTriple {
    /// Run from the raw utterances.
    #[arg(long)]
    original: PathBuf,
    /// Run from the resolved queries.
    #[arg(long)]
    resolved: PathBuf,
    /// Run from the human rewrites.
    #[arg(long)]
    human: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value = "ndcg@3")]
    metric: Metric,
    /// Treat queries absent from a run as scoring 0 instead of failing.
    #[arg(long)]
    missing_as_zero: bool,
    #[command(flatten)]
    eval: EvalOptions,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    runs: RunTriple,
    #[arg(long, default_value_t = 0.0, conflicts_with = "sweep")]
    threshold: f64,
    /// Sweep thresholds 0, step, 2*step, ..., 1.
    #[arg(long)]
    sweep: Option<f64>,
    /// Defaults to `table` for one threshold and `csv` for a sweep.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    runs: RunTriple,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    resolver: Option<ResolverArg>,
    #[arg(long)]
    rewrites: Option<PathBuf>,
    #[arg(long, conflicts_with = "no_rerank")]
    rerank: bool,
    #[arg(long)]
    no_rerank: bool,
    #[arg(long)]
    weight: Option<f64>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    tag: Option<String>,
    /// Also write the resolved queries here.
    #[arg(long)]
    queries_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut out = output(path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn index(corpus: &Path, out: &Path) -> Result<()> {
    let index = InvertedIndex::build(load_corpus(corpus)?)?;
    log::info!("indexed {} passages, {} terms", index.total_docs(), index.num_terms());
    let mut w = output(Some(out))?;
    index.save(&mut w)?;
    w.flush()?;
    Ok(())
}

fn search(args: &SearchArgs) -> Result<()> {
    let index = args.source.load()?;
    let params = Bm25Params::new(args.k1, args.b)?;
    let queries = match (&args.queries, &args.query) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_rewrites(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(q)) => vec![(args.qid.clone(), q.clone())],
        (None, None) => unreachable!("clap requires one of them"),
    };
    let run: Run = queries
        .iter()
        .map(|(qid, text)| RankedList::from_scores(qid.clone(), index.search(&tokenize(text), &params, args.depth)))
        .collect();
    write_text(args.out.as_deref(), &emit_run(&run, &args.tag))
}

fn resolve(args: &ResolveArgs) -> Result<()> {
    let resolver = Resolver::from(args.resolver);
    let conversations = load_conversations(&args.conversations)?;
    let index = match resolver {
        Resolver::Heuristic => args.source.load()?,
        _ => InvertedIndex::build(Vec::<convrank::Passage>::new())?,
    };
    let mut config = PipelineConfig::new("", &args.conversations);
    config.resolver = resolver;
    config.heuristic_min_idf = args.min_idf;
    let mut rewrites = HashMap::new();
    if let Some(path) = &args.rewrites {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        rewrites = parse_rewrites(&text)?.into_iter().collect();
    } else if resolver == Resolver::File {
        bail!("--resolver file requires --rewrites");
    }
    let inputs = PipelineInputs {
        passages: Vec::new(),
        index,
        conversations,
        rewrites,
        scores: None,
    };
    let queries = resolve_all(&config, &inputs)?;
    let mut out = output(args.out.as_deref())?;
    write_resolved(&mut out, queries.iter().map(|(q, r)| (q.as_str(), r)))?;
    out.flush()?;
    Ok(())
}

fn rerank(args: &RerankArgs) -> Result<()> {
    let initial = load_run(&args.run)?;
    let rr = load_score_table(&args.scores.rerank_scores)?;
    let rc = load_logit_table(&args.scores.rc_logits)?;
    let config = FusionConfig {
        weight: args.weight,
        normalize: args.normalize,
    };
    config.validate()?;
    let run = Reranker::new(&rr, &rc)
        .with_missing(args.scores.missing_score)
        .rerank(&initial, &config, args.cutoff)?;
    write_text(args.out.as_deref(), &emit_run(&run, &args.tag))
}

fn tune(args: &TuneArgs) -> Result<()> {
    let initial = load_run(&args.run)?;
    let qrels = load_qrels(&args.qrels)?;
    let rr = load_score_table(&args.scores.rerank_scores)?;
    let rc = load_logit_table(&args.scores.rc_logits)?;
    let mut request = TuneRequest::new(args.metric);
    // the grid reuses the threshold-grid helper: same shape, same validation
    request.grid = analysis::threshold_grid(args.step).context("--step must divide 1")?;
    request.normalize = args.normalize;
    request.cutoff = args.cutoff;
    request.params = args.eval.params();
    let tuning = Reranker::new(&rr, &rc)
        .with_missing(args.scores.missing_score)
        .tune(&initial, &qrels, &request)?;
    let mut text = format!("weight\t{}\n", args.metric);
    for (w, v) in &tuning.curve {
        text.push_str(&format!("{w}\t{v:.4}\n"));
    }
    text.push_str(&format!("best\t{}\t{:.4}\n", tuning.best_weight, tuning.best_score));
    write_text(None, &text)
}

fn default_metrics() -> Vec<Metric> {
    ["ndcg@3", "ndcg@5", "map", "mrr", "recall@100"]
        .iter()
        .map(|m| m.parse().expect("known metric"))
        .collect()
}

fn eval(args: &EvalArgs) -> Result<()> {
    let run = load_run(&args.run)?;
    let qrels = load_qrels(&args.qrels)?;
    let metrics = if args.metrics.is_empty() { default_metrics() } else { args.metrics.clone() };
    let report = evaluate_run(&run, &qrels, &metrics, &args.eval.params())?;
    let mut out = output(args.out.as_deref())?;
    report.write_tsv(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Per-query metric values for the three runs. Queries that a run does not
/// contain are left out so the analysis can decide how to treat them.
fn query_values(runs: &RunTriple) -> Result<QueryValues> {
    let qrels = load_qrels(&runs.qrels)?;
    let params = runs.eval.params();
    let values = |path: &Path| -> Result<_> {
        let run = load_run(path)?;
        let report = evaluate_run(&run, &qrels, &[runs.metric], &params)
            .with_context(|| format!("evaluating {}", path.display()))?;
        let mut values = report.values(runs.metric);
        values.retain(|qid, _| run.get(qid).is_some());
        Ok(values)
    };
    Ok(QueryValues {
        original: values(&runs.original)?,
        resolved: values(&runs.resolved)?,
        human: values(&runs.human)?,
    })
}

fn missing(runs: &RunTriple) -> MissingQueries {
    if runs.missing_as_zero {
        MissingQueries::AsZero
    } else {
        MissingQueries::Error
    }
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let values = query_values(&args.runs)?;
    let tables = match args.sweep {
        Some(step) => analysis::sweep(&values, &analysis::threshold_grid(step)?, missing(&args.runs))?,
        None => vec![analysis::analyze(&values, args.threshold, missing(&args.runs))?],
    };
    let format = match args.format {
        Some(FormatArg::Csv) => OutputFormat::Csv,
        Some(FormatArg::Table) => OutputFormat::Table,
        None if args.sweep.is_some() => OutputFormat::Csv,
        None => OutputFormat::Table,
    };
    write_text(
        args.out.as_deref(),
        &analysis::emit_analysis(&tables, format, Some(args.runs.metric)),
    )
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let values = query_values(&args.runs)?;
    let tables = analysis::sweep(&values, &analysis::default_thresholds(), missing(&args.runs))?;
    write_text(
        args.out.as_deref(),
        &analysis::emit_analysis(&tables, OutputFormat::Csv, Some(args.runs.metric)),
    )
}

fn run(args: &RunArgs) -> Result<()> {
    let mut config = PipelineConfig::from_file(&args.config)?;
    if let Some(r) = args.resolver {
        config.resolver = r.into();
    }
    if let Some(p) = &args.rewrites {
        config.rewrite_file = Some(p.clone());
    }
    if args.rerank {
        config.rerank.enabled = true;
    }
    if args.no_rerank {
        config.rerank.enabled = false;
    }
    if let Some(w) = args.weight {
        config.rerank.weight = w;
    }
    if let Some(k1) = args.k1 {
        config.bm25.k1 = k1;
    }
    if let Some(b) = args.b {
        config.bm25.b = b;
    }
    if let Some(d) = args.depth {
        config.depth = d;
    }
    if let Some(c) = args.cutoff {
        config.cutoff = c;
    }
    if let Some(t) = &args.tag {
        config.tag = t.clone();
    }
    config.validate()?;
    let inputs = PipelineInputs::load(&config)?;
    let output = run_pipeline(&config, &inputs)?;
    if let Some(path) = &args.queries_out {
        let mut w = self::output(Some(path))?;
        write_resolved(&mut w, output.queries.iter().map(|(q, r)| (q.as_str(), r)))?;
        w.flush()?;
    }
    write_text(args.out.as_deref(), &emit_run(&output.run, &config.tag))
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Index { corpus, out } => index(corpus, out),
        Command::Search(a) => search(a),
        Command::Resolve(a) => resolve(a),
        Command::Rerank(a) => rerank(a),
        Command::Tune(a) => tune(a),
        Command::Eval(a) => eval(a),
        Command::Analyze(a) => analyze(a),
        Command::Sweep(a) => sweep(a),
        Command::Run(a) => run(a),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
