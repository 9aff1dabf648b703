//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data errors. Every
//! random choice is driven by a seed flag with a fixed default, so repeated
//! runs with the same flags write byte-identical files.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use indexmap::IndexMap;
use serde::Serialize;

use crate::classify::{build_prototypes, classify_batch, Selection};
use crate::corpus::{build_unigram_model, load_labeled_dataset, LabeledDataset, StopWords, UnigramModel};
use crate::embed::{embed_batch, DocumentEmbedding, SifConfig, DEFAULT_ALPHA_SIF};
use crate::eval::{length_bias_analysis, render_table, search_lda_restricted, search_max_one_shot, EvalBatch, EvalReport, LengthBiasReport, DEFAULT_BUDGET, DEFAULT_EVAL_SEED};
use crate::service::{self, Engine, EngineConfig};
use crate::topics::{fit_lda, LdaConfig, TopicModel, DEFAULT_BETA_LDA, DEFAULT_ITERATIONS, DEFAULT_PAGE_SIZE, DEFAULT_SEED};
use crate::wordvec::{load_vectors, VectorFormat};

#[derive(Debug, Parser)]
#[command(name = "fewshot", version, about = "One-shot text classification from word vectors and a few labeled examples")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed every document of a dataset; writes one JSON record per line.
    Embed(EmbedArgs),
    /// Fit a topic model and rank representative candidates per topic.
    Lda(LdaArgs),
    /// Classify a dataset from labeled representatives.
    Classify(ClassifyArgs),
    /// Maximum one-shot accuracy over all (or sampled) representative pairs.
    EvalBruteforce(BruteforceArgs),
    /// Maximum one-shot accuracy with representatives limited to topic-model candidates.
    EvalLda(EvalLdaArgs),
    /// Correlation between representative length share and prediction share.
    EvalLengthbias(BruteforceArgs),
    /// Run the HTTP engine.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset in JSON lines: {"id", "text", "label"?} per line.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct VectorArgs {
    /// Word vector text file.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// plain (token and floats per line) or headered (first line "count dim").
    #[arg(long, default_value = "plain")]
    pub vector_format: VectorFormat,
    /// Smoothing parameter of the word weights.
    #[arg(long, default_value_t = DEFAULT_ALPHA_SIF)]
    pub alpha_sif: f64,
    /// Optional "token count" frequency file; defaults to the dataset's own counts.
    #[arg(long)]
    pub frequencies: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LdaParams {
    /// Number of topics (default: number of labeled categories).
    #[arg(long)]
    pub k: Option<usize>,
    /// Document-topic prior (default: 50 / k).
    #[arg(long)]
    pub alpha_lda: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BETA_LDA)]
    pub beta_lda: f64,
    /// Gibbs sweeps.
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iterations: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Candidates per topic page.
    #[arg(long, default_value_t = DEFAULT_PAGE_SIZE)]
    pub page_size: usize,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub vectors: VectorArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LdaArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub lda: LdaParams,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub vectors: VectorArgs,
    /// Precomputed embeddings from `embed` (instead of --vectors).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// JSON object mapping each category to its representative doc ids.
    #[arg(long)]
    pub labels: PathBuf,
    /// Predictions, one JSON record per line.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BruteforceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub vectors: VectorArgs,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Combinations to evaluate before switching to sampling.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    /// Sampling seed.
    #[arg(long, default_value_t = DEFAULT_EVAL_SEED)]
    pub seed: u64,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the aligned text table here.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalLdaArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub vectors: VectorArgs,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub lda: LdaParams,
    /// Topic-model fits with seeds seed, seed+1, ...; one report row each.
    #[arg(long, default_value_t = 1)]
    pub runs: u64,
    /// JSON report (an array with one report per run).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML configuration file; FEWSHOT_* environment variables override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    #[arg(long)]
    pub vector_format: Option<VectorFormat>,
    #[arg(long)]
    pub alpha_sif: Option<f64>,
    /// Directory holding batch state.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Listen address (default 127.0.0.1:8080).
    #[arg(long)]
    pub listen: Option<String>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data { module: &'static str, message: String },
}

impl CliError {
    fn data(module: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Data {
            module,
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data { .. } => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data { module, message } => write!(f, "{module}: {message}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command, writing
/// human-readable output to `stdout` and diagnostics to `stderr`. Returns
/// the process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> CliResult<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut buf = Vec::new();
    let result = pool.install(|| {
        let out: &mut dyn Write = &mut buf;
        match cli.command {
            Command::Embed(a) => cmd_embed(a, out),
            Command::Lda(a) => cmd_lda(a, out),
            Command::Classify(a) => cmd_classify(a, out),
            Command::EvalBruteforce(a) => cmd_bruteforce(a, out),
            Command::EvalLda(a) => cmd_eval_lda(a, out),
            Command::EvalLengthbias(a) => cmd_lengthbias(a, out),
            Command::Serve(a) => cmd_serve(a),
        }
    });
    stdout.write_all(&buf).map_err(out_err)?;
    result
}

fn out_err(e: impl std::fmt::Display) -> CliError {
    CliError::data("cli", e)
}

fn load_dataset(args: &DataArgs) -> CliResult<LabeledDataset> {
    load_labeled_dataset(&args.data, &StopWords::english()).map_err(|e| CliError::data("corpus", e))
}

fn dataset_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(out_err)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| out_err(format!("{}: {e}", path.display())))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> CliResult<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).map_err(out_err)?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| out_err(format!("{}: {e}", path.display())))
}

fn read_embeddings(path: &Path) -> CliResult<Vec<DocumentEmbedding>> {
    let file = fs::File::open(path).map_err(|e| CliError::data("embed", format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::data("embed", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CliError::data("embed", format!("{} line {}: {e}", path.display(), i + 1)))?);
    }
    Ok(out)
}

fn unigram_for(args: &VectorArgs, dataset: &LabeledDataset) -> CliResult<UnigramModel> {
    match &args.frequencies {
        Some(p) => UnigramModel::load_frequency_file(p).map_err(|e| CliError::data("corpus", e)),
        None => build_unigram_model(dataset.documents.iter().map(|d| &d.doc)).map_err(|e| CliError::data("corpus", e)),
    }
}

/// Embeddings aligned with the dataset, either read from `precomputed` or
/// computed from the word vectors.
fn embeddings_for(args: &VectorArgs, precomputed: Option<&Path>, dataset: &LabeledDataset) -> CliResult<(Vec<DocumentEmbedding>, BTreeMap<String, usize>)> {
    if let Some(path) = precomputed {
        let embs = read_embeddings(path)?;
        let aligned = embs.len() == dataset.documents.len() && embs.iter().zip(&dataset.documents).all(|(e, d)| e.doc_id == d.doc.id);
        if !aligned {
            return Err(CliError::data("embed", format!("{} does not match the documents of the dataset", path.display())));
        }
        return Ok((embs, BTreeMap::new()));
    }
    let vectors = args
        .vectors
        .as_ref()
        .ok_or_else(|| CliError::Usage("--vectors is required unless --embeddings is given".into()))?;
    let cfg = SifConfig::new(args.alpha_sif).ok_or_else(|| CliError::Usage("--alpha-sif must be positive".into()))?;
    let table = load_vectors(vectors, args.vector_format).map_err(|e| CliError::data("wordvec", e))?;
    let unigram = unigram_for(args, dataset)?;
    let batch = embed_batch(&dataset.docs(), &table, &unigram, cfg);
    Ok((batch.embeddings, batch.skip_report))
}

fn cmd_embed(a: EmbedArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let dataset = load_dataset(&a.data)?;
    if a.vectors.vectors.is_none() {
        return Err(CliError::Usage("--vectors is required".into()));
    }
    let (embs, skipped) = embeddings_for(&a.vectors, None, &dataset)?;
    write_jsonl(&a.out, &embs)?;
    let empty = embs.iter().filter(|e| e.is_empty).count();
    let skipped_total: usize = skipped.values().sum();
    writeln!(
        stdout,
        "embedded {} documents ({empty} empty), {skipped_total} out-of-vocabulary tokens skipped ({} distinct)",
        embs.len(),
        skipped.len()
    )
    .map_err(out_err)
}

#[derive(Serialize)]
struct LdaOutput<'a> {
    config: LdaConfig,
    page_size: usize,
    top_words: Vec<Vec<(&'a str, f64)>>,
    /// Dominant topic per rankable document.
    assignments: IndexMap<&'a str, usize>,
    ranking: crate::topics::CandidateRanking,
}

fn lda_config(p: &LdaParams, dataset: &LabeledDataset) -> CliResult<LdaConfig> {
    let k = match p.k {
        Some(k) => k,
        None if dataset.categories.len() >= 2 => dataset.categories.len(),
        None => return Err(CliError::Usage("--k is required when the dataset has fewer than 2 labeled categories".into())),
    };
    if p.page_size == 0 {
        return Err(CliError::Usage("--page-size must be positive".into()));
    }
    let cfg = LdaConfig {
        alpha_lda: p.alpha_lda.unwrap_or(50.0 / k as f64),
        beta_lda: p.beta_lda,
        iterations: p.iterations,
        ..LdaConfig::new(k).with_seed(p.seed)
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn fit(dataset: &LabeledDataset, cfg: LdaConfig) -> CliResult<TopicModel> {
    fit_lda(&dataset.docs(), cfg).map_err(|e| CliError::data("topics", e))
}

fn cmd_lda(a: LdaArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let dataset = load_dataset(&a.data)?;
    let cfg = lda_config(&a.lda, &dataset)?;
    let model = fit(&dataset, cfg)?;
    let ranking = model.rank_candidates(a.lda.page_size);
    let topics = model.assign_topics();
    let out = LdaOutput {
        config: cfg,
        page_size: a.lda.page_size,
        top_words: (0..model.k()).map(|t| model.top_words(t, 10)).collect(),
        assignments: model.doc_ids.iter().map(String::as_str).zip(topics).collect(),
        ranking,
    };
    write_json(&a.out, &out)?;
    let mut text = String::new();
    for t in 0..model.k() {
        let words: Vec<&str> = model.top_words(t, 8).into_iter().map(|(w, _)| w).collect();
        let page: Vec<&str> = out.ranking.first_page(t).iter().map(|r| r.doc_id.as_str()).collect();
        let _ = writeln!(text, "topic {t}: {}", words.join(" "));
        let _ = writeln!(text, "  candidates: {}", page.join(" "));
    }
    if !out.ranking.unrankable.is_empty() {
        let _ = writeln!(text, "unrankable: {}", out.ranking.unrankable.join(" "));
    }
    stdout.write_all(text.as_bytes()).map_err(out_err)
}

fn read_selection(path: &Path) -> CliResult<Selection> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data("classify", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data("classify", format!("{}: {e}", path.display())))
}

fn cmd_classify(a: ClassifyArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let dataset = load_dataset(&a.data)?;
    let selection = read_selection(&a.labels)?;
    let (embs, _) = embeddings_for(&a.vectors, a.embeddings.as_deref(), &dataset)?;
    let prototypes = build_prototypes(&selection, &embs[..]).map_err(|e| CliError::data("classify", e))?;
    let exclude = prototypes.representative_ids();
    let result = classify_batch(&embs, &prototypes, &exclude);
    write_jsonl(&a.out, &result.predictions)?;

    let mut counts: IndexMap<&str, usize> = prototypes.categories().map(|c| (c, 0)).collect();
    for p in &result.predictions {
        *counts.entry(p.category.as_str()).or_default() += 1;
    }
    let width = counts.keys().map(|c| c.len()).max().unwrap_or(0).max("unclassifiable".len());
    let mut text = String::new();
    for (c, n) in &counts {
        let _ = writeln!(text, "{c:<width$}  {n}");
    }
    let _ = writeln!(text, "{:<width$}  {}", "unclassifiable", result.unclassifiable.len());
    let _ = writeln!(text, "{:<width$}  {}", "representatives", exclude.len());
    stdout.write_all(text.as_bytes()).map_err(out_err)
}

fn eval_batch(data: &DataArgs, vectors: &VectorArgs, embeddings: Option<&Path>) -> CliResult<(LabeledDataset, EvalBatch)> {
    let dataset = load_dataset(data)?;
    let (embs, _) = embeddings_for(vectors, embeddings, &dataset)?;
    let batch = EvalBatch::new(dataset_id(&data.data), &dataset, embs).map_err(|e| CliError::data("evalharness", e))?;
    Ok((dataset, batch))
}

fn emit_reports(reports: &[EvalReport], table: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    let text = render_table(reports);
    if let Some(path) = table {
        fs::write(path, &text).map_err(|e| out_err(format!("{}: {e}", path.display())))?;
    }
    stdout.write_all(text.as_bytes()).map_err(out_err)
}

fn cmd_bruteforce(a: BruteforceArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let (_, batch) = eval_batch(&a.data, &a.vectors, a.embeddings.as_deref())?;
    let report = search_max_one_shot(&batch, a.budget, a.seed).map_err(|e| CliError::data("evalharness", e))?;
    write_json(&a.out, &report)?;
    emit_reports(std::slice::from_ref(&report), a.table.as_deref(), stdout)
}

fn cmd_eval_lda(a: EvalLdaArgs, stdout: &mut dyn Write) -> CliResult<()> {
    if a.runs == 0 {
        return Err(CliError::Usage("--runs must be positive".into()));
    }
    let (dataset, batch) = eval_batch(&a.data, &a.vectors, a.embeddings.as_deref())?;
    let base = lda_config(&a.lda, &dataset)?;
    if base.k != batch.categories.len() {
        return Err(CliError::Usage(format!(
            "--k must equal the number of categories ({}) for this evaluation",
            batch.categories.len()
        )));
    }
    let mut reports = Vec::new();
    for run in 0..a.runs {
        let model = fit(&dataset, base.with_seed(base.seed.wrapping_add(run)))?;
        reports.push(search_lda_restricted(&batch, &model, a.lda.page_size).map_err(|e| CliError::data("evalharness", e))?);
    }
    write_json(&a.out, &reports)?;
    emit_reports(&reports, a.table.as_deref(), stdout)
}

fn render_length_bias(r: &LengthBiasReport) -> String {
    let header = ["Categories", "Mode", "Evaluated", "Total", "Correlation"];
    let row = [
        r.categories.join(", "),
        serde_json::to_value(r.mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        r.combinations_evaluated.to_string(),
        r.total_combinations.to_string(),
        format!("{:.4}", r.correlation),
    ];
    let widths: Vec<usize> = header.iter().zip(&row).map(|(h, c)| h.len().max(c.len())).collect();
    let fmt = |cells: &[&str]| {
        let line: Vec<String> = cells.iter().zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
        line.join("  ").trim_end().to_string()
    };
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    format!(
        "{}\n{}\n{}\n",
        fmt(&header),
        fmt(&rule.iter().map(String::as_str).collect::<Vec<_>>()),
        fmt(&row.iter().map(String::as_str).collect::<Vec<_>>())
    )
}

fn cmd_lengthbias(a: BruteforceArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let (_, batch) = eval_batch(&a.data, &a.vectors, a.embeddings.as_deref())?;
    let report = length_bias_analysis(&batch, a.budget, a.seed).map_err(|e| CliError::data("evalharness", e))?;
    write_json(&a.out, &report)?;
    let text = render_length_bias(&report);
    if let Some(path) = &a.table {
        fs::write(path, &text).map_err(|e| out_err(format!("{}: {e}", path.display())))?;
    }
    stdout.write_all(text.as_bytes()).map_err(out_err)
}

fn cmd_serve(a: ServeArgs) -> CliResult<()> {
    let mut cfg = EngineConfig::load(a.config.as_deref()).map_err(|e| CliError::data("service", e))?;
    if let Some(v) = a.vectors {
        cfg.vectors = Some(v);
    }
    if let Some(f) = a.vector_format {
        cfg.vector_format = f;
    }
    if let Some(x) = a.alpha_sif {
        cfg.alpha_sif = x;
    }
    if let Some(d) = a.data {
        cfg.data_dir = d;
    }
    if let Some(l) = a.listen {
        cfg.listen = l;
    }
    let listen = cfg.listen.clone();
    let engine = Arc::new(Engine::open(cfg).map_err(|e| CliError::data("service", e))?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::data("service", e))?;
    runtime
        .block_on(service::serve(engine, &listen))
        .map_err(|e: io::Error| CliError::data("service", e))
}
