//! Command-line entry points: `train`, `eval`, `scan`, `serve` and `synth`.
//!
//! Machine-readable results go to stdout as JSON; diagnostics go to stderr.
//! `scan` exits 0 when nothing flags, 2 when any detector flags and 1 on error.
//! Every other command exits 0 on success and 1 on error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use llmguard_core::corpus::{label_names, to_dataset};
use llmguard_core::text::{DEFAULT_MAX_VOCAB, DEFAULT_MIN_COUNT};
use llmguard_core::{
    build_vocabulary, evaluate, generate_synthetic_corpus, guard_text, split, train, LabeledExample, ModelBundle,
    Phase, TrainConfig, TrainingMeta,
};
use serde_json::json;

use crate::config::load_config;
use crate::files::{load_bundle, load_corpus, load_template, save_bundle, write_corpus};
use crate::gateway::{bind, serve, GatewayState};
use crate::upstream::{build_upstream, UpstreamConfig, DEFAULT_TIMEOUT_MS};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_FLAGGED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "llmguard", version, about = "Screen LLM prompts and responses through an ensemble of detectors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a classifier bundle on a JSONL corpus and report held-out metrics.
    Train(TrainArgs),
    /// Evaluate a bundle on a JSONL corpus.
    Eval(EvalArgs),
    /// Run the configured detectors over one text (exit 0 allow, 2 flagged, 1 error).
    Scan(ScanArgs),
    /// Run the HTTP gateway until interrupted.
    Serve(ServeArgs),
    /// Generate a balanced synthetic corpus from a template file.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output bundle path.
    #[arg(long)]
    pub out: PathBuf,
    /// Head names, comma separated; defaults to the corpus label names.
    #[arg(long, value_delimiter = ',')]
    pub heads: Vec<String>,
    /// Seeds the split, the initialisation and the batch order.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "64")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_VOCAB)]
    pub max_vocab: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
    pub min_count: usize,
    /// Threshold for the held-out metrics.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long, conflicts_with = "file", required_unless_present = "file")]
    pub text: Option<String>,
    #[arg(long)]
    pub file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "prompt")]
    pub phase: PhaseArg,
    #[arg(long, default_value = "config")]
    pub config: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PhaseArg {
    Prompt,
    Response,
}

impl From<PhaseArg> for Phase {
    fn from(p: PhaseArg) -> Phase {
        match p {
            PhaseArg::Prompt => Phase::Prompt,
            PhaseArg::Response => Phase::Response,
        }
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    #[arg(long, default_value = "config")]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value = "echo")]
    pub upstream: UpstreamKind,
    /// Canned upstream: JSON fixture mapping prompts to responses.
    #[arg(long, required_if_eq("upstream", "canned"))]
    pub fixture: Option<PathBuf>,
    /// HTTP upstream: base URL, e.g. http://localhost:8000/v1.
    #[arg(long, required_if_eq("upstream", "http-chat"))]
    pub base_url: Option<String>,
    /// HTTP upstream: model name sent with each request.
    #[arg(long, default_value = "default")]
    pub model: String,
    /// HTTP upstream: environment variable holding the bearer token.
    #[arg(long)]
    pub token_env: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UpstreamKind {
    Echo,
    Canned,
    HttpChat,
}

impl ServeArgs {
    pub fn upstream_config(&self) -> UpstreamConfig {
        match self.upstream {
            UpstreamKind::Echo => UpstreamConfig::Echo,
            UpstreamKind::Canned => UpstreamConfig::Canned { fixture: self.fixture.clone().unwrap_or_default() },
            UpstreamKind::HttpChat => UpstreamConfig::HttpChat {
                base_url: self.base_url.clone().unwrap_or_default(),
                model: self.model.clone(),
                token_env: self.token_env.clone(),
                timeout_ms: self.timeout_ms,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub template: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 400)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` and runs the command, printing errors to stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Scan(args) => cmd_scan(&args),
        Command::Serve(args) => cmd_serve(&args),
        Command::Synth(args) => cmd_synth(&args),
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON values always serialize"));
}

/// Trains a bundle from a corpus; the whole pipeline is a function of the flags.
pub fn train_bundle(corpus: &[LabeledExample], args: &TrainArgs) -> anyhow::Result<(ModelBundle, Vec<LabeledExample>, usize)> {
    if corpus.is_empty() {
        bail!("corpus is empty");
    }
    let heads = if args.heads.is_empty() { label_names(corpus)? } else { args.heads.clone() };
    let (train_set, test_set) = split(corpus, args.test_fraction, args.seed)?;
    let vocab = build_vocabulary(train_set.iter().map(|e| e.text.as_str()), args.max_vocab, args.min_count)?;
    if vocab.is_empty() {
        bail!("vocabulary is empty: no token occurs at least {} times in the training split", args.min_count);
    }
    let dataset = to_dataset(&train_set, &vocab, &heads)?;
    let config = TrainConfig {
        seed: args.seed,
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        hidden_dims: args.hidden.clone(),
        ..TrainConfig::default()
    };
    let trained = train(&dataset, &config)?;
    let meta = TrainingMeta { seed: args.seed, epochs: trained.epochs as u32, final_loss: trained.final_loss };
    let bundle = ModelBundle::new(vocab, trained.model, heads, meta)?;
    Ok((bundle, test_set, train_set.len()))
}

fn cmd_train(args: &TrainArgs) -> anyhow::Result<u8> {
    let corpus = load_corpus(&args.corpus)?;
    let (bundle, test_set, n_train) = train_bundle(&corpus, args)?;
    save_bundle(&args.out, &bundle)?;
    let metrics = if test_set.is_empty() { Vec::new() } else { evaluate(&bundle, &test_set, args.threshold)? };
    print_json(&json!({
        "bundle": args.out,
        "heads": bundle.head_names(),
        "vocab_size": bundle.vocabulary().len(),
        "train_examples": n_train,
        "test_examples": test_set.len(),
        "final_loss": bundle.meta().final_loss,
        "threshold": args.threshold,
        "metrics": metrics,
    }));
    Ok(EXIT_OK)
}

fn cmd_eval(args: &EvalArgs) -> anyhow::Result<u8> {
    if !(0.0..=1.0).contains(&args.threshold) {
        bail!("threshold {} is outside [0, 1]", args.threshold);
    }
    let bundle = load_bundle(&args.bundle)?;
    let corpus = load_corpus(&args.corpus)?;
    let metrics = evaluate(&bundle, &corpus, args.threshold)
        .with_context(|| format!("evaluating {} on {}", args.bundle.display(), args.corpus.display()))?;
    print_json(&json!({ "threshold": args.threshold, "examples": corpus.len(), "metrics": metrics }));
    Ok(EXIT_OK)
}

fn cmd_scan(args: &ScanArgs) -> anyhow::Result<u8> {
    let text = match (&args.text, &args.file) {
        (Some(text), _) => text.clone(),
        (None, Some(path)) => std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?,
        (None, None) => bail!("one of --text or --file is required"),
    };
    let config = load_config(&args.config).with_context(|| format!("loading config {}", args.config.display()))?;
    let phase = Phase::from(args.phase);
    let reports = guard_text(&config.registry, &config.policy, &text, phase)?;
    let flagged = reports.iter().any(|r| r.flagged);
    print_json(&json!({
        "phase": phase,
        "decision": if flagged { "Block" } else { "Allow" },
        "reports": reports,
    }));
    Ok(if flagged { EXIT_FLAGGED } else { EXIT_OK })
}

fn cmd_serve(args: &ServeArgs) -> anyhow::Result<u8> {
    let config = load_config(&args.config).with_context(|| format!("loading config {}", args.config.display()))?;
    let upstream = build_upstream(&args.upstream_config())?;
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .try_init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let (listener, addr) = bind(&args.bind).await.with_context(|| format!("cannot bind {}", args.bind))?;
        println!("listening on http://{addr}");
        tracing::info!(%addr, detectors = config.registry.len(), "gateway started");
        let state = std::sync::Arc::new(GatewayState::new(config.registry, config.policy, config.gateway, upstream));
        serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        anyhow::Ok(())
    })?;
    Ok(EXIT_OK)
}

fn cmd_synth(args: &SynthArgs) -> anyhow::Result<u8> {
    let spec = load_template(&args.template)?;
    let corpus = generate_synthetic_corpus(&spec, args.size, args.seed)?;
    write_corpus(&args.out, &corpus)?;
    let positives = corpus.iter().filter(|e| e.is_positive()).count();
    print_json(&json!({
        "corpus": args.out,
        "examples": corpus.len(),
        "positives": positives,
        "negatives": corpus.len() - positives,
    }));
    Ok(EXIT_OK)
}
