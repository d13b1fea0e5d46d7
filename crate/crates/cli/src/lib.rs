//! Command-line front end: classify, train, eval, adversarial, quality and
//! synth. Every command writes into `--out` and leaves a `run.json` record
//! whose config hash is stamped on each JSONL row.
//!
//! Exit codes: 0 success, 1 classification found phishing, 2 error (with a
//! JSON error record on stderr).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use phishguard_core::agents::{BackendKind, ChatBackendConfig, ExplanationMode, ENV_MODEL};
use phishguard_core::email::CorpusFormat;
use phishguard_core::fusion::PpoConfig;
use phishguard_core::Label;

mod commands;
pub mod error;
pub mod run;

pub use error::{CliError, ErrorRecord};
pub use run::{CorpusSpec, FusionMode, RunConfig, RunRecord};

#[derive(Debug, Parser)]
#[command(name = "phishguard", version, about = "Multi-agent phishing email detection")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Mock,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Eml,
    Mbox,
    Csv,
}

impl From<FormatArg> for CorpusFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Eml => CorpusFormat::EmlDir,
            FormatArg::Mbox => CorpusFormat::Mbox,
            FormatArg::Csv => CorpusFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExplainArg {
    Plain,
    Expert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorArg {
    Llm,
    Rule,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Chat backend; `remote` speaks the OpenAI-compatible chat API.
    #[arg(long, global = true, value_enum, default_value = "mock")]
    pub backend: BackendArg,
    /// Model name for the remote backend (default: $PHISHGUARD_MODEL or gpt-4o).
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true, env = "PHISHGUARD_BASE_URL", hide_env_values = true)]
    pub base_url: Option<String>,
    /// Requests per second to the backend; 0 means unlimited.
    #[arg(long, global = true, default_value_t = 0.0)]
    pub rate_limit: f64,
    /// Decision threshold on the fused score.
    #[arg(long, global = true, default_value_t = 0.5)]
    pub threshold: f64,
    /// `learned`, `static` or `static:a,b,c` (text, url, metadata).
    #[arg(long, global = true)]
    pub fusion: Option<FusionMode>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for per-email parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Suppress per-email lines on stdout.
    #[arg(long, short = 'q', global = true)]
    pub quiet: bool,
    /// Output directory; created when missing.
    #[arg(long, short = 'o', global = true, default_value = "phishguard-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Message files, .eml directories, mbox or CSV files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Corpus format for every input (default: guessed from the path).
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Force this ground-truth label on every loaded message.
    #[arg(long)]
    pub label: Option<Label>,
}

#[derive(Debug, Clone, Args)]
pub struct PpoArgs {
    #[arg(long, default_value_t = 0.2)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 3e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 4)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
}

impl PpoArgs {
    fn config(&self, seed: u64) -> PpoConfig {
        PpoConfig {
            epsilon: self.epsilon,
            learning_rate: self.learning_rate,
            epochs_per_batch: self.epochs,
            batch_size: self.batch_size,
            seed,
        }
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Run the three agents and the fusion step on every message.
    Classify {
        #[command(flatten)]
        input: InputArgs,
        /// Trained policy for learned fusion.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Add a consolidated explanation to each row.
        #[arg(long, value_enum, num_args = 0..=1, default_missing_value = "plain", require_equals = true)]
        explain: Option<ExplainArg>,
        /// Shorthand for `--explain=expert`.
        #[arg(long)]
        expert_mode: bool,
        /// System name written to each row (default: the fusion mode).
        #[arg(long)]
        system: Option<String>,
    },
    /// Train the fusion policy with PPO on labeled corpora.
    Train {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        ppo: PpoArgs,
        #[arg(long, default_value_t = 10)]
        passes: usize,
        /// Write an intermediate checkpoint every N batches (0: off).
        #[arg(long, default_value_t = 0)]
        checkpoint_every: u64,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Metrics and paired McNemar comparisons from prediction files.
    Eval {
        /// Prediction JSONL files (as written by `classify`).
        #[arg(required = true)]
        predictions: Vec<PathBuf>,
        /// System compared against all others (default: the first seen).
        #[arg(long)]
        reference: Option<String>,
    },
    /// Generate adversarial variants, detect them and retrain on evaders.
    Adversarial {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        ppo: PpoArgs,
        #[arg(long, default_value_t = 2)]
        rounds: usize,
        /// Starting policy; without it a policy is trained first.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Warm-up passes when no checkpoint is given.
        #[arg(long, default_value_t = 5)]
        passes: usize,
        /// Retraining passes after each round.
        #[arg(long, default_value_t = 2)]
        retrain_passes: usize,
        #[arg(long, value_enum, default_value = "llm")]
        generator: GeneratorArg,
        #[arg(long, default_value_t = 0.25)]
        sample_fraction: f64,
        #[arg(long, default_value_t = 0.2)]
        admission_cap: f64,
    },
    /// Rationale quality: perplexity, topic coherence, readability, ROUGE-1
    /// recall and cosine similarity.
    Quality {
        /// JSONL with `email_id` (or `id`) and `explanation` (or `text`).
        #[arg(long)]
        candidates: PathBuf,
        /// JSONL of reference texts keyed the same way.
        #[arg(long)]
        references: PathBuf,
        /// Plain-text corpus for the unigram model (default: the references).
        #[arg(long)]
        lm_corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        topics: usize,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
    },
    /// Write a seeded synthetic corpus as .eml files.
    Synth {
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0.5)]
        phishing_fraction: f64,
        #[arg(long, default_value_t = 0.9)]
        url_agreement: f64,
        #[arg(long, default_value_t = 0.8)]
        metadata_agreement: f64,
    },
}

impl GlobalArgs {
    fn backend_config(&self) -> Result<ChatBackendConfig, CliError> {
        let mut cfg = match self.backend {
            BackendArg::Mock => ChatBackendConfig::mock(),
            BackendArg::Remote => {
                let base = self.base_url.clone().ok_or_else(|| {
                    CliError::InvalidConfig("the remote backend needs --base-url or PHISHGUARD_BASE_URL".into())
                })?;
                let model = self
                    .model
                    .clone()
                    .or_else(|| std::env::var(ENV_MODEL).ok())
                    .unwrap_or_else(|| "gpt-4o".into());
                ChatBackendConfig::remote(&base, &model)
            }
        };
        if cfg.kind == BackendKind::Mock {
            if let Some(m) = &self.model {
                cfg.model_name = m.clone();
            }
        }
        cfg.rate_limit = self.rate_limit;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn explain_mode(explain: Option<ExplainArg>, expert: bool) -> Option<ExplanationMode> {
    match (explain, expert) {
        (_, true) | (Some(ExplainArg::Expert), _) => Some(ExplanationMode::Expert),
        (Some(ExplainArg::Plain), false) => Some(ExplanationMode::Plain),
        (None, false) => None,
    }
}

/// Runs a parsed command and returns its exit code.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    if !(0.0..=1.0).contains(&cli.global.threshold) {
        return Err(CliError::InvalidConfig(format!(
            "threshold {} outside [0, 1]",
            cli.global.threshold
        )));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.global.jobs {
        if j == 0 {
            return Err(CliError::InvalidConfig("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(&cli))
}

/// Parses `args`, runs the command and reports failures as one JSON line on
/// stderr. Returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.record()).expect("error record serialises"));
            2
        }
    }
}
