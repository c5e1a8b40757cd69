//! `xfid` — validates that a machine-translated annotated corpus preserves
//! label-relevant semantics. Subcommands wire the pipeline phases end to
//! end: ingest, sample, translate, judge, embed, cosine, cka, parity,
//! report. Exit code 0 on success, 1 on validation errors, 2 on
//! provider/transport failures.

mod artifacts;
mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use artifacts::Paths;
use commands::Ctx;
use config::load_config;

#[derive(Debug)]
pub enum CliError {
    /// Bad input, bad config, broken invariants. Exit code 1.
    Validation(String),
    /// The provider or embedding backend failed. Exit code 2.
    Transport(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Transport(m) => f.write_str(m),
        }
    }
}

impl From<xfid_core::corpus::CorpusError> for CliError {
    fn from(e: xfid_core::corpus::CorpusError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<xfid_core::embed::EmbedError> for CliError {
    fn from(e: xfid_core::embed::EmbedError) -> Self {
        match e {
            xfid_core::embed::EmbedError::BackendUnavailable { .. } => {
                CliError::Transport(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<xfid_core::similarity::MetricError> for CliError {
    fn from(e: xfid_core::similarity::MetricError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<xfid_core::parity::ParityError> for CliError {
    fn from(e: xfid_core::parity::ParityError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<xfid_core::report::ReportError> for CliError {
    fn from(e: xfid_core::report::ReportError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<xfid_core::orchestrator::OrchestratorError> for CliError {
    fn from(e: xfid_core::orchestrator::OrchestratorError) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "xfid", version, about = "Cross-lingual corpus fidelity pipeline")]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = "xfid.toml")]
    config: PathBuf,

    /// Corpus file override for the current stage.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,

    /// Restrict the stage to one subcorpus tag.
    #[arg(long, global = true)]
    subcorpus: Option<String>,

    /// Seed override for sampling and fold assignment.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a raw corpus file and write the canonical JSONL.
    Ingest {
        /// Raw corpus file (defaults to [corpus].input).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Input format: jsonl or csv.
        #[arg(long)]
        format: Option<String>,
    },
    /// Draw a stratified sample from the ingested corpus.
    Sample {
        /// Sample size (defaults to [sample].n).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fill text_tgt for every post via the chat provider.
    Translate {
        /// Override the built-in reddit prompt with a template file.
        #[arg(long)]
        template_reddit: Option<PathBuf>,
        /// Override the built-in twitter prompt with a template file.
        #[arg(long)]
        template_twitter: Option<PathBuf>,
        /// Re-translate posts even when the journal or corpus already has output.
        #[arg(long)]
        no_resume: bool,
    },
    /// Score translated pairs with the LLM judge.
    Judge {
        /// Override the built-in judge prompt with a template file.
        #[arg(long)]
        template: Option<PathBuf>,
        /// Re-judge posts even when the journal already has output.
        #[arg(long)]
        no_resume: bool,
    },
    /// Fetch embeddings for source and target texts.
    Embed,
    /// Per-pair cosine statistics by subcorpus plus a pooled overall row.
    Cosine,
    /// Linear CKA by subcorpus plus the pooled overall value.
    Cka,
    /// Classifier-parity evaluation with paired t-tests.
    Parity {
        /// Apply the t-tests to externally produced per-fold AUCs
        /// (CSV: foundation,fold,en_auc,pl_auc).
        #[arg(long)]
        import: Option<PathBuf>,
        /// Evaluate each subcorpus separately instead of the pooled slice.
        #[arg(long)]
        per_subcorpus: bool,
    },
    /// Render all tables and the final quality verdict.
    Report,
}

async fn run(cli: Cli) -> Result<(), CliError> {
    // The whole argv participates in the config fingerprint so equal hashes
    // really mean equal effective configuration.
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let loaded = load_config(&cli.config, &argv)?;
    let out = cli.out.unwrap_or_else(|| loaded.config.output.dir.clone());
    let ctx = Ctx {
        config: loaded.config,
        config_hash: loaded.hash,
        paths: Paths::new(&out),
        corpus_override: cli.corpus,
        subcorpus: cli.subcorpus,
        seed: cli.seed,
    };

    match cli.command {
        Command::Ingest { input, format } => commands::run_ingest(&ctx, input, format),
        Command::Sample { n } => commands::run_sample(&ctx, n),
        Command::Translate { template_reddit, template_twitter, no_resume } => {
            commands::run_translate(&ctx, template_reddit, template_twitter, no_resume).await
        }
        Command::Judge { template, no_resume } => {
            commands::run_judge(&ctx, template, no_resume).await
        }
        Command::Embed => commands::run_embed(&ctx).await,
        Command::Cosine => commands::run_cosine(&ctx),
        Command::Cka => commands::run_cka(&ctx),
        Command::Parity { import, per_subcorpus } => {
            commands::run_parity_cmd(&ctx, import, per_subcorpus)
        }
        Command::Report => commands::run_report(&ctx),
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Transport(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
