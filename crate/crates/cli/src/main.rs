//! `rulepath`: encode rules, extract paths, train, evaluate and explain.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rulepath_core::Error;

use config::ConfigArgs;

/// Bad flags or config; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "rulepath", version, about = "Rule-guided path embedding for knowledge graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and encode the rule file; report how many rules survive.
    EncodeRules,
    /// Extract training paths into the content-keyed cache.
    ExtractPaths,
    /// Train embeddings; writes a checkpoint, a loss CSV and the resolved config.
    Train,
    /// Rank a split and report MR, MRR and Hits@n.
    Eval {
        /// Defaults to `<out>/checkpoint.bin`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: commands::SplitArg,
    },
    /// Show the best relations between two entities and the rules behind them.
    Explain {
        #[arg(long)]
        head: String,
        #[arg(long)]
        tail: String,
        #[arg(long, short = 'k', default_value_t = 3)]
        top_k: usize,
        /// Tab-separated records instead of text.
        #[arg(long)]
        records: bool,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => EXIT_USAGE,
        Some(Error::Divergence { .. }) => EXIT_DIVERGED,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = cli.config.resolve()?;
    match cli.command {
        Command::EncodeRules => commands::encode_rules(&cfg),
        Command::ExtractPaths => commands::extract_paths_cmd(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Eval { checkpoint, split } => commands::eval(&cfg, checkpoint, split),
        Command::Explain {
            head,
            tail,
            top_k,
            records,
            checkpoint,
        } => commands::explain(
            &cfg,
            commands::ExplainArgs {
                head,
                tail,
                top_k,
                records,
                checkpoint,
            },
        ),
    }
}
