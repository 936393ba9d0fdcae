//! `xlqa`: split, augment, train and evaluate cross-lingual extractive QA
//! models.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 adapter failure,
//! 4 non-finite loss or gradient.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "xlqa", version, about = "Cross-lingual extractive question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set w_contrastive=0`. Repeatable; wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Continue from the latest checkpoint in out_dir.
    #[arg(long)]
    resume: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Language-stratified train/validation/test split.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 100)]
        test_size: usize,
        #[arg(long, default_value_t = 100)]
        val_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate or transliterate records according to a plan file.
    Augment {
        #[arg(long)]
        input: PathBuf,
        /// JSON plan: `{"plans": [{"target", "kind", "via"?, "adapter"}]}`.
        #[arg(long)]
        plan: PathBuf,
        /// Directory holding the adapter files the plan refers to.
        #[arg(long)]
        adapters: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the QA head without the contrastive term.
    #[command(after_help = config::keys_help())]
    Pretrain(TrainArgs),
    /// Train with the task loss plus the gated contrastive term.
    #[command(after_help = config::keys_help())]
    Finetune(TrainArgs),
    /// Score a checkpoint on a record file.
    Evaluate {
        /// A `ckpt-<step>` directory, or a run directory (its best checkpoint is used).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Report JSON path.
        #[arg(long)]
        out: PathBuf,
        /// Also write per-record scores next to the report as `<out>.records.csv`.
        #[arg(long)]
        per_record: bool,
        #[arg(long, default_value_t = 20)]
        n_best: usize,
        #[arg(long, default_value_t = 30)]
        max_answer_tokens: usize,
    },
    /// Summarize a dataset file, checkpoint, run directory or split directory as JSON.
    Inspect { path: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Split { input, test_size, val_size, seed, out } => {
            commands::split(&input, test_size, val_size, seed, &out)
        }
        Command::Augment { input, plan, adapters, out } => commands::augment(&input, &plan, &adapters, &out),
        Command::Pretrain(a) => commands::train(a.config.as_deref(), &a.overrides, a.resume, true),
        Command::Finetune(a) => commands::train(a.config.as_deref(), &a.overrides, a.resume, false),
        Command::Evaluate { checkpoint, input, out, per_record, n_best, max_answer_tokens } => commands::evaluate(
            &checkpoint,
            &input,
            &out,
            per_record,
            xlqa_core::DecodeConfig { n_best, max_answer_tokens },
        ),
        Command::Inspect { path } => commands::inspect(&path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
