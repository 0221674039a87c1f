//! `ebmrag` — operator surface for the EBM RAG engine.
//!
//! Subcommands: `ingest` (corpus → index directory), `ask` (single
//! question), `eval` (batch evaluation with accuracy report),
//! `calibrate-delta` (suggest a drift threshold), and `serve` (HTTP service).
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime/pipeline error.

mod commands;
mod dataset;
mod report;
mod service;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ebmrag", version, about = "Evidence-based-medicine RAG pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a corpus JSONL file into an index directory.
    Ingest {
        /// Corpus JSONL: one {id, source_type, title, body, chapters?} per line.
        #[arg(long)]
        input: PathBuf,
        /// Output index directory (manifest.json, docs.jsonl, embeddings.bin).
        #[arg(long)]
        out: PathBuf,
        /// Config file (or set EBMRAG_CONFIG).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Answer a single question through the full pipeline.
    Ask {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        question: String,
        /// Write the per-iteration trace JSONL here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Few-shot demonstrations JSONL ({question, reasoning, answer}).
        #[arg(long)]
        shots: Option<PathBuf>,
    },
    /// Evaluate a QA dataset and write an accuracy report.
    Eval {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset JSONL: {id, question, options?, gold?} per line.
        #[arg(long)]
        dataset: PathBuf,
        /// Report JSON output path.
        #[arg(long)]
        report: PathBuf,
        /// Records JSONL path (default: <report>.records.jsonl). Reruns skip
        /// question ids already present here.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Concurrent questions.
        #[arg(long, default_value_t = 4)]
        workers: usize,
        /// Abort the batch on the first per-question failure.
        #[arg(long)]
        fail_fast: bool,
        #[arg(long)]
        shots: Option<PathBuf>,
    },
    /// Suggest a drift threshold from a sample of queries.
    CalibrateDelta {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sample dataset JSONL.
        #[arg(long)]
        sample: PathBuf,
    },
    /// Serve POST /v1/ask and GET /healthz.
    Serve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Listen address, e.g. 127.0.0.1:8080.
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
    },
}

/// `--config` flag, falling back to the EBMRAG_CONFIG environment variable.
fn resolve_config(flag: Option<PathBuf>) -> Result<PathBuf, String> {
    if let Some(path) = flag {
        return Ok(path);
    }
    match std::env::var_os("EBMRAG_CONFIG") {
        Some(path) if !path.is_empty() => Ok(PathBuf::from(path)),
        _ => Err("no config: pass --config or set EBMRAG_CONFIG".to_string()),
    }
}

const USAGE_EXIT: u8 = 1;
const RUNTIME_EXIT: u8 = 2;

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(USAGE_EXIT);
        }
    };

    let outcome: anyhow::Result<()> = match cli.command {
        Command::Ingest { input, out, config } => match resolve_config(config) {
            Ok(config) => commands::cmd_ingest(&input, &out, &config).await,
            Err(message) => return usage_error(&message),
        },
        Command::Ask { index, config, question, trace, shots } => match resolve_config(config) {
            Ok(config) => {
                commands::cmd_ask(&index, &config, &question, trace.as_deref(), shots.as_deref())
                    .await
            }
            Err(message) => return usage_error(&message),
        },
        Command::Eval { index, config, dataset, report, records, workers, fail_fast, shots } => {
            match resolve_config(config) {
                Ok(config) => {
                    commands::cmd_eval(commands::EvalArgs {
                        index_dir: &index,
                        config_path: &config,
                        dataset_path: &dataset,
                        report_path: &report,
                        records_path: records.as_deref(),
                        workers,
                        fail_fast,
                        shots_path: shots.as_deref(),
                    })
                    .await
                }
                Err(message) => return usage_error(&message),
            }
        }
        Command::CalibrateDelta { index, config, sample } => match resolve_config(config) {
            Ok(config) => commands::cmd_calibrate_delta(&index, &config, &sample).await,
            Err(message) => return usage_error(&message),
        },
        Command::Serve { index, config, listen } => match resolve_config(config) {
            Ok(config) => commands::cmd_serve(&index, &config, &listen).await,
            Err(message) => return usage_error(&message),
        },
    };

    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(RUNTIME_EXIT)
        }
    }
}

fn usage_error(message: &str) -> ExitCode {
    eprintln!("usage error: {message}");
    ExitCode::from(USAGE_EXIT)
}
