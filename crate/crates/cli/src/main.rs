mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use assoclab::analytics::TimeCostClass;
use assoclab::log_schema::Format;
use clap::{Args, Parser, Subcommand};

use config::Overrides;

#[derive(Parser)]
#[command(
    name = "assoclab",
    version,
    about = "WiFi connection set-up simulation, analytics and AP selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON run configuration (see `assoclab config default`)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random stream [default: 0, or the config's seed]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// FAST/SLOW boundary in milliseconds [default: 15000]
    #[arg(long, global = true)]
    threshold_ms: Option<u32>,
    /// Connection timeout of simulated set-up processes
    #[arg(long, global = true)]
    timeout_ms: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic connection-log corpus or candidate-set corpus
    Simulate {
        /// Output file
        #[arg(long)]
        out: PathBuf,
        /// Generate candidate sets (JSONL) instead of connection logs
        #[arg(long)]
        candidates: bool,
        /// Number of attempts (or events with --candidates)
        #[arg(long)]
        n: Option<usize>,
        /// Output format [default: from the file extension, else jsonl]
        #[arg(long)]
        format: Option<Format>,
        /// Also write per-attempt state transitions as JSONL
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Write the calibration report here instead of standard output
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compute the analysis bundle of a connection-log corpus
    Analyze {
        /// Corpus file
        #[arg(long)]
        input: PathBuf,
        /// Output directory for analysis.json and the CSV tables
        #[arg(long)]
        out: PathBuf,
        /// Input format [default: from the file extension, else jsonl]
        #[arg(long)]
        format: Option<Format>,
        /// Transition traces written by `simulate --traces`
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Restrict scan-time quantiles to one time-cost class (0-7, 7-15, 15-30)
        #[arg(long)]
        class: Option<TimeCostClass>,
    },
    /// Train a FAST/SLOW forest
    Train {
        /// Connection-log corpus, or candidate sets with --candidates
        #[arg(long)]
        input: PathBuf,
        /// Model file to write
        #[arg(long)]
        out: PathBuf,
        /// Train on the tuning half of a candidate-set corpus
        #[arg(long)]
        candidates: bool,
        /// Input format for connection logs
        #[arg(long)]
        format: Option<Format>,
        /// Number of trees
        #[arg(long)]
        trees: Option<usize>,
    },
    /// Replay strongest-signal and ML selection on a candidate-set corpus
    Eval {
        /// Candidate sets with ground truth
        #[arg(long)]
        input: PathBuf,
        /// Use this model instead of training one on the tuning half
        #[arg(long)]
        model: Option<PathBuf>,
        /// Report file [default: standard output]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Save the trained model
        #[arg(long, conflicts_with = "model")]
        save_model: Option<PathBuf>,
        /// Write a decision-threshold sweep (JSON) here
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// SLOW vote share at which a candidate counts as SLOW
        #[arg(long)]
        decision_threshold: Option<f64>,
        /// Number of trees
        #[arg(long)]
        trees: Option<usize>,
    },
    /// Pick an AP for each candidate set with a trained model
    Select {
        /// Model file
        #[arg(long)]
        model: PathBuf,
        /// Candidate sets (JSONL)
        #[arg(long)]
        input: PathBuf,
        /// Decisions (JSONL) [default: standard output]
        #[arg(long)]
        out: Option<PathBuf>,
        /// SLOW vote share at which a candidate counts as SLOW
        #[arg(long, default_value_t = 0.5)]
        decision_threshold: f64,
    },
    /// Inspect run configurations
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Print the default configuration
    Default {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate the file given with --config
    Check,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("assoclab: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = cli.common;
    let o = |n: Option<usize>, trees: Option<usize>| Overrides {
        seed: common.seed,
        threshold_ms: common.threshold_ms,
        timeout_ms: common.timeout_ms,
        n,
        trees,
    };
    let cfg_path = common.config.as_deref();
    match cli.command {
        Command::Simulate {
            out,
            candidates,
            n,
            format,
            traces,
            report,
        } => commands::simulate(
            cfg_path,
            &o(n, None),
            &out,
            candidates,
            format,
            traces.as_deref(),
            report.as_deref(),
        ),
        Command::Analyze {
            input,
            out,
            format,
            traces,
            class,
        } => commands::analyze(&input, &out, format, traces.as_deref(), class),
        Command::Train {
            input,
            out,
            candidates,
            format,
            trees,
        } => commands::train(cfg_path, &o(None, trees), &input, &out, candidates, format),
        Command::Eval {
            input,
            model,
            out,
            save_model,
            sweep,
            decision_threshold,
            trees,
        } => commands::eval(
            cfg_path,
            &o(None, trees),
            commands::EvalArgs {
                input: &input,
                model: model.as_deref(),
                out: out.as_deref(),
                save_model: save_model.as_deref(),
                sweep: sweep.as_deref(),
                decision_threshold,
            },
        ),
        Command::Select {
            model,
            input,
            out,
            decision_threshold,
        } => commands::select(&model, &input, out.as_deref(), decision_threshold),
        Command::Config {
            action: ConfigAction::Default { out },
        } => commands::config_default(out.as_deref()),
        Command::Config {
            action: ConfigAction::Check,
        } => commands::config_check(cfg_path, &o(None, None)),
    }
}
