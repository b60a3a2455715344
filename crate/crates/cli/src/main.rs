mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lexiscope::admin::TestKind;
use lexiscope::scoring::GateFn;

/// A bad argument or missing configuration entry.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug, Parser)]
#[command(
    name = "lexiscope",
    version,
    about = "Administer, score and validate vocabulary-space creativity tests"
)]
pub struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true, env = "LEXISCOPE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Trial store (JSON lines).
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Provider registry (TOML with a `[providers]` table).
    #[arg(long, global = true)]
    pub providers: Option<PathBuf>,
    /// Seed for every sampled pool, anchor set and per-call seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a test session against a chat endpoint.
    Administer(AdministerArgs),
    /// Score stored trials under one or more embedding providers.
    Score(ScoreArgs),
    /// Gate CDAT scores against a random-noun baseline.
    Gate(GateArgs),
    /// Inspect, sample or calibrate DRAT anchor sets.
    #[command(subcommand)]
    Anchors(AnchorsCommand),
    /// Run the greedy DAT maximizer and the random-selection oracle.
    Greedy(GreedyArgs),
    /// Compute validity and specificity for every test and benchmark.
    Analyze(AnalyzeArgs),
    /// Export validity/specificity frontier curves.
    Frontier(FrontierArgs),
    /// Write the validity table, frontier curves and a run manifest.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct AdministerArgs {
    #[arg(long)]
    pub test: TestKind,
    #[arg(long)]
    pub model: String,
    /// Endpoint name from the configuration.
    #[arg(long)]
    pub endpoint: String,
    /// Trials per grid unit; defaults depend on the test.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub temperatures: Option<Vec<f64>>,
    /// Cue list for CDAT or seed words for PACE; defaults to the shipped cues.
    #[arg(long)]
    pub cues: Option<PathBuf>,
    /// RAT items file (`stem1,stem2,stem3,answer`); defaults to the shipped items.
    #[arg(long)]
    pub rat_items: Option<PathBuf>,
    /// Anchor bank: `scientific`, `relation-distant`, or a file.
    #[arg(long, default_value = "scientific")]
    pub bank: String,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long)]
    pub retry_failed: bool,
    /// Print the plan and its cell count without sending requests.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long = "provider", id = "provider", required = true)]
    pub providers: Vec<String>,
    /// Per-trial rows (JSON lines); stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-model aggregates as CSV.
    #[arg(long)]
    pub aggregate: Option<PathBuf>,
    /// Word list for DRAT threshold calibration.
    #[arg(long)]
    pub calibration_pool: Option<PathBuf>,
    #[arg(long)]
    pub rat_items: Option<PathBuf>,
    #[arg(long, default_value = "max")]
    pub gate: GateFn,
    #[arg(long, default_value_t = 0.9)]
    pub quantile: f64,
    #[arg(long, default_value_t = 3)]
    pub n_min: usize,
}

#[derive(Debug, Args)]
pub struct GateArgs {
    /// Rows written by `score`.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub provider: String,
    #[arg(long, default_value_t = lexiscope::gating::DEFAULT_GATE_ALPHA)]
    pub alpha: f64,
    /// Random nouns in the baseline; overrides the configuration.
    #[arg(long)]
    pub baseline_size: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnchorsCommand {
    /// Print a bank's sets at a given k.
    Show {
        #[arg(long, default_value = "scientific")]
        bank: String,
        #[arg(long, default_value_t = 4)]
        k: usize,
    },
    /// Sample relation-distant anchor sets from a random noun pool.
    Sample {
        #[arg(long)]
        provider: String,
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Every pairwise cosine must fall below this.
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 1000)]
        pool_size: usize,
        #[arg(long, default_value_t = 1000)]
        restarts: usize,
    },
    /// Calibrate utility thresholds for a bank.
    Calibrate {
        #[arg(long, default_value = "scientific")]
        bank: String,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long)]
        provider: String,
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        quantile: f64,
        #[arg(long, default_value = "max")]
        gate: GateFn,
        /// Calibrate only this set (1-based).
        #[arg(long)]
        set: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct GreedyArgs {
    /// Selection provider.
    #[arg(long)]
    pub provider: String,
    /// Extra providers the selected lists are scored under.
    #[arg(long = "scorer", id = "scorer")]
    pub scorers: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    #[arg(long, default_value_t = 25)]
    pub n: usize,
    /// Random-selection runs to compare against; 0 skips the oracle.
    #[arg(long, default_value_t = 0)]
    pub random: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TableInputs {
    /// Long-format test scores (`model,test,embedding,mean,sem,trials`).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Wide benchmark table; `---` or blank marks a missing cell.
    #[arg(long)]
    pub benchmarks: Option<PathBuf>,
    /// Benchmarks to correlate against.
    #[arg(long = "benchmark")]
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TableFormat {
    Csv,
    Markdown,
    Json,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub inputs: TableInputs,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FrontierArgs {
    /// `name=R` panels with a fixed coupling.
    #[arg(long = "coupling")]
    pub couplings: Vec<String>,
    /// Benchmarks whose measured coupling defines a panel.
    #[arg(long = "benchmark")]
    pub benchmarks: Vec<String>,
    #[arg(long)]
    pub benchmark_table: Option<PathBuf>,
    #[arg(long, default_value_t = 101)]
    pub samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub inputs: TableInputs,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 101)]
    pub samples: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                exit::VALIDATION
            } else {
                exit::OK
            });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code(&e))
        }
    }
}
