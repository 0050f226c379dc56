//! The `bap` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod bench;
mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use bap_core::audio::AudioError;
use bap_core::cluster::ClusterError;
use bap_core::detect::DetectError;
use bap_core::pipeline::{PipelineConfig, PipelineError};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use bench::{bench, BenchOptions, BenchRow, BENCH_CSV_HEADER};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bap",
    version,
    about = "Preprocessing of bird acoustic recordings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic corpus.
    Gen(GenArgs),
    /// Run the whole pipeline on one thread.
    Run(RunArgs),
    /// Serve chunks to workers and collect their results.
    Master(MasterArgs),
    /// Process chunks handed out by a master.
    Worker(WorkerArgs),
    /// Train a decision tree from a labelled feature table.
    Train(TrainArgs),
    /// Dump band features per detection chunk.
    Features(FeaturesArgs),
    /// Compare sequential and distributed wall time.
    Bench(BenchArgs),
}

/// Pipeline settings: an optional config file, then `--set` pairs, then the
/// dedicated flags, later sources winning.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// `key = value` config file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, value_name = "S")]
    pub long_split: Option<f64>,
    #[arg(long, value_name = "S")]
    pub detect_split: Option<f64>,
    #[arg(long, value_name = "S")]
    pub silence_split: Option<f64>,
    #[arg(long, value_name = "HZ")]
    pub target_rate: Option<u32>,
    #[arg(long, value_name = "HZ")]
    pub hpf_cutoff: Option<f64>,
    #[arg(long, value_name = "X")]
    pub snr_threshold: Option<f64>,
    #[arg(long, value_name = "FILE")]
    pub rain_rules: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub cicada_rules: Option<PathBuf>,
    /// Print the effective settings and exit.
    #[arg(long)]
    pub print_config: bool,
}

impl PipelineArgs {
    pub fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = PipelineConfig::default();
        let usage = |e: PipelineError| CliError::Usage(e.to_string());
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
                path: path.clone(),
                source: e,
            })?;
            cfg.apply_text(&text).map_err(usage)?;
        }
        for pair in &self.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {pair:?}")))?;
            cfg.set(k.trim(), v.trim()).map_err(usage)?;
        }
        let flags: [(&str, Option<String>); 8] = [
            ("long_split_s", self.long_split.map(|v| v.to_string())),
            ("detect_split_s", self.detect_split.map(|v| v.to_string())),
            ("silence_split_s", self.silence_split.map(|v| v.to_string())),
            ("target_rate_hz", self.target_rate.map(|v| v.to_string())),
            ("hpf_cutoff_hz", self.hpf_cutoff.map(|v| v.to_string())),
            ("snr_threshold", self.snr_threshold.map(|v| v.to_string())),
            (
                "rain_rules",
                self.rain_rules.as_ref().map(|p| p.display().to_string()),
            ),
            (
                "cicada_rules",
                self.cicada_rules.as_ref().map(|p| p.display().to_string()),
            ),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v).map_err(usage)?;
            }
        }
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_name = "DIR", required_unless_present = "print_config")]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub minutes: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fractions of chirp, rain, cicada and silence segments.
    #[arg(long, value_name = "C,R,Z,S", value_delimiter = ',', num_args = 4, default_values_t = [0.25, 0.25, 0.25, 0.25])]
    pub mix: Vec<f64>,
    #[arg(long, default_value_t = -50.0, allow_negative_numbers = true)]
    pub noise_floor_db: f64,
    #[arg(long, default_value_t = 2.0)]
    pub file_minutes: f64,
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_name = "DIR", required_unless_present = "print_config")]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "DIR", required_unless_present = "print_config")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

/// Worker-side knobs shared by `worker`, `master --local-threads` and `bench`.
#[derive(Debug, Clone, Args)]
pub struct QueueArgs {
    /// Prefetch queue capacity per worker.
    #[arg(long, default_value_t = 7)]
    pub queue: usize,
    /// Seconds between result flushes.
    #[arg(long, default_value_t = 2.0)]
    pub send_interval: f64,
}

#[derive(Debug, Args)]
pub struct MasterArgs {
    #[arg(
        long,
        value_name = "HOST:PORT",
        required_unless_present = "print_config"
    )]
    pub listen: Option<String>,
    #[arg(long, value_name = "DIR", required_unless_present = "print_config")]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "DIR", required_unless_present = "print_config")]
    pub out: Option<PathBuf>,
    /// Threads of an in-process worker; 0 for none.
    #[arg(long, default_value_t = 0)]
    pub local_threads: usize,
    #[arg(long, default_value_t = 3)]
    pub max_attempts: u32,
    /// Seconds a worker holding chunks may stay silent.
    #[arg(long, default_value_t = 30.0)]
    pub liveness_timeout: f64,
    /// Hand out no work until this many workers have joined.
    #[arg(long, default_value_t = 0)]
    pub min_workers: usize,
    /// Write the per-worker report CSV here.
    #[arg(long, value_name = "CSV")]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub queue: QueueArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct WorkerArgs {
    #[arg(
        long,
        value_name = "HOST:PORT",
        required_unless_present = "print_config"
    )]
    pub connect: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value = "")]
    pub name: String,
    #[command(flatten)]
    pub queue: QueueArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labelled table `chunk_id,band,index,value,label`.
    #[arg(long, value_name = "CSV")]
    pub features: PathBuf,
    #[arg(long, value_name = "RULES")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 2)]
    pub min_leaf: usize,
    /// Cross-validation folds to report; 0 skips it.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// A WAV file or a directory of them.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Write here instead of stdout.
    #[arg(long, value_name = "CSV")]
    pub out: Option<PathBuf>,
    /// Treat `--input` as a generated corpus and label each chunk
    /// positive for this class, negative otherwise.
    #[arg(long, value_name = "CLASS", value_parser = ["chirp", "rain", "cicada", "silence"])]
    pub label: Option<String>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_name = "DIR", required_unless_present = "print_config")]
    pub input: Option<PathBuf>,
    /// Worker process counts to try.
    #[arg(
        long,
        value_name = "K1,K2,...",
        value_delimiter = ',',
        required_unless_present = "print_config"
    )]
    pub workers: Vec<usize>,
    #[arg(long, value_name = "CSV")]
    pub out: Option<PathBuf>,
    /// Executor threads per worker process.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[command(flatten)]
    pub queue: QueueArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

/// Parses `argv` (including the program name).
pub fn parse_args<I, T>(argv: I) -> Result<Command, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(argv).map(|c| c.command)
}

/// Parses and runs; returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cmd = match parse_args(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Logging from `BAP_LOG` (error, warn, info, debug); warn by default.
pub fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BAP_LOG", "warn"))
        .format_timestamp_millis()
        .init();
}
