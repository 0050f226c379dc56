//! Master/worker distribution of the pipeline's back half.
//!
//! The master runs the front half over the input files, keeps a
//! [`WorkTracker`] of every detection chunk and serves chunks to workers on
//! demand. Workers keep a small prefetch queue full, process chunks on a
//! pool of executor threads and send results back in periodic batches.
//! Chunks held by a worker that disappears are handed to someone else.

mod master;
pub mod protocol;
mod report;
pub mod tracker;
mod worker;

use std::path::PathBuf;

use thiserror::Error;

use crate::pipeline::PipelineError;

pub use master::{master_serve, Master};
pub use protocol::{
    decode_message, encode_message, read_message, write_message, Message, ProtocolError,
};
pub use report::{RunReport, WorkerReport, REPORT_CSV_HEADER};
pub use tracker::{ChunkState, StateCounts, TrackerError, WorkTracker, WorkerId};
pub use worker::{worker_run, worker_run_until, WorkerStats};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot connect to {addr}: {source}")]
    Connect {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("protocol: {0}")]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("connection to the master was lost")]
    ConnectionLost,
    #[error("worker stopped by kill switch")]
    Killed,
    #[error("invalid cluster config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    /// `host:port` to listen on (master) or connect to (worker).
    pub endpoint: String,
    /// Worker prefetch capacity.
    pub queue_size: usize,
    /// Result flush period on the worker.
    pub send_interval_s: f64,
    /// Executor threads per worker.
    pub worker_threads: usize,
    /// Attempts before a chunk is given up as failed.
    pub max_attempts: u32,
    /// Executor threads of the in-process worker the master starts; 0 for none.
    pub local_threads: usize,
    /// A worker holding chunks that stays silent this long is presumed dead.
    pub liveness_timeout_s: f64,
    /// Name a worker announces; empty picks `<host>-<pid>`.
    pub worker_name: String,
    /// Master holds every grant until this many workers have joined, so
    /// workers that start late do not skew the split. 0 starts at once.
    pub min_workers: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            endpoint: "127.0.0.1:7070".into(),
            queue_size: 7,
            send_interval_s: 2.0,
            worker_threads: 1,
            max_attempts: 3,
            local_threads: 0,
            liveness_timeout_s: 30.0,
            worker_name: String::new(),
            min_workers: 0,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        let bad = |m: &str| Err(ClusterError::InvalidConfig(m.to_string()));
        if self.queue_size == 0 {
            return bad("queue_size must be at least 1");
        }
        if !(self.send_interval_s > 0.0) {
            return bad("send_interval_s must be positive");
        }
        if self.worker_threads == 0 {
            return bad("worker_threads must be at least 1");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1");
        }
        if !(self.liveness_timeout_s > 0.0) {
            return bad("liveness_timeout_s must be positive");
        }
        Ok(())
    }
}
