//! Sequential versus distributed wall time, with worker processes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::Instant;

use bap_core::cluster::{ClusterConfig, Master};
use bap_core::pipeline::{run_sequential, Manifest, PipelineConfig};
use log::info;

use crate::CliError;

pub const BENCH_CSV_HEADER: &str = "workers,wall_s,speedup";

#[derive(Debug, Clone)]
pub struct BenchOptions {
    /// Executor threads per worker process.
    pub threads: usize,
    pub queue_size: usize,
    pub send_interval_s: f64,
    /// The `bap` binary to start workers from.
    pub worker_exe: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub workers: usize,
    pub wall_s: f64,
    pub speedup: f64,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Compares every kept file and decision against the sequential run.
fn check_equal(
    seq: &Manifest,
    seq_dir: &Path,
    dist: &Manifest,
    dist_dir: &Path,
) -> Result<(), CliError> {
    if seq.decisions() != dist.decisions() {
        return Err(CliError::Failed(
            "distributed decisions differ from the sequential run".into(),
        ));
    }
    if seq.output_files() != dist.output_files() {
        return Err(CliError::Failed(
            "distributed output files differ from the sequential run".into(),
        ));
    }
    for f in seq.output_files() {
        let a = fs::read(seq_dir.join(&f)).map_err(io(seq_dir))?;
        let b = fs::read(dist_dir.join(&f)).map_err(io(dist_dir))?;
        if a != b {
            return Err(CliError::Failed(format!(
                "{f} differs from the sequential output"
            )));
        }
    }
    Ok(())
}

fn kill_all(children: &mut [Child]) {
    for c in children {
        let _ = c.kill();
        let _ = c.wait();
    }
}

/// Runs the sequential pipeline once, then a master with `k` worker
/// processes for each `k`, checking each distributed result against the
/// sequential one.
pub fn bench(
    input: &Path,
    worker_counts: &[usize],
    pcfg: &PipelineConfig,
    opts: &BenchOptions,
) -> Result<Vec<BenchRow>, CliError> {
    let scratch = tempfile::tempdir().map_err(io(Path::new("<tempdir>")))?;
    let cfg_path = scratch.path().join("pipeline.conf");
    fs::write(&cfg_path, pcfg.to_config_text()).map_err(io(&cfg_path))?;

    let seq_dir = scratch.path().join("sequential");
    let t = Instant::now();
    let seq = run_sequential(input, &seq_dir, pcfg)?;
    let seq_wall = t.elapsed().as_secs_f64();
    eprintln!("sequential: {} chunks in {seq_wall:.3} s", seq.rows.len());

    let mut rows = Vec::new();
    for &k in worker_counts {
        let out = scratch.path().join(format!("workers-{k}"));
        let cfg = ClusterConfig {
            endpoint: "127.0.0.1:0".into(),
            queue_size: opts.queue_size,
            send_interval_s: opts.send_interval_s,
            // no chunk moves until every worker has joined
            min_workers: k,
            ..ClusterConfig::default()
        };
        let t = Instant::now();
        let master = Master::bind(&cfg)?;
        let addr = master.local_addr().to_string();
        let mut children = Vec::with_capacity(k);
        for i in 0..k {
            let child = Command::new(&opts.worker_exe)
                .args([
                    "worker",
                    "--connect",
                    &addr,
                    "--name",
                    &format!("bench-{i}"),
                ])
                .args(["--threads", &opts.threads.to_string()])
                .args(["--queue", &opts.queue_size.to_string()])
                .args(["--send-interval", &opts.send_interval_s.to_string()])
                .arg("--config")
                .arg(&cfg_path)
                .stdin(Stdio::null())
                .stdout(Stdio::null())
                .spawn();
            match child {
                Ok(c) => children.push(c),
                Err(e) => {
                    kill_all(&mut children);
                    return Err(io(&opts.worker_exe)(e));
                }
            }
        }
        let report = match master.run(pcfg, input, &out) {
            Ok(r) => r,
            Err(e) => {
                kill_all(&mut children);
                return Err(e.into());
            }
        };
        let wall_s = t.elapsed().as_secs_f64();
        for mut c in children {
            let status = c.wait().map_err(io(&opts.worker_exe))?;
            if !status.success() {
                return Err(CliError::Failed(format!("a worker exited with {status}")));
            }
        }
        check_equal(&seq, &seq_dir, &report.manifest, &out)?;
        info!("{k} workers:\n{}", report.to_text());
        let per_worker: Vec<String> = report
            .workers
            .iter()
            .map(|w| w.processed.to_string())
            .collect();
        eprintln!(
            "{k} workers: {wall_s:.3} s, outputs match, per-worker chunks [{}]",
            per_worker.join(" ")
        );
        rows.push(BenchRow {
            workers: k,
            wall_s,
            speedup: seq_wall / wall_s,
        });
        let _ = fs::remove_dir_all(&out);
    }
    Ok(rows)
}
