use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::audio::ChunkId;
use crate::pipeline::Manifest;

pub const REPORT_CSV_HEADER: &str = "worker,processed,deleted,bytes_in,bytes_out,busy_ms";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorkerReport {
    pub name: String,
    pub threads: u32,
    /// Chunks this worker resolved, kept or deleted.
    pub processed: usize,
    pub deleted: usize,
    /// Bytes the master received from / sent to this worker.
    pub bytes_in: u64,
    pub bytes_out: u64,
    /// Time the worker held at least one granted chunk.
    pub busy_ms: f64,
    /// Chunks returned to the queue when the worker went away.
    pub requeued: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub wall_time_s: f64,
    pub chunks: usize,
    pub kept: usize,
    pub deleted: usize,
    pub failed: Vec<ChunkId>,
    pub workers: Vec<WorkerReport>,
    /// Cumulative milliseconds per stage over processed results.
    pub stage_ms: BTreeMap<String, f64>,
    pub requeue_events: usize,
    pub manifest: Manifest,
}

impl RunReport {
    pub fn bytes_sent(&self) -> u64 {
        self.workers.iter().map(|w| w.bytes_out).sum()
    }

    pub fn bytes_received(&self) -> u64 {
        self.workers.iter().map(|w| w.bytes_in).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_CSV_HEADER.split(','))
            .expect("in-memory write");
        for r in &self.workers {
            w.write_record([
                r.name.clone(),
                r.processed.to_string(),
                r.deleted.to_string(),
                r.bytes_in.to_string(),
                r.bytes_out.to_string(),
                format!("{:.1}", r.busy_ms),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} chunks in {:.2} s: {} kept, {} deleted, {} failed, {} requeue events",
            self.chunks,
            self.wall_time_s,
            self.kept,
            self.deleted,
            self.failed.len(),
            self.requeue_events
        );
        let _ = writeln!(
            s,
            "bytes sent {} received {}",
            self.bytes_sent(),
            self.bytes_received()
        );
        for w in &self.workers {
            let _ = writeln!(
                s,
                "  {:<20} threads {:>2}  processed {:>5}  deleted {:>5}  busy {:>9.0} ms  requeued {}",
                w.name, w.threads, w.processed, w.deleted, w.busy_ms, w.requeued
            );
        }
        for (stage, ms) in &self.stage_ms {
            let _ = writeln!(s, "  stage {stage:<10} {ms:>10.1} ms");
        }
        for id in &self.failed {
            let _ = writeln!(s, "  failed {id}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let r = RunReport {
            workers: vec![WorkerReport {
                name: "w1".into(),
                threads: 2,
                processed: 5,
                deleted: 2,
                bytes_in: 10,
                bytes_out: 20,
                busy_ms: 1.5,
                requeued: 0,
            }],
            ..RunReport::default()
        };
        assert_eq!(
            r.to_csv(),
            format!("{REPORT_CSV_HEADER}\nw1,5,2,10,20,1.5\n")
        );
        assert!(r.to_text().contains("w1"));
    }
}
