//! Per-chunk run records in CSV form.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::PipelineError;
use crate::audio::ChunkId;

pub const MANIFEST_FILE: &str = "manifest.csv";
const HEADER: [&str; 7] = [
    "source",
    "offset_s",
    "generation",
    "decision",
    "reason",
    "output_files",
    "stage_ms_json",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Decision {
    Kept,
    Deleted,
    /// Gave up after repeated worker failures.
    Failed,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Kept => "kept",
            Decision::Deleted => "deleted",
            Decision::Failed => "failed",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Decision {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kept" => Ok(Decision::Kept),
            "deleted" => Ok(Decision::Deleted),
            "failed" => Ok(Decision::Failed),
            _ => Err(format!("unknown decision {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub chunk: ChunkId,
    pub decision: Decision,
    /// `rain` or `silence` for deletions, empty for kept chunks.
    pub reason: String,
    pub output_files: Vec<String>,
    /// Stage name and elapsed milliseconds, in execution order.
    pub stage_ms: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn push(&mut self, row: ManifestRow) {
        self.rows.push(row);
    }

    /// Rows ordered by chunk id.
    pub fn sorted(&self) -> Manifest {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| a.chunk.cmp(&b.chunk));
        Manifest { rows }
    }

    /// Sorted (chunk id, decision, reason) triples, the part of a manifest
    /// that must not depend on how the work was distributed.
    pub fn decisions(&self) -> Vec<(ChunkId, Decision, String)> {
        let mut d: Vec<_> = self
            .rows
            .iter()
            .map(|r| (r.chunk.clone(), r.decision, r.reason.clone()))
            .collect();
        d.sort();
        d
    }

    /// All output file names, sorted.
    pub fn output_files(&self) -> Vec<String> {
        let mut f: Vec<String> = self
            .rows
            .iter()
            .flat_map(|r| r.output_files.clone())
            .collect();
        f.sort();
        f
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for r in &self.rows {
            let mut stages = serde_json::Map::new();
            for (name, ms) in &r.stage_ms {
                stages.insert(name.clone(), serde_json::json!(ms));
            }
            w.write_record([
                r.chunk.source_name.clone(),
                crate::audio::format_seconds(r.chunk.offset_ms),
                r.chunk.generation.to_string(),
                r.decision.to_string(),
                r.reason.clone(),
                r.output_files.join(";"),
                serde_json::Value::Object(stages).to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn from_csv(text: &str) -> Result<Manifest, PipelineError> {
        let bad = |m: String| PipelineError::Manifest(m);
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| bad(e.to_string()))?;
        if header.iter().ne(HEADER) {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let mut m = Manifest::default();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let offset_s: f64 = rec[1]
                .parse()
                .map_err(|_| bad(format!("bad offset {:?}", &rec[1])))?;
            let generation: u8 = rec[2]
                .parse()
                .map_err(|_| bad(format!("bad generation {:?}", &rec[2])))?;
            let stages: serde_json::Map<String, serde_json::Value> =
                serde_json::from_str(&rec[6]).map_err(|e| bad(e.to_string()))?;
            m.push(ManifestRow {
                chunk: ChunkId::new(&rec[0], (offset_s * 1000.0).round() as u64, generation),
                decision: rec[3].parse().map_err(bad)?,
                reason: rec[4].to_string(),
                output_files: rec[5]
                    .split(';')
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
                stage_ms: stages
                    .into_iter()
                    .map(|(k, v)| (k, v.as_f64().unwrap_or(0.0)))
                    .collect(),
            });
        }
        Ok(m)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| PipelineError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Manifest, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Manifest::from_csv(&text)
    }
}
