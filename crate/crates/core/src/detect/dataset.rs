//! Labelled feature tables in the `chunk_id,band,index,value,label` layout.

use std::fs;
use std::path::Path;

use super::{DetectError, Label};
use crate::spectral::FeatureVector;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    pub rows: Vec<(FeatureVector, Label)>,
}

pub const DATASET_HEADER: &str = "chunk_id,band,index,value,label";

impl LabeledDataset {
    pub fn push(&mut self, fv: FeatureVector, label: Label) {
        self.rows.push((fv, label));
    }

    /// Serialises with one row per (chunk, band, index); `ids` names each
    /// dataset row.
    pub fn to_csv(&self, ids: &[String]) -> String {
        let mut out = format!("{DATASET_HEADER}\n");
        for ((fv, label), id) in self.rows.iter().zip(ids) {
            for ((index, band), value) in fv.iter() {
                out.push_str(&format!("{id},{band},{index},{value},{label}\n"));
            }
        }
        out
    }

    /// Parses the table, grouping rows by chunk id in order of first
    /// appearance. Every row of one chunk must carry the same label.
    pub fn from_csv(text: &str) -> Result<(LabeledDataset, Vec<String>), DetectError> {
        let bad =
            |line: usize, msg: &str| DetectError::InvalidDataset(format!("line {line}: {msg}"));
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == DATASET_HEADER => {}
            _ => {
                return Err(DetectError::InvalidDataset(format!(
                    "expected header `{DATASET_HEADER}`"
                )))
            }
        }
        let mut ids: Vec<String> = Vec::new();
        let mut data = LabeledDataset::default();
        for (i, line) in lines {
            let n = i + 1;
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 5 {
                return Err(bad(n, "expected 5 fields"));
            }
            let band = f[1].parse().map_err(|e: String| bad(n, &e))?;
            let index = f[2].parse().map_err(|e: String| bad(n, &e))?;
            let value: f64 = f[3].parse().map_err(|_| bad(n, "bad value"))?;
            let label: Label = f[4].parse().map_err(|e: String| bad(n, &e))?;
            let pos = match ids.iter().position(|id| id == f[0]) {
                Some(p) => p,
                None => {
                    ids.push(f[0].to_string());
                    data.push(FeatureVector::new(), label);
                    ids.len() - 1
                }
            };
            if data.rows[pos].1 != label {
                return Err(bad(n, "conflicting labels for one chunk"));
            }
            data.rows[pos].0.insert(index, band, value);
        }
        Ok((data, ids))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<(LabeledDataset, Vec<String>), DetectError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| DetectError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        LabeledDataset::from_csv(&text)
    }
}
