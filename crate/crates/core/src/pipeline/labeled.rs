//! Detection chunks of a generated corpus paired with their ground truth.

use std::path::Path;

use super::{chunk_features, handoff, list_wavs, preprocess_front, PipelineConfig, PipelineError};
use crate::audio::synth::{CorpusManifest, Segment, SegmentLabel};
use crate::audio::{read_wav, AudioClip, ChunkId};
use crate::detect::{Label, LabeledDataset};
use crate::spectral::FeatureVector;

/// Runs the front half over every corpus file and calls `f` with each
/// detection chunk and the segment it was cut from. Chunks without a
/// matching segment are skipped.
pub fn for_each_labeled_chunk<F>(
    corpus_dir: &Path,
    cfg: &PipelineConfig,
    mut f: F,
) -> Result<(), PipelineError>
where
    F: FnMut(&AudioClip, &Segment) -> Result<(), PipelineError>,
{
    let truth = CorpusManifest::read(corpus_dir)?;
    for path in list_wavs(corpus_dir)? {
        let clip = read_wav(&path)?;
        for chunk in preprocess_front(&clip, cfg)? {
            let chunk = handoff(&chunk)?;
            let id = chunk.chunk_id();
            if let Some(seg) = truth.label_at(&id.source_name, id.offset_s()) {
                f(&chunk, seg)?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledChunk {
    pub id: ChunkId,
    pub features: FeatureVector,
    pub label: SegmentLabel,
}

pub fn labeled_features(
    corpus_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<Vec<LabeledChunk>, PipelineError> {
    let mut out = Vec::new();
    for_each_labeled_chunk(corpus_dir, cfg, |chunk, seg| {
        out.push(LabeledChunk {
            id: chunk.chunk_id().clone(),
            features: chunk_features(chunk)?,
            label: seg.label,
        });
        Ok(())
    })?;
    Ok(out)
}

/// One-vs-rest dataset: `positive` segments against everything else.
pub fn one_vs_rest(
    chunks: &[LabeledChunk],
    positive: SegmentLabel,
) -> (LabeledDataset, Vec<String>) {
    let mut data = LabeledDataset::default();
    let mut ids = Vec::new();
    for c in chunks {
        let label = if c.label == positive {
            Label::Positive
        } else {
            Label::Negative
        };
        data.push(c.features.clone(), label);
        ids.push(c.id.to_string());
    }
    (data, ids)
}
