//! The ordered preprocessing pipeline.
//!
//! The front half (long split, downsample, mono, high-pass, detection split)
//! runs where the recordings live. The back half ([`process_chunk`]) runs per
//! detection chunk: features, rain, cicada, silence, enhancement. A chunk
//! removed by an earlier stage never reaches the later ones.

mod config;
mod labeled;
mod manifest;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::{info, warn};
use thiserror::Error;

use crate::audio::{
    band_reject, decode_wav, downsample, encode_wav, format_seconds, highpass, read_wav, split,
    to_mono, AudioClip, AudioError, ChunkId,
};
use crate::detect::{detect_silence, DetectError, Label, SilenceConfig};
use crate::enhance::{mmse_stsa, EnhanceError};
use crate::spectral::{
    all_band_features, cicada_band_estimate_with, stft, FeatureVector, SpectralError,
};

pub use config::{PipelineConfig, Rules};
pub use labeled::{for_each_labeled_chunk, labeled_features, one_vs_rest, LabeledChunk};
pub use manifest::{Decision, Manifest, ManifestRow, MANIFEST_FILE};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Enhance(#[from] EnhanceError),
    #[error("config: {0}")]
    Config(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Features,
    Rain,
    Cicada,
    Silence,
    Mmse,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Features,
        Stage::Rain,
        Stage::Cicada,
        Stage::Silence,
        Stage::Mmse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Features => "features",
            Stage::Rain => "rain",
            Stage::Cicada => "cicada",
            Stage::Silence => "silence",
            Stage::Mmse => "mmse",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.as_str() == name)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeleteReason {
    Rain,
    Silence,
}

impl DeleteReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DeleteReason::Rain => "rain",
            DeleteReason::Silence => "silence",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChunkDecision {
    /// Surviving, enhanced pieces in time order.
    Kept(Vec<AudioClip>),
    Deleted(DeleteReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkOutcome {
    pub original: ChunkId,
    pub decision: ChunkDecision,
    /// Stages in execution order with their elapsed time.
    pub stages: Vec<(Stage, Duration)>,
}

impl ChunkOutcome {
    pub fn stage_names(&self) -> Vec<Stage> {
        self.stages.iter().map(|(s, _)| *s).collect()
    }

    /// Manifest row for this outcome; kept pieces are named with
    /// [`piece_file_name`].
    pub fn manifest_row(&self) -> ManifestRow {
        let (decision, reason, output_files) = match &self.decision {
            ChunkDecision::Kept(pieces) => (
                Decision::Kept,
                String::new(),
                pieces
                    .iter()
                    .map(|p| piece_file_name(&self.original, p.chunk_id()))
                    .collect(),
            ),
            ChunkDecision::Deleted(r) => (Decision::Deleted, r.as_str().to_string(), Vec::new()),
        };
        ManifestRow {
            chunk: self.original.clone(),
            decision,
            reason,
            output_files,
            stage_ms: self
                .stages
                .iter()
                .map(|(s, d)| (s.to_string(), d.as_secs_f64() * 1000.0))
                .collect(),
        }
    }
}

/// `<source>_<chunk offset s>_<piece offset s>.wav`
pub fn piece_file_name(chunk: &ChunkId, piece: &ChunkId) -> String {
    format!(
        "{}_{}_{}.wav",
        chunk.source_name,
        format_seconds(chunk.offset_ms),
        format_seconds(piece.offset_ms)
    )
}

/// Round-trips a clip through the PCM16 WAV encoding used to hand chunks
/// between the two pipeline halves, so every execution mode sees the same
/// quantised samples.
pub fn handoff(clip: &AudioClip) -> Result<AudioClip, AudioError> {
    decode_wav(&encode_wav(clip), clip.chunk_id().clone())
}

/// Long split, downsample, mono, high-pass, detection split.
pub fn preprocess_front(
    clip: &AudioClip,
    cfg: &PipelineConfig,
) -> Result<Vec<AudioClip>, PipelineError> {
    let mut out = Vec::new();
    for long in split(clip, cfg.long_split_s, 1) {
        let resampled = downsample(&long, cfg.target_rate_hz)?;
        let mono = to_mono(&resampled);
        let filtered = highpass(&mono, cfg.hpf_cutoff_hz)?;
        out.extend(split(&filtered, cfg.detect_split_s, 2));
    }
    Ok(out)
}

/// All band features of one chunk.
pub fn chunk_features(chunk: &AudioClip) -> Result<FeatureVector, PipelineError> {
    Ok(all_band_features(&stft(chunk)?)?)
}

/// Runs the detection and enhancement stages over one detection chunk.
pub fn process_chunk(
    chunk: &AudioClip,
    cfg: &PipelineConfig,
    rules: &Rules,
) -> Result<ChunkOutcome, PipelineError> {
    let mut stages = Vec::new();
    let mut timed = |stage: Stage, start: Instant| stages.push((stage, start.elapsed()));
    let original = chunk.chunk_id().clone();

    let t = Instant::now();
    let spec = stft(chunk)?;
    let features = all_band_features(&spec)?;
    timed(Stage::Features, t);

    let t = Instant::now();
    let rain = rules.rain.classify(&features)?.label == Label::Positive;
    timed(Stage::Rain, t);
    if rain {
        return Ok(ChunkOutcome {
            original,
            decision: ChunkDecision::Deleted(DeleteReason::Rain),
            stages,
        });
    }

    let t = Instant::now();
    let mut audio = chunk.clone();
    if rules.cicada.classify(&features)?.label == Label::Positive {
        let nyquist = chunk.sample_rate() as f64 / 2.0;
        for band in cicada_band_estimate_with(&spec, &cfg.cicada_band) {
            let hi = band.hi_hz.min(nyquist - 1.0);
            if band.lo_hz > 0.0 && band.lo_hz < hi {
                audio = band_reject(&audio, band.lo_hz, hi)?;
            }
        }
    }
    timed(Stage::Cicada, t);

    let t = Instant::now();
    let full_len = (cfg.silence_split_s * chunk.sample_rate() as f64).round() as usize;
    let mut survivors = Vec::new();
    for piece in split(&audio, cfg.silence_split_s, 3) {
        // A short final piece is judged against its own length.
        let silence_cfg = SilenceConfig {
            chunk_length_s: if piece.len() == full_len {
                cfg.silence_split_s
            } else {
                piece.duration_s()
            },
            ..cfg.silence.clone()
        };
        if !detect_silence(&piece, &silence_cfg)? {
            survivors.push(piece);
        }
    }
    timed(Stage::Silence, t);
    if survivors.is_empty() {
        return Ok(ChunkOutcome {
            original,
            decision: ChunkDecision::Deleted(DeleteReason::Silence),
            stages,
        });
    }

    let t = Instant::now();
    let enhanced = survivors
        .iter()
        .map(|p| mmse_stsa(p, &cfg.enhance))
        .collect::<Result<Vec<_>, _>>()?;
    timed(Stage::Mmse, t);
    Ok(ChunkOutcome {
        original,
        decision: ChunkDecision::Kept(enhanced),
        stages,
    })
}

/// WAV files directly inside `dir`, sorted by name.
pub fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| PipelineError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

/// Writes the kept pieces of an outcome into `out_dir`.
pub fn write_outputs(outcome: &ChunkOutcome, out_dir: &Path) -> Result<(), PipelineError> {
    if let ChunkDecision::Kept(pieces) = &outcome.decision {
        for p in pieces {
            let path = out_dir.join(piece_file_name(&outcome.original, p.chunk_id()));
            fs::write(&path, encode_wav(p)).map_err(|e| PipelineError::io(&path, e))?;
        }
    }
    Ok(())
}

/// Single-threaded run over every WAV in `input_dir`. Undecodable files are
/// logged and skipped. Writes kept pieces and `manifest.csv` to `output_dir`.
pub fn run_sequential(
    input_dir: &Path,
    output_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<Manifest, PipelineError> {
    cfg.validate()?;
    let rules = cfg.load_rules()?;
    fs::create_dir_all(output_dir).map_err(|e| PipelineError::io(output_dir, e))?;
    let mut manifest = Manifest::default();
    for path in list_wavs(input_dir)? {
        let chunks = match read_wav(&path)
            .map_err(PipelineError::from)
            .and_then(|c| preprocess_front(&c, cfg))
        {
            Ok(c) => c,
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                continue;
            }
        };
        for chunk in chunks {
            let chunk = handoff(&chunk)?;
            let outcome = process_chunk(&chunk, cfg, &rules)?;
            write_outputs(&outcome, output_dir)?;
            manifest.push(outcome.manifest_row());
        }
        info!("processed {}", path.display());
    }
    manifest.write(output_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
