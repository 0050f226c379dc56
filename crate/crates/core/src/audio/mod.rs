//! Audio clips and the time-domain stages applied to them.

mod filter;
mod ops;
mod resample;
pub mod synth;
pub mod wav;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

pub use filter::{band_reject, band_reject_order, highpass, Biquad};
pub use ops::{split, to_mono};
pub use resample::downsample;
pub use synth::{gen_corpus, CorpusManifest, Segment, SegmentLabel, SynthSpec};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav};

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("cannot upsample from {from} Hz to {to} Hz")]
    UpsampleRequested { from: u32, to: u32 },
    #[error("invalid cutoff {cutoff_hz} Hz for sample rate {sample_rate} Hz")]
    InvalidCutoff { cutoff_hz: f64, sample_rate: u32 },
    #[error("invalid band [{lo_hz}, {hi_hz}] Hz for sample rate {sample_rate} Hz")]
    InvalidBand {
        lo_hz: f64,
        hi_hz: f64,
        sample_rate: u32,
    },
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AudioError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AudioError::IoFailure {
            path: path.into(),
            source,
        }
    }
}

/// Identifies a chunk of a recording within one run.
///
/// Offsets are kept in whole milliseconds so ids can be hashed, ordered and
/// sent over the wire without float formatting issues.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChunkId {
    pub source_name: String,
    pub offset_ms: u64,
    /// 0 = original, 1 = long split, 2 = detection split, 3 = silence split.
    pub generation: u8,
}

impl ChunkId {
    pub fn new(source_name: impl Into<String>, offset_ms: u64, generation: u8) -> Self {
        ChunkId {
            source_name: source_name.into(),
            offset_ms,
            generation,
        }
    }

    pub fn root(source_name: impl Into<String>) -> Self {
        ChunkId::new(source_name, 0, 0)
    }

    pub fn offset_s(&self) -> f64 {
        self.offset_ms as f64 / 1000.0
    }
}

/// Formats a millisecond offset as seconds, dropping the fraction when whole.
pub fn format_seconds(ms: u64) -> String {
    if ms % 1000 == 0 {
        format!("{}", ms / 1000)
    } else {
        let s = format!("{}.{:03}", ms / 1000, ms % 1000);
        s.trim_end_matches('0').to_string()
    }
}

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}",
            self.source_name, self.offset_ms, self.generation
        )
    }
}

impl FromStr for ChunkId {
    type Err = String;

    /// Parses the `source:offset_ms:generation` form; the source may itself
    /// contain colons.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.rsplitn(3, ':');
        let generation = parts.next().ok_or("missing generation")?;
        let offset = parts.next().ok_or("missing offset")?;
        let source = parts.next().ok_or("missing source name")?;
        let generation = generation
            .parse::<u8>()
            .map_err(|e| format!("bad generation {generation:?}: {e}"))?;
        let offset_ms = offset
            .parse::<u64>()
            .map_err(|e| format!("bad offset {offset:?}: {e}"))?;
        Ok(ChunkId::new(source, offset_ms, generation))
    }
}

/// Decoded PCM audio. Samples are stored per channel, normalised to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    channels: Vec<Vec<f32>>,
    sample_rate: u32,
    chunk_id: ChunkId,
}

impl AudioClip {
    pub fn new(
        channels: Vec<Vec<f32>>,
        sample_rate: u32,
        chunk_id: ChunkId,
    ) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidClip(
                "sample rate must be positive".into(),
            ));
        }
        let Some(first) = channels.first() else {
            return Err(AudioError::InvalidClip(
                "at least one channel required".into(),
            ));
        };
        let len = first.len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(AudioError::InvalidClip(
                "channels have unequal sample counts".into(),
            ));
        }
        Ok(AudioClip {
            channels,
            sample_rate,
            chunk_id,
        })
    }

    pub fn mono(
        samples: Vec<f32>,
        sample_rate: u32,
        chunk_id: ChunkId,
    ) -> Result<Self, AudioError> {
        AudioClip::new(vec![samples], sample_rate, chunk_id)
    }

    /// Builds a mono clip from `f64` samples, clamping each to [-1, 1].
    pub(crate) fn from_f64(samples: &[f64], sample_rate: u32, chunk_id: ChunkId) -> Self {
        AudioClip {
            channels: vec![samples.iter().map(|&s| s.clamp(-1.0, 1.0) as f32).collect()],
            sample_rate,
            chunk_id,
        }
    }

    pub fn channels(&self) -> &[Vec<f32>] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// First channel; the whole signal for mono clips.
    pub fn samples(&self) -> &[f32] {
        &self.channels[0]
    }

    pub fn samples_f64(&self) -> Vec<f64> {
        self.samples().iter().map(|&s| s as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn chunk_id(&self) -> &ChunkId {
        &self.chunk_id
    }

    pub fn with_chunk_id(mut self, chunk_id: ChunkId) -> Self {
        self.chunk_id = chunk_id;
        self
    }

    /// Maps every channel through `f`, keeping metadata.
    pub(crate) fn map_channels<F>(&self, mut f: F) -> AudioClip
    where
        F: FnMut(&[f32]) -> Vec<f32>,
    {
        AudioClip {
            channels: self.channels.iter().map(|c| f(c)).collect(),
            sample_rate: self.sample_rate,
            chunk_id: self.chunk_id.clone(),
        }
    }

    /// Multiplies every sample by `gain` (no clamping).
    pub fn scaled(&self, gain: f32) -> AudioClip {
        self.map_channels(|c| c.iter().map(|&s| s * gain).collect())
    }
}

/// Root-mean-square of a signal; zero for an empty slice.
pub fn rms(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let sum: f64 = samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
    (sum / samples.len() as f64).sqrt()
}
