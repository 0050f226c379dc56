//! Preprocessing of high-volume bird acoustic recordings.
//!
//! The crate is organised the same way audio flows through the system:
//!
//! * [`audio`]: WAV I/O, splitting, mono conversion, resampling, filters and
//!   a labelled synthetic corpus generator.
//! * [`spectral`]: STFT, Welch PSD, acoustic indices and cicada band estimation.
//! * [`enhance`]: MMSE short-time spectral amplitude noise reduction.
//! * [`detect`]: decision-tree rain/cicada classifiers and the silence test.
//! * [`pipeline`]: the ordered preprocessing pipeline and the sequential runner.
//! * [`cluster`]: the master/worker wire protocol, work tracker and runtimes.

pub mod audio;
pub mod cluster;
pub mod detect;
pub mod enhance;
pub mod pipeline;
pub mod spectral;

pub use audio::{AudioClip, AudioError, ChunkId};
pub use cluster::{ClusterConfig, RunReport};
pub use detect::{DecisionTree, SilenceConfig};
pub use enhance::EnhanceConfig;
pub use pipeline::{ChunkOutcome, Manifest, PipelineConfig};
pub use spectral::{Band, FeatureVector, IndexName, Spectrogram};
