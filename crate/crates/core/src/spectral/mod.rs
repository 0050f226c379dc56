//! Short-time spectra, power spectral density and acoustic indices.

mod cicada;
mod indices;
mod stft;

use thiserror::Error;

pub use cicada::{cicada_band_estimate, cicada_band_estimate_with, CicadaBandConfig};
pub use indices::{
    all_band_features, band_features, histogram_mode, normalized_entropy, snr_index,
    snr_index_with, Band, BandRange, Feature, FeatureVector, IndexName, FEATURES_HEADER, SILENT_DB,
    SNR_NORM_DB,
};
pub(crate) use stft::{analyse, mono_samples};
pub use stft::{
    frame_count, hamming, psd_from_spectrogram, stft, welch_psd, Spectrogram, WindowKind, HOP,
    WINDOW_SIZE,
};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("clip too short: {samples} samples, need {needed}")]
    TooShort { samples: usize, needed: usize },
    #[error("expected a mono clip, got {0} channels")]
    NotMono(usize),
    #[error("band {band} lies outside 0..{nyquist_hz} Hz")]
    BandOutOfRange { band: String, nyquist_hz: f64 },
    #[error("bad spectrogram: {0}")]
    Shape(String),
}
