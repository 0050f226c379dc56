use super::DetectError;
use crate::audio::AudioClip;
use crate::spectral::{snr_index_with, SNR_NORM_DB};

/// Allowed relative deviation of a clip's length from the configured length.
const LENGTH_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct SilenceConfig {
    /// Clips whose SNR index falls below this are silent.
    pub snr_threshold: f64,
    pub chunk_length_s: f64,
    /// dB range mapped onto the [0, 1] SNR index.
    pub snr_norm_db: f64,
}

impl Default for SilenceConfig {
    fn default() -> Self {
        SilenceConfig {
            snr_threshold: 0.2,
            chunk_length_s: 5.0,
            snr_norm_db: SNR_NORM_DB,
        }
    }
}

impl SilenceConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.snr_threshold > 0.0 && self.snr_threshold < 1.0) {
            return Err(DetectError::InvalidConfig(
                "snr_threshold must lie in (0, 1)".into(),
            ));
        }
        if !(self.chunk_length_s > 0.0) {
            return Err(DetectError::InvalidConfig(
                "chunk_length_s must be positive".into(),
            ));
        }
        if !(self.snr_norm_db > 0.0) {
            return Err(DetectError::InvalidConfig(
                "snr_norm_db must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// True when the clip's SNR index is below the threshold.
pub fn detect_silence(clip: &AudioClip, cfg: &SilenceConfig) -> Result<bool, DetectError> {
    cfg.validate()?;
    let d = clip.duration_s();
    if (d - cfg.chunk_length_s).abs() > LENGTH_TOLERANCE * cfg.chunk_length_s {
        return Err(DetectError::WrongLength {
            expected_s: cfg.chunk_length_s,
            actual_s: d,
        });
    }
    Ok(snr_index_with(clip, cfg.snr_norm_db)? < cfg.snr_threshold)
}
