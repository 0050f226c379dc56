//! Stationary noise reduction with the MMSE short-time spectral amplitude
//! estimator.

pub(crate) mod bessel;

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio::AudioClip;
use crate::spectral::{analyse, hamming, mono_samples, SpectralError, Spectrogram};

const GAMMA_FLOOR: f64 = 1e-10;
const NOISE_FLOOR: f64 = 1e-12;
/// Above this `v` the gain uses its large-argument expansion.
const ASYMPTOTIC_V: f64 = 700.0;
/// Bins whose a posteriori SNR is below this feed the noise estimate.
const NOISE_UPDATE_GAMMA: f64 = 2.0;
const NOISE_SMOOTHING: f64 = 0.98;

#[derive(Debug, Error)]
pub enum EnhanceError {
    #[error("clip too short: {samples} samples, need {needed}")]
    TooShort { samples: usize, needed: usize },
    #[error("spectrogram has {have} frames, need {need}")]
    TooFewFrames { have: usize, need: usize },
    #[error("invalid enhancement config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceConfig {
    /// Decision-directed smoothing of the a priori SNR.
    pub alpha: f64,
    pub gain_floor_db: f64,
    pub noise_init_frames: usize,
    pub window_size: usize,
    pub hop: usize,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        EnhanceConfig {
            alpha: 0.98,
            gain_floor_db: -25.0,
            noise_init_frames: 40,
            window_size: 256,
            hop: 128,
        }
    }
}

impl EnhanceConfig {
    pub fn validate(&self) -> Result<(), EnhanceError> {
        let bad = |m: &str| Err(EnhanceError::InvalidConfig(m.into()));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.gain_floor_db < 0.0) {
            return bad("gain_floor_db must be negative");
        }
        if self.noise_init_frames == 0 {
            return bad("noise_init_frames must be at least 1");
        }
        if self.window_size < 2 || self.hop * 2 != self.window_size {
            return bad("hop must be half the window size");
        }
        Ok(())
    }

    fn gain_floor(&self) -> f64 {
        10f64.powf(self.gain_floor_db / 20.0)
    }
}

/// MMSE amplitude gain for a priori SNR `xi` and a posteriori SNR `gamma`,
/// before clamping.
pub fn mmse_gain(xi: f64, gamma: f64) -> f64 {
    let v = xi * gamma / (1.0 + xi);
    if v > ASYMPTOTIC_V {
        return xi / (1.0 + xi) * (1.0 + 1.0 / (4.0 * v) + 1.0 / (32.0 * v * v));
    }
    let h = v / 2.0;
    (PI.sqrt() / 2.0) * (v.sqrt() / gamma) * ((1.0 + v) * bessel::i0e(h) + v * bessel::i1e(h))
}

/// Mean squared magnitude per bin over the first `n_frames` frames.
pub fn estimate_noise_psd(spec: &Spectrogram, n_frames: usize) -> Result<Vec<f64>, EnhanceError> {
    if n_frames == 0 || spec.frames() < n_frames {
        return Err(EnhanceError::TooFewFrames {
            have: spec.frames(),
            need: n_frames.max(1),
        });
    }
    let mut acc = vec![0.0; spec.bins()];
    for t in 0..n_frames {
        for (a, m) in acc.iter_mut().zip(spec.frame(t)) {
            *a += m * m;
        }
    }
    Ok(acc.into_iter().map(|a| a / n_frames as f64).collect())
}

/// Per-bin state carried from frame to frame: the noise estimate and the
/// previous frame's `G^2 * gamma`.
pub struct GainTracker {
    noise: Vec<f64>,
    prior: Vec<f64>,
    alpha: f64,
    floor: f64,
}

impl GainTracker {
    pub fn new(initial_noise: Vec<f64>, cfg: &EnhanceConfig) -> GainTracker {
        let bins = initial_noise.len();
        GainTracker {
            noise: initial_noise
                .into_iter()
                .map(|n| n.max(NOISE_FLOOR))
                .collect(),
            prior: vec![1.0; bins],
            alpha: cfg.alpha,
            floor: cfg.gain_floor(),
        }
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    /// Gains for one frame of squared magnitudes; advances the state.
    pub fn step(&mut self, power: &[f64]) -> Vec<f64> {
        power
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let gamma = (p / self.noise[k]).max(GAMMA_FLOOR);
                let xi = self.alpha * self.prior[k] + (1.0 - self.alpha) * (gamma - 1.0).max(0.0);
                let g = mmse_gain(xi, gamma).clamp(self.floor, 1.0);
                self.prior[k] = g * g * gamma;
                if gamma < NOISE_UPDATE_GAMMA {
                    self.noise[k] = (NOISE_SMOOTHING * self.noise[k] + (1.0 - NOISE_SMOOTHING) * p)
                        .max(NOISE_FLOOR);
                }
                g
            })
            .collect()
    }
}

/// Noise estimate left after tracking every frame of `spec`.
pub fn tracked_noise_psd(
    spec: &Spectrogram,
    cfg: &EnhanceConfig,
) -> Result<Vec<f64>, EnhanceError> {
    let init = estimate_noise_psd(spec, cfg.noise_init_frames.min(spec.frames()))?;
    let mut tracker = GainTracker::new(init, cfg);
    for t in 0..spec.frames() {
        let power: Vec<f64> = spec.frame(t).iter().map(|m| m * m).collect();
        tracker.step(&power);
    }
    Ok(tracker.noise().to_vec())
}

/// Analysis, per-frame gain, overlap-add synthesis normalised by the summed
/// window. The signal is zero-padded so the frames cover every sample.
fn filter_frames<F>(samples: &[f64], cfg: &EnhanceConfig, gains_for: F) -> Vec<f64>
where
    F: FnOnce(&[Vec<Complex<f64>>]) -> Vec<Vec<f64>>,
{
    let w = cfg.window_size;
    let hop = cfg.hop;
    let n = samples.len();
    let frames = 1 + (n - w).div_ceil(hop);
    let window = hamming(w);
    let spectra = analyse(samples, &window, hop, frames);
    let gains = gains_for(&spectra);
    let ifft = FftPlanner::new().plan_fft_inverse(w);
    let mut scratch = vec![Complex::new(0.0, 0.0); ifft.get_inplace_scratch_len()];

    let padded = (frames - 1) * hop + w;
    let mut acc = vec![0.0; padded];
    let mut wsum = vec![0.0; padded];
    let mut buf = vec![Complex::new(0.0, 0.0); w];
    for (t, (half, gains)) in spectra.iter().zip(&gains).enumerate() {
        for (k, (y, g)) in half.iter().zip(gains).enumerate() {
            buf[k] = y * *g;
            if k > 0 && k < w - k {
                buf[w - k] = buf[k].conj();
            }
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = t * hop;
        for i in 0..w {
            acc[start + i] += buf[i].re / w as f64;
            wsum[start + i] += window[i];
        }
    }
    acc.truncate(n);
    acc.iter().zip(&wsum).map(|(a, s)| a / s).collect()
}

/// Analysis and overlap-add synthesis with every gain at one. Returns the
/// input up to rounding; checks the framing that [`mmse_stsa`] relies on.
pub fn resynthesize(clip: &AudioClip, cfg: &EnhanceConfig) -> Result<AudioClip, EnhanceError> {
    cfg.validate()?;
    let samples = mono_samples(clip)?;
    if samples.len() < cfg.window_size {
        return Err(EnhanceError::TooShort {
            samples: samples.len(),
            needed: cfg.window_size,
        });
    }
    let out = filter_frames(&samples, cfg, |spectra| {
        vec![vec![1.0; cfg.window_size / 2 + 1]; spectra.len()]
    });
    Ok(AudioClip::from_f64(
        &out,
        clip.sample_rate(),
        clip.chunk_id().clone(),
    ))
}

/// Suppresses stationary background noise. Output has the input's length.
pub fn mmse_stsa(clip: &AudioClip, cfg: &EnhanceConfig) -> Result<AudioClip, EnhanceError> {
    cfg.validate()?;
    let samples = mono_samples(clip)?;
    if samples.len() < cfg.window_size {
        return Err(EnhanceError::TooShort {
            samples: samples.len(),
            needed: cfg.window_size,
        });
    }
    let out = filter_frames(&samples, cfg, |spectra| {
        let init_frames = cfg.noise_init_frames.min(spectra.len());
        let mut init = vec![0.0; spectra[0].len()];
        for s in &spectra[..init_frames] {
            for (a, y) in init.iter_mut().zip(s) {
                *a += y.norm_sqr() / init_frames as f64;
            }
        }
        let mut tracker = GainTracker::new(init, cfg);
        spectra
            .iter()
            .map(|half| {
                let power: Vec<f64> = half.iter().map(|y| y.norm_sqr()).collect();
                tracker.step(&power)
            })
            .collect()
    });
    Ok(AudioClip::from_f64(
        &out,
        clip.sample_rate(),
        clip.chunk_id().clone(),
    ))
}
