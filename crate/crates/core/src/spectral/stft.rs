use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::SpectralError;
use crate::audio::AudioClip;

pub const WINDOW_SIZE: usize = 256;
pub const HOP: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hamming,
}

/// Symmetric Hamming window of length `n`.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Number of full frames that fit in `n` samples.
pub fn frame_count(n: usize, window: usize, hop: usize) -> usize {
    if n < window {
        0
    } else {
        1 + (n - window) / hop
    }
}

/// Magnitude spectrogram, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Vec<f64>,
    frames: usize,
    bins: usize,
    sample_rate: u32,
    window_size: usize,
    hop: usize,
    window_kind: WindowKind,
}

impl Spectrogram {
    /// Builds a spectrogram from explicit magnitude rows (used for synthetic
    /// inputs in tests and tools).
    pub fn from_frames(
        frames: Vec<Vec<f64>>,
        sample_rate: u32,
        window_size: usize,
        hop: usize,
    ) -> Result<Spectrogram, SpectralError> {
        let bins = window_size / 2 + 1;
        if frames.iter().any(|f| f.len() != bins) {
            return Err(SpectralError::Shape(format!(
                "every frame needs {bins} bins"
            )));
        }
        if frames.iter().flatten().any(|&m| !(m >= 0.0)) {
            return Err(SpectralError::Shape(
                "magnitudes must be non-negative".into(),
            ));
        }
        Ok(Spectrogram {
            frames: frames.len(),
            data: frames.into_iter().flatten().collect(),
            bins,
            sample_rate,
            window_size,
            hop,
            window_kind: WindowKind::Hamming,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window_kind(&self) -> WindowKind {
        self.window_kind
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn magnitude(&self, t: usize, bin: usize) -> f64 {
        self.data[t * self.bins + bin]
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.window_size as f64
    }

    /// Per-bin factors turning `|X|^2` into one-sided power such that the
    /// sum over bins equals the frame's mean-square value.
    pub(crate) fn power_scales(&self) -> Vec<f64> {
        let energy: f64 = hamming(self.window_size).iter().map(|v| v * v).sum();
        let base = 1.0 / (self.window_size as f64 * energy);
        (0..self.bins)
            .map(|k| {
                if k == 0 || (self.window_size % 2 == 0 && k == self.bins - 1) {
                    base
                } else {
                    2.0 * base
                }
            })
            .collect()
    }
}

pub(crate) fn mono_samples(clip: &AudioClip) -> Result<Vec<f64>, SpectralError> {
    if clip.channel_count() != 1 {
        return Err(SpectralError::NotMono(clip.channel_count()));
    }
    Ok(clip.samples_f64())
}

/// Complex half-spectra of windowed frames at the given positions.
pub(crate) fn analyse(
    samples: &[f64],
    window: &[f64],
    hop: usize,
    frames: usize,
) -> Vec<Vec<Complex<f64>>> {
    let n = window.len();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    (0..frames)
        .map(|t| {
            let start = t * hop;
            for (i, b) in buf.iter_mut().enumerate() {
                let x = samples.get(start + i).copied().unwrap_or(0.0);
                *b = Complex::new(x * window[i], 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            buf[..n / 2 + 1].to_vec()
        })
        .collect()
}

/// Hamming STFT with window 256 and hop 128.
pub fn stft(clip: &AudioClip) -> Result<Spectrogram, SpectralError> {
    let samples = mono_samples(clip)?;
    if samples.len() < WINDOW_SIZE {
        return Err(SpectralError::TooShort {
            samples: samples.len(),
            needed: WINDOW_SIZE,
        });
    }
    let frames = frame_count(samples.len(), WINDOW_SIZE, HOP);
    let spectra = analyse(&samples, &hamming(WINDOW_SIZE), HOP, frames);
    Ok(Spectrogram {
        data: spectra.iter().flatten().map(|c| c.norm()).collect(),
        frames,
        bins: WINDOW_SIZE / 2 + 1,
        sample_rate: clip.sample_rate(),
        window_size: WINDOW_SIZE,
        hop: HOP,
        window_kind: WindowKind::Hamming,
    })
}

/// One-sided power per bin averaged over frames of the spectrogram.
pub fn psd_from_spectrogram(spec: &Spectrogram) -> Vec<f64> {
    let mut acc = vec![0.0; spec.bins()];
    for t in 0..spec.frames() {
        for (a, m) in acc.iter_mut().zip(spec.frame(t)) {
            *a += m * m;
        }
    }
    let frames = spec.frames().max(1) as f64;
    acc.iter()
        .zip(spec.power_scales())
        .map(|(a, s)| a / frames * s)
        .collect()
}

/// Welch power spectral density (Hamming 256, hop 128), 129 bins. Summing
/// the bins gives the signal's mean-square value.
pub fn welch_psd(clip: &AudioClip) -> Result<Vec<f64>, SpectralError> {
    Ok(psd_from_spectrogram(&stft(clip)?))
}
