use super::{BandRange, Spectrogram};

/// Thresholds of the sustained-band detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CicadaBandConfig {
    /// A bin is loud when its mean exceeds this multiple of the median bin mean.
    pub median_ratio: f64,
    /// Fraction of frames a loud bin must stay above the level.
    pub persistence: f64,
    pub min_width_hz: f64,
    pub min_hz: f64,
}

impl Default for CicadaBandConfig {
    fn default() -> Self {
        CicadaBandConfig {
            median_ratio: 2.0,
            persistence: 0.8,
            min_width_hz: 300.0,
            min_hz: 1000.0,
        }
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Finds frequency ranges holding sustained loud energy. Returned ranges are
/// sorted and disjoint.
pub fn cicada_band_estimate_with(spec: &Spectrogram, cfg: &CicadaBandConfig) -> Vec<BandRange> {
    let frames = spec.frames();
    if frames == 0 {
        return Vec::new();
    }
    let bins = spec.bins();
    let mut means = vec![0.0; bins];
    for t in 0..frames {
        for (m, v) in means.iter_mut().zip(spec.frame(t)) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= frames as f64;
    }
    let level = cfg.median_ratio * median(&means);
    if !(level > 0.0) {
        return Vec::new();
    }
    let marked: Vec<bool> = (0..bins)
        .map(|k| {
            means[k] > level && {
                let above = (0..frames)
                    .filter(|&t| spec.magnitude(t, k) > level)
                    .count();
                above as f64 >= cfg.persistence * frames as f64
            }
        })
        .collect();

    let bin_hz = spec.bin_hz();
    let nyquist = spec.sample_rate() as f64 / 2.0;
    let mut out = Vec::new();
    let mut k = 0;
    while k < bins {
        if !marked[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k + 1 < bins && marked[k + 1] {
            k += 1;
        }
        let lo = ((start as f64 - 0.5) * bin_hz).max(cfg.min_hz);
        let hi = ((k as f64 + 0.5) * bin_hz).min(nyquist);
        if hi - lo >= cfg.min_width_hz {
            out.push(BandRange::new(lo, hi));
        }
        k += 1;
    }
    out
}

/// [`cicada_band_estimate_with`] under the default thresholds.
pub fn cicada_band_estimate(spec: &Spectrogram) -> Vec<BandRange> {
    cicada_band_estimate_with(spec, &CicadaBandConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{AudioClip, ChunkId};
    use crate::spectral::stft;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use rustfft::{num_complex::Complex, FftPlanner};

    const RATE: u32 = 22050;

    /// White noise plus band noise in [lo, hi] whose RMS is `db` above the
    /// white noise RMS.
    fn noisy_band(seed: u64, lo: f64, hi: f64, db: f64) -> AudioClip {
        let n = 5 * RATE as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).unwrap();
        let sigma = 0.003;
        let mut spectrum = vec![Complex::new(0.0, 0.0); n];
        let bin = RATE as f64 / n as f64;
        for k in (lo / bin).ceil() as usize..=(hi / bin).floor() as usize {
            let c = Complex::new(unit.sample(&mut rng), unit.sample(&mut rng));
            spectrum[k] = c;
            spectrum[n - k] = c.conj();
        }
        FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
        let rms = (spectrum.iter().map(|c| c.re * c.re).sum::<f64>() / n as f64).sqrt();
        let g = if db.is_finite() {
            sigma * 10f64.powf(db / 20.0) / rms
        } else {
            0.0
        };
        let s = spectrum
            .iter()
            .map(|c| (g * c.re + sigma * unit.sample(&mut rng)) as f32)
            .collect();
        AudioClip::mono(s, RATE, ChunkId::root("c")).unwrap()
    }

    #[test]
    fn recovers_injected_band() {
        for seed in 0..5 {
            let spec = stft(&noisy_band(seed, 4000.0, 6000.0, 12.0)).unwrap();
            let bands = cicada_band_estimate(&spec);
            assert_eq!(bands.len(), 1, "seed {seed}: {bands:?}");
            assert!((3700.0..=4300.0).contains(&bands[0].lo_hz));
            assert!((5700.0..=6300.0).contains(&bands[0].hi_hz));
        }
    }

    #[test]
    fn white_noise_has_no_band() {
        for seed in 0..20 {
            let spec = stft(&noisy_band(seed, 4000.0, 6000.0, f64::NEG_INFINITY)).unwrap();
            assert!(cicada_band_estimate(&spec).is_empty(), "seed {seed}");
        }
    }

    #[test]
    fn zero_spectrogram_has_no_band() {
        let spec = Spectrogram::from_frames(vec![vec![0.0; 129]; 30], RATE, 256, 128).unwrap();
        assert!(cicada_band_estimate(&spec).is_empty());
    }

    #[test]
    fn two_bands_are_sorted_and_disjoint() {
        let mut rows = vec![vec![1.0; 129]; 40];
        for row in &mut rows {
            for k in 30..40 {
                row[k] = 10.0;
            }
            for k in 80..90 {
                row[k] = 10.0;
            }
        }
        let spec = Spectrogram::from_frames(rows, RATE, 256, 128).unwrap();
        let bands = cicada_band_estimate(&spec);
        assert_eq!(bands.len(), 2);
        assert!(bands[0].hi_hz < bands[1].lo_hz);
    }

    #[test]
    fn narrow_and_low_ranges_are_discarded() {
        let mut rows = vec![vec![1.0; 129]; 40];
        for row in &mut rows {
            row[60] = 10.0;
            row[61] = 10.0;
            for k in 2..8 {
                row[k] = 10.0;
            }
        }
        let spec = Spectrogram::from_frames(rows, RATE, 256, 128).unwrap();
        // 2 bins (172 Hz) is too narrow; bins 2..8 end below 1 kHz.
        assert!(cicada_band_estimate(&spec).is_empty());
    }
}
