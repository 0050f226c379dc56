//! Acoustic indices over frequency bands and the silence SNR index.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::stft::{frame_count, mono_samples, HOP, WINDOW_SIZE};
use super::{SpectralError, Spectrogram};
use crate::audio::AudioClip;

/// dB value reported for a band with no energy at all.
pub const SILENT_DB: f64 = -200.0;
/// Histogram resolution of the modal background estimator.
pub const HISTOGRAM_BINS: usize = 100;
/// Dynamic range mapped onto the [0, 1] SNR index.
pub const SNR_NORM_DB: f64 = 60.0;
/// Header of the per-chunk feature dump, one row per (band, index).
pub const FEATURES_HEADER: &str = "chunk_id,band,index,value";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandRange {
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl BandRange {
    pub fn new(lo_hz: f64, hi_hz: f64) -> BandRange {
        BandRange { lo_hz, hi_hz }
    }

    pub fn width(&self) -> f64 {
        self.hi_hz - self.lo_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Band {
    B1,
    B2,
    B3,
    B4,
    B5,
    Full,
}

impl Band {
    pub const ALL: [Band; 6] = [Band::B1, Band::B2, Band::B3, Band::B4, Band::B5, Band::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Band::B1 => "B1",
            Band::B2 => "B2",
            Band::B3 => "B3",
            Band::B4 => "B4",
            Band::B5 => "B5",
            Band::Full => "full",
        }
    }

    /// Frequency range of the band for a signal with the given Nyquist.
    pub fn range(self, nyquist_hz: f64) -> BandRange {
        let khz = |lo: f64, hi: f64| BandRange::new(lo * 1000.0, hi * 1000.0);
        match self {
            Band::B1 => khz(1.0, 3.0),
            Band::B2 => khz(3.0, 5.0),
            Band::B3 => khz(5.0, 7.0),
            Band::B4 => khz(7.0, 9.0),
            Band::B5 => khz(9.0, 11.0),
            Band::Full => BandRange::new(0.0, nyquist_hz),
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Band {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Band::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| format!("unknown band {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IndexName {
    SpectralEntropy,
    TemporalEntropy,
    Aci,
    BackgroundNoiseDb,
    PsdMean,
    SpectralSnrDb,
}

impl IndexName {
    pub const ALL: [IndexName; 6] = [
        IndexName::SpectralEntropy,
        IndexName::TemporalEntropy,
        IndexName::Aci,
        IndexName::BackgroundNoiseDb,
        IndexName::PsdMean,
        IndexName::SpectralSnrDb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IndexName::SpectralEntropy => "spectral_entropy",
            IndexName::TemporalEntropy => "temporal_entropy",
            IndexName::Aci => "aci",
            IndexName::BackgroundNoiseDb => "background_noise_db",
            IndexName::PsdMean => "psd_mean",
            IndexName::SpectralSnrDb => "spectral_snr_db",
        }
    }
}

impl fmt::Display for IndexName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IndexName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IndexName::ALL
            .into_iter()
            .find(|i| i.as_str() == s)
            .ok_or_else(|| format!("unknown index {s:?}"))
    }
}

/// A classifier input: one value per (index, band) pair.
pub type Feature = (IndexName, Band);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    values: BTreeMap<Feature, f64>,
}

impl FeatureVector {
    pub fn new() -> FeatureVector {
        FeatureVector::default()
    }

    pub fn insert(&mut self, index: IndexName, band: Band, value: f64) {
        self.values.insert((index, band), value);
    }

    pub fn get(&self, index: IndexName, band: Band) -> Option<f64> {
        self.values.get(&(index, band)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Feature, f64)> + '_ {
        self.values.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rows of the `chunk_id,band,index,value` dump, without header.
    pub fn csv_rows(&self, chunk_id: &str) -> String {
        let mut out = String::new();
        for ((index, band), value) in self.iter() {
            out.push_str(&format!("{chunk_id},{band},{index},{value}\n"));
        }
        out
    }
}

/// Shannon entropy of `weights` normalised by the log of their count.
pub fn normalized_entropy(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if weights.len() < 2 || !(total > 0.0) {
        return 0.0;
    }
    let h: f64 = weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let p = w / total;
            -p * p.ln()
        })
        .sum();
    (h / (weights.len() as f64).ln()).clamp(0.0, 1.0)
}

/// Centre of the most populated bin of a 100-bin histogram spanning the
/// values' range. Lowest bin wins ties.
pub fn histogram_mode(values: &[f64]) -> Option<f64> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return None;
    }
    let span = max - min;
    if !(span > 0.0) {
        return Some(min);
    }
    let mut counts = [0usize; HISTOGRAM_BINS];
    for &v in values {
        let i = (((v - min) / span) * HISTOGRAM_BINS as f64) as usize;
        counts[i.min(HISTOGRAM_BINS - 1)] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    Some(min + (best as f64 + 0.5) * span / HISTOGRAM_BINS as f64)
}

fn to_db(rms: f64) -> f64 {
    20.0 * rms.log10()
}

/// Background level and peak-over-background of an RMS envelope, in dB.
/// Frames with zero energy are ignored.
fn envelope_levels(rms: &[f64]) -> (f64, f64) {
    let db: Vec<f64> = rms
        .iter()
        .filter(|&&r| r > 0.0)
        .map(|&r| to_db(r))
        .collect();
    match histogram_mode(&db) {
        None => (SILENT_DB, 0.0),
        Some(mode) => {
            let peak = db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (mode, peak - mode)
        }
    }
}

fn band_bins(spec: &Spectrogram, range: BandRange) -> Vec<usize> {
    let nyquist = spec.sample_rate() as f64 / 2.0;
    let bin_hz = spec.bin_hz();
    (0..spec.bins())
        .filter(|&k| {
            let f = k as f64 * bin_hz;
            f >= range.lo_hz && (f < range.hi_hz || (range.hi_hz >= nyquist && f <= nyquist))
        })
        .collect()
}

/// Computes every index for each requested band.
pub fn band_features(spec: &Spectrogram, bands: &[Band]) -> Result<FeatureVector, SpectralError> {
    let nyquist = spec.sample_rate() as f64 / 2.0;
    let scales = spec.power_scales();
    let mut fv = FeatureVector::new();
    for &band in bands {
        let range = band.range(nyquist);
        let bins = band_bins(spec, range);
        if range.lo_hz >= nyquist || bins.is_empty() {
            return Err(SpectralError::BandOutOfRange {
                band: band.to_string(),
                nyquist_hz: nyquist,
            });
        }
        let frames = spec.frames();

        let mut mean_mag = vec![0.0; bins.len()];
        let mut power_sum = vec![0.0; bins.len()];
        let mut frame_rms = Vec::with_capacity(frames);
        for t in 0..frames {
            let row = spec.frame(t);
            let mut p = 0.0;
            for (j, &k) in bins.iter().enumerate() {
                let m = row[k];
                mean_mag[j] += m;
                power_sum[j] += m * m;
                p += m * m * scales[k];
            }
            frame_rms.push(p.sqrt());
        }

        let mut aci = 0.0;
        for &k in &bins {
            let total: f64 = (0..frames).map(|t| spec.magnitude(t, k)).sum();
            if total > 0.0 {
                let diff: f64 = (1..frames)
                    .map(|t| (spec.magnitude(t, k) - spec.magnitude(t - 1, k)).abs())
                    .sum();
                aci += diff / total;
            }
        }

        let psd_mean = bins
            .iter()
            .zip(&power_sum)
            .map(|(&k, p)| p / frames.max(1) as f64 * scales[k])
            .sum::<f64>()
            / bins.len() as f64;
        let (background, snr) = envelope_levels(&frame_rms);

        fv.insert(
            IndexName::SpectralEntropy,
            band,
            normalized_entropy(&mean_mag),
        );
        fv.insert(
            IndexName::TemporalEntropy,
            band,
            normalized_entropy(&frame_rms),
        );
        fv.insert(IndexName::Aci, band, aci);
        fv.insert(IndexName::BackgroundNoiseDb, band, background);
        fv.insert(IndexName::PsdMean, band, psd_mean);
        fv.insert(IndexName::SpectralSnrDb, band, snr);
    }
    Ok(fv)
}

/// [`band_features`] over B1..B5 and the full range.
pub fn all_band_features(spec: &Spectrogram) -> Result<FeatureVector, SpectralError> {
    band_features(spec, &Band::ALL)
}

/// Peak-over-background level of the waveform's frame RMS envelope mapped
/// onto [0, 1] with `norm_db` as full scale.
pub fn snr_index_with(clip: &AudioClip, norm_db: f64) -> Result<f64, SpectralError> {
    let samples = mono_samples(clip)?;
    let rate = clip.sample_rate() as usize;
    if samples.len() < rate {
        return Err(SpectralError::TooShort {
            samples: samples.len(),
            needed: rate,
        });
    }
    let frames = frame_count(samples.len(), WINDOW_SIZE, HOP);
    let rms: Vec<f64> = (0..frames)
        .map(|t| {
            let f = &samples[t * HOP..t * HOP + WINDOW_SIZE];
            (f.iter().map(|x| x * x).sum::<f64>() / WINDOW_SIZE as f64).sqrt()
        })
        .collect();
    let (_, snr_db) = envelope_levels(&rms);
    Ok((snr_db / norm_db).clamp(0.0, 1.0))
}

/// [`snr_index_with`] at the default 60 dB normalisation.
pub fn snr_index(clip: &AudioClip) -> Result<f64, SpectralError> {
    snr_index_with(clip, SNR_NORM_DB)
}
