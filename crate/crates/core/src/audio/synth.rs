//! Labelled synthetic field-recording corpus.
//!
//! Recordings are built from fixed-length segments, each one of: bird calls
//! (sparse FM sweeps), heavy rain (broadband wash plus drop transients), a
//! cicada chorus (sustained band-limited noise) or silence (noise floor
//! only). Every segment carries the noise floor. Output is 44.1 kHz stereo.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{write_wav, AudioClip, AudioError, ChunkId};

pub const CORPUS_RATE: u32 = 44_100;
pub const LABELS_FILE: &str = "labels.csv";
pub const CICADA_BANDS_FILE: &str = "cicada_bands.csv";

/// Level of call peaks over the noise floor, dB.
const CALL_LEVEL_DB: (f64, f64) = (24.0, 34.0);
const RAIN_LEVEL_DB: f64 = 15.0;
const RAIN_DROP_LEVEL_DB: (f64, f64) = (25.0, 35.0);
const RAIN_DROPS_PER_S: f64 = 15.0;
const CICADA_LEVEL_DB: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SegmentLabel {
    Chirp,
    Rain,
    Cicada,
    Silence,
}

impl SegmentLabel {
    pub const ALL: [SegmentLabel; 4] = [
        SegmentLabel::Chirp,
        SegmentLabel::Rain,
        SegmentLabel::Cicada,
        SegmentLabel::Silence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SegmentLabel::Chirp => "chirp",
            SegmentLabel::Rain => "rain",
            SegmentLabel::Cicada => "cicada",
            SegmentLabel::Silence => "silence",
        }
    }
}

impl fmt::Display for SegmentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SegmentLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SegmentLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown segment label {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub total_minutes: f64,
    /// Fractions of chirp, rain, cicada and silence segments.
    pub mix: [f64; 4],
    pub seed: u64,
    /// Noise floor RMS in dB relative to full scale.
    pub noise_floor_db: f64,
    /// Length of each written recording.
    pub file_minutes: f64,
    pub segment_s: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            total_minutes: 1.0,
            mix: [0.25; 4],
            seed: 0,
            noise_floor_db: -50.0,
            file_minutes: 2.0,
            segment_s: 15.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), AudioError> {
        let bad = |m: &str| Err(AudioError::InvalidSpec(m.to_string()));
        if !(self.total_minutes > 0.0) {
            return bad("total_minutes must be positive");
        }
        if self.mix.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
            return bad("mix fractions must lie in [0, 1]");
        }
        if (self.mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("mix fractions must sum to 1");
        }
        if !(self.segment_s >= 1.0) {
            return bad("segment_s must be at least 1 s");
        }
        if !(self.file_minutes * 60.0 >= self.segment_s) {
            return bad("file_minutes must hold at least one segment");
        }
        if !(self.noise_floor_db < 0.0) {
            return bad("noise_floor_db must be below full scale");
        }
        Ok(())
    }

    pub fn segment_count(&self) -> usize {
        ((self.total_minutes * 60.0 / self.segment_s).round() as usize).max(1)
    }

    /// Label counts by largest remainder so they always add up.
    fn label_counts(&self) -> [usize; 4] {
        let total = self.segment_count();
        let exact: Vec<f64> = self.mix.iter().map(|f| f * total as f64).collect();
        let mut counts: [usize; 4] = [0; 4];
        for (c, e) in counts.iter_mut().zip(&exact) {
            *c = e.floor() as usize;
        }
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        let mut missing = total - counts.iter().sum::<usize>();
        for i in order {
            if missing == 0 {
                break;
            }
            if self.mix[i] > 0.0 {
                counts[i] += 1;
                missing -= 1;
            }
        }
        counts
    }
}

/// One labelled segment of the generated corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub file: String,
    pub offset_s: f64,
    pub duration_s: f64,
    pub label: SegmentLabel,
    /// Injected band for cicada segments.
    pub band_hz: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusManifest {
    pub segments: Vec<Segment>,
}

impl CorpusManifest {
    /// Ground-truth label of the segment covering `offset_s` in `source`
    /// (file stem or file name).
    pub fn label_at(&self, source: &str, offset_s: f64) -> Option<&Segment> {
        self.segments.iter().find(|s| {
            let stem = s.file.strip_suffix(".wav").unwrap_or(&s.file);
            (stem == source || s.file == source)
                && offset_s + 1e-6 >= s.offset_s
                && offset_s < s.offset_s + s.duration_s - 1e-6
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), AudioError> {
        let mut labels = String::from("file,offset_s,duration_s,label\n");
        let mut bands = String::from("file,offset_s,lo_hz,hi_hz\n");
        for s in &self.segments {
            labels.push_str(&format!(
                "{},{},{},{}\n",
                s.file, s.offset_s, s.duration_s, s.label
            ));
            if let Some((lo, hi)) = s.band_hz {
                bands.push_str(&format!("{},{},{:.1},{:.1}\n", s.file, s.offset_s, lo, hi));
            }
        }
        let lp = dir.join(LABELS_FILE);
        fs::write(&lp, labels).map_err(|e| AudioError::io(lp, e))?;
        let bp = dir.join(CICADA_BANDS_FILE);
        fs::write(&bp, bands).map_err(|e| AudioError::io(bp, e))
    }

    /// Reads `labels.csv` (and `cicada_bands.csv` when present) from `dir`.
    pub fn read(dir: &Path) -> Result<CorpusManifest, AudioError> {
        let lp = dir.join(LABELS_FILE);
        let text = fs::read_to_string(&lp).map_err(|e| AudioError::io(&lp, e))?;
        let bad = |line: &str| AudioError::InvalidSpec(format!("bad label row {line:?}"));
        let mut segments = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(line));
            }
            segments.push(Segment {
                file: f[0].to_string(),
                offset_s: f[1].parse().map_err(|_| bad(line))?,
                duration_s: f[2].parse().map_err(|_| bad(line))?,
                label: f[3].parse().map_err(|_| bad(line))?,
                band_hz: None,
            });
        }
        let bp = dir.join(CICADA_BANDS_FILE);
        if let Ok(text) = fs::read_to_string(&bp) {
            for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 4 {
                    return Err(bad(line));
                }
                let offset: f64 = f[1].parse().map_err(|_| bad(line))?;
                let lo: f64 = f[2].parse().map_err(|_| bad(line))?;
                let hi: f64 = f[3].parse().map_err(|_| bad(line))?;
                if let Some(seg) = segments
                    .iter_mut()
                    .find(|s| s.file == f[0] && (s.offset_s - offset).abs() < 1e-6)
                {
                    seg.band_hz = Some((lo, hi));
                }
            }
        }
        Ok(CorpusManifest { segments })
    }
}

fn segment_rng(seed: u64, index: usize) -> ChaCha8Rng {
    // splitmix64 step to decorrelate neighbouring segment streams
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

fn db_to_amp(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

fn add_calls(signal: &mut [f64], floor: f64, rng: &mut ChaCha8Rng) {
    let rate = CORPUS_RATE as f64;
    let ramp = (0.01 * rate) as usize;
    let mut t = rng.random_range(0.0..0.6);
    let total_s = signal.len() as f64 / rate;
    while t < total_s {
        let dur = rng.random_range(0.1..0.3);
        let f0 = rng.random_range(2000.0..8000.0);
        let f1 = rng.random_range(2000.0..8000.0);
        let amp =
            floor * db_to_amp(rng.random_range(CALL_LEVEL_DB.0..CALL_LEVEL_DB.1)) * 2f64.sqrt();
        let start = (t * rate) as usize;
        let len = ((dur * rate) as usize).min(signal.len().saturating_sub(start));
        let mut phase = 0.0;
        for i in 0..len {
            let frac = i as f64 / len as f64;
            let freq = f0 + (f1 - f0) * frac;
            phase += 2.0 * PI * freq / rate;
            let env = if i < ramp {
                0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
            } else if len - i < ramp {
                0.5 - 0.5 * (PI * (len - i) as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            signal[start + i] += amp * env * phase.sin();
        }
        t += dur + rng.random_range(0.3..1.0);
    }
}

fn add_rain(signal: &mut [f64], floor: f64, rng: &mut ChaCha8Rng) {
    let rate = CORPUS_RATE as f64;
    let wash = Normal::new(0.0, floor * db_to_amp(RAIN_LEVEL_DB)).unwrap();
    for s in signal.iter_mut() {
        *s += wash.sample(rng);
    }
    let unit = Normal::new(0.0, 1.0).unwrap();
    let tau = 0.003 * rate;
    let drop_len = (5.0 * tau) as usize;
    let p = RAIN_DROPS_PER_S / rate;
    let mut i = 0;
    while i < signal.len() {
        if rng.random::<f64>() < p {
            let amp =
                floor * db_to_amp(rng.random_range(RAIN_DROP_LEVEL_DB.0..RAIN_DROP_LEVEL_DB.1));
            for k in 0..drop_len.min(signal.len() - i) {
                signal[i + k] += amp * unit.sample(rng) * (-(k as f64) / tau).exp();
            }
        }
        i += 1;
    }
}

/// Adds band-limited noise synthesised in the frequency domain; returns the
/// band edges in Hz.
fn add_cicada(signal: &mut [f64], floor: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let n = signal.len();
    let width = rng.random_range(1500.0..2500.0);
    let lo = rng.random_range(3000.0..(9000.0 - width));
    let hi = lo + width;
    let unit = Normal::new(0.0, 1.0).unwrap();
    let bin_hz = CORPUS_RATE as f64 / n as f64;
    let k_lo = (lo / bin_hz).ceil() as usize;
    let k_hi = (hi / bin_hz).floor() as usize;
    let mut spectrum = vec![Complex::new(0.0, 0.0); n];
    for k in k_lo..=k_hi {
        let c = Complex::new(unit.sample(rng), unit.sample(rng));
        spectrum[k] = c;
        spectrum[n - k] = c.conj();
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    let band: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    let rms = (band.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let gain = if rms > 0.0 {
        floor * db_to_amp(CICADA_LEVEL_DB) / rms
    } else {
        0.0
    };
    for (s, b) in signal.iter_mut().zip(&band) {
        *s += gain * b;
    }
    (lo, hi)
}

/// Generates one segment's stereo samples. Returns the channels and, for
/// cicada segments, the injected band.
pub fn synth_segment(
    label: SegmentLabel,
    samples: usize,
    noise_floor_db: f64,
    rng: &mut ChaCha8Rng,
) -> ([Vec<f32>; 2], Option<(f64, f64)>) {
    let floor = db_to_amp(noise_floor_db);
    let mut common = vec![0.0f64; samples];
    let band = match label {
        SegmentLabel::Chirp => {
            add_calls(&mut common, floor, rng);
            None
        }
        SegmentLabel::Rain => {
            add_rain(&mut common, floor, rng);
            None
        }
        SegmentLabel::Cicada => Some(add_cicada(&mut common, floor, rng)),
        SegmentLabel::Silence => None,
    };
    let noise = Normal::new(0.0, floor).unwrap();
    let make = |rng: &mut ChaCha8Rng| -> Vec<f32> {
        common
            .iter()
            .map(|&c| (c + noise.sample(rng)).clamp(-1.0, 1.0) as f32)
            .collect()
    };
    let left = make(rng);
    let right = make(rng);
    ([left, right], band)
}

/// Writes the corpus WAV files and ground-truth label files into `out_dir`.
/// Equal specs produce byte-identical output.
pub fn gen_corpus(spec: &SynthSpec, out_dir: &Path) -> Result<CorpusManifest, AudioError> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| AudioError::io(out_dir, e))?;

    let counts = spec.label_counts();
    let mut labels: Vec<SegmentLabel> = SegmentLabel::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&l, c)| std::iter::repeat_n(l, c))
        .collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));

    let seg_samples = (spec.segment_s * CORPUS_RATE as f64).round() as usize;
    let per_file = ((spec.file_minutes * 60.0 / spec.segment_s).floor() as usize).max(1);
    let mut manifest = CorpusManifest::default();

    for (file_idx, file_labels) in labels.chunks(per_file).enumerate() {
        let name = format!("rec_{file_idx:03}.wav");
        let mut channels = [
            Vec::with_capacity(seg_samples * file_labels.len()),
            Vec::with_capacity(seg_samples * file_labels.len()),
        ];
        for (j, &label) in file_labels.iter().enumerate() {
            let global = file_idx * per_file + j;
            let mut rng = segment_rng(spec.seed, global);
            let ([l, r], band) = synth_segment(label, seg_samples, spec.noise_floor_db, &mut rng);
            channels[0].extend(l);
            channels[1].extend(r);
            manifest.segments.push(Segment {
                file: name.clone(),
                offset_s: j as f64 * spec.segment_s,
                duration_s: spec.segment_s,
                label,
                band_hz: band,
            });
        }
        let [l, r] = channels;
        let clip = AudioClip::new(
            vec![l, r],
            CORPUS_RATE,
            ChunkId::root(name.trim_end_matches(".wav")),
        )?;
        let path: PathBuf = out_dir.join(&name);
        write_wav(&clip, &path)?;
    }
    manifest.write(out_dir)?;
    Ok(manifest)
}
