//! Butterworth high-pass and band-reject filters built from biquad sections.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;

use super::{AudioClip, AudioError};

/// Default prototype order of the band-reject design (4 biquad sections).
pub const BAND_REJECT_ORDER: usize = 4;

/// One second-order IIR section, normalised so `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// 2nd-order Butterworth high-pass via the bilinear transform with the
    /// cutoff pre-warped.
    pub fn butterworth_highpass(cutoff_hz: f64, sample_rate: f64) -> Biquad {
        let k = (PI * cutoff_hz / sample_rate).tan();
        let q = std::f64::consts::FRAC_1_SQRT_2;
        let norm = 1.0 / (1.0 + k / q + k * k);
        Biquad {
            b0: norm,
            b1: -2.0 * norm,
            b2: norm,
            a1: 2.0 * (k * k - 1.0) * norm,
            a2: (1.0 - k / q + k * k) * norm,
        }
    }

    /// Magnitude response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate;
        let z1 = Complex::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b0 + z1 * self.b1 + z2 * self.b2;
        let den = 1.0 + z1 * self.a1 + z2 * self.a2;
        (num / den).norm()
    }

    /// Runs the section over `x` in place (transposed direct form II, zero
    /// initial state).
    pub fn run(&self, x: &mut [f64]) {
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b0 * input + s1;
            s1 = self.b1 * input - self.a1 * y + s2;
            s2 = self.b2 * input - self.a2 * y;
            *v = y;
        }
    }
}

fn apply_cascade(clip: &AudioClip, sections: &[Biquad]) -> AudioClip {
    clip.map_channels(|c| {
        let mut x: Vec<f64> = c.iter().map(|&s| s as f64).collect();
        for s in sections {
            s.run(&mut x);
        }
        x.iter().map(|&v| v.clamp(-1.0, 1.0) as f32).collect()
    })
}

/// Attenuates content below `cutoff_hz` with a 2nd-order Butterworth high-pass.
pub fn highpass(clip: &AudioClip, cutoff_hz: f64) -> Result<AudioClip, AudioError> {
    let rate = clip.sample_rate() as f64;
    if !(cutoff_hz > 0.0 && cutoff_hz < rate / 2.0) {
        return Err(AudioError::InvalidCutoff {
            cutoff_hz,
            sample_rate: clip.sample_rate(),
        });
    }
    Ok(apply_cascade(
        clip,
        &[Biquad::butterworth_highpass(cutoff_hz, rate)],
    ))
}

/// Designs a Butterworth band-stop of prototype order `order` whose -3 dB
/// edges sit at `lo_hz` and `hi_hz`. Returns `order` biquad sections.
pub fn band_reject_sections(lo_hz: f64, hi_hz: f64, sample_rate: f64, order: usize) -> Vec<Biquad> {
    let fs2 = 2.0 * sample_rate;
    let w_lo = fs2 * (PI * lo_hz / sample_rate).tan();
    let w_hi = fs2 * (PI * hi_hz / sample_rate).tan();
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;
    // Notch zeros at +-j*w0 land on the unit circle at this angle.
    let theta0 = 2.0 * (w0_sq.sqrt() / fs2).atan();
    let zero_re = theta0.cos();

    // Analog band-stop poles: each prototype pole p yields the roots of
    // p*s^2 - bw*s + p*w0^2 = 0.
    let mut pole_pairs: Vec<(Complex<f64>, Complex<f64>)> = Vec::new();
    for k in 0..order {
        let angle = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex::from_polar(1.0, angle);
        if p.im < -1e-12 {
            continue;
        }
        let b_over_p = bw / p;
        let disc = (b_over_p * b_over_p - 4.0 * w0_sq).sqrt();
        let s1 = (b_over_p + disc) / 2.0;
        let s2 = (b_over_p - disc) / 2.0;
        if p.im.abs() <= 1e-12 {
            // Real prototype pole: s1 and s2 are a conjugate or real pair.
            pole_pairs.push((s1, s2));
        } else {
            pole_pairs.push((s1, s1.conj()));
            pole_pairs.push((s2, s2.conj()));
        }
    }

    pole_pairs
        .into_iter()
        .map(|(p1, p2)| {
            let z1 = (fs2 + p1) / (fs2 - p1);
            let z2 = (fs2 + p2) / (fs2 - p2);
            let a1 = -(z1 + z2).re;
            let a2 = (z1 * z2).re;
            let (b0, b1, b2) = (1.0, -2.0 * zero_re, 1.0);
            // Unit gain at DC.
            let g = (1.0 + a1 + a2) / (b0 + b1 + b2);
            Biquad {
                b0: b0 * g,
                b1: b1 * g,
                b2: b2 * g,
                a1,
                a2,
            }
        })
        .collect()
}

/// Removes the band `[lo_hz, hi_hz]` with a Butterworth band-stop cascade of
/// the given prototype order.
pub fn band_reject_order(
    clip: &AudioClip,
    lo_hz: f64,
    hi_hz: f64,
    order: usize,
) -> Result<AudioClip, AudioError> {
    let rate = clip.sample_rate() as f64;
    if !(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < rate / 2.0) || order == 0 {
        return Err(AudioError::InvalidBand {
            lo_hz,
            hi_hz,
            sample_rate: clip.sample_rate(),
        });
    }
    Ok(apply_cascade(
        clip,
        &band_reject_sections(lo_hz, hi_hz, rate, order),
    ))
}

/// [`band_reject_order`] with the default order.
pub fn band_reject(clip: &AudioClip, lo_hz: f64, hi_hz: f64) -> Result<AudioClip, AudioError> {
    band_reject_order(clip, lo_hz, hi_hz, BAND_REJECT_ORDER)
}
