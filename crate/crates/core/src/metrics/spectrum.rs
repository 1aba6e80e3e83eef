use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::MetricError;

/// In-place iterative radix-2 decimation-in-time FFT. The inverse transform
/// is scaled by `1/n`.
pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) -> Result<(), MetricError> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(MetricError::NotPowerOfTwo { len: n });
    }
    let bits = n.trailing_zeros();
    if bits > 0 {
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                buf.swap(i, j);
            }
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let step = Complex64::from_polar(1.0, sign * 2.0 * PI / len as f64);
        for start in (0..n).step_by(len) {
            let mut tw = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let a = buf[start + k];
                let b = buf[start + k + len / 2] * tw;
                buf[start + k] = a + b;
                buf[start + k + len / 2] = a - b;
                tw *= step;
            }
        }
        len <<= 1;
    }
    if inverse {
        let scale = 1.0 / n as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(())
}

pub fn fft(x: &[Complex64], inverse: bool) -> Result<Vec<Complex64>, MetricError> {
    let mut buf = x.to_vec();
    fft_in_place(&mut buf, inverse)?;
    Ok(buf)
}

/// Forward FFT of a real signal zero-padded to `n` points.
pub fn rfft_padded(x: &[f64], n: usize) -> Result<Vec<Complex64>, MetricError> {
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (b, &v) in buf.iter_mut().zip(x) {
        b.re = v;
    }
    fft_in_place(&mut buf, false)?;
    Ok(buf)
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

impl Psd {
    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        }
    }

    /// `Σ power · Δf`, the mean-square value of the signal.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.bin_width()
    }

    /// Power in bins whose centre lies in `[lo, hi]` Hz.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        self.freqs
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| p)
            .sum::<f64>()
            * self.bin_width()
    }

    pub fn peak_frequency(&self) -> f64 {
        let mut best = 0;
        for (i, &p) in self.power.iter().enumerate() {
            if p > self.power[best] {
                best = i;
            }
        }
        self.freqs[best]
    }
}

/// Welch estimator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdParams {
    /// Segment length; `None` picks `min(256, largest power of two ≤ T)`.
    pub seg_len: Option<usize>,
    pub overlap: f64,
}

impl Default for PsdParams {
    fn default() -> Self {
        Self {
            seg_len: None,
            overlap: 0.5,
        }
    }
}

impl PsdParams {
    pub fn resolve_seg_len(&self, t: usize) -> usize {
        self.seg_len.unwrap_or_else(|| {
            let floor_pow2 = if t == 0 { 1 } else { 1usize << (usize::BITS - 1 - t.leading_zeros()) };
            floor_pow2.min(256)
        })
    }
}

/// Welch PSD: periodic-Hann windowed segments with the given overlap, averaged
/// one-sided periodograms, density scaling `|X|²/(fs·Σw²)`.
pub fn psd_welch(x: &[f64], fs: f64, seg_len: usize, overlap: f64) -> Result<Psd, MetricError> {
    if seg_len == 0 || !seg_len.is_power_of_two() {
        return Err(MetricError::NotPowerOfTwo { len: seg_len });
    }
    if seg_len > x.len() {
        return Err(MetricError::SegmentTooLong {
            seg_len,
            len: x.len(),
        });
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(MetricError::InvalidOverlap { overlap });
    }
    let window: Vec<f64> = (0..seg_len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg_len as f64).cos())
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let step = ((seg_len as f64 * (1.0 - overlap)).round() as usize).max(1);
    let segments = (x.len() - seg_len) / step + 1;
    let bins = seg_len / 2 + 1;
    let mut power = vec![0.0f64; bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); seg_len];
    for s in 0..segments {
        let chunk = &x[s * step..s * step + seg_len];
        for ((b, &v), &w) in buf.iter_mut().zip(chunk).zip(&window) {
            *b = Complex64::new(v * w, 0.0);
        }
        fft_in_place(&mut buf, false)?;
        for (p, c) in power.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
    }
    let scale = 1.0 / (fs * win_power * segments as f64);
    for (i, p) in power.iter_mut().enumerate() {
        *p *= scale;
        if i != 0 && !(seg_len.is_multiple_of(2) && i == seg_len / 2) {
            *p *= 2.0;
        }
    }
    let freqs = (0..bins).map(|i| i as f64 * fs / seg_len as f64).collect();
    Ok(Psd { freqs, power })
}

/// [`psd_welch`] with segment length resolved from `params`.
pub fn psd_with(x: &[f64], fs: f64, params: &PsdParams) -> Result<Psd, MetricError> {
    psd_welch(x, fs, params.resolve_seg_len(x.len()), params.overlap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, v)| v * Complex64::from_polar(1.0, -2.0 * PI * (k * t) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn impulse_is_flat() {
        let x: Vec<Complex64> = [1.0, 0.0, 0.0, 0.0].iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let y = fft(&x, false).unwrap();
        for v in y {
            assert_eq!(v, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn matches_naive_dft_and_inverts() {
        let x: Vec<Complex64> = (0..64)
            .map(|i| Complex64::new((i as f64 * 0.91).sin(), (i as f64 * 0.33).cos()))
            .collect();
        let fast = fft(&x, false).unwrap();
        let slow = naive_dft(&x);
        let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        let back = fft(&fast, true).unwrap();
        let err = back.iter().zip(&x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(
            fft(&[Complex64::new(0.0, 0.0); 6], false),
            Err(MetricError::NotPowerOfTwo { len: 6 })
        ));
    }

    #[test]
    fn sine_peak_sits_on_its_bin() {
        let (fs, n) = (256.0, 1024);
        let f0 = 20.0; // bin 20 of a 256-point segment
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * f0 * i as f64 / fs).sin()).collect();
        let psd = psd_welch(&x, fs, 256, 0.5).unwrap();
        assert_eq!(psd.peak_frequency(), f0);
        assert_eq!(psd.freqs.first(), Some(&0.0));
        assert_eq!(psd.freqs.last(), Some(&(fs / 2.0)));
    }

    #[test]
    fn zero_signal_has_zero_psd() {
        let psd = psd_welch(&[0.0; 512], 128.0, 128, 0.5).unwrap();
        assert!(psd.power.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn segment_longer_than_signal_rejected() {
        assert!(matches!(
            psd_welch(&[0.0; 100], 128.0, 128, 0.5),
            Err(MetricError::SegmentTooLong { .. })
        ));
    }

    #[test]
    fn default_segment_rule() {
        let p = PsdParams::default();
        assert_eq!(p.resolve_seg_len(512), 256);
        assert_eq!(p.resolve_seg_len(200), 128);
        assert_eq!(p.resolve_seg_len(64), 64);
    }
}
