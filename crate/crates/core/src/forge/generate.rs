//! Synthetic stand-ins for clean EEG, ocular, and myogenic recordings.
//!
//! Each segment draws from its own ChaCha stream keyed by
//! `(master_seed ^ index, kind)`, so content never depends on generation
//! order or thread count.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ForgeError, Segment};
use crate::metrics::fft_in_place;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub(crate) enum Stream {
    Clean = 1,
    Eog = 2,
    Emg = 3,
    Levels = 4,
}

pub(crate) fn segment_rng(seed: u64, index: usize, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index as u64);
    rng.set_stream(stream as u64);
    rng
}

const EEG_BANDS: [(f64, f64); 4] = [(1.0, 4.0), (4.0, 8.0), (8.0, 13.0), (13.0, 30.0)];
pub const EOG_BAND: (f64, f64) = (0.5, 5.0);
pub const EMG_LOW_HZ: f64 = 20.0;
// Generated EOG stays inside this narrower band so Hann leakage at 1 Hz
// resolution does not spill past the nominal edges.
const EOG_CORE: (f64, f64) = (1.5, 4.0);

fn check_params(t: usize, fs: f64) -> Result<(), ForgeError> {
    if !(fs >= 64.0) || !fs.is_finite() {
        return Err(ForgeError::Degenerate(format!("sample rate {fs} Hz below 64 Hz")));
    }
    if (t as f64) < fs / 2.0 || t == 0 {
        return Err(ForgeError::Degenerate(format!(
            "segment length {t} shorter than half a second at {fs} Hz"
        )));
    }
    Ok(())
}

fn normalize_rms(x: &mut [f64]) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
}

fn to_segment(mut x: Vec<f64>, fs: f64) -> Segment {
    normalize_rms(&mut x);
    Segment::new(x.iter().map(|&v| v as f32).collect(), fs as f32).expect("generator output is finite")
}

/// Zeroes every FFT bin outside `[lo, hi]` Hz. The signal is zero-padded to
/// at least twice its length first so circular wrap stays out of the result.
fn band_limit(x: &[f64], fs: f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = (2 * x.len()).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (b, &v) in buf.iter_mut().zip(x) {
        b.re = v;
    }
    fft_in_place(&mut buf, false).expect("power of two");
    for (i, b) in buf.iter_mut().enumerate() {
        let bin = i.min(n - i);
        let f = bin as f64 * fs / n as f64;
        if f < lo || f > hi {
            *b = Complex64::new(0.0, 0.0);
        }
    }
    fft_in_place(&mut buf, true).expect("power of two");
    buf[..x.len()].iter().map(|c| c.re).collect()
}

/// Noise with power spectral density proportional to `1/f` above 0.5 Hz.
fn pink_noise(t: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = t.next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for i in 1..=n / 2 {
        let f = i as f64 * fs / n as f64;
        if f < 0.5 {
            continue;
        }
        let c = Complex64::from_polar(1.0 / f.sqrt(), rng.gen_range(0.0..2.0 * PI));
        buf[i] = c;
        if i != n - i {
            buf[n - i] = c.conj();
        }
    }
    fft_in_place(&mut buf, true).expect("power of two");
    buf[..t].iter().map(|c| c.re).collect()
}

fn clean_eeg(t: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let count = rng.gen_range(6..=10);
    let mut x = vec![0.0f64; t];
    for _ in 0..count {
        let (lo, hi) = EEG_BANDS[rng.gen_range(0..EEG_BANDS.len())];
        let f = rng.gen_range(lo..hi);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let amp = rng.gen_range(0.5..1.5);
        for (i, v) in x.iter_mut().enumerate() {
            *v += amp * (2.0 * PI * f * i as f64 / fs + phase).sin();
        }
    }
    let mut noise = pink_noise(t, fs, rng);
    let p_sig = x.iter().map(|v| v * v).sum::<f64>();
    let p_noise = noise.iter().map(|v| v * v).sum::<f64>();
    if p_noise > 0.0 {
        // −10 dB relative to the oscillators
        let scale = (0.1 * p_sig / p_noise).sqrt();
        noise.iter_mut().for_each(|v| *v *= scale);
    }
    x.iter().zip(&noise).map(|(a, b)| a + b).collect()
}

fn eog(t: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let seconds = t as f64 / fs;
    let bursts = 1 + rng.gen_range(0..=(seconds.ceil() as usize).max(1));
    let mut x = vec![0.0f64; t];
    for _ in 0..bursts {
        let centre = rng.gen_range(0.0..seconds);
        let width = rng.gen_range(0.08..0.2);
        let amp = rng.gen_range(0.6..1.4) * if rng.gen_bool(0.8) { 1.0 } else { -1.0 };
        for (i, v) in x.iter_mut().enumerate() {
            let u = (i as f64 / fs - centre) / width;
            *v += amp * (-0.5 * u * u).exp();
        }
    }
    // slow saccade-like drift
    let f = rng.gen_range(EOG_BAND.0..2.0);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let drift = rng.gen_range(0.1..0.4);
    for (i, v) in x.iter_mut().enumerate() {
        *v += drift * (2.0 * PI * f * i as f64 / fs + phase).sin();
    }
    band_limit(&x, fs, EOG_CORE.0, EOG_CORE.1)
}

fn emg(t: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let white: Vec<f64> = (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let hi = (fs / 2.0) * 0.95;
    let carrier = band_limit(&white, fs, EMG_LOW_HZ + 5.0, hi);
    let seconds = t as f64 / fs;
    let bursts = 1 + rng.gen_range(0..=(seconds.ceil() as usize).max(1));
    let mut envelope = vec![0.2f64; t];
    for _ in 0..bursts {
        let start = rng.gen_range(0.0..seconds);
        let dur = rng.gen_range(0.2..0.8);
        let amp = rng.gen_range(0.5..1.5);
        for (i, e) in envelope.iter_mut().enumerate() {
            let u = (i as f64 / fs - start) / dur;
            if (0.0..=1.0).contains(&u) {
                *e += amp * (PI * u).sin().powi(2);
            }
        }
    }
    carrier.iter().zip(&envelope).map(|(c, e)| c * e).collect()
}

fn generate(
    count: usize,
    t: usize,
    fs: f64,
    seed: u64,
    stream: Stream,
    f: fn(usize, f64, &mut ChaCha8Rng) -> Vec<f64>,
) -> Result<Vec<Segment>, ForgeError> {
    check_params(t, fs)?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = segment_rng(seed, i, stream);
            to_segment(f(t, fs, &mut rng), fs)
        })
        .collect())
}

/// Sums of 6 to 10 delta-to-beta oscillators plus 1/f noise at −10 dB,
/// normalized to unit RMS.
pub fn gen_clean_eeg(count: usize, t: usize, fs: f64, seed: u64) -> Result<Vec<Segment>, ForgeError> {
    generate(count, t, fs, seed, Stream::Clean, clean_eeg)
}

/// Blink-like bursts band-limited to 0.5–5 Hz, unit RMS.
pub fn gen_eog(count: usize, t: usize, fs: f64, seed: u64) -> Result<Vec<Segment>, ForgeError> {
    generate(count, t, fs, seed, Stream::Eog, eog)
}

/// Burst-gated broadband noise above 20 Hz, unit RMS.
pub fn gen_emg(count: usize, t: usize, fs: f64, seed: u64) -> Result<Vec<Segment>, ForgeError> {
    generate(count, t, fs, seed, Stream::Emg, emg)
}
