//! Read-only analyses of a model: encoder filter spectra, mean filter
//! frequency, per-block representation ratios, and the dilation identity.

use std::io;

use serde::{Deserialize, Serialize};

use crate::kernel::ops::{conv1d, ConvSpec};
use crate::kernel::{Graph, KernelError, Scalar, Tensor};
use crate::metrics::{rfft_padded, MetricError};
use crate::model::{DtpNet, EncoderLayer, ModelError};

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpectrum {
    pub filter_index: usize,
    pub peak_frequency_hz: f64,
    /// Magnitudes over the `pad_to/2 + 1` one-sided bins.
    pub magnitude: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyMode {
    /// Frequency of the largest magnitude bin.
    #[default]
    Peak,
    /// Magnitude-weighted mean frequency.
    Centroid,
}

/// Default FFT size for filter spectra.
pub fn default_pad(filter_len: usize) -> usize {
    filter_len.next_power_of_two().max(256)
}

/// Magnitude spectrum of every encoder filter, sorted by peak frequency
/// and then by filter index.
pub fn encoder_filter_spectra<F: Scalar>(
    encoder: &EncoderLayer<F>,
    fs: f64,
    pad_to: usize,
) -> Result<Vec<FilterSpectrum>, ProbeError> {
    let l = encoder.filter_len();
    if !pad_to.is_power_of_two() || pad_to < l {
        return Err(ProbeError::Invalid(format!(
            "pad_to {pad_to} must be a power of two no smaller than the filter length {l}"
        )));
    }
    let bins = pad_to / 2 + 1;
    let data = encoder.weight.data();
    let mut out = (0..encoder.filters())
        .map(|n| {
            let row: Vec<f64> = data[n * l..(n + 1) * l].iter().map(|v| v.as_f64()).collect();
            let spec = rfft_padded(&row, pad_to)?;
            let magnitude: Vec<f64> = spec[..bins].iter().map(|c| c.norm()).collect();
            let mut peak = 0;
            for (k, &m) in magnitude.iter().enumerate() {
                if m > magnitude[peak] {
                    peak = k;
                }
            }
            Ok(FilterSpectrum {
                filter_index: n,
                peak_frequency_hz: peak as f64 * fs / pad_to as f64,
                magnitude,
            })
        })
        .collect::<Result<Vec<_>, ProbeError>>()?;
    out.sort_by(|a, b| {
        a.peak_frequency_hz
            .total_cmp(&b.peak_frequency_hz)
            .then(a.filter_index.cmp(&b.filter_index))
    });
    Ok(out)
}

fn centroid(s: &FilterSpectrum, fs: f64) -> f64 {
    let pad = 2 * (s.magnitude.len() - 1);
    let total: f64 = s.magnitude.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    s.magnitude
        .iter()
        .enumerate()
        .map(|(k, m)| m * k as f64 * fs / pad as f64)
        .sum::<f64>()
        / total
}

/// Mean over filters of the per-filter peak (or centroid) frequency.
pub fn mean_filter_frequency<F: Scalar>(encoder: &EncoderLayer<F>, fs: f64, mode: FrequencyMode) -> Result<f64, ProbeError> {
    let spectra = encoder_filter_spectra(encoder, fs, default_pad(encoder.filter_len()))?;
    let per_filter = spectra.iter().map(|s| match mode {
        FrequencyMode::Peak => s.peak_frequency_hz,
        FrequencyMode::Centroid => centroid(s, fs),
    });
    Ok(per_filter.sum::<f64>() / spectra.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqTrace {
    pub epoch: usize,
    pub mean_peak_frequency_hz: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlpTrace {
    pub block_index: usize,
    /// Mean of `log10(‖F_i(h_i)‖ / ‖h_i‖)` over the samples kept; `None`
    /// when every sample was excluded.
    pub mean_log10_ratio: Option<f64>,
    /// Samples dropped because the input or output norm was zero.
    pub excluded_samples: usize,
}

/// Per-block log ratio of transform norm to input norm, averaged over the
/// encoded representations in `zs`.
pub fn rlp<F: Scalar>(model: &DtpNet<F>, zs: &[Tensor<F>]) -> Result<Vec<RlpTrace>, ProbeError> {
    if zs.is_empty() {
        return Err(ProbeError::Invalid("rlp needs at least one sample".into()));
    }
    let blocks = model.config().block_count();
    let mut sums = vec![0.0f64; blocks];
    let mut kept = vec![0usize; blocks];
    for z in zs {
        let mut g = Graph::new();
        let params = model.register_params(&mut g);
        let z = g.leaf(z.clone());
        let (_, inputs, outputs) = model.record_separator(&mut g, &params, z)?;
        for (i, (h, y)) in inputs.iter().zip(&outputs).enumerate() {
            let h = g.value(*h).norm_sq().sqrt();
            let y = g.value(*y).norm_sq().sqrt();
            if h > 0.0 && y > 0.0 {
                sums[i] += (y / h).log10();
                kept[i] += 1;
            }
        }
    }
    Ok((0..blocks)
        .map(|i| RlpTrace {
            block_index: i,
            mean_log10_ratio: (kept[i] > 0).then(|| sums[i] / kept[i] as f64),
            excluded_samples: zs.len() - kept[i],
        })
        .collect())
}

/// Largest absolute gap between a `d`-dilated valid convolution and the
/// interleaving of `d` undilated convolutions over the stride-`d` phases of
/// `signal`.
pub fn dilation_equivalence_report(kernel: &[f64], signal: &[f64], d: usize) -> Result<f64, ProbeError> {
    let k = kernel.len();
    let t = signal.len();
    if d == 0 || k == 0 || !t.is_multiple_of(d) || t / d < k {
        return Err(ProbeError::Invalid(format!(
            "need d ≥ 1 dividing the signal length {t} and at least {k} samples per phase"
        )));
    }
    let w = Tensor::new(&[1, 1, k], kernel.to_vec())?;
    let dilated = conv1d(
        &Tensor::signal(signal),
        &w,
        &ConvSpec {
            dilation: d,
            ..ConvSpec::simple(1, 1, k)
        },
    )?;
    let mut interleaved = vec![0.0f64; dilated.len()];
    for p in 0..d {
        let phase: Vec<f64> = signal.iter().skip(p).step_by(d).copied().collect();
        let y = conv1d(&Tensor::signal(&phase), &w, &ConvSpec::simple(1, 1, k))?;
        for (j, &v) in y.data().iter().enumerate() {
            interleaved[p + j * d] = v;
        }
    }
    Ok(dilated
        .data()
        .iter()
        .zip(&interleaved)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// `index, peak_hz, bin_0, bin_1, …`
pub fn write_filter_spectra_csv<W: io::Write>(w: W, spectra: &[FilterSpectrum]) -> Result<(), ProbeError> {
    let mut out = csv::Writer::from_writer(w);
    let bins = spectra.first().map_or(0, |s| s.magnitude.len());
    let mut header = vec!["index".to_string(), "peak_hz".to_string()];
    header.extend((0..bins).map(|k| format!("bin_{k}")));
    out.write_record(&header)?;
    for s in spectra {
        let mut row = vec![s.filter_index.to_string(), s.peak_frequency_hz.to_string()];
        row.extend(s.magnitude.iter().map(|m| m.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_freq_trace_csv<W: io::Write>(w: W, trace: &[FreqTrace]) -> Result<(), ProbeError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epoch", "mean_peak_hz", "val_loss"])?;
    for r in trace {
        out.write_record([
            r.epoch.to_string(),
            r.mean_peak_frequency_hz.to_string(),
            r.validation_loss.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Blocks whose every sample was excluded get an empty ratio cell.
pub fn write_rlp_csv<W: io::Write>(w: W, traces: &[RlpTrace]) -> Result<(), ProbeError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["block", "mean_log10_ratio", "excluded_samples"])?;
    for r in traces {
        out.write_record([
            r.block_index.to_string(),
            r.mean_log10_ratio.map_or_else(String::new, |v| v.to_string()),
            r.excluded_samples.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
