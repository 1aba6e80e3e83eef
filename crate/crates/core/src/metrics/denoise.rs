use super::spectrum::{psd_with, PsdParams};
use super::MetricError;

fn check_lengths(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

fn sum_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn rms(x: &[f64]) -> f64 {
    (sum_sq(x) / x.len() as f64).sqrt()
}

/// `10·log10(‖u‖² / ‖u − x_g‖²)` for one segment.
///
/// Returns `+∞` when `u == x_g` and `−∞` when `u` is all zeros.
pub fn snr_db(reference: &[f64], estimate: &[f64]) -> Result<f64, MetricError> {
    check_lengths(reference, estimate)?;
    let signal = sum_sq(estimate);
    if signal == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let noise: f64 = estimate.iter().zip(reference).map(|(u, x)| (u - x).powi(2)).sum();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Segment-averaged SNR over index-aligned batches.
pub fn mean_snr_db<R: AsRef<[f64]>, E: AsRef<[f64]>>(references: &[R], estimates: &[E]) -> Result<f64, MetricError> {
    if references.len() != estimates.len() {
        return Err(MetricError::LengthMismatch {
            left: references.len(),
            right: estimates.len(),
        });
    }
    if references.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut total = 0.0;
    for (r, e) in references.iter().zip(estimates) {
        total += snr_db(r.as_ref(), e.as_ref())?;
    }
    Ok(total / references.len() as f64)
}

/// `RMS(x_g − x̂) / RMS(x_g)`.
pub fn rrmse_t(reference: &[f64], estimate: &[f64]) -> Result<f64, MetricError> {
    rrmse_t_against(reference, reference, estimate)
}

/// `RMS(x_g − x̂) / RMS(denominator)`. Passing the contaminated input as
/// `denominator` gives the literal reading of the formula.
pub fn rrmse_t_against(denominator: &[f64], reference: &[f64], estimate: &[f64]) -> Result<f64, MetricError> {
    check_lengths(reference, estimate)?;
    check_lengths(denominator, reference)?;
    let denom = rms(denominator);
    if denom == 0.0 {
        return Err(MetricError::ZeroPower);
    }
    let diff: Vec<f64> = reference.iter().zip(estimate).map(|(a, b)| a - b).collect();
    Ok(rms(&diff) / denom)
}

/// `RMS(PSD(x_g) − PSD(x̂)) / RMS(PSD(x_g))`.
pub fn rrmse_s(reference: &[f64], estimate: &[f64], fs: f64, params: &PsdParams) -> Result<f64, MetricError> {
    rrmse_s_against(reference, reference, estimate, fs, params)
}

pub fn rrmse_s_against(
    denominator: &[f64],
    reference: &[f64],
    estimate: &[f64],
    fs: f64,
    params: &PsdParams,
) -> Result<f64, MetricError> {
    check_lengths(reference, estimate)?;
    check_lengths(denominator, reference)?;
    let p_ref = psd_with(reference, fs, params)?;
    let p_est = psd_with(estimate, fs, params)?;
    let p_den = if std::ptr::eq(denominator, reference) {
        p_ref.clone()
    } else {
        psd_with(denominator, fs, params)?
    };
    let denom = rms(&p_den.power);
    if denom == 0.0 {
        return Err(MetricError::ZeroPower);
    }
    let diff: Vec<f64> = p_ref.power.iter().zip(&p_est.power).map(|(a, b)| a - b).collect();
    Ok(rms(&diff) / denom)
}

/// Pearson correlation with means removed.
pub fn cc(reference: &[f64], estimate: &[f64]) -> Result<f64, MetricError> {
    check_lengths(reference, estimate)?;
    let n = reference.len() as f64;
    let mr = reference.iter().sum::<f64>() / n;
    let me = estimate.iter().sum::<f64>() / n;
    let (mut cov, mut vr, mut ve) = (0.0, 0.0, 0.0);
    for (r, e) in reference.iter().zip(estimate) {
        let (dr, de) = (r - mr, e - me);
        cov += dr * de;
        vr += dr * dr;
        ve += de * de;
    }
    if vr == 0.0 || ve == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok((cov / (vr * ve).sqrt()).clamp(-1.0, 1.0))
}
