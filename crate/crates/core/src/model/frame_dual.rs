use nalgebra::DMatrix;

use super::{EncoderLayer, ModelError};
use crate::kernel::{Scalar, Tensor};

/// Result of inverting an encoder through its least-squares frame dual.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDualReconstruction<F> {
    pub samples: Vec<F>,
    /// `‖x_rec − x‖₂ / ‖x‖₂`
    pub relative_error: f64,
    /// Ratio of largest to smallest singular value of the filter bank.
    pub condition: f64,
}

/// Singular values below this fraction of the largest count as zero.
const RANK_TOLERANCE: f64 = 1e-10;

/// Encodes `x`, inverts every coefficient frame with the pseudo-inverse of
/// the `N × L` filter bank, and overlap-adds the frames divided by the
/// per-sample overlap count.
pub fn frame_dual_reconstruction<F: Scalar>(
    encoder: &EncoderLayer<F>,
    x: &[F],
) -> Result<FrameDualReconstruction<F>, ModelError> {
    let (n, l, hop) = (encoder.filters(), encoder.filter_len(), encoder.stride);
    if n < l {
        return Err(ModelError::TooFewFilters { filters: n, filter_len: l });
    }
    let t = x.len();
    if t < l || !(t - l).is_multiple_of(hop) {
        return Err(ModelError::Length {
            len: t,
            filter_len: l,
            hop,
        });
    }
    let z = encoder.encode(&Tensor::signal(x))?;
    let frames = z.shape()[1];

    let w = DMatrix::from_row_slice(n, l, &encoder.weight.to_f64_vec());
    let svd = w.svd(true, true);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    let condition = if min_sv > 0.0 { max_sv / min_sv } else { f64::INFINITY };
    if !(min_sv > RANK_TOLERANCE * max_sv) {
        return Err(ModelError::RankDeficient { condition });
    }
    let pinv = svd
        .pseudo_inverse(RANK_TOLERANCE * max_sv)
        .map_err(|_| ModelError::RankDeficient { condition })?;

    let coeffs = DMatrix::from_row_slice(n, frames, &z.to_f64_vec());
    let local = pinv * coeffs; // L × frames
    let mut sum = vec![0.0f64; t];
    let mut count = vec![0u32; t];
    for k in 0..frames {
        for j in 0..l {
            sum[k * hop + j] += local[(j, k)];
            count[k * hop + j] += 1;
        }
    }
    let rec: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c.max(1) as f64).collect();
    let samples: Vec<F> = rec.iter().map(|&v| F::from_f64(v)).collect();
    let err: f64 = samples.iter().zip(x).map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2)).sum();
    let norm: f64 = x.iter().map(|v| v.as_f64().powi(2)).sum();
    Ok(FrameDualReconstruction {
        samples,
        relative_error: if norm > 0.0 { (err / norm).sqrt() } else { err.sqrt() },
        condition,
    })
}
