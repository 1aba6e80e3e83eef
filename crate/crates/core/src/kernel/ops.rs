//! Forward and backward rules for every primitive used by the network.
//!
//! All functions are pure. Reductions accumulate in `f64` and round once on
//! output, so `f32` results do not depend on summation length.

use super::{KernelError, Scalar, Tensor};

/// Geometry of a bias-free 1D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

impl ConvSpec {
    /// Stride-1 convolution with no padding.
    pub fn simple(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            dilation: 1,
            pad_left: 0,
            pad_right: 0,
        }
    }

    /// Length-preserving stride-1 convolution. Odd total padding puts the
    /// extra sample on the right.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize, dilation: usize) -> Self {
        let total = dilation * (kernel.saturating_sub(1));
        Self {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            dilation,
            pad_left: total / 2,
            pad_right: total - total / 2,
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        for (name, v) in [
            ("stride", self.stride),
            ("dilation", self.dilation),
            ("kernel", self.kernel),
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
        ] {
            if v == 0 {
                return Err(KernelError::InvalidSpec { field: name });
            }
        }
        Ok(())
    }

    /// `floor((K_in + pad_left + pad_right − dilation·(kernel−1) − 1)/stride) + 1`
    pub fn output_len(&self, input_len: usize) -> Result<usize, KernelError> {
        self.validate()?;
        let padded = input_len + self.pad_left + self.pad_right;
        let span = self.dilation * (self.kernel - 1) + 1;
        if padded < span {
            return Err(KernelError::EmptyOutput {
                input_len,
                span,
                padding: self.pad_left + self.pad_right,
            });
        }
        Ok((padded - span) / self.stride + 1)
    }
}

fn check_dim(op: &'static str, dim: &'static str, expected: usize, actual: usize) -> Result<(), KernelError> {
    if expected != actual {
        return Err(KernelError::ShapeMismatch {
            op,
            dim,
            expected,
            actual,
        });
    }
    Ok(())
}

fn check_rank3<F: Scalar>(op: &'static str, t: &Tensor<F>) -> Result<(usize, usize, usize), KernelError> {
    match t.shape() {
        [a, b, c] => Ok((*a, *b, *c)),
        other => Err(KernelError::ExpectedRank {
            what: op,
            expected: 3,
            shape: other.to_vec(),
        }),
    }
}

fn widen<F: Scalar>(v: &[F]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn narrow<F: Scalar>(v: &[f64]) -> Vec<F> {
    v.iter().map(|&x| F::from_f64(x)).collect()
}

/// Range of output positions `t` for which `t·stride + offset` lands inside
/// `[0, len)`.
#[inline]
fn valid_range(offset: isize, stride: usize, len: usize, out_len: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    let last = len as isize - 1 - offset;
    if last < 0 {
        return (0, 0);
    }
    let hi = (last / s + 1).min(out_len as isize);
    let lo = lo.min(hi);
    (lo as usize, hi as usize)
}

fn check_conv1d<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    spec: &ConvSpec,
) -> Result<(usize, usize), KernelError> {
    spec.validate()?;
    let (c_in, k_in) = input.as_matrix_dims()?;
    let (w_out, w_in, w_k) = check_rank3("conv1d weight", weight)?;
    check_dim("conv1d", "input channels", spec.in_channels, c_in)?;
    check_dim("conv1d", "weight output channels", spec.out_channels, w_out)?;
    check_dim("conv1d", "weight input channels", spec.in_channels, w_in)?;
    check_dim("conv1d", "weight kernel taps", spec.kernel, w_k)?;
    let k_out = spec.output_len(k_in)?;
    Ok((k_in, k_out))
}

/// Zero-padded cross-correlation: `out[o][t] = Σ_c Σ_k w[o][c][k]·x[c][t·s + k·d − pad_left]`.
pub fn conv1d<F: Scalar>(input: &Tensor<F>, weight: &Tensor<F>, spec: &ConvSpec) -> Result<Tensor<F>, KernelError> {
    let (k_in, k_out) = check_conv1d(input, weight, spec)?;
    let x = widen(input.data());
    let w = weight.data();
    let (c_in, c_out, taps) = (spec.in_channels, spec.out_channels, spec.kernel);
    let mut out = Vec::with_capacity(c_out * k_out);
    let mut acc = vec![0.0f64; k_out];
    for o in 0..c_out {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for c in 0..c_in {
            let row = &x[c * k_in..(c + 1) * k_in];
            for k in 0..taps {
                let wv = w[(o * c_in + c) * taps + k].as_f64();
                let offset = (k * spec.dilation) as isize - spec.pad_left as isize;
                let (lo, hi) = valid_range(offset, spec.stride, k_in, k_out);
                if lo == hi {
                    continue;
                }
                if spec.stride == 1 {
                    let start = (lo as isize + offset) as usize;
                    let src = &row[start..start + (hi - lo)];
                    for (a, &xv) in acc[lo..hi].iter_mut().zip(src) {
                        *a += wv * xv;
                    }
                } else {
                    for t in lo..hi {
                        acc[t] += wv * row[(t as isize * spec.stride as isize + offset) as usize];
                    }
                }
            }
        }
        out.extend(acc.iter().map(|&a| F::from_f64(a)));
    }
    Tensor::new(&[c_out, k_out], out)
}

/// Gradients of [`conv1d`] with respect to its input and weight.
pub fn conv1d_backward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    spec: &ConvSpec,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>), KernelError> {
    let (k_in, k_out) = check_conv1d(input, weight, spec)?;
    let (g_c, g_k) = grad_out.as_matrix_dims()?;
    check_dim("conv1d backward", "grad channels", spec.out_channels, g_c)?;
    check_dim("conv1d backward", "grad length", k_out, g_k)?;
    let x = widen(input.data());
    let g = widen(grad_out.data());
    let w = widen(weight.data());
    let (c_in, c_out, taps) = (spec.in_channels, spec.out_channels, spec.kernel);

    let mut grad_in = Vec::with_capacity(c_in * k_in);
    let mut acc = vec![0.0f64; k_in];
    for c in 0..c_in {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for o in 0..c_out {
            let grow = &g[o * k_out..(o + 1) * k_out];
            for k in 0..taps {
                let wv = w[(o * c_in + c) * taps + k];
                let offset = (k * spec.dilation) as isize - spec.pad_left as isize;
                let (lo, hi) = valid_range(offset, spec.stride, k_in, k_out);
                if lo == hi {
                    continue;
                }
                if spec.stride == 1 {
                    let start = (lo as isize + offset) as usize;
                    for (a, &gv) in acc[start..start + (hi - lo)].iter_mut().zip(&grow[lo..hi]) {
                        *a += wv * gv;
                    }
                } else {
                    for t in lo..hi {
                        acc[(t as isize * spec.stride as isize + offset) as usize] += wv * grow[t];
                    }
                }
            }
        }
        grad_in.extend(acc.iter().map(|&a| F::from_f64(a)));
    }

    let mut grad_w = vec![0.0f64; c_out * c_in * taps];
    for o in 0..c_out {
        let grow = &g[o * k_out..(o + 1) * k_out];
        for c in 0..c_in {
            let row = &x[c * k_in..(c + 1) * k_in];
            for k in 0..taps {
                let offset = (k * spec.dilation) as isize - spec.pad_left as isize;
                let (lo, hi) = valid_range(offset, spec.stride, k_in, k_out);
                if lo == hi {
                    continue;
                }
                let mut dot = 0.0f64;
                if spec.stride == 1 {
                    let start = (lo as isize + offset) as usize;
                    for (&gv, &xv) in grow[lo..hi].iter().zip(&row[start..start + (hi - lo)]) {
                        dot += gv * xv;
                    }
                } else {
                    for t in lo..hi {
                        dot += grow[t] * row[(t as isize * spec.stride as isize + offset) as usize];
                    }
                }
                grad_w[(o * c_in + c) * taps + k] = dot;
            }
        }
    }
    Ok((
        Tensor::new(&[c_in, k_in], grad_in)?,
        Tensor::new(weight.shape(), narrow(&grad_w))?,
    ))
}

fn check_conv_transpose<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    stride: usize,
) -> Result<(usize, usize, usize, usize, usize), KernelError> {
    if stride == 0 {
        return Err(KernelError::InvalidSpec { field: "stride" });
    }
    let (c_in, k) = input.as_matrix_dims()?;
    let (w_in, c_out, taps) = check_rank3("conv_transpose1d weight", weight)?;
    check_dim("conv_transpose1d", "weight input channels", c_in, w_in)?;
    if k == 0 || taps == 0 || c_out == 0 {
        return Err(KernelError::EmptyOutput {
            input_len: k,
            span: taps,
            padding: 0,
        });
    }
    let t_out = (k - 1) * stride + taps;
    Ok((c_in, k, c_out, taps, t_out))
}

/// Transposed convolution: scatter-adds `in[c][k]·w[c][o][·]` at offset `k·stride`.
pub fn conv_transpose1d<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    stride: usize,
) -> Result<Tensor<F>, KernelError> {
    let (c_in, k, c_out, taps, t_out) = check_conv_transpose(input, weight, stride)?;
    let x = widen(input.data());
    let w = weight.data();
    let mut out = Vec::with_capacity(c_out * t_out);
    let mut acc = vec![0.0f64; t_out];
    for o in 0..c_out {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for c in 0..c_in {
            let row = &x[c * k..(c + 1) * k];
            for l in 0..taps {
                let wv = w[(c * c_out + o) * taps + l].as_f64();
                for (f, &xv) in row.iter().enumerate() {
                    acc[f * stride + l] += wv * xv;
                }
            }
        }
        out.extend(acc.iter().map(|&a| F::from_f64(a)));
    }
    Tensor::new(&[c_out, t_out], out)
}

/// Gradients of [`conv_transpose1d`]. The input gradient is a strided
/// correlation of the upstream gradient with the same kernel.
pub fn conv_transpose1d_backward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    stride: usize,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>), KernelError> {
    let (c_in, k, c_out, taps, t_out) = check_conv_transpose(input, weight, stride)?;
    let (g_c, g_t) = grad_out.as_matrix_dims()?;
    check_dim("conv_transpose1d backward", "grad channels", c_out, g_c)?;
    check_dim("conv_transpose1d backward", "grad length", t_out, g_t)?;
    let x = widen(input.data());
    let g = widen(grad_out.data());
    let w = widen(weight.data());

    let mut grad_in = vec![0.0f64; c_in * k];
    let mut grad_w = vec![0.0f64; c_in * c_out * taps];
    for c in 0..c_in {
        let gin = &mut grad_in[c * k..(c + 1) * k];
        let row = &x[c * k..(c + 1) * k];
        for o in 0..c_out {
            let grow = &g[o * t_out..(o + 1) * t_out];
            for l in 0..taps {
                let wv = w[(c * c_out + o) * taps + l];
                let mut dot = 0.0f64;
                for f in 0..k {
                    let gv = grow[f * stride + l];
                    gin[f] += wv * gv;
                    dot += row[f] * gv;
                }
                grad_w[(c * c_out + o) * taps + l] = dot;
            }
        }
    }
    Ok((
        Tensor::new(&[c_in, k], narrow(&grad_in))?,
        Tensor::new(weight.shape(), narrow(&grad_w))?,
    ))
}

pub fn relu<F: Scalar>(input: &Tensor<F>) -> Tensor<F> {
    let data = input
        .data()
        .iter()
        .map(|&v| if v > F::zero() { v } else { F::zero() })
        .collect();
    Tensor::new(input.shape(), data).expect("relu preserves shape")
}

/// Passes the upstream gradient where the input was strictly positive.
pub fn relu_backward<F: Scalar>(input: &Tensor<F>, grad_out: &Tensor<F>) -> Result<Tensor<F>, KernelError> {
    check_same_shape("relu backward", input, grad_out)?;
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > F::zero() { g } else { F::zero() })
        .collect();
    Tensor::new(input.shape(), data)
}

fn check_same_shape<F: Scalar>(op: &'static str, a: &Tensor<F>, b: &Tensor<F>) -> Result<(), KernelError> {
    if a.shape() != b.shape() {
        return Err(KernelError::ShapesDiffer {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

pub fn add<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>, KernelError> {
    check_same_shape("add", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor::new(a.shape(), data)
}

/// Stacks `C_i × K` parts along the channel axis in argument order.
pub fn concat_channels<F: Scalar>(parts: &[&Tensor<F>]) -> Result<Tensor<F>, KernelError> {
    let first = parts.first().ok_or(KernelError::EmptyConcat)?;
    let (_, k) = first.as_matrix_dims()?;
    let mut channels = 0;
    for p in parts {
        let (c, pk) = p.as_matrix_dims()?;
        check_dim("concat_channels", "time length", k, pk)?;
        channels += c;
    }
    let mut data = Vec::with_capacity(channels * k);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Tensor::new(&[channels, k], data)
}

/// Splits the upstream gradient of a concatenation back into per-part slices.
pub fn concat_channels_backward<F: Scalar>(
    channel_counts: &[usize],
    grad_out: &Tensor<F>,
) -> Result<Vec<Tensor<F>>, KernelError> {
    let (c, k) = grad_out.as_matrix_dims()?;
    check_dim("concat backward", "channels", channel_counts.iter().sum(), c)?;
    let mut start = 0;
    let mut out = Vec::with_capacity(channel_counts.len());
    for &n in channel_counts {
        out.push(Tensor::new(&[n, k], grad_out.data()[start * k..(start + n) * k].to_vec())?);
        start += n;
    }
    Ok(out)
}

/// Mean squared error between two same-shaped tensors, as a `[1]` tensor.
pub fn mse_loss<F: Scalar>(prediction: &Tensor<F>, target: &Tensor<F>) -> Result<Tensor<F>, KernelError> {
    check_same_shape("mse_loss", prediction, target)?;
    if prediction.is_empty() {
        return Err(KernelError::EmptyInput { op: "mse_loss" });
    }
    let sum: f64 = prediction
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p.as_f64() - t.as_f64();
            d * d
        })
        .sum();
    Tensor::new(&[1], vec![F::from_f64(sum / prediction.len() as f64)])
}

/// `upstream · 2(prediction − target)/count`
pub fn mse_loss_backward<F: Scalar>(
    prediction: &Tensor<F>,
    target: &Tensor<F>,
    upstream: F,
) -> Result<Tensor<F>, KernelError> {
    check_same_shape("mse_loss backward", prediction, target)?;
    let scale = 2.0 * upstream.as_f64() / prediction.len() as f64;
    let data = prediction
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| F::from_f64(scale * (p.as_f64() - t.as_f64())))
        .collect();
    Tensor::new(prediction.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(v: &[f64]) -> Tensor<f64> {
        Tensor::signal(v)
    }

    fn kernel(v: &[f64]) -> Tensor<f64> {
        Tensor::new(&[1, 1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel_passes_through() {
        let out = conv1d(&sig(&[3.0, -2.0, 7.0]), &kernel(&[1.0]), &ConvSpec::simple(1, 1, 1)).unwrap();
        assert_eq!(out.data(), &[3.0, -2.0, 7.0]);
    }

    #[test]
    fn sliding_sum_matches_direct_oracle() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let oracle: Vec<f64> = x.windows(2).map(|w| w[0] + w[1]).collect();
        let out = conv1d(&sig(&x), &kernel(&[1.0, 1.0]), &ConvSpec::simple(1, 1, 2)).unwrap();
        assert_eq!(out.data(), oracle.as_slice());
        assert_eq!(out.data(), &[3.0, 5.0, 7.0]);
    }

    #[test]
    fn half_overlap_frame_count() {
        for (t, l) in [(512, 32), (64, 8), (100, 4)] {
            let spec = ConvSpec {
                stride: l / 2,
                ..ConvSpec::simple(1, 1, l)
            };
            let out = conv1d(&Tensor::<f32>::zeros(&[1, t]), &Tensor::zeros(&[1, 1, l]), &spec).unwrap();
            assert_eq!(out.shape(), &[1, 2 * t / l - 1]);
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch_and_names_it() {
        let err = conv1d(&Tensor::<f32>::zeros(&[2, 8]), &Tensor::zeros(&[1, 1, 3]), &ConvSpec::simple(1, 1, 3))
            .unwrap_err();
        assert!(err.to_string().contains("input channels"), "{err}");
        let err = conv1d(&Tensor::<f32>::zeros(&[1, 8]), &Tensor::zeros(&[1, 1, 2]), &ConvSpec::simple(1, 1, 3))
            .unwrap_err();
        assert!(err.to_string().contains("kernel taps"), "{err}");
    }

    #[test]
    fn conv_rejects_empty_output() {
        let err = conv1d(&Tensor::<f32>::zeros(&[1, 2]), &Tensor::zeros(&[1, 1, 3]), &ConvSpec::simple(1, 1, 3))
            .unwrap_err();
        assert!(matches!(err, KernelError::EmptyOutput { .. }));
    }

    #[test]
    fn transpose_identity_and_scatter_oracle() {
        let out = conv_transpose1d(&sig(&[5.0, -1.0]), &kernel(&[1.0]), 1).unwrap();
        assert_eq!(out.data(), &[5.0, -1.0]);

        let input = [1.0, 2.0];
        let w = [1.0, 1.0, 1.0];
        let stride = 2;
        let len = (input.len() - 1) * stride + w.len();
        let oracle: Vec<f64> = (0..len)
            .map(|t| {
                (0..input.len())
                    .filter_map(|k| t.checked_sub(stride * k).and_then(|j| w.get(j)).map(|wv| input[k] * wv))
                    .sum()
            })
            .collect();
        let out = conv_transpose1d(&sig(&input), &kernel(&w), stride).unwrap();
        assert_eq!(out.data(), oracle.as_slice());
        assert_eq!(out.data(), &[1.0, 1.0, 3.0, 2.0, 2.0]);
    }

    #[test]
    fn transpose_length_recovers_signal_length() {
        let (t, l) = (512usize, 32usize);
        let k = 2 * t / l - 1;
        let out = conv_transpose1d(&Tensor::<f32>::zeros(&[4, k]), &Tensor::zeros(&[4, 1, l]), l / 2).unwrap();
        assert_eq!(out.shape(), &[1, (k + 1) * l / 2]);
        assert_eq!(out.shape()[1], t);
    }

    #[test]
    fn relu_forward_and_backward() {
        let x = sig(&[-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&x, &sig(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);

        let neg = sig(&[-3.0, -0.5]);
        assert_eq!(relu(&neg).data(), &[0.0, 0.0]);
        assert_eq!(relu_backward(&neg, &sig(&[4.0, 4.0])).unwrap().data(), &[0.0, 0.0]);

        assert_eq!(relu_backward(&sig(&[3.0]), &sig(&[0.5])).unwrap().data(), &[0.5]);
    }

    #[test]
    fn concat_orders_rows_and_rejects_mismatched_time() {
        let a = Tensor::new(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(&[2, 4], (5..13).map(|v| v as f64).collect()).unwrap();
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[3, 4]);
        assert_eq!(c.data(), &[1., 2., 3., 4., 5., 6., 7., 8., 9., 10., 11., 12.]);
        let short = Tensor::<f64>::zeros(&[1, 3]);
        assert!(concat_channels(&[&a, &short]).is_err());
        assert!(concat_channels::<f64>(&[]).is_err());
    }

    #[test]
    fn add_and_its_errors() {
        let a = sig(&[1.0, 2.0]);
        assert_eq!(add(&a, &sig(&[0.0, 0.0])).unwrap(), a);
        assert_eq!(add(&a, &sig(&[3.0, 4.0])).unwrap().data(), &[4.0, 6.0]);
        assert!(add(&a, &sig(&[1.0])).is_err());
    }

    #[test]
    fn mse_values_and_gradient() {
        let p = sig(&[0.0, 0.0]);
        let t = sig(&[3.0, 4.0]);
        assert_eq!(mse_loss(&t, &t).unwrap().data(), &[0.0]);
        assert_eq!(mse_loss(&p, &t).unwrap().data(), &[12.5]);
        assert_eq!(mse_loss_backward(&p, &t, 1.0).unwrap().data(), &[-3.0, -4.0]);
        assert!(mse_loss(&p, &sig(&[1.0])).is_err());
    }

    #[test]
    fn taps_entirely_in_padding_contribute_nothing() {
        // One sample, dilation 4, P = 3: the outer taps never touch the signal.
        let spec = ConvSpec::same(1, 1, 3, 4);
        let x = Tensor::new(&[1, 1], vec![2.0f64]).unwrap();
        let w = Tensor::new(&[1, 1, 3], vec![5.0, 7.0, 11.0]).unwrap();
        let y = conv1d(&x, &w, &spec).unwrap();
        assert_eq!(y.data(), &[14.0]);
        let (gx, gw) = conv1d_backward(&x, &w, &spec, &Tensor::new(&[1, 1], vec![1.0]).unwrap()).unwrap();
        assert_eq!(gx.data(), &[7.0]);
        assert_eq!(gw.data(), &[0.0, 2.0, 0.0]);
    }

    #[test]
    fn valid_range_matches_brute_force() {
        for offset in -7isize..7 {
            for stride in 1..4 {
                for len in 0..9 {
                    let out_len = 12;
                    let brute: Vec<usize> = (0..out_len)
                        .filter(|&t| {
                            let i = t as isize * stride as isize + offset;
                            i >= 0 && i < len as isize
                        })
                        .collect();
                    let (lo, hi) = valid_range(offset, stride, len, out_len);
                    assert_eq!((lo..hi).collect::<Vec<_>>(), brute, "off {offset} s {stride} len {len}");
                }
            }
        }
    }
}
