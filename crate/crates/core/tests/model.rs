use dtpnet::kernel::ops::{conv1d, conv_transpose1d, ConvSpec};
use dtpnet::kernel::Tensor;
use dtpnet::model::{DtpNet, DtpNetConfig, Variant};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy() -> DtpNetConfig {
    DtpNetConfig::new(8, 8, 8, 3, 3, 2).with_growth(4)
}

fn noise(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn zero_in_zero_out_for_every_variant() {
    for v in Variant::ALL {
        let model = DtpNet::<f32>::build(v.apply(&toy()), 5).unwrap();
        let out = model.forward(&Tensor::signal(&[0.0f32; 64])).unwrap();
        assert!(out.data().iter().all(|&x| x == 0.0), "{}", v.name());
    }
}

#[test]
fn every_dense_block_receives_gradient() {
    let model = DtpNet::<f32>::build(Variant::TpbDense.apply(&toy()), 2).unwrap();
    let (loss, grads) = model.loss_and_grads(&noise(64, 1), &noise(64, 2)).unwrap();
    assert!(loss > 0.0);
    for (name, g) in model.param_names().iter().zip(&grads) {
        assert!(g.norm_sq() > 0.0, "{name} has no gradient");
    }
}

#[test]
fn forward_is_bit_reproducible() {
    let a = DtpNet::<f32>::build(toy(), 9).unwrap();
    let b = DtpNet::<f32>::build(toy(), 9).unwrap();
    assert_eq!(a, b);
    let x = Tensor::signal(&noise(96, 3));
    assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
}

fn rel_gap(a: &[f32], b: &[f32]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(p, q)| ((p - q) as f64).powi(2)).sum();
    let den: f64 = b.iter().map(|q| (*q as f64).powi(2)).sum();
    (num / den.max(1e-30)).sqrt()
}

proptest! {
    #[test]
    fn encoder_and_decoder_are_linear(seed in any::<u64>(), a in -3.0..3.0f32, b in -3.0..3.0f32) {
        let model = DtpNet::<f32>::build(toy(), seed).unwrap();
        let (x, y) = (noise(64, seed ^ 1), noise(64, seed ^ 2));
        let mix: Vec<f32> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let enc = |s: &[f32]| model.encode(&Tensor::signal(s)).unwrap();
        let (ex, ey, em) = (enc(&x), enc(&y), enc(&mix));
        let combined: Vec<f32> = ex.data().iter().zip(ey.data()).map(|(p, q)| a * p + b * q).collect();
        prop_assert!(rel_gap(em.data(), &combined) <= 1e-5);

        let dec = |z: &Tensor<f32>| conv_transpose1d(z, &model.decoder.weight, model.decoder.stride).unwrap();
        let zc = Tensor::new(ex.shape(), combined).unwrap();
        let lhs = dec(&zc);
        let rhs: Vec<f32> = dec(&ex).data().iter().zip(dec(&ey).data()).map(|(p, q)| a * p + b * q).collect();
        prop_assert!(rel_gap(lhs.data(), &rhs) <= 1e-5);
    }

    #[test]
    fn convolution_is_linear_in_f32(
        seed in any::<u64>(),
        kernel in 1..=4usize,
        dilation in 1..=4usize,
        stride in 1..=3usize,
        a in -3.0..3.0f32,
        b in -3.0..3.0f32,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let w = Tensor::new(&[3, 2, kernel], r(6 * kernel)).unwrap();
        let x = Tensor::new(&[2, 40], r(80)).unwrap();
        let y = Tensor::new(&[2, 40], r(80)).unwrap();
        let spec = ConvSpec { stride, dilation, ..ConvSpec::simple(2, 3, kernel) };
        let m = Tensor::new(&[2, 40], x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect()).unwrap();
        let f = |t: &Tensor<f32>| conv1d(t, &w, &spec).unwrap();
        let rhs: Vec<f32> = f(&x).data().iter().zip(f(&y).data()).map(|(p, q)| a * p + b * q).collect();
        prop_assert!(rel_gap(f(&m).data(), &rhs) <= 1e-5);
    }

    #[test]
    fn output_length_matches_input(t in 8usize..300, seed in 0u64..4) {
        let model = DtpNet::<f32>::build(toy(), seed).unwrap();
        let out = model.denoise_any_length(&noise(t, seed)).unwrap();
        prop_assert_eq!(out.len(), t);
        prop_assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn conv_output_length_matches_index_count(
        len in 1usize..200,
        kernel in 1usize..9,
        dilation in 1usize..5,
        stride in 1usize..5,
        pad_left in 0usize..6,
        pad_right in 0usize..6,
    ) {
        let spec = ConvSpec { stride, dilation, pad_left, pad_right, ..ConvSpec::simple(1, 1, kernel) };
        // Count window starts whose last tap still lands inside the padded signal.
        let padded = len + pad_left + pad_right;
        let span = dilation * (kernel - 1);
        let counted = (0..padded).step_by(stride).filter(|s| s + span < padded).count();
        match spec.output_len(len) {
            Ok(k) => prop_assert_eq!(k, counted),
            Err(_) => prop_assert_eq!(counted, 0),
        }
    }

    #[test]
    fn dilation_equals_interleaved_phases(
        seed in any::<u64>(),
        d in prop::sample::select(vec![1usize, 2, 4, 8]),
        kernel in 1usize..6,
        phase_len in 6usize..30,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..kernel).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..d * phase_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spec = ConvSpec { dilation: d, ..ConvSpec::simple(1, 1, kernel) };
        let dilated = conv1d(&Tensor::signal(&x), &Tensor::new(&[1, 1, kernel], w.clone()).unwrap(), &spec).unwrap();
        // Undilated convolution of each phase, written out by hand.
        for (i, &got) in dilated.data().iter().enumerate() {
            let (phase, j) = (i % d, i / d);
            let want: f64 = (0..kernel).map(|l| w[l] * x[phase + (j + l) * d]).sum();
            prop_assert!((got - want).abs() <= 1e-6);
        }
    }
}
