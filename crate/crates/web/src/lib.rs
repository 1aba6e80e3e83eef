//! Browser bindings for three small DTP-Net tools: SNR-controlled mixing
//! with spectra, the dilated-convolution identity, and a complexity
//! calculator.

use dtpnet::forge::{gen_clean_eeg, gen_emg, gen_eog, mix_at_snr, ArtifactKind, Segment};
use dtpnet::metrics::{psd_with, snr_db, PsdParams};
use dtpnet::model::{flops_estimate, param_count, DtpNetConfig};
use dtpnet::probe::dilation_equivalence_report;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// One mixed segment plus the spectra of its parts.
#[wasm_bindgen]
pub struct MixView {
    clean: Vec<f32>,
    contaminated: Vec<f32>,
    freqs: Vec<f32>,
    clean_psd: Vec<f32>,
    contaminated_psd: Vec<f32>,
    lambda: f64,
    measured_snr_db: f64,
}

#[wasm_bindgen]
impl MixView {
    pub fn clean(&self) -> Vec<f32> {
        self.clean.clone()
    }

    pub fn contaminated(&self) -> Vec<f32> {
        self.contaminated.clone()
    }

    pub fn freqs(&self) -> Vec<f32> {
        self.freqs.clone()
    }

    pub fn clean_psd(&self) -> Vec<f32> {
        self.clean_psd.clone()
    }

    pub fn contaminated_psd(&self) -> Vec<f32> {
        self.contaminated_psd.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Input SNR measured on the mixture, `10·log10(‖c‖² / ‖x − c‖²)`.
    #[wasm_bindgen(getter)]
    pub fn measured_snr_db(&self) -> f64 {
        self.measured_snr_db
    }
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Generates a clean segment and an artifact (`"eog"`, `"emg"`, or `"both"`)
/// and mixes them at `snr_db`.
#[wasm_bindgen]
pub fn mix_segment(kind: &str, snr_db_target: f64, seed: u32, len: usize, fs: f64) -> Result<MixView, JsError> {
    let kind: ArtifactKind = kind.parse().map_err(js_err)?;
    let seed = seed as u64;
    let clean = gen_clean_eeg(1, len, fs, seed).map_err(js_err)?.remove(0);
    let artifact = match kind {
        ArtifactKind::Eog => gen_eog(1, len, fs, seed).map_err(js_err)?.remove(0),
        ArtifactKind::Emg => gen_emg(1, len, fs, seed).map_err(js_err)?.remove(0),
        ArtifactKind::Both => {
            let a = gen_eog(1, len, fs, seed).map_err(js_err)?.remove(0);
            let b = gen_emg(1, len, fs, seed).map_err(js_err)?.remove(0);
            let sum = a.samples.iter().zip(&b.samples).map(|(x, y)| x + y).collect();
            Segment::new(sum, a.fs).map_err(js_err)?
        }
    };
    let rec = mix_at_snr(&clean, &artifact, snr_db_target).map_err(js_err)?;
    let psd = PsdParams::default();
    let c = rec.clean.to_f64();
    let x = rec.contaminated.to_f64();
    let cp = psd_with(&c, fs, &psd).map_err(js_err)?;
    let xp = psd_with(&x, fs, &psd).map_err(js_err)?;
    let noise: f64 = c.iter().zip(&x).map(|(a, b)| (b - a).powi(2)).sum();
    let measured = 10.0 * (c.iter().map(|v| v * v).sum::<f64>() / noise).log10();
    Ok(MixView {
        clean: rec.clean.samples.clone(),
        contaminated: rec.contaminated.samples.clone(),
        freqs: to_f32(&cp.freqs),
        clean_psd: to_f32(&cp.power),
        contaminated_psd: to_f32(&xp.power),
        lambda: rec.lambda,
        measured_snr_db: measured,
    })
}

/// SNR of `estimate` against `reference` in the estimate-power form used for
/// scoring denoisers.
#[wasm_bindgen]
pub fn score_snr_db(reference: &[f32], estimate: &[f32]) -> Result<f64, JsError> {
    let r: Vec<f64> = reference.iter().map(|&v| v as f64).collect();
    let e: Vec<f64> = estimate.iter().map(|&v| v as f64).collect();
    snr_db(&r, &e).map_err(js_err)
}

/// Largest gap between a `d`-dilated convolution and the interleaved
/// convolutions of its `d` phases, on a random kernel and signal.
#[wasm_bindgen]
pub fn dilation_gap(d: usize, kernel_len: usize, phase_len: usize, seed: u32) -> Result<f64, JsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let kernel: Vec<f64> = (0..kernel_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let signal: Vec<f64> = (0..d * phase_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    dilation_equivalence_report(&kernel, &signal, d).map_err(js_err)
}

/// Trainable parameters and estimated FLOPs for one segment of `len` samples.
#[wasm_bindgen]
pub struct Complexity {
    #[wasm_bindgen(readonly)]
    pub params: f64,
    #[wasm_bindgen(readonly)]
    pub flops: f64,
    #[wasm_bindgen(readonly)]
    pub blocks: usize,
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn complexity(n: usize, l: usize, h: usize, p: usize, m: usize, r: usize, b: usize, len: usize) -> Result<Complexity, JsError> {
    let cfg = DtpNetConfig::new(n, l, h, p, m, r).with_growth(b);
    cfg.validate().map_err(js_err)?;
    if cfg.frames(len).is_none() {
        return Err(JsError::new(&format!(
            "length {len} does not tile with filter length {l} and hop {}",
            cfg.hop()
        )));
    }
    Ok(Complexity {
        params: param_count(&cfg) as f64,
        flops: flops_estimate(&cfg, len) as f64,
        blocks: cfg.block_count(),
    })
}
