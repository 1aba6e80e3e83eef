//! DTP-Net assembly, ablation variants, and complexity accounting.

mod config;
mod frame_dual;
mod network;

pub use config::{Activation, BlockLayout, ConfigError, Connectivity, DenseScope, DilationMode, DtpNetConfig, FieldError};
pub use frame_dual::{frame_dual_reconstruction, FrameDualReconstruction};
pub use network::{
    param_shapes, DecoderLayer, DtpNet, EncoderLayer, ForwardTrace, ParamNodes, Separator, TemporalPyramidBlock,
};

use std::str::FromStr;

use crate::kernel::KernelError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("signal length {len} is not admissible: need T ≥ {filter_len} and (T − {filter_len}) divisible by {hop}")]
    Length { len: usize, filter_len: usize, hop: usize },
    #[error("signal length {len} shorter than the encoder filter length {filter_len}")]
    TooShort { len: usize, filter_len: usize },
    #[error("expected {expected} channels, got {actual}")]
    Channels { expected: usize, actual: usize },
    #[error("expected {expected} parameter tensors, got {actual}")]
    ParamCount { expected: usize, actual: usize },
    #[error("parameter {name}: expected shape {expected:?}, got {actual:?}")]
    ParamShape { name: String, expected: Vec<usize>, actual: Vec<usize> },
    #[error("unknown ablation variant `{0}` (basenet, tpb, dense, tpb_dense, tpb_res)")]
    UnknownVariant(String),
    #[error("frame dual needs N ≥ L (N = {filters}, L = {filter_len})")]
    TooFewFilters { filters: usize, filter_len: usize },
    #[error("encoder filter bank is rank deficient (condition number {condition:.3e})")]
    RankDeficient { condition: f64 },
}

/// The five separator configurations compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// No shortcuts, all dilations 1.
    BaseNet,
    /// Pyramid dilations, no shortcuts.
    Tpb,
    /// Dense shortcuts, all dilations 1.
    Dense,
    /// Dense shortcuts with pyramid dilations (the proposed model).
    TpbDense,
    /// Residual shortcuts with pyramid dilations.
    TpbRes,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::BaseNet,
        Variant::Tpb,
        Variant::Dense,
        Variant::TpbDense,
        Variant::TpbRes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::BaseNet => "basenet",
            Variant::Tpb => "tpb",
            Variant::Dense => "dense",
            Variant::TpbDense => "tpb_dense",
            Variant::TpbRes => "tpb_res",
        }
    }

    pub fn apply(self, base: &DtpNetConfig) -> DtpNetConfig {
        let (connectivity, dilation_mode) = match self {
            Variant::BaseNet => (Connectivity::None, DilationMode::Flat),
            Variant::Tpb => (Connectivity::None, DilationMode::Pyramid),
            Variant::Dense => (Connectivity::Dense, DilationMode::Flat),
            Variant::TpbDense => (Connectivity::Dense, DilationMode::Pyramid),
            Variant::TpbRes => (Connectivity::Residual, DilationMode::Pyramid),
        };
        DtpNetConfig {
            connectivity,
            dilation_mode,
            ..base.clone()
        }
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ModelError::UnknownVariant(s.to_string()))
    }
}

/// Config of the named ablation variant derived from `base`.
pub fn ablation_variant(name: &str, base: &DtpNetConfig) -> Result<DtpNetConfig, ModelError> {
    base.validate()?;
    Ok(name.parse::<Variant>()?.apply(base))
}

/// Number of trainable weights. There are no biases.
pub fn param_count(config: &DtpNetConfig) -> u64 {
    param_shapes(config)
        .iter()
        .map(|(_, s)| s.iter().product::<usize>() as u64)
        .sum()
}

/// Multiply-accumulates of every convolution for one length-`t` forward pass.
pub fn macs(config: &DtpNetConfig, t: usize) -> u64 {
    let k = config.frames(config.aligned_len(t)).unwrap_or(1) as u64;
    let (n, l, h, p, b) = (
        config.filters as u64,
        config.filter_len as u64,
        config.hidden as u64,
        config.kernel as u64,
        config.growth as u64,
    );
    let codec = 2 * n * l * k;
    let blocks: u64 = config
        .block_layouts()
        .iter()
        .map(|layout| (b * layout.in_channels as u64 + h * b * p + layout.out_channels as u64 * h) * k)
        .sum();
    let merge = n * config.merge_in_channels() as u64 * k;
    codec + blocks + merge
}

/// FLOPs as twice the multiply-accumulate count.
pub fn flops_estimate(config: &DtpNetConfig, t: usize) -> u64 {
    2 * macs(config, t)
}

/// A published architecture together with the complexity figures reported for it.
#[derive(Debug, Clone)]
pub struct PublishedConfig {
    pub name: &'static str,
    pub sample_rate_hz: f64,
    pub config: DtpNetConfig,
    /// Segment length used for the FLOPs figure.
    pub segment_len: usize,
    pub reported_params: f64,
    pub reported_flops: f64,
}

/// The four task-specific architectures and their reported parameter and FLOP counts.
pub fn published_configs() -> Vec<PublishedConfig> {
    let mut emg = DtpNetConfig::new(454, 23, 440, 5, 5, 7);
    emg.stride = Some(11);
    vec![
        PublishedConfig {
            name: "EEGDenoiseNet EMG",
            sample_rate_hz: 512.0,
            config: emg,
            segment_len: 1024,
            reported_params: 45.6e6,
            reported_flops: 91.2e6,
        },
        PublishedConfig {
            name: "EEGDenoiseNet EOG",
            sample_rate_hz: 256.0,
            config: DtpNetConfig::new(248, 32, 394, 4, 6, 6),
            segment_len: 512,
            reported_params: 39.8e6,
            reported_flops: 79.6e6,
        },
        PublishedConfig {
            name: "EEGDenoiseNet EMG+EOG",
            sample_rate_hz: 256.0,
            config: DtpNetConfig::new(305, 32, 243, 3, 5, 5),
            segment_len: 512,
            reported_params: 10.0e6,
            reported_flops: 20.1e6,
        },
        PublishedConfig {
            name: "Semi-Simulated EOG",
            sample_rate_hz: 200.0,
            config: DtpNetConfig::new(512, 8, 64, 3, 6, 4),
            segment_len: 6000,
            reported_params: 2.4e6,
            reported_flops: 4.7e6,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_toy_params() {
        let c = DtpNetConfig::new(2, 4, 2, 3, 1, 1).with_growth(2);
        // encoder 8 + decoder 8 + bottleneck 2·2 + dilated 2·2·3 + out 2·2 + merge 2·4
        assert_eq!(param_count(&c), 44);
    }

    #[test]
    fn dense_param_count_matches_closed_form() {
        for r in [1, 2, 4] {
            let c = DtpNetConfig::new(6, 4, 8, 3, 3, r).with_growth(3);
            let (n, l, h, p, b) = (6u64, 4u64, 8u64, 3u64, 3u64);
            let blocks = (r * 3) as u64;
            let bottleneck: u64 = (0..blocks).map(|i| b * (n + i * b)).sum();
            let closed = 2 * n * l + bottleneck + blocks * (h * b * p + b * h) + n * (n + blocks * b);
            assert_eq!(param_count(&c), closed, "R = {r}");
        }
    }

    #[test]
    fn variants_set_connectivity_and_dilation() {
        let base = DtpNetConfig::new(8, 4, 8, 3, 3, 2).with_growth(4);
        assert_eq!(ablation_variant("tpb_dense", &base).unwrap(), base);
        let b = ablation_variant("basenet", &base).unwrap();
        assert!((0..b.block_count()).all(|i| b.dilation(i) == 1));
        assert_eq!(b.connectivity, Connectivity::None);
        let r = ablation_variant("tpb_res", &base).unwrap();
        assert!(r.block_layouts().iter().all(|l| l.in_channels == 8 && l.out_channels == 8));
        assert!(matches!(ablation_variant("wavenet", &base), Err(ModelError::UnknownVariant(_))));
    }

    #[test]
    fn emg_config_has_35_blocks() {
        let emg = &published_configs()[0];
        assert_eq!(emg.config.block_count(), 35);
        assert_eq!(emg.config.hop(), 11);
    }

    #[test]
    fn flops_are_twice_macs() {
        let c = DtpNetConfig::new(2, 4, 2, 3, 1, 1).with_growth(2);
        // T = 8 → K = 3; every weight is applied once per frame here.
        assert_eq!(macs(&c, 8), 44 * 3);
        assert_eq!(flops_estimate(&c, 8), 2 * 44 * 3);
    }
}
