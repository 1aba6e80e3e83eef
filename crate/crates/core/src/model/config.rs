use std::fmt;

use serde::{Deserialize, Serialize};

/// How blocks in the separator see earlier features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// Every block consumes the concatenation of `z` and all earlier block outputs.
    Dense,
    /// `y_i = y_{i-1} + F_i(y_{i-1})`, with `y_{-1} = z`.
    Residual,
    /// Plain cascade.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DilationMode {
    /// Block `j` of each pyramid uses dilation `2^j`.
    Pyramid,
    /// Every block uses dilation 1.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

/// Reach of dense shortcuts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenseScope {
    /// Shortcuts span the whole separator.
    #[default]
    Global,
    /// Shortcuts stay inside a pyramid; a pyramid additionally sees `z` and
    /// the last output of the previous pyramid.
    PerPyramid,
}

impl DenseScope {
    fn is_global(&self) -> bool {
        *self == DenseScope::Global
    }
}

/// Architecture of a DTP-Net. Field names on disk are the single-letter
/// hyperparameter names (`N`, `L`, `H`, `P`, `M`, `R`, `B`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig")]
pub struct DtpNetConfig {
    /// Encoder filter count.
    #[serde(rename = "N")]
    pub filters: usize,
    /// Encoder filter length in samples.
    #[serde(rename = "L")]
    pub filter_len: usize,
    /// Channels of the dilated convolution inside each block.
    #[serde(rename = "H")]
    pub hidden: usize,
    /// Taps of the dilated convolution.
    #[serde(rename = "P")]
    pub kernel: usize,
    /// Blocks per pyramid.
    #[serde(rename = "M")]
    pub blocks_per_pyramid: usize,
    /// Pyramid repeats.
    #[serde(rename = "R")]
    pub repeats: usize,
    /// Bottleneck width and growth rate.
    #[serde(rename = "B")]
    pub growth: usize,
    pub connectivity: Connectivity,
    pub dilation_mode: DilationMode,
    pub activation: Activation,
    /// Encoder/decoder hop. Defaults to `L/2` (`(L-1)/2` for odd `L`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(skip_serializing_if = "DenseScope::is_global")]
    pub dense_scope: DenseScope,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(rename = "N")]
    filters: usize,
    #[serde(rename = "L")]
    filter_len: usize,
    #[serde(rename = "H")]
    hidden: usize,
    #[serde(rename = "P")]
    kernel: usize,
    #[serde(rename = "M")]
    blocks_per_pyramid: usize,
    #[serde(rename = "R")]
    repeats: usize,
    #[serde(rename = "B")]
    growth: Option<usize>,
    #[serde(default = "default_connectivity")]
    connectivity: Connectivity,
    #[serde(default = "default_dilation")]
    dilation_mode: DilationMode,
    #[serde(default)]
    activation: Activation,
    #[serde(default)]
    stride: Option<usize>,
    #[serde(default)]
    dense_scope: DenseScope,
}

fn default_connectivity() -> Connectivity {
    Connectivity::Dense
}

fn default_dilation() -> DilationMode {
    DilationMode::Pyramid
}

impl TryFrom<RawConfig> for DtpNetConfig {
    type Error = ConfigError;

    fn try_from(raw: RawConfig) -> Result<Self, Self::Error> {
        let config = DtpNetConfig {
            filters: raw.filters,
            filter_len: raw.filter_len,
            hidden: raw.hidden,
            kernel: raw.kernel,
            blocks_per_pyramid: raw.blocks_per_pyramid,
            repeats: raw.repeats,
            growth: raw.growth.unwrap_or(raw.hidden.div_ceil(2)),
            connectivity: raw.connectivity,
            dilation_mode: raw.dilation_mode,
            activation: raw.activation,
            stride: raw.stride,
            dense_scope: raw.dense_scope,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: &'static str,
    pub message: String,
}

/// Every violated constraint of a [`DtpNetConfig`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub fields: Vec<FieldError>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config:")?;
        for e in &self.fields {
            write!(f, " {}: {};", e.field, e.message)?;
        }
        Ok(())
    }
}

/// Channel wiring of one block, derived from the config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    pub dilation: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Indices into the feature list `[z, y_0, y_1, …]` that are concatenated
    /// to form this block's input.
    pub sources: Vec<usize>,
}

impl DtpNetConfig {
    /// Proposed model with default `B = ceil(H/2)`.
    pub fn new(filters: usize, filter_len: usize, hidden: usize, kernel: usize, m: usize, r: usize) -> Self {
        Self {
            filters,
            filter_len,
            hidden,
            kernel,
            blocks_per_pyramid: m,
            repeats: r,
            growth: hidden.div_ceil(2),
            connectivity: Connectivity::Dense,
            dilation_mode: DilationMode::Pyramid,
            activation: Activation::Relu,
            stride: None,
            dense_scope: DenseScope::Global,
        }
    }

    pub fn with_growth(mut self, growth: usize) -> Self {
        self.growth = growth;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut fields = Vec::new();
        let mut bad = |field, message: String| fields.push(FieldError { field, message });
        for (name, v) in [
            ("N", self.filters),
            ("H", self.hidden),
            ("P", self.kernel),
            ("M", self.blocks_per_pyramid),
            ("R", self.repeats),
            ("B", self.growth),
        ] {
            if v == 0 {
                bad(name, "must be at least 1".into());
            }
        }
        if self.filter_len < 2 {
            bad("L", format!("must be at least 2, got {}", self.filter_len));
        } else if self.filter_len % 2 == 1 && self.filter_len < 3 {
            bad("L", "odd filter length must be at least 3".into());
        }
        if self.growth > self.hidden {
            bad("B", format!("bottleneck {} wider than H = {}", self.growth, self.hidden));
        }
        if let Some(s) = self.stride {
            if s == 0 || s > self.filter_len {
                bad("stride", format!("must be in 1..=L, got {s}"));
            }
        }
        if fields.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { fields })
        }
    }

    /// Encoder/decoder hop size.
    pub fn hop(&self) -> usize {
        self.stride.unwrap_or(self.filter_len / 2).max(1)
    }

    pub fn block_count(&self) -> usize {
        self.repeats * self.blocks_per_pyramid
    }

    pub fn dilation(&self, block: usize) -> usize {
        match self.dilation_mode {
            DilationMode::Pyramid => 1 << (block % self.blocks_per_pyramid),
            DilationMode::Flat => 1,
        }
    }

    /// Wiring of every block in evaluation order.
    pub fn block_layouts(&self) -> Vec<BlockLayout> {
        let (n, b, m) = (self.filters, self.growth, self.blocks_per_pyramid);
        (0..self.block_count())
            .map(|i| {
                let (sources, out_channels) = match (self.connectivity, self.dense_scope) {
                    (Connectivity::Dense, DenseScope::Global) => ((0..=i).collect(), b),
                    (Connectivity::Dense, DenseScope::PerPyramid) => {
                        let start = i - i % m;
                        let mut s = vec![0];
                        if start > 0 {
                            s.push(start);
                        }
                        s.extend(start + 1..=i);
                        (s, b)
                    }
                    (Connectivity::None, _) => (vec![i], b),
                    (Connectivity::Residual, _) => (vec![i], n),
                };
                let in_channels = sources.iter().map(|&s| if s == 0 { n } else { self.feature_width(s) }).sum();
                BlockLayout {
                    dilation: self.dilation(i),
                    in_channels,
                    out_channels,
                    sources,
                }
            })
            .collect()
    }

    /// Channel width of feature `index` in `[z, y_0, …]`.
    fn feature_width(&self, index: usize) -> usize {
        match (index, self.connectivity) {
            (0, _) | (_, Connectivity::Residual) => self.filters,
            _ => self.growth,
        }
    }

    /// Feature indices concatenated into the merge layer.
    pub fn merge_sources(&self) -> Vec<usize> {
        match self.connectivity {
            Connectivity::Dense => (0..=self.block_count()).collect(),
            Connectivity::None | Connectivity::Residual => vec![self.block_count()],
        }
    }

    pub fn merge_in_channels(&self) -> usize {
        self.merge_sources().iter().map(|&s| self.feature_width(s)).sum()
    }

    /// Frame count for a signal of `t` samples, if the length is admissible.
    pub fn frames(&self, t: usize) -> Option<usize> {
        let (l, s) = (self.filter_len, self.hop());
        (t >= l && (t - l).is_multiple_of(s)).then(|| (t - l) / s + 1)
    }

    /// Smallest admissible length `≥ t`.
    pub fn aligned_len(&self, t: usize) -> usize {
        let (l, s) = (self.filter_len, self.hop());
        if t <= l {
            l
        } else {
            l + (t - l).div_ceil(s) * s
        }
    }
}
