use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Connectivity, DtpNetConfig, ModelError};
use crate::kernel::{ConvSpec, Graph, NodeId, Scalar, Tensor};

/// Strided analysis filter bank, `N × 1 × L`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<F> {
    pub weight: Tensor<F>,
    pub stride: usize,
}

impl<F: Scalar> EncoderLayer<F> {
    pub fn filters(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn filter_len(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn spec(&self) -> ConvSpec {
        ConvSpec {
            stride: self.stride,
            ..ConvSpec::simple(1, self.filters(), self.filter_len())
        }
    }

    /// `z = Encoder(x)` for a `1 × T` signal.
    pub fn encode(&self, x: &Tensor<F>) -> Result<Tensor<F>, ModelError> {
        Ok(crate::kernel::ops::conv1d(x, &self.weight, &self.spec())?)
    }
}

/// Single-channel transposed-convolution synthesis layer, `N × 1 × L`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer<F> {
    pub weight: Tensor<F>,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalPyramidBlock<F> {
    pub dilation: usize,
    /// `B × C_in × 1`
    pub bottleneck: Tensor<F>,
    /// `H × B × P`
    pub dilated: Tensor<F>,
    /// `C_out × H × 1`
    pub out: Tensor<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Separator<F> {
    pub blocks: Vec<TemporalPyramidBlock<F>>,
    /// `N × C_merge × 1`
    pub merge: Tensor<F>,
}

/// Encoder, densely connected temporal pyramid separator, and decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DtpNet<F> {
    config: DtpNetConfig,
    pub encoder: EncoderLayer<F>,
    pub separator: Separator<F>,
    pub decoder: DecoderLayer<F>,
}

/// Graph handles for every parameter, in [`DtpNet::param_names`] order.
#[derive(Debug, Clone)]
pub struct ParamNodes(pub Vec<NodeId>);

/// Nodes recorded by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub params: ParamNodes,
    pub z: NodeId,
    /// Separator output, same shape as `z`.
    pub mask: NodeId,
    pub output: NodeId,
    /// Input `h_i` of each block.
    pub block_inputs: Vec<NodeId>,
    /// Transform `F_i(h_i)` of each block, before any residual addition.
    pub block_outputs: Vec<NodeId>,
}

/// Tensor shapes of every parameter, in canonical order.
pub fn param_shapes(config: &DtpNetConfig) -> Vec<(String, Vec<usize>)> {
    let (n, l, h, p) = (config.filters, config.filter_len, config.hidden, config.kernel);
    let mut shapes = vec![("encoder.weight".to_string(), vec![n, 1, l])];
    for (i, layout) in config.block_layouts().iter().enumerate() {
        shapes.push((format!("blocks.{i}.bottleneck"), vec![config.growth, layout.in_channels, 1]));
        shapes.push((format!("blocks.{i}.dilated"), vec![h, config.growth, p]));
        shapes.push((format!("blocks.{i}.out"), vec![layout.out_channels, h, 1]));
    }
    shapes.push(("merge.weight".to_string(), vec![n, config.merge_in_channels(), 1]));
    shapes.push(("decoder.weight".to_string(), vec![n, 1, l]));
    shapes
}

/// Glorot-uniform draw: `U(−a, a)` with `a = sqrt(6/(fan_in + fan_out))`.
fn glorot<F: Scalar>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<F> {
    let receptive: usize = shape[2..].iter().product();
    let fan_in = shape[1] * receptive;
    let fan_out = shape[0] * receptive;
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| F::from_f64(rng.gen_range(-bound..bound))).collect();
    Tensor::new(shape, data).expect("shape from config")
}

impl<F: Scalar> DtpNet<F> {
    /// Builds a model with weights drawn deterministically from `seed`.
    pub fn build(config: DtpNetConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors: Vec<Tensor<F>> = param_shapes(&config).iter().map(|(_, s)| glorot(s, &mut rng)).collect();
        Self::from_tensors(config, tensors)
    }

    /// Assembles a model from tensors in [`param_shapes`] order.
    pub fn from_tensors(config: DtpNetConfig, tensors: Vec<Tensor<F>>) -> Result<Self, ModelError> {
        config.validate()?;
        let shapes = param_shapes(&config);
        if shapes.len() != tensors.len() {
            return Err(ModelError::ParamCount {
                expected: shapes.len(),
                actual: tensors.len(),
            });
        }
        for ((name, shape), t) in shapes.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(ModelError::ParamShape {
                    name: name.clone(),
                    expected: shape.clone(),
                    actual: t.shape().to_vec(),
                });
            }
        }
        let layouts = config.block_layouts();
        let mut it = tensors.into_iter();
        let stride = config.hop();
        let encoder = EncoderLayer {
            weight: it.next().unwrap(),
            stride,
        };
        let blocks = layouts
            .iter()
            .map(|layout| TemporalPyramidBlock {
                dilation: layout.dilation,
                bottleneck: it.next().unwrap(),
                dilated: it.next().unwrap(),
                out: it.next().unwrap(),
            })
            .collect();
        let merge = it.next().unwrap();
        let decoder = DecoderLayer {
            weight: it.next().unwrap(),
            stride,
        };
        Ok(Self {
            config,
            encoder,
            separator: Separator { blocks, merge },
            decoder,
        })
    }

    pub fn config(&self) -> &DtpNetConfig {
        &self.config
    }

    pub fn param_names(&self) -> Vec<String> {
        param_shapes(&self.config).into_iter().map(|(n, _)| n).collect()
    }

    /// Parameters in canonical order.
    pub fn params(&self) -> Vec<&Tensor<F>> {
        let mut v = vec![&self.encoder.weight];
        for b in &self.separator.blocks {
            v.extend([&b.bottleneck, &b.dilated, &b.out]);
        }
        v.push(&self.separator.merge);
        v.push(&self.decoder.weight);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut v = vec![&mut self.encoder.weight];
        for b in &mut self.separator.blocks {
            v.push(&mut b.bottleneck);
            v.push(&mut b.dilated);
            v.push(&mut b.out);
        }
        v.push(&mut self.separator.merge);
        v.push(&mut self.decoder.weight);
        v
    }

    pub fn cast<G: Scalar>(&self) -> DtpNet<G> {
        DtpNet::from_tensors(self.config.clone(), self.params().into_iter().map(|t| t.cast()).collect())
            .expect("same config")
    }

    pub fn register_params(&self, g: &mut Graph<F>) -> ParamNodes {
        ParamNodes(self.params().into_iter().map(|t| g.leaf(t.clone())).collect())
    }

    fn check_signal(&self, x: &Tensor<F>) -> Result<usize, ModelError> {
        let (c, t) = x.as_matrix_dims()?;
        if c != 1 {
            return Err(ModelError::Channels { expected: 1, actual: c });
        }
        self.config.frames(t).ok_or(ModelError::Length {
            len: t,
            filter_len: self.config.filter_len,
            hop: self.config.hop(),
        })?;
        Ok(t)
    }

    /// Records the separator on `g` given the encoded representation `z`.
    pub fn record_separator(
        &self,
        g: &mut Graph<F>,
        params: &ParamNodes,
        z: NodeId,
    ) -> Result<(NodeId, Vec<NodeId>, Vec<NodeId>), ModelError> {
        let (c, _) = g.value(z).as_matrix_dims()?;
        if c != self.config.filters {
            return Err(ModelError::Channels {
                expected: self.config.filters,
                actual: c,
            });
        }
        let cfg = &self.config;
        let (h, p, b) = (cfg.hidden, cfg.kernel, cfg.growth);
        let mut features = vec![z];
        let mut inputs = Vec::new();
        let mut transforms = Vec::new();
        for (i, layout) in cfg.block_layouts().iter().enumerate() {
            let [w_b, w_d, w_o] = [params.0[1 + 3 * i], params.0[2 + 3 * i], params.0[3 + 3 * i]];
            let sources: Vec<NodeId> = layout.sources.iter().map(|&s| features[s]).collect();
            let input = g.concat(&sources)?;
            let a = g.conv1d(input, w_b, ConvSpec::simple(layout.in_channels, b, 1))?;
            let a = g.relu(a);
            let d = g.conv1d(a, w_d, ConvSpec::same(b, h, p, layout.dilation))?;
            let d = g.relu(d);
            let y = g.conv1d(d, w_o, ConvSpec::simple(h, layout.out_channels, 1))?;
            inputs.push(input);
            transforms.push(y);
            let next = match cfg.connectivity {
                Connectivity::Residual => g.add(input, y)?,
                Connectivity::Dense | Connectivity::None => y,
            };
            features.push(next);
        }
        let merge_in: Vec<NodeId> = cfg.merge_sources().iter().map(|&s| features[s]).collect();
        let merge_in = g.concat(&merge_in)?;
        let w_m = params.0[params.0.len() - 2];
        let mask = g.conv1d(merge_in, w_m, ConvSpec::simple(cfg.merge_in_channels(), cfg.filters, 1))?;
        Ok((mask, inputs, transforms))
    }

    /// Records `x̂ = Decoder(z + Separator(z))` on `g`.
    pub fn record(&self, g: &mut Graph<F>, x: NodeId) -> Result<ForwardTrace, ModelError> {
        self.check_signal(g.value(x))?;
        let params = self.register_params(g);
        let enc = self.encoder.spec();
        let z = g.conv1d(x, params.0[0], enc)?;
        let (mask, block_inputs, block_outputs) = self.record_separator(g, &params, z)?;
        let sum = g.add(z, mask)?;
        let w_dec = *params.0.last().unwrap();
        let output = g.conv_transpose1d(sum, w_dec, self.decoder.stride)?;
        Ok(ForwardTrace {
            params,
            z,
            mask,
            output,
            block_inputs,
            block_outputs,
        })
    }

    pub fn encode(&self, x: &Tensor<F>) -> Result<Tensor<F>, ModelError> {
        self.check_signal(x)?;
        self.encoder.encode(x)
    }

    pub fn separate(&self, z: &Tensor<F>) -> Result<Tensor<F>, ModelError> {
        let mut g = Graph::new();
        let params = self.register_params(&mut g);
        let z = g.leaf(z.clone());
        let (mask, _, _) = self.record_separator(&mut g, &params, z)?;
        Ok(g.value(mask).clone())
    }

    /// Full forward pass on an aligned `1 × T` signal.
    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>, ModelError> {
        let mut g = Graph::new();
        let x = g.leaf(x.clone());
        let trace = self.record(&mut g, x)?;
        Ok(g.value(trace.output).clone())
    }

    /// Zero-pads on the right to the next admissible length, runs
    /// [`DtpNet::forward`], and trims back to the input length.
    pub fn denoise_any_length(&self, samples: &[F]) -> Result<Vec<F>, ModelError> {
        let t = samples.len();
        if t < self.config.filter_len {
            return Err(ModelError::TooShort {
                len: t,
                filter_len: self.config.filter_len,
            });
        }
        let aligned = self.config.aligned_len(t);
        let mut padded = samples.to_vec();
        padded.resize(aligned, F::zero());
        let out = self.forward(&Tensor::signal(&padded))?;
        let mut data = out.into_data();
        data.truncate(t);
        Ok(data)
    }

    /// MSE of `forward(input)` against `target` and the gradient of every parameter.
    pub fn loss_and_grads(&self, input: &[F], target: &[F]) -> Result<(f64, Vec<Tensor<F>>), ModelError> {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::signal(input));
        let trace = self.record(&mut g, x)?;
        let t = g.leaf(Tensor::signal(target));
        let loss = g.mse_loss(trace.output, t)?;
        g.backward(loss)?;
        let value = g.value(loss).data()[0].as_f64();
        let grads = trace
            .params
            .0
            .iter()
            .map(|&id| g.take_grad(id).unwrap_or_else(|| Tensor::zeros(g.value(id).shape())))
            .collect();
        Ok((value, grads))
    }
}
