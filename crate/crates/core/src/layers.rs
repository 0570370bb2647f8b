//! Network building blocks: strided 1-D convolutions, linear and norm
//! layers, sinusoidal positions, multi-head self-attention and pre-norm
//! Transformer encoder stacks.
//!
//! Layers hold [`ParamId`]s and read their weights from a [`ParamStore`]
//! at call time, so one layout can run against trainable, frozen or
//! lower-precision copies of the same parameters.

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{uniform_fan_in, ParamId, ParamStore};
use crate::tensor::{multi_head_attention_core, Scalar, Tensor};

const NORM_EPS: f64 = 1e-6;

/// Learned single-channel analysis filterbank: `x[T] → [T′, F]` with
/// `T′ = (T − K) / S + 1`. Frame `t` covers samples `t·S .. t·S + K`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv1d {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        filters: usize,
        kernel: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        check_conv_geometry(filters, kernel, stride)?;
        let weight = store.register(format!("{name}.weight"), uniform_fan_in(rng, &[filters, 1, kernel], kernel)?)?;
        let bias = store.register(format!("{name}.bias"), Tensor::zeros(&[filters])?)?;
        Ok(Conv1d {
            weight,
            bias,
            filters,
            kernel,
            stride,
        })
    }

    pub fn output_len(&self, samples: usize) -> Option<usize> {
        (samples >= self.kernel).then(|| (samples - self.kernel) / self.stride + 1)
    }

    pub fn forward<S: Scalar>(&self, store: &ParamStore<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let len = x.numel();
        if x.rank() != 1 {
            return Err(Error::Config(format!("conv1d expects a 1-D signal, got {:?}", x.shape())));
        }
        if len < self.kernel {
            return Err(Error::InputTooShort {
                len,
                kernel: self.kernel,
            });
        }
        let frames = x.reshape(&[len, 1])?.unfold_rows(self.kernel, self.stride)?;
        let frames_len = frames.shape()[0];
        let w = store.get(self.weight).reshape(&[self.filters, self.kernel])?;
        Ok(frames
            .reshape(&[frames_len, self.kernel])?
            .linear(&w, Some(store.get(self.bias)))?)
    }
}

/// Synthesis filterbank, the transpose of [`Conv1d`]: `[T′, F] → [T]` with
/// `T = (T′ − 1)·S + K`, by overlap-adding kernel-weighted frames.
#[derive(Debug, Clone)]
pub struct ConvTranspose1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvTranspose1d {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        filters: usize,
        kernel: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        check_conv_geometry(filters, kernel, stride)?;
        let weight = store.register(format!("{name}.weight"), uniform_fan_in(rng, &[filters, 1, kernel], filters)?)?;
        let bias = store.register(format!("{name}.bias"), Tensor::zeros(&[1])?)?;
        Ok(ConvTranspose1d {
            weight,
            bias,
            filters,
            kernel,
            stride,
        })
    }

    pub fn output_len(&self, frames: usize) -> usize {
        (frames.max(1) - 1) * self.stride + self.kernel
    }

    pub fn forward<S: Scalar>(&self, store: &ParamStore<S>, y: &Tensor<S>) -> Result<Tensor<S>> {
        if y.rank() != 2 || y.shape()[1] != self.filters || y.shape()[0] == 0 {
            return Err(Error::Config(format!(
                "conv1d_transpose expects [frames ≥ 1, {}], got {:?}",
                self.filters,
                y.shape()
            )));
        }
        let frames = y.shape()[0];
        let w = store.get(self.weight).reshape(&[self.filters, self.kernel])?;
        let out_len = self.output_len(frames);
        let weighted = y.matmul(&w)?.reshape(&[frames, self.kernel, 1])?;
        let x = weighted.fold_rows(self.stride, out_len)?;
        Ok(x.broadcast_add(store.get(self.bias))?.reshape(&[out_len])?)
    }
}

fn check_conv_geometry(filters: usize, kernel: usize, stride: usize) -> Result<()> {
    if filters == 0 || stride == 0 || kernel < stride {
        return Err(Error::Config(format!(
            "convolution needs filters ≥ 1 and kernel ≥ stride ≥ 1 (filters {filters}, kernel {kernel}, stride {stride})"
        )));
    }
    Ok(())
}

/// `y = x · Wᵀ + b` over the last axis; `W` is stored `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        in_features: usize,
        out_features: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::Config(format!("linear `{name}` needs non-zero widths")));
        }
        let weight = store.register(
            format!("{name}.weight"),
            uniform_fan_in(rng, &[out_features, in_features], in_features)?,
        )?;
        let bias = if bias {
            Some(store.register(format!("{name}.bias"), Tensor::zeros(&[out_features])?)?)
        } else {
            None
        };
        Ok(Linear {
            weight,
            bias,
            in_features,
            out_features,
        })
    }

    pub fn num_params(&self) -> usize {
        self.in_features * self.out_features + if self.bias.is_some() { self.out_features } else { 0 }
    }

    /// Accepts any shape `[..., in]` and returns `[..., out]`.
    pub fn forward<S: Scalar>(&self, store: &ParamStore<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.apply(store, x, false)
    }

    /// [`Linear::forward`] followed by ReLU.
    pub fn forward_relu<S: Scalar>(&self, store: &ParamStore<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.apply(store, x, true)
    }

    fn apply<S: Scalar>(&self, store: &ParamStore<S>, x: &Tensor<S>, relu: bool) -> Result<Tensor<S>> {
        let shape = x.shape();
        if shape.last() != Some(&self.in_features) {
            return Err(Error::Config(format!(
                "linear expects trailing width {}, got {:?}",
                self.in_features, shape
            )));
        }
        let rows = x.numel() / self.in_features;
        let x = x.reshape(&[rows, self.in_features])?;
        let (w, b) = (store.get(self.weight), self.bias.map(|b| store.get(b)));
        let y = if relu { x.linear_relu(w, b)? } else { x.linear(w, b)? };
        let mut out_shape = shape.to_vec();
        *out_shape.last_mut().expect("non-empty") = self.out_features;
        Ok(y.reshape(&out_shape)?)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub width: usize,
}

impl LayerNorm {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, width: usize) -> Result<Self> {
        let gamma = store.register(format!("{name}.weight"), Tensor::full(&[width], S::one())?)?;
        let beta = store.register(format!("{name}.bias"), Tensor::zeros(&[width])?)?;
        Ok(LayerNorm { gamma, beta, width })
    }

    pub fn forward<S: Scalar>(&self, store: &ParamStore<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        Ok(x.layer_norm(store.get(self.gamma), store.get(self.beta), NORM_EPS)?)
    }
}

/// Fixed sinusoidal table `[len, width]`: even dimension `2i` holds
/// `sin(pos / 10000^(2i/width))`, odd dimension `2i+1` the matching cosine.
pub fn positional_encoding<S: Scalar>(len: usize, width: usize) -> Result<Tensor<S>> {
    if len == 0 || width == 0 || width % 2 != 0 {
        return Err(Error::Config(format!(
            "positional encoding needs len ≥ 1 and an even width (len {len}, width {width})"
        )));
    }
    let mut table = Vec::with_capacity(len * width);
    for pos in 0..len {
        for pair in 0..width / 2 {
            let freq = 10000f64.powf(-((2 * pair) as f64) / width as f64);
            let angle = pos as f64 * freq;
            table.push(angle.sin());
            table.push(angle.cos());
        }
    }
    Ok(Tensor::from_f64(&[len, width], &table)?)
}

/// Multi-head self-attention with Q/K/V/output projections.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        width: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if heads == 0 || width % heads != 0 {
            return Err(Error::Config(format!(
                "model width {width} is not divisible by {heads} attention heads"
            )));
        }
        Ok(MultiHeadAttention {
            query: Linear::new(store, &format!("{name}.q"), width, width, true, rng)?,
            key: Linear::new(store, &format!("{name}.k"), width, width, true, rng)?,
            value: Linear::new(store, &format!("{name}.v"), width, width, true, rng)?,
            output: Linear::new(store, &format!("{name}.out"), width, width, true, rng)?,
            heads,
        })
    }

    /// `x: [B, L, F]` → `[B, L, F]`.
    pub fn forward<S: Scalar>(&self, store: &ParamStore<S>, x: &Tensor<S>, causal: bool) -> Result<Tensor<S>> {
        let q = self.query.forward(store, x)?;
        let k = self.key.forward(store, x)?;
        let v = self.value.forward(store, x)?;
        let mixed = multi_head_attention_core(&q, &k, &v, self.heads, causal)?;
        self.output.forward(store, &mixed)
    }
}

/// Pre-norm encoder layer: `y = x + Attn(LN(x))`, `out = y + FF(LN(y))`
/// with `FF = Linear → ReLU → Linear`.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    pub norm_attn: LayerNorm,
    pub attention: MultiHeadAttention,
    pub norm_ff: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

impl TransformerLayer {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        width: usize,
        heads: usize,
        d_ff: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if d_ff == 0 {
            return Err(Error::Config("feed-forward width must be ≥ 1".into()));
        }
        Ok(TransformerLayer {
            norm_attn: LayerNorm::new(store, &format!("{name}.norm1"), width)?,
            attention: MultiHeadAttention::new(store, &format!("{name}.attn"), width, heads, rng)?,
            norm_ff: LayerNorm::new(store, &format!("{name}.norm2"), width)?,
            ff_in: Linear::new(store, &format!("{name}.ff.0"), width, d_ff, true, rng)?,
            ff_out: Linear::new(store, &format!("{name}.ff.1"), d_ff, width, true, rng)?,
        })
    }

    pub fn forward<S: Scalar>(&self, store: &ParamStore<S>, x: &Tensor<S>, causal: bool) -> Result<Tensor<S>> {
        let attended = self
            .attention
            .forward(store, &self.norm_attn.forward(store, x)?, causal)?;
        let y = x.add(&attended)?;
        let hidden = self.ff_in.forward_relu(store, &self.norm_ff.forward(store, &y)?)?;
        Ok(y.add(&self.ff_out.forward(store, &hidden)?)?)
    }

    /// Output projections of both residual branches, for tests and
    /// identity initialization.
    pub fn residual_output_params(&self) -> [ParamId; 4] {
        [
            self.attention.output.weight,
            self.attention.output.bias.expect("attention output has bias"),
            self.ff_out.weight,
            self.ff_out.bias.expect("feed-forward output has bias"),
        ]
    }
}

/// Sinusoidal positions added to the input, a stack of
/// Approximate number of `[L, F]` rows per sequence group at inference.
const INFERENCE_ROWS: usize = 8192;

/// [`TransformerLayer`]s, then a final layer norm. Operates on `[B, L, F]`,
/// mixing along `L` independently for each of the `B` sequences.
#[derive(Debug, Clone)]
pub struct TransformerStack {
    pub layers: Vec<TransformerLayer>,
    pub final_norm: LayerNorm,
    pub width: usize,
}

impl TransformerStack {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        num_layers: usize,
        width: usize,
        heads: usize,
        d_ff: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::Config(format!("`{name}` needs at least one layer")));
        }
        if width % 2 != 0 {
            return Err(Error::Config(format!("model width {width} must be even")));
        }
        let layers = (0..num_layers)
            .map(|i| TransformerLayer::new(store, &format!("{name}.layers.{i}"), width, heads, d_ff, rng))
            .collect::<Result<_>>()?;
        Ok(TransformerStack {
            layers,
            final_norm: LayerNorm::new(store, &format!("{name}.norm"), width)?,
            width,
        })
    }

    pub fn forward<S: Scalar>(&self, store: &ParamStore<S>, x: &Tensor<S>, causal: bool) -> Result<Tensor<S>> {
        if x.rank() != 3 || x.shape()[2] != self.width {
            return Err(Error::Config(format!(
                "transformer stack expects [batch, len, {}], got {:?}",
                self.width,
                x.shape()
            )));
        }
        let len = x.shape()[1];
        let pe = positional_encoding(len, self.width)?;
        let run = |x: &Tensor<S>| -> Result<Tensor<S>> {
            let mut h = x.broadcast_add(&pe)?;
            for layer in &self.layers {
                h = layer.forward(store, &h, causal)?;
            }
            self.final_norm.forward(store, &h)
        };
        if x.requires_grad() || store.get(self.final_norm.gamma).requires_grad() {
            return run(x);
        }
        // Inference runs a few sequences at a time to bound live activations.
        let group = (INFERENCE_ROWS / len.max(1)).max(1);
        x.map_row_groups(group, run)
    }
}
