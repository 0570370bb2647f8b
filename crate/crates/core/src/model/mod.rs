//! The separation pipeline: learned encoder, chunked masking network,
//! shared decoder.
//!
//! ```text
//! x ─ Conv1d ─ ReLU ─ h ─┬─ chunk ─ blocks ─ PReLU ─ Linear(F → Ns·F) ─ reconstruct ─ ReLU ─ m
//!                        └──────────────────────────── × ─────────────────────────────────────┘
//!                                                      └─ ConvTranspose1d ─ ŝ₁ … ŝ_Ns
//! ```

mod checkpoint;
mod config;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chunking::{chunk, reconstruct, ChunkedLatent};
use crate::error::{Error, Result};
use crate::layers::{Conv1d, ConvTranspose1d, Linear, TransformerStack};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, Variant};

/// Separated sources, each as long as the input, and the masks
/// `[T′, Ns, F]` that produced them.
#[derive(Debug, Clone)]
pub struct SeparationResult<S: Scalar = f64> {
    pub sources: Vec<Tensor<S>>,
    pub masks: Tensor<S>,
}

#[derive(Debug, Clone)]
pub enum Block {
    Re {
        intra1: TransformerStack,
        memory: TransformerStack,
        intra2: TransformerStack,
    },
    DualPath {
        intra: TransformerStack,
        inter: TransformerStack,
    },
}

/// One RE-SepFormer block on `h: [C, Nc, F]`:
///
/// ```text
/// e₁ = intra1(h)                 per chunk, along time
/// e₂ = mean over time of e₁      [Nc, F]
/// e₃ = memory(e₂)                along the chunk axis
/// e₄ = e₁ + e₃                   broadcast over time
/// out = intra2(e₄)
/// ```
///
/// The stacks are passed as closures over `[batch, len, F]` so the
/// composition can be exercised with stand-ins.
pub fn re_sepformer_block<S, I1, M, I2>(h: &Tensor<S>, intra1: I1, memory: M, intra2: I2) -> Result<Tensor<S>>
where
    S: Scalar,
    I1: FnOnce(&Tensor<S>) -> Result<Tensor<S>>,
    M: FnOnce(&Tensor<S>) -> Result<Tensor<S>>,
    I2: FnOnce(&Tensor<S>) -> Result<Tensor<S>>,
{
    let (nc, feat) = match h.shape() {
        [_, nc, f] => (*nc, *f),
        other => return Err(Error::Config(format!("block expects [C, Nc, F], got {other:?}"))),
    };
    let e1 = along_time(h, intra1)?;
    let e2 = e1.reduce_mean(0)?;
    let e3 = memory(&e2.reshape(&[1, nc, feat])?)?.reshape(&[nc, feat])?;
    let e4 = e1.broadcast_add(&e3)?;
    along_time(&e4, intra2)
}

/// Applies `f` to every chunk of `x: [C, Nc, F]` as a `[Nc, C, F]` batch.
fn along_time<S: Scalar>(x: &Tensor<S>, f: impl FnOnce(&Tensor<S>) -> Result<Tensor<S>>) -> Result<Tensor<S>> {
    Ok(f(&x.permute(&[1, 0, 2])?)?.permute(&[1, 0, 2])?)
}

#[derive(Debug, Clone)]
struct Layout {
    encoder: Conv1d,
    blocks: Vec<Block>,
    prelu: ParamId,
    projection: Linear,
    decoder: ConvTranspose1d,
}

/// A configured model together with its parameters.
#[derive(Clone)]
pub struct SeparationModel<S: Scalar = f64> {
    config: ModelConfig,
    layout: Layout,
    pub params: ParamStore<S>,
}

impl<S: Scalar> SeparationModel<S> {
    /// Builds the model and draws its initial weights from `seed`.
    /// Parameters are registered, and thus drawn, in forward order.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let mut store = ParamStore::new();
        let c = &config;
        let f = c.encoder_filters;

        let encoder = Conv1d::new(&mut store, "encoder", f, c.kernel_size, c.stride, rng)?;
        let mut blocks = Vec::with_capacity(c.num_blocks);
        for b in 0..c.num_blocks {
            let p = format!("masknet.blocks.{b}");
            let intra = |store: &mut ParamStore<S>, name: &str, rng: &mut ChaCha8Rng| {
                TransformerStack::new(store, &format!("{p}.{name}"), c.intra_layers, f, c.heads, c.d_ff_intra, rng)
            };
            let block = match c.variant {
                Variant::ReSepformer => {
                    let intra1 = intra(&mut store, "intra1", rng)?;
                    let memory = TransformerStack::new(
                        &mut store,
                        &format!("{p}.memory"),
                        c.memory_layers,
                        f,
                        c.heads,
                        c.d_ff_memory,
                        rng,
                    )?;
                    let intra2 = intra(&mut store, "intra2", rng)?;
                    Block::Re { intra1, memory, intra2 }
                }
                Variant::SepformerBaseline => {
                    let intra = intra(&mut store, "intra", rng)?;
                    let inter = TransformerStack::new(
                        &mut store,
                        &format!("{p}.inter"),
                        c.memory_layers,
                        f,
                        c.heads,
                        c.d_ff_memory,
                        rng,
                    )?;
                    Block::DualPath { intra, inter }
                }
            };
            blocks.push(block);
        }
        let prelu = store.register("masknet.prelu.alpha", Tensor::full(&[1], S::from_f64_lossy(0.25))?)?;
        let projection = Linear::new(&mut store, "masknet.proj", f, c.num_sources * f, true, rng)?;
        let decoder = ConvTranspose1d::new(&mut store, "decoder", f, c.kernel_size, c.stride, rng)?;

        Ok(SeparationModel {
            config,
            layout: Layout {
                encoder,
                blocks,
                prelu,
                projection,
                decoder,
            },
            params: store,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[Block] {
        &self.layout.blocks
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn encoder(&self) -> &Conv1d {
        &self.layout.encoder
    }

    pub fn decoder(&self) -> &ConvTranspose1d {
        &self.layout.decoder
    }

    pub fn projection(&self) -> &Linear {
        &self.layout.projection
    }

    /// Same model in another precision.
    pub fn cast<T: Scalar>(&self) -> Result<SeparationModel<T>> {
        Ok(SeparationModel {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.cast()?,
        })
    }

    /// Copy whose parameters record gradients.
    pub fn trainable(&self) -> Self {
        SeparationModel {
            params: self.params.trainable(),
            ..self.clone()
        }
    }

    /// Copy whose parameters record nothing, for inference.
    pub fn frozen(&self) -> Self {
        SeparationModel {
            params: self.params.frozen(),
            ..self.clone()
        }
    }

    /// `h = ReLU(conv1d(x))` after tail-padding `x` so that the last frame
    /// is complete. Returns `[T′, F]`.
    pub fn encode(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        if x.rank() != 1 {
            return Err(Error::Config(format!("expected a mono signal, got shape {:?}", x.shape())));
        }
        let len = x.numel();
        let frames = self.config.encoder_frames(len)?;
        let padded = (frames - 1) * self.config.stride + self.config.kernel_size;
        let x = x.pad_rows(padded - len)?;
        Ok(self.layout.encoder.forward(&self.params, &x)?.relu()?)
    }

    /// Masks `[T′, Ns, F]` for an encoded mixture `h: [T′, F]`.
    pub fn masking_network(&self, h: &Tensor<S>) -> Result<Tensor<S>> {
        let c = &self.config;
        let (frames, f) = (h.shape()[0], c.encoder_filters);
        let mut chunks = chunk(h, c.chunk_size, c.effective_overlap())?;
        for block in &self.layout.blocks {
            let out = self.block_forward(block, &chunks.data)?;
            chunks = chunks.with_data(out)?;
        }
        let activated = chunks.data.prelu(self.params.get(self.layout.prelu))?;
        let projected = self.layout.projection.forward(&self.params, &activated)?;
        let masks = reconstruct(&chunks.with_data(projected)?)?;
        Ok(masks.reshape(&[frames, c.num_sources, f])?.relu()?)
    }

    /// One block on chunked data `[C, Nc, F]`.
    pub fn block_forward(&self, block: &Block, h: &Tensor<S>) -> Result<Tensor<S>> {
        let p = &self.params;
        let causal = self.config.causal;
        match block {
            Block::Re { intra1, memory, intra2 } => re_sepformer_block(
                h,
                |x| intra1.forward(p, x, causal),
                |x| memory.forward(p, x, causal),
                |x| intra2.forward(p, x, causal),
            ),
            Block::DualPath { intra, inter } => sepformer_block(h, |x| intra.forward(p, x, causal), |x| inter.forward(p, x, causal)),
        }
    }

    /// Runs every block on a chunked latent.
    pub fn blocks_forward(&self, h: &ChunkedLatent<S>) -> Result<ChunkedLatent<S>> {
        let mut out = h.clone();
        for block in &self.layout.blocks {
            out = out.with_data(self.block_forward(block, &out.data)?)?;
        }
        Ok(out)
    }

    /// Applies each mask to `h` and decodes, trimming to `len` samples.
    pub fn decode_masked(&self, h: &Tensor<S>, masks: &Tensor<S>, len: usize) -> Result<Vec<Tensor<S>>> {
        let ns = self.config.num_sources;
        let (frames, f) = (h.shape()[0], h.shape()[1]);
        if masks.shape() != [frames, ns, f] {
            return Err(Error::Config(format!(
                "masks {:?} do not match latent {:?} with {ns} sources",
                masks.shape(),
                h.shape()
            )));
        }
        let by_source = masks.permute(&[1, 0, 2])?;
        (0..ns)
            .map(|k| {
                let m = by_source.narrow_rows(k, 1)?.reshape(&[frames, f])?;
                let audio = self.layout.decoder.forward(&self.params, &m.mul(h)?)?;
                Ok(audio.narrow_rows(0, len)?)
            })
            .collect()
    }

    /// Full pipeline on a mono mixture `x: [T]`.
    pub fn separate(&self, x: &Tensor<S>) -> Result<SeparationResult<S>> {
        let h = self.encode(x)?;
        let masks = self.masking_network(&h)?;
        let sources = self.decode_masked(&h, &masks, x.numel())?;
        Ok(SeparationResult { sources, masks })
    }
}

/// Dual-path block on `h: [C, Nc, F]`: a residual Intra stack within each
/// chunk, then a residual Inter stack across chunks at every intra-chunk
/// position.
pub fn sepformer_block<S, I, J>(h: &Tensor<S>, intra: I, inter: J) -> Result<Tensor<S>>
where
    S: Scalar,
    I: FnOnce(&Tensor<S>) -> Result<Tensor<S>>,
    J: FnOnce(&Tensor<S>) -> Result<Tensor<S>>,
{
    let x = h.add(&along_time(h, intra)?)?;
    Ok(x.add(&inter(&x)?)?)
}
