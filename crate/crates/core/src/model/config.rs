use serde::{Deserialize, Serialize};

use crate::chunking::Overlap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Non-overlapping chunks, chunk summaries through a Memory Transformer.
    ReSepformer,
    /// Overlapping chunks, dual-path Intra/Inter Transformers.
    SepformerBaseline,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::ReSepformer => "re_sepformer",
            Variant::SepformerBaseline => "sepformer_baseline",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "re_sepformer" => Ok(Variant::ReSepformer),
            "sepformer_baseline" => Ok(Variant::SepformerBaseline),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected re_sepformer or sepformer_baseline)"
            ))),
        }
    }
}

/// Architecture hyperparameters.
///
/// For the baseline, `intra_layers`/`d_ff_intra` size the Intra stacks and
/// `memory_layers`/`d_ff_memory` size the Inter stacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder_filters: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub chunk_size: usize,
    pub num_sources: usize,
    pub heads: usize,
    pub intra_layers: usize,
    pub memory_layers: usize,
    pub d_ff_intra: usize,
    pub d_ff_memory: usize,
    pub num_blocks: usize,
    pub causal: bool,
    pub variant: Variant,
    /// Chunk overlap; `None` picks the variant's own (0 for RE-SepFormer,
    /// 0.5 for the baseline).
    pub overlap: Option<Overlap>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder_filters: 128,
            kernel_size: 16,
            stride: 8,
            chunk_size: 150,
            num_sources: 2,
            heads: 8,
            intra_layers: 8,
            memory_layers: 8,
            d_ff_intra: 1024,
            d_ff_memory: 1024,
            num_blocks: 1,
            causal: false,
            variant: Variant::ReSepformer,
            overlap: None,
        }
    }
}

impl ModelConfig {
    /// Dual-path baseline at its usual full size: 256 filters, chunks of
    /// 250 frames at 50% overlap, two blocks of 8 + 8 layers.
    pub fn sepformer() -> Self {
        ModelConfig {
            encoder_filters: 256,
            chunk_size: 250,
            num_blocks: 2,
            variant: Variant::SepformerBaseline,
            overlap: Some(Overlap::Half),
            ..ModelConfig::default()
        }
    }

    /// Lighter baseline used for scaling runs: 128 filters and 512-wide
    /// feed-forward layers.
    pub fn sepformer_light() -> Self {
        ModelConfig {
            encoder_filters: 128,
            d_ff_intra: 512,
            d_ff_memory: 512,
            ..ModelConfig::sepformer()
        }
    }

    pub fn effective_overlap(&self) -> Overlap {
        self.overlap.unwrap_or(match self.variant {
            Variant::ReSepformer => Overlap::None,
            Variant::SepformerBaseline => Overlap::Half,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("encoder_filters", self.encoder_filters),
            ("kernel_size", self.kernel_size),
            ("stride", self.stride),
            ("chunk_size", self.chunk_size),
            ("num_sources", self.num_sources),
            ("heads", self.heads),
            ("intra_layers", self.intra_layers),
            ("memory_layers", self.memory_layers),
            ("d_ff_intra", self.d_ff_intra),
            ("d_ff_memory", self.d_ff_memory),
            ("num_blocks", self.num_blocks),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{name}` must be ≥ 1")));
        }
        if self.stride > self.kernel_size {
            return Err(Error::Config(format!(
                "stride {} exceeds kernel size {}",
                self.stride, self.kernel_size
            )));
        }
        if self.encoder_filters % self.heads != 0 {
            return Err(Error::Config(format!(
                "encoder_filters {} is not divisible by heads {}",
                self.encoder_filters, self.heads
            )));
        }
        if self.encoder_filters % 2 != 0 {
            return Err(Error::Config(format!(
                "encoder_filters {} must be even for sinusoidal positions",
                self.encoder_filters
            )));
        }
        if self.effective_overlap() == Overlap::Half && self.chunk_size % 2 != 0 {
            return Err(Error::Config(format!(
                "chunk_size {} must be even with 50% overlap",
                self.chunk_size
            )));
        }
        Ok(())
    }

    /// Encoder frames for `samples` input samples, counting the tail
    /// padding that completes the last frame.
    pub fn encoder_frames(&self, samples: usize) -> Result<usize> {
        if samples < self.kernel_size {
            return Err(Error::InputTooShort {
                len: samples,
                kernel: self.kernel_size,
            });
        }
        Ok((samples - self.kernel_size).div_ceil(self.stride) + 1)
    }

    /// Stable 64-bit FNV-1a hash of the canonical JSON form.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serializes");
        json.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}
