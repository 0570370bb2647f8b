//! Chunking of a latent sequence `[T′, F]` into `[C, Nc, F]` and its exact
//! inverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Overlap {
    /// Non-overlapping chunks, hop `C`.
    #[serde(rename = "0")]
    None,
    /// 50% overlap, hop `C / 2`.
    #[serde(rename = "0.5")]
    Half,
}

impl Overlap {
    pub fn ratio(self) -> f64 {
        match self {
            Overlap::None => 0.0,
            Overlap::Half => 0.5,
        }
    }

    pub fn from_ratio(ratio: f64) -> Result<Self> {
        if ratio == 0.0 {
            Ok(Overlap::None)
        } else if ratio == 0.5 {
            Ok(Overlap::Half)
        } else {
            Err(Error::Config(format!("overlap ratio must be 0 or 0.5, got {ratio}")))
        }
    }

    pub fn hop(self, chunk_size: usize) -> usize {
        match self {
            Overlap::None => chunk_size,
            Overlap::Half => chunk_size / 2,
        }
    }
}

/// Chunk geometry for a sequence of `frames` latent frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkLayout {
    pub chunk_size: usize,
    pub hop: usize,
    pub num_chunks: usize,
    pub pad_len: usize,
}

impl ChunkLayout {
    pub fn new(frames: usize, chunk_size: usize, overlap: Overlap) -> Result<Self> {
        if chunk_size == 0 {
            return Err(Error::Config("chunk size must be ≥ 1".into()));
        }
        if overlap == Overlap::Half && chunk_size % 2 != 0 {
            return Err(Error::Config(format!(
                "50% overlap needs an even chunk size, got {chunk_size}"
            )));
        }
        if frames == 0 {
            return Err(Error::Degenerate("cannot chunk an empty sequence".into()));
        }
        let hop = overlap.hop(chunk_size);
        let num_chunks = match overlap {
            Overlap::None => frames.div_ceil(chunk_size),
            Overlap::Half => frames.saturating_sub(chunk_size).div_ceil(hop) + 1,
        };
        let padded = (num_chunks - 1) * hop + chunk_size;
        Ok(ChunkLayout {
            chunk_size,
            hop,
            num_chunks,
            pad_len: padded - frames,
        })
    }

    pub fn padded_len(&self) -> usize {
        (self.num_chunks - 1) * self.hop + self.chunk_size
    }
}

/// Chunked latent `data: [C, Nc, F]` with the bookkeeping needed to undo
/// the chunking.
#[derive(Debug, Clone)]
pub struct ChunkedLatent<S: Scalar = f64> {
    pub data: Tensor<S>,
    pub chunk_size: usize,
    pub overlap: Overlap,
    pub original_len: usize,
    pub pad_len: usize,
}

impl<S: Scalar> ChunkedLatent<S> {
    pub fn num_chunks(&self) -> usize {
        self.data.shape().get(1).copied().unwrap_or(0)
    }

    pub fn layout(&self) -> Result<ChunkLayout> {
        ChunkLayout::new(self.original_len, self.chunk_size, self.overlap)
    }

    /// Same bookkeeping around new data, e.g. a block's output. The new
    /// tensor may change the trailing feature width.
    pub fn with_data(&self, data: Tensor<S>) -> Result<Self> {
        let out = ChunkedLatent {
            data,
            chunk_size: self.chunk_size,
            overlap: self.overlap,
            original_len: self.original_len,
            pad_len: self.pad_len,
        };
        out.validate()?;
        Ok(out)
    }

    fn validate(&self) -> Result<ChunkLayout> {
        let layout = self.layout()?;
        let shape = self.data.shape();
        if shape.len() != 3
            || shape[0] != self.chunk_size
            || shape[1] != layout.num_chunks
            || self.pad_len != layout.pad_len
        {
            return Err(Error::Config(format!(
                "chunk metadata (C={}, Nc={}, pad={}) does not match data {:?} (pad recorded {})",
                self.chunk_size, layout.num_chunks, layout.pad_len, shape, self.pad_len
            )));
        }
        Ok(layout)
    }
}

/// Tail-pads `h: [T′, F]` with zeros and cuts it into chunks; chunk `j`
/// covers frames `j·hop .. j·hop + C`.
pub fn chunk<S: Scalar>(h: &Tensor<S>, chunk_size: usize, overlap: Overlap) -> Result<ChunkedLatent<S>> {
    if h.rank() != 2 {
        return Err(Error::Config(format!("chunk expects [frames, features], got {:?}", h.shape())));
    }
    let frames = h.shape()[0];
    let layout = ChunkLayout::new(frames, chunk_size, overlap)?;
    let data = h
        .pad_rows(layout.pad_len)?
        .unfold_rows(chunk_size, layout.hop)?
        .permute(&[1, 0, 2])?;
    Ok(ChunkedLatent {
        data,
        chunk_size,
        overlap,
        original_len: frames,
        pad_len: layout.pad_len,
    })
}

/// Inverse of [`chunk`]: concatenation (no overlap) or overlap-add with
/// doubly-covered frames halved (50% overlap), then the pad is trimmed.
pub fn reconstruct<S: Scalar>(ch: &ChunkedLatent<S>) -> Result<Tensor<S>> {
    let layout = ch.validate()?;
    let features = ch.data.shape()[2];
    let padded = layout.padded_len();
    let mut joined = ch.data.permute(&[1, 0, 2])?.fold_rows(layout.hop, padded)?;
    if ch.overlap == Overlap::Half && layout.num_chunks > 1 {
        let weights = coverage_weights::<S>(&layout, features)?;
        joined = joined.mul(&weights)?;
    }
    Ok(joined.narrow_rows(0, ch.original_len)?)
}

fn coverage_weights<S: Scalar>(layout: &ChunkLayout, features: usize) -> Result<Tensor<S>> {
    let padded = layout.padded_len();
    let mut count = vec![0u32; padded];
    for j in 0..layout.num_chunks {
        let start = j * layout.hop;
        count[start..start + layout.chunk_size].iter_mut().for_each(|c| *c += 1);
    }
    let mut w = Vec::with_capacity(padded * features);
    for c in count {
        let v = S::one() / S::from_u32(c).expect("small count");
        w.extend(std::iter::repeat_n(v, features));
    }
    Ok(Tensor::new(&[padded, features], w)?)
}
