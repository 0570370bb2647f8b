//! Analytic parameter and multiply-accumulate accounting.
//!
//! Only multiplies inside matrix products and convolutions are counted;
//! softmax, normalization, activations, bias additions and positional
//! encodings are not.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chunking::ChunkLayout;
use crate::error::Result;
use crate::model::{ModelConfig, Variant};

/// One value per submodule. For the baseline, `intra1` holds the Intra
/// stacks, `memory_or_inter` the Inter stacks and `intra2` is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Breakdown {
    pub encoder: u64,
    pub intra1: u64,
    pub memory_or_inter: u64,
    pub intra2: u64,
    pub projections: u64,
    pub decoder: u64,
}

impl Breakdown {
    pub fn total(&self) -> u64 {
        self.encoder + self.intra1 + self.memory_or_inter + self.intra2 + self.projections + self.decoder
    }

    pub fn entries(&self) -> [(&'static str, u64); 6] {
        [
            ("encoder", self.encoder),
            ("intra1", self.intra1),
            ("memory_or_inter", self.memory_or_inter),
            ("intra2", self.intra2),
            ("projections", self.projections),
            ("decoder", self.decoder),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub variant: Variant,
    pub input_length_s: f64,
    pub sample_rate: u32,
    pub frames: usize,
    pub num_chunks: usize,
    pub total_params: u64,
    pub params: Breakdown,
    pub total_macs: u64,
    pub macs: Breakdown,
}

impl CostReport {
    pub fn macs_per_second(&self) -> f64 {
        self.total_macs as f64 / self.input_length_s
    }

    pub fn gmacs_per_second(&self) -> f64 {
        self.macs_per_second() / 1e9
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} | {:.2} s at {} Hz | T′ = {} frames, Nc = {} chunks",
            self.variant.name(),
            self.input_length_s,
            self.sample_rate,
            self.frames,
            self.num_chunks
        )?;
        writeln!(f, "{:<16} {:>14} {:>16}", "submodule", "params", "GMACs/s")?;
        for ((name, p), (_, m)) in self.params.entries().iter().zip(self.macs.entries()) {
            writeln!(f, "{name:<16} {p:>14} {:>16.4}", m as f64 / self.input_length_s / 1e9)?;
        }
        write!(
            f,
            "{:<16} {:>14} {:>16.4}",
            "total",
            self.total_params,
            self.gmacs_per_second()
        )
    }
}

/// MACs of `batch` independent sequences of length `len` through
/// `layers` Transformer layers of width `width`.
pub fn stack_macs(layers: usize, batch: usize, len: usize, width: usize, d_ff: usize) -> u64 {
    let (l, f, d) = (len as u64, width as u64, d_ff as u64);
    let attention = 4 * l * f * f + 2 * l * l * f;
    let feed_forward = 2 * l * f * d;
    (layers * batch) as u64 * (attention + feed_forward)
}

/// Parameters of one Transformer layer: four biased projections, two
/// norms and the feed-forward pair.
pub fn layer_params(width: usize, d_ff: usize) -> u64 {
    let (f, d) = (width as u64, d_ff as u64);
    4 * (f * f + f) + 4 * f + (f * d + d) + (d * f + f)
}

/// Layers plus the stack's final norm.
pub fn stack_params(layers: usize, width: usize, d_ff: usize) -> u64 {
    layers as u64 * layer_params(width, d_ff) + 2 * width as u64
}

/// Costs for an input of `input_length_s` seconds at 8 kHz.
pub fn count_costs(config: &ModelConfig, input_length_s: f64) -> Result<CostReport> {
    count_costs_at(config, input_length_s, 8000)
}

pub fn count_costs_at(config: &ModelConfig, input_length_s: f64, sample_rate: u32) -> Result<CostReport> {
    let samples = (input_length_s * sample_rate as f64).round() as usize;
    let mut report = count_costs_samples(config, samples)?;
    report.input_length_s = input_length_s;
    report.sample_rate = sample_rate;
    Ok(report)
}

/// Costs for an input of exactly `samples` samples; the reported length
/// assumes 8 kHz.
pub fn count_costs_samples(config: &ModelConfig, samples: usize) -> Result<CostReport> {
    config.validate()?;
    let c = config;
    let (f, k, ns) = (c.encoder_filters as u64, c.kernel_size as u64, c.num_sources as u64);
    let frames = c.encoder_frames(samples)?;
    let layout = ChunkLayout::new(frames, c.chunk_size, c.effective_overlap())?;
    let (cs, nc) = (layout.chunk_size, layout.num_chunks);
    let blocks = c.num_blocks as u64;

    let intra = stack_macs(c.intra_layers, nc, cs, c.encoder_filters, c.d_ff_intra) * blocks;
    let intra_p = stack_params(c.intra_layers, c.encoder_filters, c.d_ff_intra) * blocks;
    let other_p = stack_params(c.memory_layers, c.encoder_filters, c.d_ff_memory) * blocks;
    let (macs_mid, params_mid) = match c.variant {
        Variant::ReSepformer => {
            let memory = stack_macs(c.memory_layers, 1, nc, c.encoder_filters, c.d_ff_memory) * blocks;
            ((intra, memory, intra), (intra_p, other_p, intra_p))
        }
        Variant::SepformerBaseline => {
            let inter = stack_macs(c.memory_layers, cs, nc, c.encoder_filters, c.d_ff_memory) * blocks;
            ((intra, inter, 0), (intra_p, other_p, 0))
        }
    };
    let macs = Breakdown {
        encoder: frames as u64 * f * k,
        intra1: macs_mid.0,
        memory_or_inter: macs_mid.1,
        intra2: macs_mid.2,
        projections: (cs * nc) as u64 * f * ns * f,
        decoder: ns * frames as u64 * f * k,
    };
    let params = Breakdown {
        encoder: f * k + f,
        intra1: params_mid.0,
        memory_or_inter: params_mid.1,
        intra2: params_mid.2,
        projections: 1 + f * ns * f + ns * f,
        decoder: f * k + 1,
    };
    Ok(CostReport {
        variant: c.variant,
        input_length_s: samples as f64 / 8000.0,
        sample_rate: 8000,
        frames,
        num_chunks: nc,
        total_params: params.total(),
        params,
        total_macs: macs.total(),
        macs,
    })
}
