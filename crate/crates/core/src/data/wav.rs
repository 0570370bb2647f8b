//! 16-bit PCM mono RIFF/WAVE reading and writing.

use std::path::Path;

use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum WavError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a RIFF file (header starts with {0:?})")]
    NotRiff([u8; 4]),
    #[error("RIFF form type is {0:?}, expected \"WAVE\"")]
    NotWave([u8; 4]),
    #[error("missing `{0}` chunk")]
    MissingChunk(&'static str),
    #[error("unsupported {field} = {value} (only 16-bit PCM mono is supported)")]
    Unsupported { field: &'static str, value: u32 },
    #[error("`{chunk}` chunk is truncated")]
    Truncated { chunk: String },
}

/// Decoded audio, samples scaled by `1/32768` into `[−1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavAudio {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl WavAudio {
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_f64(&[self.samples.len()], &self.samples).expect("1-D shape matches")
    }
}

/// What the writer had to change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WriteReport {
    /// Samples with `|x| > 1` that were saturated.
    pub clipped: usize,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<WavAudio, WavError> {
    decode_wav(&std::fs::read(path)?)
}

pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<WriteReport, WavError> {
    let (bytes, report) = encode_wav(samples, sample_rate);
    std::fs::write(path, bytes)?;
    Ok(report)
}

pub fn decode_wav(bytes: &[u8]) -> Result<WavAudio, WavError> {
    let tag = |at: usize| -> Result<[u8; 4], WavError> {
        bytes
            .get(at..at + 4)
            .map(|s| s.try_into().expect("4 bytes"))
            .ok_or(WavError::Truncated { chunk: "RIFF".into() })
    };
    let riff = tag(0)?;
    if &riff != b"RIFF" {
        return Err(WavError::NotRiff(riff));
    }
    let form = tag(8)?;
    if &form != b"WAVE" {
        return Err(WavError::NotWave(form));
    }

    let mut sample_rate = None;
    let mut data: Option<&[u8]> = None;
    let mut at = 12;
    while at + 8 <= bytes.len() {
        let id = tag(at)?;
        let size = u32::from_le_bytes(bytes[at + 4..at + 8].try_into().expect("4 bytes")) as usize;
        let name = String::from_utf8_lossy(&id).into_owned();
        let body = bytes
            .get(at + 8..at + 8 + size)
            .ok_or(WavError::Truncated { chunk: name })?;
        match &id {
            b"fmt " => sample_rate = Some(parse_fmt(body)?),
            b"data" => data = Some(body),
            _ => {}
        }
        at += 8 + size + size % 2;
    }
    let sample_rate = sample_rate.ok_or(WavError::MissingChunk("fmt "))?;
    let data = data.ok_or(WavError::MissingChunk("data"))?;
    if data.len() % 2 != 0 {
        return Err(WavError::Truncated { chunk: "data".into() });
    }
    let samples = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
        .collect();
    Ok(WavAudio { samples, sample_rate })
}

fn parse_fmt(body: &[u8]) -> Result<u32, WavError> {
    if body.len() < 16 {
        return Err(WavError::Truncated { chunk: "fmt ".into() });
    }
    let u16_at = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]) as u32;
    let format = u16_at(0);
    if format != 1 {
        return Err(WavError::Unsupported {
            field: "fmt.audio_format",
            value: format,
        });
    }
    let channels = u16_at(2);
    if channels != 1 {
        return Err(WavError::Unsupported {
            field: "fmt.num_channels",
            value: channels,
        });
    }
    let bits = u16_at(14);
    if bits != 16 {
        return Err(WavError::Unsupported {
            field: "fmt.bits_per_sample",
            value: bits,
        });
    }
    let block_align = u16_at(12);
    if block_align != 2 {
        return Err(WavError::Unsupported {
            field: "fmt.block_align",
            value: block_align,
        });
    }
    Ok(u32::from_le_bytes(body[4..8].try_into().expect("4 bytes")))
}

/// Canonical 44-byte header followed by the samples, rounded to the
/// nearest 16-bit step and saturated.
pub fn encode_wav(samples: &[f64], sample_rate: u32) -> (Vec<u8>, WriteReport) {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + samples.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    let mut report = WriteReport::default();
    for &x in samples {
        if x.abs() > 1.0 || x.is_nan() {
            report.clipped += 1;
        }
        let q = (x * 32768.0).round().clamp(-32768.0, 32767.0);
        let q = if q.is_nan() { 0 } else { q as i16 };
        out.extend_from_slice(&q.to_le_bytes());
    }
    (out, report)
}
