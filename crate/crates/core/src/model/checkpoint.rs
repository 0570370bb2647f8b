//! Binary checkpoints. All integers and values are little-endian:
//!
//! ```text
//! magic    8 bytes  "RESEPCKP"
//! version  u32      1
//! config   u32 length, then that many bytes of ModelConfig JSON
//! count    u32      number of tensors, in registration order
//! tensor   u32 name length, UTF-8 name, u32 rank, rank × u64 dims,
//!          product(dims) × f64 values
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ModelConfig, SeparationModel};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RESEPCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A named tensor as stored on disk.
pub type StoredTensor = (String, Vec<usize>, Vec<f64>);

pub fn save_checkpoint<S: Scalar>(path: impl AsRef<Path>, model: &SeparationModel<S>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let config = serde_json::to_vec(model.config())?;
    write_len(&mut w, config.len())?;
    w.write_all(&config)?;
    write_len(&mut w, model.params.len())?;
    for (name, t) in model.params.iter() {
        write_len(&mut w, name.len())?;
        w.write_all(name.as_bytes())?;
        write_len(&mut w, t.rank())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.to_f64_vec() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_len(w: &mut impl Write, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::Checkpoint(format!("length {n} exceeds u32")))?;
    w.write_all(&n.to_le_bytes())?;
    Ok(())
}

/// Reads the stored configuration and tensors without building a model.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(ModelConfig, Vec<StoredTensor>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = read_u32(&mut r, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let config_len = read_u32(&mut r, "config length")? as usize;
    let mut config = vec![0u8; config_len];
    read_exact(&mut r, &mut config, "config")?;
    let config: ModelConfig = serde_json::from_slice(&config)?;
    let count = read_u32(&mut r, "tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name_len = read_u32(&mut r, "name length")? as usize;
        let mut name = vec![0u8; name_len];
        read_exact(&mut r, &mut name, "name")?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = read_u32(&mut r, "rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            read_exact(&mut r, &mut b, "dims")?;
            dims.push(u64::from_le_bytes(b) as usize);
        }
        let n: usize = dims.iter().product();
        let mut raw = vec![0u8; n * 8];
        read_exact(&mut r, &mut raw, &name)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push((name, dims, values));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok((config, tensors))
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Checkpoint(format!("truncated while reading {what}: {e}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

/// Builds the stored model in precision `S`.
pub fn load_checkpoint<S: Scalar>(path: impl AsRef<Path>) -> Result<SeparationModel<S>> {
    let (config, tensors) = read_checkpoint(path)?;
    let mut model = SeparationModel::new(config, 0)?;
    model.load_params(&tensors)?;
    Ok(model)
}

impl<S: Scalar> SeparationModel<S> {
    /// Replaces every parameter by the stored tensor of the same name. Any
    /// missing, unexpected or reshaped name fails with the full diff.
    pub fn load_params(&mut self, tensors: &[StoredTensor]) -> Result<()> {
        let mut diff = Vec::new();
        for (name, dims, _) in tensors {
            match self.params.by_name(name) {
                None => diff.push(format!("  + {name} {dims:?} (not in model)")),
                Some(t) if t.shape() != dims.as_slice() => {
                    diff.push(format!("  ~ {name}: checkpoint {dims:?}, model {:?}", t.shape()))
                }
                Some(_) => {}
            }
        }
        for (name, t) in self.params.iter() {
            if !tensors.iter().any(|(n, _, _)| n == name) {
                diff.push(format!("  - {name} {:?} (missing from checkpoint)", t.shape()));
            }
        }
        if !diff.is_empty() {
            return Err(Error::ParamMismatch(diff.join("\n")));
        }
        for (name, dims, values) in tensors {
            self.params.set_by_name(name, Tensor::from_f64(dims, values)?)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            encoder_filters: 8,
            chunk_size: 4,
            heads: 2,
            intra_layers: 1,
            memory_layers: 1,
            d_ff_intra: 8,
            d_ff_memory: 8,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = SeparationModel::<f64>::new(tiny(), 3).unwrap();
        save_checkpoint(&path, &model).unwrap();
        let back: SeparationModel<f64> = load_checkpoint(&path).unwrap();
        assert_eq!(back.config(), model.config());
        for ((na, a), (nb, b)) in model.params.iter().zip(back.params.iter()) {
            assert_eq!(na, nb);
            assert_eq!(a.to_vec(), b.to_vec());
        }
    }

    #[test]
    fn mismatch_names_the_parameters() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &SeparationModel::<f64>::new(tiny(), 3).unwrap()).unwrap();
        let (_, tensors) = read_checkpoint(&path).unwrap();
        let wider = ModelConfig {
            d_ff_intra: 16,
            ..tiny()
        };
        let mut other = SeparationModel::<f64>::new(wider, 0).unwrap();
        let err = other.load_params(&tensors).unwrap_err().to_string();
        assert!(err.contains("masknet.blocks.0.intra1.layers.0.ff.0.weight"), "{err}");
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"RIFF....").unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
