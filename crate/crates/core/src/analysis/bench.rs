//! Inference scaling benchmark: wall time and peak tracked allocation
//! versus input length.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cost::count_costs_samples;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, SeparationModel};
use crate::tensor::{instrument, Scalar, Tensor, TensorError};

pub const CSV_HEADER: &str = "variant,length_s,wall_time_s,peak_mem_bytes,params,macs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::Config(format!("unknown precision `{other}` (f32 or f64)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchVariant {
    pub name: String,
    pub config: ModelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchOptions {
    pub precision: Precision,
    /// Timed runs per grid point, after one untimed warmup.
    pub repetitions: usize,
    pub sample_rate: u32,
    /// Tracked-allocation ceiling; exceeding it records an OOM row.
    pub memory_limit_bytes: Option<u64>,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            precision: Precision::F32,
            repetitions: 5,
            sample_rate: 8000,
            memory_limit_bytes: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// Median wall time and the tracked high-water mark, which includes
    /// the resident parameters and input.
    Completed { wall_time_s: f64, peak_mem_bytes: u64 },
    OutOfMemory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub variant: String,
    pub length_s: f64,
    pub outcome: Outcome,
    pub params: u64,
    pub macs: u64,
    pub config_hash: u64,
}

impl BenchRecord {
    pub fn wall_time_s(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Completed { wall_time_s, .. } => Some(wall_time_s),
            Outcome::OutOfMemory => None,
        }
    }

    pub fn peak_mem_bytes(&self) -> Option<u64> {
        match self.outcome {
            Outcome::Completed { peak_mem_bytes, .. } => Some(peak_mem_bytes),
            Outcome::OutOfMemory => None,
        }
    }
}

/// Runs every variant at every grid length, sequentially, forward only.
pub fn run_bench(variants: &[BenchVariant], length_grid_s: &[f64], options: &BenchOptions) -> Result<Vec<BenchRecord>> {
    if options.repetitions == 0 {
        return Err(Error::Config("bench needs at least one repetition".into()));
    }
    if let Some(bad) = length_grid_s.iter().find(|&&l| !(l > 0.0)) {
        return Err(Error::Config(format!("bench lengths must be positive, got {bad}")));
    }
    let mut records = Vec::with_capacity(variants.len() * length_grid_s.len());
    for v in variants {
        let built = SeparationModel::<f64>::new(v.config.clone(), options.seed)?;
        match options.precision {
            Precision::F32 => bench_variant(&built.cast::<f32>()?.frozen(), v, length_grid_s, options, &mut records)?,
            Precision::F64 => bench_variant(&built.frozen(), v, length_grid_s, options, &mut records)?,
        }
    }
    Ok(records)
}

fn bench_variant<S: Scalar>(
    model: &SeparationModel<S>,
    variant: &BenchVariant,
    grid: &[f64],
    options: &BenchOptions,
    out: &mut Vec<BenchRecord>,
) -> Result<()> {
    for (i, &length_s) in grid.iter().enumerate() {
        let samples = (length_s * options.sample_rate as f64).round() as usize;
        let cost = count_costs_samples(&variant.config, samples)?;
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ (i as u64).wrapping_mul(0x9e37_79b9));
        let data: Vec<f64> = (0..samples).map(|_| rng.random_range(-0.5..0.5)).collect();
        let x = Tensor::<S>::new(&[samples], data.iter().map(|&v| S::from_f64_lossy(v)).collect())?;

        let outcome = time_forward(model, &x, options)?;
        out.push(BenchRecord {
            variant: variant.name.clone(),
            length_s,
            outcome,
            params: cost.total_params,
            macs: cost.total_macs,
            config_hash: variant.config.hash(),
        });
    }
    Ok(())
}

fn time_forward<S: Scalar>(model: &SeparationModel<S>, x: &Tensor<S>, options: &BenchOptions) -> Result<Outcome> {
    let previous = instrument::memory_limit();
    instrument::set_memory_limit(options.memory_limit_bytes);
    let result = (|| {
        let mut times = Vec::with_capacity(options.repetitions);
        let mut peak = 0;
        for run in 0..=options.repetitions {
            instrument::reset_peak();
            let start = Instant::now();
            let r = model.separate(x)?;
            let elapsed = start.elapsed().as_secs_f64();
            drop(r);
            peak = peak.max(instrument::peak_bytes());
            if run > 0 {
                times.push(elapsed);
            }
        }
        Ok::<_, Error>((median(&mut times), peak))
    })();
    instrument::set_memory_limit(previous);
    match result {
        Ok((wall_time_s, peak_mem_bytes)) => Ok(Outcome::Completed {
            wall_time_s,
            peak_mem_bytes,
        }),
        Err(Error::Tensor(TensorError::OutOfMemory { .. })) => Ok(Outcome::OutOfMemory),
        Err(e) => Err(e),
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// CSV with [`CSV_HEADER`]; OOM rows carry `oom` in both measured columns.
/// Config hashes follow as `# config_hash,<variant>,<hex>` lines.
pub fn to_csv(records: &[BenchRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        let (time, mem) = match r.outcome {
            Outcome::Completed {
                wall_time_s,
                peak_mem_bytes,
            } => (format!("{wall_time_s:e}"), peak_mem_bytes.to_string()),
            Outcome::OutOfMemory => ("oom".into(), "oom".into()),
        };
        let _ = writeln!(s, "{},{},{},{},{},{}", r.variant, r.length_s, time, mem, r.params, r.macs);
    }
    let mut seen = Vec::new();
    for r in records {
        if !seen.contains(&&r.variant) {
            seen.push(&r.variant);
            let _ = writeln!(s, "# config_hash,{},{:016x}", r.variant, r.config_hash);
        }
    }
    s
}

pub fn parse_csv(text: &str) -> Result<Vec<BenchRecord>> {
    let bad = |line: usize, why: &str| Error::Config(format!("bench CSV line {}: {why}", line + 1));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(bad(0, "missing header")),
    }
    let mut records = Vec::new();
    let mut hashes = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# config_hash,") {
            let (name, hex) = rest.rsplit_once(',').ok_or_else(|| bad(n, "malformed hash line"))?;
            let hash = u64::from_str_radix(hex.trim(), 16).map_err(|_| bad(n, "bad hash"))?;
            hashes.push((name.to_string(), hash));
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad(n, "expected 6 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, &format!("bad number `{s}`")));
        let int = |s: &str| s.parse::<u64>().map_err(|_| bad(n, &format!("bad integer `{s}`")));
        let outcome = if f[2] == "oom" {
            Outcome::OutOfMemory
        } else {
            Outcome::Completed {
                wall_time_s: num(f[2])?,
                peak_mem_bytes: int(f[3])?,
            }
        };
        records.push(BenchRecord {
            variant: f[0].to_string(),
            length_s: num(f[1])?,
            outcome,
            params: int(f[4])?,
            macs: int(f[5])?,
            config_hash: 0,
        });
    }
    for r in &mut records {
        if let Some((_, h)) = hashes.iter().find(|(name, _)| *name == r.variant) {
            r.config_hash = *h;
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn csv_rejects_missing_header() {
        assert!(parse_csv("a,b\n").is_err());
    }
}
