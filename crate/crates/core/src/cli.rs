//! Command-line front end: `train-toy`, `separate`, `count`, `bench`.
//!
//! Every command reads an optional JSON [`RunConfig`] (unknown keys are
//! rejected, missing keys take the defaults) and accepts
//! `--set dotted.key=value` overrides. The output directory comes from
//! `output.dir`, or from `RESEP_OUTPUT_DIR` when that is set.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{count_costs, run_bench, to_csv, BenchOptions, BenchVariant, CostReport, Outcome};
use crate::chunking::Overlap;
use crate::data::{read_wav, write_wav, MixSpec};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, read_checkpoint, save_checkpoint, ModelConfig, SeparationModel, Variant};
use crate::train::{example_seed, metrics_csv, train, TrainConfig};

pub const OUTPUT_DIR_ENV: &str = "RESEP_OUTPUT_DIR";

/// Published parameter count of the default configuration, and the band
/// accepted around it.
pub const REFERENCE_PARAMS: f64 = 8.0e6;
pub const PARAM_TOLERANCE: f64 = 0.20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// The single source of randomness: initialization, training stream
    /// and bench inputs all derive from it.
    pub seed: u64,
    pub model: ModelConfig,
    pub mix: MixSpec,
    pub train: TrainConfig,
    pub count: CountSettings,
    pub bench: BenchSettings,
    pub output: OutputPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            model: ModelConfig::default(),
            mix: MixSpec::default(),
            train: TrainConfig::default(),
            count: CountSettings::default(),
            bench: BenchSettings::default(),
            output: OutputPaths::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountSettings {
    pub input_length_s: f64,
}

impl Default for CountSettings {
    fn default() -> Self {
        CountSettings { input_length_s: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub variants: Vec<BenchVariant>,
    pub lengths_s: Vec<f64>,
    pub options: BenchOptions,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            variants: vec![
                BenchVariant {
                    name: "re_sepformer".into(),
                    config: ModelConfig::default(),
                },
                BenchVariant {
                    name: "sepformer_light".into(),
                    config: ModelConfig::sepformer_light(),
                },
            ],
            lengths_s: vec![4.0, 16.0, 64.0],
            options: BenchOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub checkpoint: String,
    pub metrics: String,
    pub bench_csv: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            dir: PathBuf::from("runs"),
            checkpoint: "model.ckpt".into(),
            metrics: "metrics.csv".into(),
            bench_csv: "bench.csv".into(),
        }
    }
}

impl RunConfig {
    /// Defaults, then the file (if any), then each `key=value` override.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let base = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        let mut value = serde_json::to_value(base)?;
        for item in overrides {
            apply_override(&mut value, item)?;
        }
        let mut config: RunConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        config.train.seed = example_seed(config.seed, u64::MAX);
        config.bench.options.seed = config.seed;
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            config.output.dir = PathBuf::from(dir);
        }
        config.model.validate()?;
        config.mix.validate()?;
        config.train.validate()?;
        Ok(config)
    }

    pub fn output_file(&self, name: &str) -> PathBuf {
        self.output.dir.join(name)
    }
}

/// Sets `a.b.c` in a JSON tree. The key must already exist; the value is
/// parsed as JSON and falls back to a plain string.
pub fn apply_override(root: &mut serde_json::Value, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
    let mut node = root;
    for part in key.split('.') {
        node = node
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
    }
    *node = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    Ok(())
}

#[derive(Parser, Debug)]
#[command(name = "resep", version, about = "Chunked Transformer speech separation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set model.causal=true`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a small model on synthetic mixtures; writes a checkpoint and metrics CSV.
    TrainToy {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Separate a mono 16-bit WAV into one file per source.
    Separate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Outputs are written to `<prefix>_1.wav` … `<prefix>_Ns.wav`.
        #[arg(long)]
        out_prefix: PathBuf,
        /// Expected model configuration; must match the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print parameter and MACs accounting.
    Count {
        #[command(flatten)]
        config: ConfigArgs,
        /// Switch the variant; without a config file the baseline uses its full-size preset.
        #[arg(long)]
        variant: Option<Variant>,
        /// Chunk overlap ratio, 0 or 0.5.
        #[arg(long)]
        overlap: Option<f64>,
        /// Input length in seconds.
        #[arg(long)]
        length_s: Option<f64>,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Time inference across input lengths and write a CSV.
    Bench {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Exit code for a failed command: 2 for numeric failures, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFinite { .. } | Error::Tensor(_) | Error::Degenerate(_) => 2,
        _ => 1,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::TrainToy { config } => {
            let run = RunConfig::load(config.config.as_deref(), &config.set)?;
            cmd_train_toy(&run)
        }
        Command::Separate {
            checkpoint,
            input,
            out_prefix,
            config,
        } => {
            let expected = match config {
                Some(p) => Some(RunConfig::load(Some(&p), &[])?.model),
                None => None,
            };
            let written = cmd_separate(&checkpoint, &input, &out_prefix, expected.as_ref())?;
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Count {
            config,
            variant,
            overlap,
            length_s,
            json,
        } => {
            let mut run = RunConfig::load(config.config.as_deref(), &config.set)?;
            if let Some(v) = variant {
                if config.config.is_none() && v == Variant::SepformerBaseline {
                    run.model = ModelConfig::sepformer();
                }
                run.model.variant = v;
            }
            if let Some(r) = overlap {
                run.model.overlap = Some(Overlap::from_ratio(r)?);
            }
            let length = length_s.unwrap_or(run.count.input_length_s);
            print!("{}", cmd_count(&run.model, length, json)?);
            Ok(())
        }
        Command::Bench { config } => {
            let run = RunConfig::load(config.config.as_deref(), &config.set)?;
            let csv = cmd_bench(&run)?;
            print!("{csv}");
            Ok(())
        }
    }
}

/// Trains, then writes the checkpoint and metrics log into the output
/// directory.
pub fn cmd_train_toy(run: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&run.output.dir)?;
    let model = SeparationModel::new(run.model.clone(), run.seed)?;
    let report = train(model, &run.mix, &run.train)?;
    save_checkpoint(run.output_file(&run.output.checkpoint), &report.model)?;
    std::fs::write(run.output_file(&run.output.metrics), metrics_csv(&report.metrics))?;
    if let Some(last) = report.metrics.last() {
        println!(
            "trained {} steps: loss {:.3}, held-out SI-SNRi {:.2} dB → {}",
            last.step,
            last.loss,
            last.heldout_si_snri_db,
            run.output.dir.display()
        );
    }
    Ok(())
}

/// Path of the `k`-th (1-based) output for `prefix`.
pub fn output_path(prefix: &Path, k: usize) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!("_{k}.wav"));
    PathBuf::from(name)
}

pub fn cmd_separate(
    checkpoint: &Path,
    input: &Path,
    out_prefix: &Path,
    expected: Option<&ModelConfig>,
) -> Result<Vec<PathBuf>> {
    let model: SeparationModel = match expected {
        None => load_checkpoint(checkpoint)?,
        Some(config) => {
            let (_, tensors) = read_checkpoint(checkpoint)?;
            let mut model = SeparationModel::new(config.clone(), 0)?;
            model.load_params(&tensors)?;
            model
        }
    };
    let audio = read_wav(input)?;
    let result = model.frozen().separate(&audio.to_tensor())?;
    let mut written = Vec::with_capacity(result.sources.len());
    for (k, source) in result.sources.iter().enumerate() {
        let path = output_path(out_prefix, k + 1);
        let report = write_wav(&path, &source.to_vec(), audio.sample_rate)?;
        if report.clipped > 0 {
            eprintln!("warning: {} samples clipped in {}", report.clipped, path.display());
        }
        written.push(path);
    }
    Ok(written)
}

/// Returns the cost table (or JSON), the parameter band for the
/// RE-SepFormer and, for the baseline, the 50%/0% overlap MACs ratio.
pub fn cmd_count(config: &ModelConfig, input_length_s: f64, json: bool) -> Result<String> {
    let report = count_costs(config, input_length_s)?;
    if json {
        return Ok(serde_json::to_string_pretty(&report)? + "\n");
    }
    let mut out = format!("{report}\n");
    if config.variant == Variant::ReSepformer {
        out.push_str(&param_band_line(&report));
    } else {
        let ratio = overlap_ratio(config, input_length_s)?;
        out.push_str(&format!(
            "MACs ratio overlap 0.5 / overlap 0: {ratio:.3} (accepted band [2.0, 3.0])\n"
        ));
    }
    Ok(out)
}

pub fn param_band_line(report: &CostReport) -> String {
    let deviation = report.total_params as f64 / REFERENCE_PARAMS - 1.0;
    format!(
        "params {:.3}M vs reference {:.1}M: {:+.2}% (band ±{:.0}%: {:.1}M–{:.1}M)\n",
        report.total_params as f64 / 1e6,
        REFERENCE_PARAMS / 1e6,
        deviation * 100.0,
        PARAM_TOLERANCE * 100.0,
        REFERENCE_PARAMS * (1.0 - PARAM_TOLERANCE) / 1e6,
        REFERENCE_PARAMS * (1.0 + PARAM_TOLERANCE) / 1e6,
    )
}

/// `MACs(overlap 0.5) / MACs(overlap 0)` for `config`.
pub fn overlap_ratio(config: &ModelConfig, input_length_s: f64) -> Result<f64> {
    let at = |overlap| {
        let c = ModelConfig {
            overlap: Some(overlap),
            ..config.clone()
        };
        count_costs(&c, input_length_s).map(|r| r.total_macs as f64)
    };
    Ok(at(Overlap::Half)? / at(Overlap::None)?)
}

/// Runs the configured bench, writes the CSV into the output directory and
/// returns it.
pub fn cmd_bench(run: &RunConfig) -> Result<String> {
    let records = run_bench(&run.bench.variants, &run.bench.lengths_s, &run.bench.options)?;
    let csv = to_csv(&records);
    std::fs::create_dir_all(&run.output.dir)?;
    std::fs::write(run.output_file(&run.output.bench_csv), &csv)?;
    for r in &records {
        match r.outcome {
            Outcome::Completed {
                wall_time_s,
                peak_mem_bytes,
            } => eprintln!(
                "{:<18} {:>6.1} s  {:>9.3} s  {:>8.1} MiB",
                r.variant,
                r.length_s,
                wall_time_s,
                peak_mem_bytes as f64 / (1 << 20) as f64
            ),
            Outcome::OutOfMemory => eprintln!("{:<18} {:>6.1} s  out of memory", r.variant, r.length_s),
        }
    }
    Ok(csv)
}
