//! Separates a synthetic mixture with a briefly trained toy model, writes
//! the mixture and both estimates as WAV files and scores them.
//!
//! `cargo run --release --example separate -- [output_dir]`

use std::path::PathBuf;

use resepformer::data::{write_wav, MixSpec};
use resepformer::objective::{pit_loss, si_snr_improvement};
use resepformer::train::{make_example, train, TrainConfig};
use resepformer::{ModelConfig, SeparationModel};

fn main() -> resepformer::Result<()> {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("resep_separate"));
    std::fs::create_dir_all(&dir)?;

    let config = ModelConfig {
        encoder_filters: 32,
        chunk_size: 16,
        heads: 4,
        intra_layers: 2,
        memory_layers: 2,
        d_ff_intra: 64,
        d_ff_memory: 64,
        ..ModelConfig::default()
    };
    let spec = MixSpec {
        duration_s: 0.5,
        ..MixSpec::default()
    };
    let train_config = TrainConfig {
        steps: 150,
        eval_every: 50,
        ..TrainConfig::default()
    };
    let model = train(SeparationModel::new(config, 0)?, &spec, &train_config)?.model;

    let example = make_example(&spec, 12345)?;
    let targets = example.scaled_sources()?;
    let sources = model.frozen().separate(&example.mixture)?.sources;
    let pit = pit_loss(&sources, &targets)?;

    write_wav(dir.join("mixture.wav"), &example.mixture.to_vec(), spec.sample_rate)?;
    for (k, &est) in pit.best_permutation.iter().enumerate() {
        let gain = si_snr_improvement(&sources[est], &targets[k], &example.mixture)?;
        let path = dir.join(format!("source_{}.wav", k + 1));
        write_wav(&path, &sources[est].to_vec(), spec.sample_rate)?;
        println!("target {} ← estimate {est}: SI-SNRi {gain:.2} dB → {}", k + 1, path.display());
    }
    Ok(())
}
