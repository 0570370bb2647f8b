//! Trains a toy RE-SepFormer on synthetic two-speaker mixtures and prints
//! the held-out SI-SNR improvement curve.
//!
//! `cargo run --release --example train_toy -- [steps] [seed]`

use resepformer::data::MixSpec;
use resepformer::train::{metrics_csv, train, TrainConfig};
use resepformer::{ModelConfig, SeparationModel};

fn main() -> resepformer::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

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
        steps,
        seed,
        eval_every: 25,
        ..TrainConfig::default()
    };

    let model = SeparationModel::new(config, seed)?;
    println!("{} parameters, {steps} steps", model.num_params());
    let start = std::time::Instant::now();
    let report = train(model, &spec, &train_config)?;
    print!("{}", metrics_csv(&report.metrics));
    println!("finished in {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
