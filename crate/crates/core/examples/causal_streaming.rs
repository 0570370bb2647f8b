//! A causal model's outputs for finished chunks do not move when later
//! samples change; the non-causal model's do.

use resepformer::{ModelConfig, SeparationModel, Tensor};

fn max_prefix_change(causal: bool) -> resepformer::Result<f64> {
    let config = ModelConfig {
        encoder_filters: 16,
        chunk_size: 8,
        heads: 2,
        intra_layers: 1,
        memory_layers: 1,
        d_ff_intra: 32,
        d_ff_memory: 32,
        causal,
        ..ModelConfig::default()
    };
    let model = SeparationModel::<f64>::new(config.clone(), 3)?.frozen();
    let samples = 800;
    let signal: Vec<f64> = (0..samples).map(|n| (n as f64 * 0.05).sin() + 0.1 * (n as f64 * 0.31).cos()).collect();

    // Chunk 4 finishes at frame 4·C; samples earlier than its start
    // cannot see anything after the receptive field of that frame.
    let boundary = 4 * config.chunk_size * config.stride;
    let perturb_from = boundary + config.kernel_size - config.stride;
    let mut perturbed = signal.clone();
    perturbed[perturb_from..].iter_mut().for_each(|v| *v += 0.5);

    let a = model.separate(&Tensor::from_f64(&[samples], &signal)?)?;
    let b = model.separate(&Tensor::from_f64(&[samples], &perturbed)?)?;
    let mut worst = 0.0f64;
    for (x, y) in a.sources.iter().zip(&b.sources) {
        for (u, v) in x.to_vec()[..boundary].iter().zip(&y.to_vec()[..boundary]) {
            worst = worst.max((u - v).abs());
        }
    }
    Ok(worst)
}

fn main() -> resepformer::Result<()> {
    println!("causal:     max change before the boundary {:.3e}", max_prefix_change(true)?);
    println!("non-causal: max change before the boundary {:.3e}", max_prefix_change(false)?);
    Ok(())
}
