//! Permutation-invariant SI-SNR on swapped, rescaled estimates.

use resepformer::data::{dynamic_mix, generate_sources, MixSpec};
use resepformer::objective::{pit_loss, si_snr};

fn main() -> resepformer::Result<()> {
    let spec = MixSpec::default().with_seed(7);
    let example = dynamic_mix(&generate_sources(&spec)?, &spec)?;
    let targets = example.scaled_sources()?;

    // Estimates in the wrong order, one of them at a different scale.
    let ests = vec![targets[1].scale(0.3)?, targets[0].add(&example.mixture.scale(0.05)?)?];
    let pit = pit_loss(&ests, &targets)?;
    println!("gains (dB): {:?}", example.gains_db);
    println!("best permutation (estimate for each target): {:?}", pit.best_permutation);
    println!("per-source SI-SNR (dB): {:?}", pit.per_source_si_snr);
    println!("loss: {:.3}", pit.loss.item()?);
    println!("mixture SI-SNR vs target 1: {:.2} dB", si_snr(&example.mixture, &targets[0])?);
    Ok(())
}
