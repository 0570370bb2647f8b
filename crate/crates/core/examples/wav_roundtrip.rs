//! Writes a tone as 16-bit PCM, reads it back and reports the
//! quantization error and clipping count.

use resepformer::data::{read_wav, write_wav};

fn main() -> resepformer::Result<()> {
    let rate = 8000;
    let tone: Vec<f64> = (0..rate as usize)
        .map(|n| 1.2 * (2.0 * std::f64::consts::PI * 440.0 * n as f64 / rate as f64).sin())
        .collect();
    let path = std::env::temp_dir().join("resep_tone.wav");
    let report = write_wav(&path, &tone, rate)?;
    let audio = read_wav(&path)?;
    let max_err = tone
        .iter()
        .zip(&audio.samples)
        .filter(|(x, _)| x.abs() < 1.0)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    println!(
        "{}: {} samples at {} Hz, {} clipped, max unclipped error {max_err:.2e}",
        path.display(),
        audio.samples.len(),
        audio.sample_rate,
        report.clipped
    );
    Ok(())
}
