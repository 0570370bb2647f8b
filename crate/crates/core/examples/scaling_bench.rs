//! Wall time and peak tracked memory of RE-SepFormer against
//! SepFormer-Light on a short length grid.
//!
//! `cargo run --release --example scaling_bench -- [seconds...]`

use resepformer::analysis::{run_bench, to_csv, BenchOptions, BenchVariant};
use resepformer::ModelConfig;

fn main() -> resepformer::Result<()> {
    let mut lengths: Vec<f64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    if lengths.is_empty() {
        lengths = vec![1.0, 2.0, 4.0];
    }
    let variants = [
        BenchVariant {
            name: "re_sepformer".into(),
            config: ModelConfig::default(),
        },
        BenchVariant {
            name: "sepformer_light".into(),
            config: ModelConfig::sepformer_light(),
        },
    ];
    let options = BenchOptions {
        repetitions: 1,
        ..BenchOptions::default()
    };
    let records = run_bench(&variants, &lengths, &options)?;
    print!("{}", to_csv(&records));
    Ok(())
}
