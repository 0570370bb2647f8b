//! Parameter and MACs accounting for the RE-SepFormer, its ablations and
//! the overlapped-chunk baseline at 0% and 50% overlap.
//!
//! `cargo run --release --example count_costs -- [seconds]`

use resepformer::analysis::count_costs;
use resepformer::chunking::Overlap;
use resepformer::ModelConfig;

fn main() -> resepformer::Result<()> {
    let seconds: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4.0);

    let re = count_costs(&ModelConfig::default(), seconds)?;
    println!("{re}\n");

    println!("{:<28} {:>10} {:>10}", "intra/ff, memory/ff", "params (M)", "GMACs/s");
    for (intra, ff_i, memory, ff_m) in [
        (8, 1024, 8, 1024),
        (4, 1024, 8, 1024),
        (8, 512, 8, 1024),
        (8, 1024, 4, 1024),
        (8, 1024, 8, 512),
        (4, 512, 4, 512),
    ] {
        let config = ModelConfig {
            intra_layers: intra,
            d_ff_intra: ff_i,
            memory_layers: memory,
            d_ff_memory: ff_m,
            ..ModelConfig::default()
        };
        let r = count_costs(&config, seconds)?;
        println!(
            "{:<28} {:>10.2} {:>10.2}",
            format!("{intra}/{ff_i}, {memory}/{ff_m}"),
            r.total_params as f64 / 1e6,
            r.gmacs_per_second()
        );
    }
    println!();

    for overlap in [Overlap::Half, Overlap::None] {
        let config = ModelConfig {
            overlap: Some(overlap),
            ..ModelConfig::sepformer()
        };
        let r = count_costs(&config, seconds)?;
        println!(
            "sepformer, overlap {:<4} {:>8.2} M params {:>9.2} GMACs/s ({:.1}× RE-SepFormer)",
            overlap.ratio(),
            r.total_params as f64 / 1e6,
            r.gmacs_per_second(),
            r.total_macs as f64 / re.total_macs as f64
        );
    }
    Ok(())
}
