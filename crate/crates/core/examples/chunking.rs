//! Non-overlapping and half-overlapping chunk layouts of an encoded
//! sequence, and their exact reconstruction.

use resepformer::chunking::{chunk, reconstruct, ChunkLayout, Overlap};
use resepformer::Tensor;

fn main() -> resepformer::Result<()> {
    let (frames, width, chunk_size) = (37, 3, 8);
    let h = Tensor::<f64>::from_f64(
        &[frames, width],
        &(0..frames * width).map(|i| i as f64).collect::<Vec<_>>(),
    )?;

    for overlap in [Overlap::None, Overlap::Half] {
        let layout = ChunkLayout::new(frames, chunk_size, overlap)?;
        let chunked = chunk(&h, chunk_size, overlap)?;
        let back = reconstruct(&chunked)?;
        let max_err = back
            .to_vec()
            .iter()
            .zip(h.to_vec())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "overlap {}: {} chunks of {}, {} padding frames, chunked shape {:?}, max reconstruction error {max_err}",
            overlap.ratio(),
            layout.num_chunks,
            layout.chunk_size,
            layout.pad_len,
            chunked.data.shape(),
        );
    }
    Ok(())
}
