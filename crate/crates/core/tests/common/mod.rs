//! Shared helpers for the integration tests: seeded tensors, central finite
//! differences and the small model configurations used across targets.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resepformer::{ModelConfig, Tensor};

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, random_vec(rng, n, scale)).unwrap()
}

/// `Σ out ⊙ R` for a fixed random `R`, turning any output into a scalar
/// whose gradient reaches every output element.
pub fn probe_loss(out: &Tensor, seed: u64) -> Tensor {
    let weights = random_tensor(&mut rng(seed ^ 0x5eed), out.shape(), 1.0);
    out.mul(&weights).unwrap().sum().unwrap()
}

/// `‖a − n‖ / (‖a‖ + ‖n‖)`, the relative error between an analytic and a
/// numeric gradient. When both norms are below [`VANISHING`] (a key bias
/// under softmax, say) the gradient is zero up to rounding and the
/// absolute difference is returned instead.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale = norm(analytic) + norm(numeric);
    if scale < VANISHING {
        return diff;
    }
    diff / scale
}

pub const VANISHING: f64 = 1e-7;

/// Largest relative error over all inputs of `f`, comparing the tape's
/// gradient against central differences with step [`FD_STEP`].
pub fn grad_check(inputs: &[Tensor], f: impl Fn(&[Tensor]) -> Tensor) -> f64 {
    let leaves: Vec<Tensor> = inputs.iter().map(Tensor::requires_grad_leaf).collect();
    let grads = f(&leaves).backward().unwrap();
    let mut worst: f64 = 0.0;
    for (i, leaf) in leaves.iter().enumerate() {
        let analytic = grads.wrt(leaf).unwrap().to_vec();
        let numeric: Vec<f64> = (0..leaf.numel())
            .map(|j| {
                let eval = |delta: f64| {
                    let mut moved: Vec<Tensor> = inputs.to_vec();
                    let mut data = inputs[i].to_vec();
                    data[j] += delta;
                    moved[i] = Tensor::new(inputs[i].shape(), data).unwrap();
                    f(&moved).item().unwrap()
                };
                (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP)
            })
            .collect();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// The tiny configuration used by the end-to-end gradient check and the
/// MAC tally: F=8, C=4, one layer per stack.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        encoder_filters: 8,
        chunk_size: 4,
        heads: 2,
        intra_layers: 1,
        memory_layers: 1,
        d_ff_intra: 16,
        d_ff_memory: 16,
        num_blocks: 1,
        ..ModelConfig::default()
    }
}

/// Indices `0, k, 2k, …` covering at most `max` entries of an `n`-vector.
pub fn sampled_indices(n: usize, max: usize) -> Vec<usize> {
    let stride = n.div_ceil(max).max(1);
    (0..n).step_by(stride).collect()
}

/// A smooth two-tone test signal.
pub fn tone(len: usize, a: f64, b: f64) -> Tensor {
    let data: Vec<f64> = (0..len).map(|i| (i as f64 * a).sin() + 0.5 * (i as f64 * b).cos()).collect();
    Tensor::new(&[len], data).unwrap()
}

pub mod gradients;
