//! Finite-difference checks for every differentiable op and layer, and for
//! the tiny end-to-end model.

use rand::Rng;
use resepformer::chunking::{chunk, reconstruct, Overlap};
use resepformer::layers::{
    Conv1d, ConvTranspose1d, LayerNorm, Linear, MultiHeadAttention, TransformerLayer, TransformerStack,
};
use resepformer::objective::{pit_loss, si_snr_clamped};
use resepformer::params::ParamStore;
use resepformer::tensor::multi_head_attention_core;
use resepformer::{SeparationModel, Tensor, Variant};

use super::{grad_check, probe_loss, random_tensor, relative_error, rng, sampled_indices, tiny_config, tone, FD_STEP};

pub const LAYER_TOLERANCE: f64 = 1e-4;
pub const END_TO_END_TOLERANCE: f64 = 1e-3;

pub type Check = (&'static str, fn() -> f64);

/// One input tensor of the given shape per entry, drawn from `seed`.
fn inputs(seed: u64, shapes: &[&[usize]]) -> Vec<Tensor> {
    let mut r = rng(seed);
    shapes.iter().map(|s| random_tensor(&mut r, s, 1.0)).collect()
}

fn op(seed: u64, shapes: &[&[usize]], f: impl Fn(&[Tensor]) -> Tensor) -> f64 {
    grad_check(&inputs(seed, shapes), |x| probe_loss(&f(x), seed))
}

/// Replaces every parameter with uniform noise so that norms, biases and
/// slopes are checked away from their initial values.
fn randomized(store: &ParamStore, seed: u64) -> ParamStore {
    let mut r = rng(seed);
    let mut out = store.clone();
    for id in store.ids() {
        let shape = store.get(id).shape().to_vec();
        out.set(id, random_tensor(&mut r, &shape, 0.5)).unwrap();
    }
    out
}

/// Gradient check of `f(store, x)` w.r.t. both the inputs `x` and every
/// parameter, sampling at most `per_tensor` entries of each.
pub fn store_grad_check(
    store: &ParamStore,
    x: &[Tensor],
    per_tensor: usize,
    f: impl Fn(&ParamStore, &[Tensor]) -> Tensor,
) -> f64 {
    let trainable = store.trainable();
    let leaves: Vec<Tensor> = x.iter().map(Tensor::requires_grad_leaf).collect();
    let grads = f(&trainable, &leaves).backward().unwrap();
    let frozen = store.frozen();
    let mut worst: f64 = 0.0;

    for (i, leaf) in leaves.iter().enumerate() {
        let g = grads.wrt(leaf).unwrap().to_vec();
        let idx = sampled_indices(leaf.numel(), per_tensor);
        let numeric: Vec<f64> = idx
            .iter()
            .map(|&j| {
                central(|d| {
                    let mut moved = x.to_vec();
                    let mut data = x[i].to_vec();
                    data[j] += d;
                    moved[i] = Tensor::new(x[i].shape(), data).unwrap();
                    f(&frozen, &moved).item().unwrap()
                })
            })
            .collect();
        let analytic: Vec<f64> = idx.iter().map(|&j| g[j]).collect();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    for id in frozen.ids() {
        let g = grads.wrt(trainable.get(id)).unwrap().to_vec();
        let base = frozen.get(id);
        let idx = sampled_indices(base.numel(), per_tensor);
        let numeric: Vec<f64> = idx
            .iter()
            .map(|&j| {
                central(|d| {
                    let mut moved = frozen.clone();
                    let mut data = base.to_vec();
                    data[j] += d;
                    moved.set(id, Tensor::new(base.shape(), data).unwrap()).unwrap();
                    f(&moved, x).item().unwrap()
                })
            })
            .collect();
        let analytic: Vec<f64> = idx.iter().map(|&j| g[j]).collect();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

fn central(eval: impl Fn(f64) -> f64) -> f64 {
    (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP)
}

fn matmul() -> f64 {
    op(1, &[&[3, 4], &[4, 5]], |x| x[0].matmul(&x[1]).unwrap())
}

fn matmul_bt() -> f64 {
    op(2, &[&[3, 4], &[5, 4]], |x| x[0].matmul_bt(&x[1]).unwrap())
}

fn linear() -> f64 {
    op(3, &[&[6, 4], &[5, 4], &[5]], |x| x[0].linear(&x[1], Some(&x[2])).unwrap())
}

fn linear_relu() -> f64 {
    op(4, &[&[6, 4], &[5, 4], &[5]], |x| x[0].linear_relu(&x[1], Some(&x[2])).unwrap())
}

fn elementwise() -> f64 {
    op(5, &[&[3, 4], &[3, 4]], |x| {
        let a = x[0].add(&x[1]).unwrap().mul(&x[0]).unwrap();
        let b = x[1].sub(&x[0]).unwrap().square().unwrap().scale(0.7).unwrap();
        a.add(&b).unwrap().add_scalar(0.3).unwrap()
    })
}

fn broadcast_add() -> f64 {
    op(6, &[&[2, 3, 4], &[3, 4]], |x| x[0].broadcast_add(&x[1]).unwrap())
}

fn reductions() -> f64 {
    op(7, &[&[3, 4, 2]], |x| {
        let a = x[0].reduce_mean(0).unwrap().reshape(&[8]).unwrap();
        let b = x[0].reduce_mean(1).unwrap().reshape(&[6]).unwrap();
        let m = x[0].mean().unwrap().reshape(&[1]).unwrap();
        a.sum().unwrap().mul(&b.sum().unwrap()).unwrap().add(&m.reshape(&[]).unwrap()).unwrap()
    })
}

fn permute_reshape() -> f64 {
    op(8, &[&[2, 3, 4]], |x| {
        x[0].permute(&[2, 0, 1]).unwrap().reshape(&[4, 6]).unwrap().permute(&[1, 0]).unwrap()
    })
}

fn row_ops() -> f64 {
    op(9, &[&[7, 3]], |x| {
        let padded = x[0].pad_rows(3).unwrap();
        let frames = padded.unfold_rows(4, 2).unwrap();
        let folded = frames.fold_rows(2, 10).unwrap();
        folded.narrow_rows(1, 8).unwrap()
    })
}

fn relu() -> f64 {
    op(10, &[&[5, 4]], |x| x[0].relu().unwrap())
}

fn prelu() -> f64 {
    op(11, &[&[5, 4], &[1]], |x| x[0].prelu(&x[1]).unwrap())
}

fn softmax() -> f64 {
    let last = op(12, &[&[3, 5]], |x| x[0].softmax(1).unwrap());
    let first = op(13, &[&[3, 5]], |x| x[0].softmax(0).unwrap());
    last.max(first)
}

fn layer_norm() -> f64 {
    op(14, &[&[4, 6], &[6], &[6]], |x| x[0].layer_norm(&x[1], &x[2], 1e-6).unwrap())
}

fn attention_core() -> f64 {
    let full = op(15, &[&[2, 5, 4], &[2, 5, 4], &[2, 5, 4]], |x| {
        multi_head_attention_core(&x[0], &x[1], &x[2], 2, false).unwrap()
    });
    let causal = op(16, &[&[2, 5, 4], &[2, 5, 4], &[2, 5, 4]], |x| {
        multi_head_attention_core(&x[0], &x[1], &x[2], 2, true).unwrap()
    });
    full.max(causal)
}

fn conv1d() -> f64 {
    let mut store = ParamStore::new();
    let conv = Conv1d::new(&mut store, "enc", 3, 4, 2, &mut rng(17)).unwrap();
    let store = randomized(&store, 18);
    store_grad_check(&store, &inputs(19, &[&[12]]), usize::MAX, |s, x| {
        probe_loss(&conv.forward(s, &x[0]).unwrap(), 19)
    })
}

fn conv_transpose1d() -> f64 {
    let mut store = ParamStore::new();
    let conv = ConvTranspose1d::new(&mut store, "dec", 3, 4, 2, &mut rng(20)).unwrap();
    let store = randomized(&store, 21);
    store_grad_check(&store, &inputs(22, &[&[5, 3]]), usize::MAX, |s, x| {
        probe_loss(&conv.forward(s, &x[0]).unwrap(), 22)
    })
}

fn linear_layer() -> f64 {
    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "lin", 4, 3, true, &mut rng(23)).unwrap();
    let store = randomized(&store, 24);
    store_grad_check(&store, &inputs(25, &[&[2, 3, 4]]), usize::MAX, |s, x| {
        probe_loss(&lin.forward(s, &x[0]).unwrap(), 25)
    })
}

fn layer_norm_layer() -> f64 {
    let mut store = ParamStore::new();
    let norm = LayerNorm::new(&mut store, "norm", 6).unwrap();
    let store = randomized(&store, 26);
    store_grad_check(&store, &inputs(27, &[&[2, 3, 6]]), usize::MAX, |s, x| {
        probe_loss(&norm.forward(s, &x[0]).unwrap(), 27)
    })
}

fn attention_layer() -> f64 {
    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, "mha", 4, 2, &mut rng(28)).unwrap();
    let store = randomized(&store, 29);
    let x = inputs(30, &[&[2, 5, 4]]);
    let full = store_grad_check(&store, &x, usize::MAX, |s, x| probe_loss(&mha.forward(s, &x[0], false).unwrap(), 30));
    let causal = store_grad_check(&store, &x, usize::MAX, |s, x| probe_loss(&mha.forward(s, &x[0], true).unwrap(), 31));
    full.max(causal)
}

fn transformer_layer() -> f64 {
    let mut store = ParamStore::new();
    let layer = TransformerLayer::new(&mut store, "layer", 4, 2, 6, &mut rng(32)).unwrap();
    let store = randomized(&store, 33);
    store_grad_check(&store, &inputs(34, &[&[2, 5, 4]]), usize::MAX, |s, x| {
        probe_loss(&layer.forward(s, &x[0], false).unwrap(), 34)
    })
}

fn transformer_stack() -> f64 {
    let mut store = ParamStore::new();
    let stack = TransformerStack::new(&mut store, "stack", 2, 4, 2, 6, &mut rng(35)).unwrap();
    let store = randomized(&store, 36);
    let x = inputs(37, &[&[2, 5, 4]]);
    let full = store_grad_check(&store, &x, 24, |s, x| probe_loss(&stack.forward(s, &x[0], false).unwrap(), 37));
    let causal = store_grad_check(&store, &x, 24, |s, x| probe_loss(&stack.forward(s, &x[0], true).unwrap(), 38));
    full.max(causal)
}

fn chunking() -> f64 {
    let none = op(39, &[&[11, 3]], |x| {
        let ch = chunk(&x[0], 4, Overlap::None).unwrap();
        let data = ch.data.square().unwrap();
        reconstruct(&ch.with_data(data).unwrap()).unwrap()
    });
    let half = op(40, &[&[11, 3]], |x| {
        let ch = chunk(&x[0], 4, Overlap::Half).unwrap();
        let data = ch.data.square().unwrap();
        reconstruct(&ch.with_data(data).unwrap()).unwrap()
    });
    none.max(half)
}

fn si_snr_loss() -> f64 {
    let target = tone(40, 0.3, 0.11);
    let mut r = rng(41);
    let noisy: Vec<f64> = target.to_vec().iter().map(|v| v + r.random_range(-0.8..0.8)).collect();
    let est = Tensor::new(&[40], noisy).unwrap();
    grad_check(&[est], |x| si_snr_clamped(&x[0], &target).unwrap())
}

fn pit() -> f64 {
    let targets = [tone(32, 0.3, 0.05), tone(32, 0.9, 0.4), tone(32, 1.7, 0.2)];
    let mut r = rng(42);
    let ests: Vec<Tensor> = [2, 0, 1]
        .iter()
        .map(|&k| {
            let data = targets[k].to_vec().iter().map(|v| v + r.random_range(-1.0..1.0)).collect();
            Tensor::new(&[32], data).unwrap()
        })
        .collect();
    grad_check(&ests, |x| pit_loss(x, &targets).unwrap().loss)
}

pub fn layer_checks() -> Vec<Check> {
    vec![
        ("matmul", matmul),
        ("matmul_bt", matmul_bt),
        ("linear", linear),
        ("linear_relu", linear_relu),
        ("elementwise", elementwise),
        ("broadcast_add", broadcast_add),
        ("reductions", reductions),
        ("permute_reshape", permute_reshape),
        ("pad_unfold_fold_narrow", row_ops),
        ("relu", relu),
        ("prelu", prelu),
        ("softmax", softmax),
        ("layer_norm", layer_norm),
        ("attention_core", attention_core),
        ("conv1d", conv1d),
        ("conv_transpose1d", conv_transpose1d),
        ("linear_layer", linear_layer),
        ("layer_norm_layer", layer_norm_layer),
        ("multi_head_attention", attention_layer),
        ("transformer_layer", transformer_layer),
        ("transformer_stack", transformer_stack),
        ("chunk_reconstruct", chunking),
        ("si_snr_clamped", si_snr_loss),
        ("pit_loss", pit),
    ]
}

/// PIT loss of the tiny model (F=8, C=4, one layer per stack) on a
/// 64-sample mixture, against every parameter entry.
pub fn end_to_end(variant: Variant) -> f64 {
    let config = resepformer::ModelConfig {
        variant,
        ..tiny_config()
    };
    let model = SeparationModel::<f64>::new(config, 43).unwrap();
    let targets = [tone(64, 0.21, 0.05), tone(64, 1.3, 0.7)];
    let mixture = targets[0].add(&targets[1].scale(0.7).unwrap()).unwrap();
    let scaled = [targets[0].clone(), targets[1].scale(0.7).unwrap()];
    store_grad_check(&model.params, &[mixture], usize::MAX, |store, x| {
        let mut m = model.clone();
        m.params = store.clone();
        let ests = m.separate(&x[0]).unwrap().sources;
        pit_loss(&ests, &scaled).unwrap().loss
    })
}
