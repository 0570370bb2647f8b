//! Hand-computed and brute-force references for the building blocks,
//! plus the closed-form cases of each module.

mod common;

use rand::Rng;
use resepformer::analysis::{count_costs, count_costs_samples};
use resepformer::chunking::{chunk, reconstruct, ChunkLayout, Overlap};
use resepformer::data::{decode_wav, dynamic_mix, encode_wav, generate_sources, mix_with_gains, MixSpec};
use resepformer::layers::{positional_encoding, Conv1d, ConvTranspose1d, Linear, MultiHeadAttention, TransformerLayer};
use resepformer::model::Block;
use resepformer::objective::{si_snr, si_snr_improvement};
use resepformer::params::ParamStore;
use resepformer::tensor::{attention_probabilities, instrument, multi_head_attention_core};
use resepformer::{ModelConfig, SeparationModel, Tensor};

use common::{random_tensor, random_vec, rng, tiny_config};

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn matmul_matches_triple_loop() {
    let mut r = rng(1);
    let a = random_tensor(&mut r, &[3, 4], 1.0);
    let b = random_tensor(&mut r, &[4, 2], 1.0);
    let mut want = vec![0.0; 6];
    for i in 0..3 {
        for j in 0..2 {
            for k in 0..4 {
                want[i * 2 + j] += a.data()[i * 4 + k] * b.data()[k * 2 + j];
            }
        }
    }
    assert!(max_abs_diff(&a.matmul(&b).unwrap().to_vec(), &want) <= 1e-12);

    let eye = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let m = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(m.matmul(&eye).unwrap().to_vec(), m.to_vec());
    let col = Tensor::new(&[2, 1], vec![5.0, 7.0]).unwrap();
    assert_eq!(eye.matmul(&col).unwrap().to_vec(), vec![5.0, 7.0]);
}

#[test]
fn softmax_closed_forms() {
    let s = |v: Vec<f64>| Tensor::new(&[v.len()], v).unwrap().softmax(0).unwrap().to_vec();
    assert_eq!(s(vec![0.0, 0.0]), vec![0.5, 0.5]);
    assert_eq!(s(vec![1000.0, 1000.0]), vec![0.5, 0.5]);
    let got = s(vec![0.0, 3f64.ln()]);
    assert!(max_abs_diff(&got, &[0.25, 0.75]) <= 1e-15);
}

#[test]
fn mean_and_broadcast_match_loops() {
    let mut r = rng(2);
    let x = random_tensor(&mut r, &[5, 4], 1.0);
    let want: Vec<f64> = (0..4).map(|j| (0..5).map(|i| x.data()[i * 4 + j]).sum::<f64>() / 5.0).collect();
    assert!(max_abs_diff(&x.reduce_mean(0).unwrap().to_vec(), &want) <= 1e-15);
    let ones = Tensor::full(&[3, 4], 1.0).unwrap();
    assert_eq!(ones.reduce_mean(0).unwrap().to_vec(), vec![1.0; 4]);

    let a = random_tensor(&mut r, &[3, 2, 4], 1.0);
    let b = random_tensor(&mut r, &[2, 4], 1.0);
    let want: Vec<f64> = (0..24).map(|i| a.data()[i] + b.data()[i % 8]).collect();
    assert_eq!(a.broadcast_add(&b).unwrap().to_vec(), want);
    let zeros = Tensor::zeros(&[3, 2, 4]).unwrap();
    let tiled = zeros.broadcast_add(&b).unwrap().to_vec();
    assert!(tiled.chunks(8).all(|slice| slice == b.data()));
}

#[test]
fn autodiff_closed_forms() {
    let x = Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap().requires_grad_leaf();
    let g = x.square().unwrap().sum().unwrap().backward().unwrap();
    assert_eq!(g.wrt(&x).unwrap().to_vec(), vec![2.0, 4.0, 6.0]);
    let c = Tensor::scalar(4.0).unwrap();
    let g = c.add(&x.sum().unwrap().scale(0.0).unwrap()).unwrap().backward().unwrap();
    assert_eq!(g.wrt(&x).unwrap().to_vec(), vec![0.0; 3]);
}

fn conv_pair(filters: usize, kernel: usize, stride: usize, seed: u64) -> (ParamStore, Conv1d, ConvTranspose1d) {
    let mut store = ParamStore::new();
    let mut r = rng(seed);
    let enc = Conv1d::new(&mut store, "enc", filters, kernel, stride, &mut r).unwrap();
    let dec = ConvTranspose1d::new(&mut store, "dec", filters, kernel, stride, &mut r).unwrap();
    (store, enc, dec)
}

#[test]
fn conv1d_matches_sliding_window() {
    let (mut store, enc, _) = conv_pair(4, 16, 8, 3);
    let mut r = rng(4);
    store.set(enc.bias, random_tensor(&mut r, &[4], 1.0)).unwrap();
    let x = random_tensor(&mut r, &[61], 1.0);
    let y = enc.forward(&store, &x).unwrap();
    assert_eq!(y.shape(), [6, 4]);
    let w = store.get(enc.weight).to_vec();
    let b = store.get(enc.bias).to_vec();
    for t in 0..6 {
        for f in 0..4 {
            let want = b[f] + (0..16).map(|k| w[f * 16 + k] * x.data()[t * 8 + k]).sum::<f64>();
            assert!((y.data()[t * 4 + f] - want).abs() <= 1e-12);
        }
    }
    assert_eq!(enc.output_len(32), Some(3));
}

#[test]
fn conv1d_constant_input() {
    let (mut store, enc, _) = conv_pair(2, 16, 8, 5);
    store.set(enc.weight, Tensor::full(&[2, 1, 16], 1.0 / 16.0).unwrap()).unwrap();
    store.set(enc.bias, Tensor::new(&[2], vec![0.5, -1.0]).unwrap()).unwrap();
    let y = enc.forward(&store, &Tensor::full(&[32], 3.0).unwrap()).unwrap();
    for row in y.data().chunks(2) {
        assert!((row[0] - 3.5).abs() < 1e-14 && (row[1] - 2.0).abs() < 1e-14);
    }
}

#[test]
fn conv_transpose_lengths_and_single_frame() {
    let (mut store, _, dec) = conv_pair(3, 16, 8, 6);
    assert_eq!(dec.output_len(3), 32);
    let kernel: Vec<f64> = (0..48).map(|i| i as f64).collect();
    store.set(dec.weight, Tensor::new(&[3, 1, 16], kernel.clone()).unwrap()).unwrap();
    let y = dec.forward(&store, &Tensor::new(&[1, 3], vec![0.0, 1.0, 0.0]).unwrap()).unwrap();
    assert_eq!(y.to_vec(), kernel[16..32].to_vec());
}

#[test]
fn conv_transpose_is_the_adjoint() {
    let (mut store, enc, dec) = conv_pair(5, 16, 8, 7);
    store.set(dec.weight, store.get(enc.weight).clone()).unwrap();
    let mut r = rng(8);
    let x = random_tensor(&mut r, &[104], 1.0);
    let y = random_tensor(&mut r, &[12, 5], 1.0);
    let lhs = dot(enc.forward(&store, &x).unwrap().data(), y.data());
    let rhs = dot(x.data(), dec.forward(&store, &y).unwrap().data());
    assert!((lhs - rhs).abs() <= 1e-10, "{lhs} vs {rhs}");
}

/// `softmax(q kᵀ / √d) v` per head, written out with plain loops.
fn attention_by_hand(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize, causal: bool) -> Vec<f64> {
    let (b, l, w) = (q.shape()[0], q.shape()[1], q.shape()[2]);
    let d = w / heads;
    let at = |t: &Tensor, bi: usize, i: usize, c: usize| t.data()[(bi * l + i) * w + c];
    let mut out = vec![0.0; b * l * w];
    for bi in 0..b {
        for h in 0..heads {
            for i in 0..l {
                let visible = if causal { i + 1 } else { l };
                let scores: Vec<f64> = (0..visible)
                    .map(|j| (0..d).map(|c| at(q, bi, i, h * d + c) * at(k, bi, j, h * d + c)).sum::<f64>() / (d as f64).sqrt())
                    .collect();
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = e.iter().sum();
                for c in 0..d {
                    out[(bi * l + i) * w + h * d + c] = (0..visible).map(|j| e[j] / z * at(v, bi, j, h * d + c)).sum();
                }
            }
        }
    }
    out
}

#[test]
fn attention_matches_hand_computation() {
    let mut r = rng(9);
    for (l, causal) in [(3, false), (3, true), (7, true)] {
        let q = random_tensor(&mut r, &[2, l, 4], 1.0);
        let k = random_tensor(&mut r, &[2, l, 4], 1.0);
        let v = random_tensor(&mut r, &[2, l, 4], 1.0);
        let got = multi_head_attention_core(&q, &k, &v, 2, causal).unwrap().to_vec();
        assert!(max_abs_diff(&got, &attention_by_hand(&q, &k, &v, 2, causal)) <= 1e-10);
    }
}

#[test]
fn single_position_attends_to_itself() {
    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, "mha", 4, 2, &mut rng(10)).unwrap();
    let x = random_tensor(&mut rng(11), &[1, 1, 4], 1.0);
    let q = mha.query.forward(&store, &x).unwrap();
    let k = mha.key.forward(&store, &x).unwrap();
    assert_eq!(attention_probabilities(&q, &k, 2, false).unwrap(), vec![1.0, 1.0]);
    let v = mha.value.forward(&store, &x).unwrap();
    let want = mha.output.forward(&store, &v).unwrap();
    assert!(max_abs_diff(&mha.forward(&store, &x, false).unwrap().to_vec(), &want.to_vec()) <= 1e-15);
}

#[test]
fn causal_attention_ignores_the_future_bitwise() {
    let mut store = ParamStore::new();
    let layer = TransformerLayer::new(&mut store, "layer", 8, 2, 16, &mut rng(12)).unwrap();
    let mut r = rng(13);
    let x = random_tensor(&mut r, &[2, 9, 8], 1.0);
    let base = layer.forward(&store, &x, true).unwrap();
    for j in [1usize, 4, 8] {
        let mut data = x.to_vec();
        for bi in 0..2 {
            for c in 0..8 {
                data[(bi * 9 + j) * 8 + c] += r.random_range(-1.0..1.0);
            }
        }
        let out = layer.forward(&store, &Tensor::new(&[2, 9, 8], data).unwrap(), true).unwrap();
        for bi in 0..2 {
            let prefix = |t: &Tensor| t.data()[bi * 72..bi * 72 + j * 8].to_vec();
            assert_eq!(prefix(&base), prefix(&out), "position < {j} changed");
        }
    }
}

#[test]
fn zeroed_residual_outputs_make_a_layer_identity() {
    let mut store = ParamStore::new();
    let layer = TransformerLayer::new(&mut store, "layer", 8, 2, 16, &mut rng(14)).unwrap();
    for id in layer.residual_output_params() {
        let shape = store.get(id).shape().to_vec();
        store.set(id, Tensor::zeros(&shape).unwrap()).unwrap();
    }
    for l in [1, 5, 13] {
        let x = random_tensor(&mut rng(l as u64), &[3, l, 8], 1.0);
        let y = layer.forward(&store, &x, false).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(y.to_vec(), x.to_vec());
    }
}

#[test]
fn positional_table_values() {
    let pe = positional_encoding::<f64>(5, 6).unwrap();
    assert_eq!(&pe.data()[..6], &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    assert!((pe.data()[6] - 1f64.sin()).abs() < 1e-15);
    assert!((pe.data()[6] - 0.84147).abs() < 1e-5);
    assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn chunk_layout_examples() {
    let l = |t, c, o| {
        let x = ChunkLayout::new(t, c, o).unwrap();
        (x.hop, x.num_chunks, x.pad_len)
    };
    assert_eq!(l(300, 150, Overlap::None), (150, 2, 0));
    assert_eq!(l(7, 3, Overlap::None), (3, 3, 2));
    assert_eq!(l(8, 4, Overlap::Half), (2, 3, 0));
    let h = random_tensor(&mut rng(15), &[6, 3], 1.0);
    for o in [Overlap::None, Overlap::Half] {
        assert_eq!(reconstruct(&chunk(&h, 6, o).unwrap()).unwrap().to_vec(), h.to_vec());
    }
}

#[test]
fn block_with_silent_memory_and_identity_intra2_returns_e1() {
    let model = SeparationModel::<f64>::new(tiny_config(), 16).unwrap();
    let mut silenced = model.clone();
    let Block::Re { intra1, memory, intra2 } = &model.blocks()[0] else {
        panic!("expected an RE block");
    };
    for id in memory.layers[0].residual_output_params() {
        let shape = silenced.params.get(id).shape().to_vec();
        silenced.params.set(id, Tensor::zeros(&shape).unwrap()).unwrap();
    }
    let beta = memory.final_norm.beta;
    let gamma = memory.final_norm.gamma;
    silenced.params.set(gamma, Tensor::zeros(&[8]).unwrap()).unwrap();
    silenced.params.set(beta, Tensor::zeros(&[8]).unwrap()).unwrap();

    let h = random_tensor(&mut rng(17), &[4, 3, 8], 1.0);
    let e1 = intra1
        .forward(&silenced.params, &h.permute(&[1, 0, 2]).unwrap(), false)
        .unwrap()
        .permute(&[1, 0, 2])
        .unwrap();
    let want = intra2
        .forward(&silenced.params, &e1.permute(&[1, 0, 2]).unwrap(), false)
        .unwrap()
        .permute(&[1, 0, 2])
        .unwrap();
    let got = silenced.block_forward(&silenced.blocks()[0], &h).unwrap();
    assert_eq!(got.to_vec(), want.to_vec());

    let single = random_tensor(&mut rng(18), &[4, 1, 8], 1.0);
    assert_eq!(model.block_forward(&model.blocks()[0], &single).unwrap().shape(), [4, 1, 8]);
}

#[test]
fn mask_contract() {
    let model = SeparationModel::<f64>::new(tiny_config(), 19).unwrap();
    let mut r = rng(20);
    for _ in 0..5 {
        let frames = r.random_range(1..=600);
        let h = random_tensor(&mut r, &[frames, 8], 1.0).relu().unwrap();
        let m = model.masking_network(&h).unwrap();
        assert_eq!(m.shape(), [frames, 2, 8]);
        assert!(m.data().iter().all(|&v| v >= 0.0));
        let by_source = m.permute(&[1, 0, 2]).unwrap().to_vec();
        let (m1, m2) = by_source.split_at(frames * 8);
        assert!(max_abs_diff(m1, m2) > 0.0);
    }
}

#[test]
fn forced_masks_decode_as_expected() {
    let model = SeparationModel::<f64>::new(tiny_config(), 21).unwrap();
    let x = random_tensor(&mut rng(22), &[100], 1.0);
    let h = model.encode(&x).unwrap();
    let frames = h.shape()[0];
    let ones = model.decode_masked(&h, &Tensor::full(&[frames, 2, 8], 1.0).unwrap(), 100).unwrap();
    let plain = model.decoder().forward(&model.params, &h).unwrap().narrow_rows(0, 100).unwrap();
    assert_eq!(ones[0].to_vec(), plain.to_vec());
    assert_eq!(ones[0].to_vec(), ones[1].to_vec());
    let zeros = model.decode_masked(&h, &Tensor::zeros(&[frames, 2, 8]).unwrap(), 100).unwrap();
    let bias = model.params.get(model.decoder().bias).item().unwrap();
    assert!(zeros.iter().all(|s| s.data().iter().all(|&v| v == bias)));
    assert_eq!(bias, 0.0);
}

#[test]
fn four_seconds_in_two_sources_out() {
    let model = SeparationModel::<f64>::new(ModelConfig::default(), 0).unwrap().cast::<f32>().unwrap().frozen();
    let x = Tensor::<f32>::new(&[32000], random_vec(&mut rng(23), 32000, 0.5).iter().map(|&v| v as f32).collect()).unwrap();
    let out = model.separate(&x).unwrap();
    assert_eq!(out.sources.len(), 2);
    assert!(out.sources.iter().all(|s| s.shape() == [32000]));
}

#[test]
fn initialization_is_seeded() {
    let flat = |seed| {
        SeparationModel::<f64>::new(tiny_config(), seed)
            .unwrap()
            .params
            .iter()
            .flat_map(|(_, t)| t.to_vec())
            .collect::<Vec<_>>()
    };
    assert_eq!(flat(3), flat(3));
    assert_ne!(flat(3), flat(4));
    let mut store = ParamStore::<f64>::new();
    let lin = Linear::new(&mut store, "lin", 4, 8, true, &mut rng(0)).unwrap();
    assert_eq!((lin.num_params(), store.num_scalars()), (40, 40));
}

#[test]
fn si_snri_two_ways() {
    let spec = MixSpec {
        duration_s: 0.25,
        seed: 24,
        ..MixSpec::default()
    };
    let ex = dynamic_mix(&generate_sources(&spec).unwrap(), &spec).unwrap();
    let targets = ex.scaled_sources().unwrap();
    let mut r = rng(25);
    for target in &targets {
        let est: Vec<f64> = target.data().iter().map(|v| v + 0.1 * r.random_range(-1.0..1.0)).collect();
        let est = Tensor::new(target.shape(), est).unwrap();
        let direct = si_snr_improvement(&est, target, &ex.mixture).unwrap();
        let step = |e: &[f64], t: &[f64]| {
            let me = e.iter().sum::<f64>() / e.len() as f64;
            let mt = t.iter().sum::<f64>() / t.len() as f64;
            let e: Vec<f64> = e.iter().map(|v| v - me).collect();
            let t: Vec<f64> = t.iter().map(|v| v - mt).collect();
            let scale = dot(&e, &t) / (dot(&t, &t) + 1e-8);
            let s: Vec<f64> = t.iter().map(|v| v * scale).collect();
            let n: Vec<f64> = e.iter().zip(&s).map(|(a, b)| a - b).collect();
            10.0 * (dot(&s, &s) / (dot(&n, &n) + 1e-8 * dot(&s, &s))).log10()
        };
        let by_hand = step(est.data(), target.data()) - step(ex.mixture.data(), target.data());
        assert!((direct - by_hand).abs() <= 1e-10);
        assert!(direct > 0.0);
        assert_eq!(si_snr_improvement(&ex.mixture, target, &ex.mixture).unwrap(), 0.0);
        assert!(si_snr(target, target).unwrap() >= 60.0);
    }
}

#[test]
fn synthetic_sources_contract() {
    let mut worst_corr: f64 = 0.0;
    for seed in 0..100 {
        let spec = MixSpec {
            duration_s: 0.5,
            seed,
            ..MixSpec::default()
        };
        let sources = generate_sources(&spec).unwrap();
        for s in &sources {
            let rms = (dot(s.data(), s.data()) / s.numel() as f64).sqrt();
            assert!((rms - 1.0).abs() <= 1e-6);
        }
        let (a, b) = (sources[0].data(), sources[1].data());
        worst_corr = worst_corr.max((dot(a, b) / (dot(a, a) * dot(b, b)).sqrt()).abs());
        if seed < 3 {
            assert_eq!(generate_sources(&spec).unwrap()[0].to_vec(), a.to_vec());
            assert_ne!(generate_sources(&spec.with_seed(seed + 1000)).unwrap()[0].to_vec(), a.to_vec());
        }
    }
    assert!(worst_corr < 0.1, "lag-0 correlation {worst_corr}");
}

#[test]
fn mixing_bookkeeping() {
    let spec = MixSpec {
        duration_s: 0.1,
        seed: 26,
        ..MixSpec::default()
    };
    let s = generate_sources(&spec).unwrap();
    let ex = mix_with_gains(&s, &[0.0, 0.0], None).unwrap();
    assert_eq!(ex.mixture.to_vec(), s[0].add(&s[1]).unwrap().to_vec());

    let noisy = MixSpec {
        noise: Some(resepformer::data::NoiseSpec { snr_db_range: [5.0, 15.0] }),
        ..spec
    };
    let ex = dynamic_mix(&s, &noisy).unwrap();
    let mut rebuilt = ex.noise.clone().unwrap().to_vec();
    for (src, g) in ex.sources.iter().zip(ex.linear_gains()) {
        rebuilt.iter_mut().zip(src.data()).for_each(|(m, v)| *m += g * v);
    }
    let gap: f64 = rebuilt.iter().zip(ex.mixture.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(gap <= 1e-12);
}

/// Asymptotic Kolmogorov distribution tail, `P(D_n > d)`.
fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
            2.0 * sign * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    p.clamp(0.0, 1.0)
}

#[test]
fn relative_gains_are_uniform() {
    let silent = vec![Tensor::zeros(&[4]).unwrap(), Tensor::zeros(&[4]).unwrap()];
    let mut gains: Vec<f64> = (0..10_000u64)
        .map(|seed| {
            let spec = MixSpec {
                seed,
                ..MixSpec::default()
            };
            let ex = dynamic_mix(&silent, &spec).unwrap();
            assert_eq!(ex.gains_db[0], 0.0);
            ex.gains_db[1]
        })
        .collect();
    gains.sort_by(f64::total_cmp);
    let n = gains.len() as f64;
    let d = gains
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let cdf = (g / 5.0).clamp(0.0, 1.0);
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max);
    let p = ks_p_value(d, gains.len());
    assert!(p > 0.01, "KS D = {d}, p = {p}");
}

#[test]
fn wav_round_trips() {
    let sine: Vec<f64> = (0..800).map(|i| 0.9 * (i as f64 * 0.05).sin()).collect();
    let (bytes, report) = encode_wav(&sine, 8000);
    assert_eq!(report.clipped, 0);
    let back = decode_wav(&bytes).unwrap();
    assert_eq!(back.sample_rate, 8000);
    assert!(max_abs_diff(&back.samples, &sine) <= 1.0 / 32768.0);

    let (bytes, _) = encode_wav(&[], 16000);
    let empty = decode_wav(&bytes).unwrap();
    assert!(empty.samples.is_empty());
    assert_eq!(empty.sample_rate, 16000);
}

#[test]
fn hand_built_wav_decodes() {
    let samples: [i16; 4] = [0, 16384, -32768, 32767];
    let mut b = Vec::new();
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36u32 + 8).to_le_bytes());
    b.extend_from_slice(b"WAVE");
    b.extend_from_slice(b"fmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&8000u32.to_le_bytes());
    b.extend_from_slice(&16000u32.to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&8u32.to_le_bytes());
    for s in samples {
        b.extend_from_slice(&s.to_le_bytes());
    }
    assert_eq!(b.len(), 44 + 8);
    let audio = decode_wav(&b).unwrap();
    assert_eq!(audio.sample_rate, 8000);
    assert_eq!(audio.samples, vec![0.0, 0.5, -1.0, 32767.0 / 32768.0]);
    assert_eq!(encode_wav(&audio.samples, 8000).0, b);
}

#[test]
fn mac_counter_examples() {
    let mut store = ParamStore::<f64>::new();
    let lin = Linear::new(&mut store, "lin", 4, 8, true, &mut rng(27)).unwrap();
    instrument::reset_mac_tally();
    lin.forward(&store, &Tensor::zeros(&[1, 4]).unwrap()).unwrap();
    assert_eq!(instrument::mac_tally(), 32);

    let none = ModelConfig {
        overlap: Some(Overlap::None),
        ..ModelConfig::sepformer()
    };
    let ratio = count_costs(&none, 4.0).unwrap().total_macs as f64 / count_costs(&ModelConfig::default(), 4.0).unwrap().total_macs as f64;
    assert!((3.0..=6.0).contains(&ratio), "baseline 0% / RE = {ratio}");

    let tiny = tiny_config();
    let model = SeparationModel::<f64>::new(tiny.clone(), 28).unwrap().frozen();
    instrument::reset_mac_tally();
    model.separate(&random_tensor(&mut rng(29), &[77], 1.0)).unwrap();
    assert_eq!(instrument::mac_tally(), count_costs_samples(&tiny, 77).unwrap().total_macs);
}
