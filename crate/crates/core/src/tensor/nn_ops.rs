//! Activation, normalization and attention kernels with fused backward rules.

use super::ops::split_axis;
use super::{any_requires_grad, instrument, Buffer, Result, Scalar, Tensor, TensorError};

impl<S: Scalar> Tensor<S> {
    pub fn relu(&self) -> Result<Tensor<S>> {
        let mut out = Buffer::zeros(self.numel())?;
        out.iter_mut()
            .zip(self.data())
            .for_each(|(o, &x)| *o = if x > S::zero() { x } else { S::zero() });
        let x = self.buffer();
        Ok(Tensor::from_op(self.shape().to_vec(), out, &[self], move |g| {
            Ok(vec![Some(
                g.iter()
                    .zip(x.iter())
                    .map(|(&g, &x)| if x > S::zero() { g } else { S::zero() })
                    .collect(),
            )])
        }))
    }

    /// Parametric ReLU with a single learned slope `alpha` (shape `[1]`).
    pub fn prelu(&self, alpha: &Tensor<S>) -> Result<Tensor<S>> {
        if alpha.numel() != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "prelu",
                lhs: self.shape().to_vec(),
                rhs: alpha.shape().to_vec(),
            });
        }
        let a = alpha.data()[0];
        let mut out = Buffer::zeros(self.numel())?;
        out.iter_mut()
            .zip(self.data())
            .for_each(|(o, &x)| *o = if x > S::zero() { x } else { a * x });
        let x = self.buffer();
        let (need_x, need_a) = (self.requires_grad(), alpha.requires_grad());
        Ok(Tensor::from_op(self.shape().to_vec(), out, &[self, alpha], move |g| {
            let gx = need_x.then(|| {
                g.iter()
                    .zip(x.iter())
                    .map(|(&g, &x)| if x > S::zero() { g } else { a * g })
                    .collect()
            });
            let ga = need_a.then(|| {
                let s: S = g
                    .iter()
                    .zip(x.iter())
                    .filter(|(_, &x)| x <= S::zero())
                    .map(|(&g, &x)| g * x)
                    .sum();
                vec![s]
            });
            Ok(vec![gx, ga])
        }))
    }

    /// Softmax along `axis`, stabilized by subtracting the slice maximum.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<S>> {
        if axis >= self.rank() {
            return Err(TensorError::AxisOutOfRange {
                op: "softmax",
                axis,
                shape: self.shape().to_vec(),
            });
        }
        let (outer, n, inner) = split_axis(self.shape(), axis);
        let x = self.data();
        let mut out = Buffer::zeros(self.numel())?;
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * n + j) * inner + i;
                let max = (0..n).map(|j| x[at(j)]).fold(S::neg_infinity(), S::max);
                let mut total = S::zero();
                for j in 0..n {
                    let e = (x[at(j)] - max).exp();
                    out[at(j)] = e;
                    total += e;
                }
                for j in 0..n {
                    out[at(j)] = out[at(j)] / total;
                }
            }
        }
        let y = std::sync::Arc::new(out);
        let y_saved = std::sync::Arc::clone(&y);
        Ok(Tensor::from_op_shared(self.shape().to_vec(), y, &[self], move |g| {
            let mut gx = vec![S::zero(); g.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| (o * n + j) * inner + i;
                    let dot: S = (0..n).map(|j| g[at(j)] * y_saved[at(j)]).sum();
                    for j in 0..n {
                        gx[at(j)] = y_saved[at(j)] * (g[at(j)] - dot);
                    }
                }
            }
            Ok(vec![Some(gx)])
        }))
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&self, gamma: &Tensor<S>, beta: &Tensor<S>, eps: f64) -> Result<Tensor<S>> {
        let f = *self.shape().last().ok_or(TensorError::AxisOutOfRange {
            op: "layer_norm",
            axis: 0,
            shape: vec![],
        })?;
        if gamma.shape() != [f] || beta.shape() != [f] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: self.shape().to_vec(),
                rhs: gamma.shape().to_vec(),
            });
        }
        if f == 0 {
            return Err(TensorError::Degenerate {
                op: "layer_norm",
                reason: "zero-width feature axis".into(),
            });
        }
        let rows = self.numel() / f;
        let eps = S::from_f64_lossy(eps);
        let inv_f = S::one() / S::from_f64_lossy(f as f64);
        let (gm, bt) = (gamma.data(), beta.data());
        let need_grad = any_requires_grad(&[self, gamma, beta]);
        let mut out = Buffer::zeros(self.numel())?;
        let mut normed = if need_grad { vec![S::zero(); self.numel()] } else { Vec::new() };
        let mut inv_std = if need_grad { vec![S::zero(); rows] } else { Vec::new() };
        for r in 0..rows {
            let x = &self.data()[r * f..(r + 1) * f];
            let mu: S = x.iter().copied().sum::<S>() * inv_f;
            let var: S = x.iter().map(|&v| (v - mu) * (v - mu)).sum::<S>() * inv_f;
            let is = S::one() / (var + eps).sqrt();
            let o = &mut out[r * f..(r + 1) * f];
            for j in 0..f {
                let xh = (x[j] - mu) * is;
                o[j] = xh * gm[j] + bt[j];
                if need_grad {
                    normed[r * f + j] = xh;
                }
            }
            if need_grad {
                inv_std[r] = is;
            }
        }
        let gamma_saved = gamma.buffer();
        let (need_x, need_g, need_b) = (self.requires_grad(), gamma.requires_grad(), beta.requires_grad());
        Ok(Tensor::from_op(self.shape().to_vec(), out, &[self, gamma, beta], move |g| {
            let mut gx = need_x.then(|| vec![S::zero(); g.len()]);
            let mut gg = vec![S::zero(); f];
            let mut gb = vec![S::zero(); f];
            for r in 0..rows {
                let gr = &g[r * f..(r + 1) * f];
                let xh = &normed[r * f..(r + 1) * f];
                for j in 0..f {
                    gg[j] += gr[j] * xh[j];
                    gb[j] += gr[j];
                }
                if let Some(gx) = gx.as_mut() {
                    let mut mean_d = S::zero();
                    let mut mean_dx = S::zero();
                    for j in 0..f {
                        let d = gr[j] * gamma_saved[j];
                        mean_d += d;
                        mean_dx += d * xh[j];
                    }
                    mean_d *= inv_f;
                    mean_dx *= inv_f;
                    for j in 0..f {
                        let d = gr[j] * gamma_saved[j];
                        gx[r * f + j] = inv_std[r] * (d - mean_d - xh[j] * mean_dx);
                    }
                }
            }
            Ok(vec![gx.take(), need_g.then_some(gg), need_b.then_some(gb)])
        }))
    }
}

struct AttentionGeometry {
    batch: usize,
    len: usize,
    width: usize,
    heads: usize,
    head_dim: usize,
}

impl AttentionGeometry {
    fn new<S: Scalar>(q: &Tensor<S>, k: &Tensor<S>, v: &Tensor<S>, heads: usize) -> Result<Self> {
        if q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "attention",
                lhs: q.shape().to_vec(),
                rhs: if q.shape() != k.shape() { k.shape() } else { v.shape() }.to_vec(),
            });
        }
        let (batch, len, width) = (q.shape()[0], q.shape()[1], q.shape()[2]);
        if heads == 0 || width % heads != 0 {
            return Err(TensorError::InvalidArgument {
                op: "attention",
                reason: format!("width {width} is not divisible into {heads} heads"),
            });
        }
        Ok(AttentionGeometry {
            batch,
            len,
            width,
            heads,
            head_dim: width / heads,
        })
    }

    fn base(&self, b: usize, h: usize) -> usize {
        b * self.len * self.width + h * self.head_dim
    }
}

/// Scaled scores → (masked) row softmax, in place on an `L×L` block.
/// Row softmax of `scale · scores`; causal rows are zero past the diagonal.
fn softmax_rows<S: Scalar>(scores: &mut [S], len: usize, scale: S, causal: bool) {
    for i in 0..len {
        let row = &mut scores[i * len..(i + 1) * len];
        let valid = if causal { i + 1 } else { len };
        S::softmax_scaled(&mut row[..valid], scale);
        row[valid..].iter_mut().for_each(|v| *v = S::zero());
    }
}

/// Rows of query positions processed per score tile at inference.
const QUERY_TILE: usize = 64;

/// Inference path for one `(b, h)` block: scores, softmax and the value
/// product per tile of query rows, so the working set stays cache-sized.
/// Rows are normalized on the `d`-wide output instead of the weights.
#[allow(clippy::too_many_arguments)]
fn attend_tiled<S: Scalar>(
    geo: &AttentionGeometry,
    q: &[S],
    k: &[S],
    v: &[S],
    b: usize,
    h: usize,
    scale: S,
    causal: bool,
    tile: &mut [S],
    out: &mut [S],
) {
    let (l, d, w) = (geo.len, geo.head_dim, geo.width);
    let base = geo.base(b, h);
    let mut start = 0;
    while start < l {
        let rows = QUERY_TILE.min(l - start);
        // Causal rows never look past the tile's last position.
        let cols = if causal { start + rows } else { l };
        let scores = &mut tile[..rows * cols];
        let q_at = base + start * w;
        S::gemm_raw(rows, d, cols, &q[q_at..], (w, 1), &k[base..], (1, w), scores, (cols, 1), false);
        let mut inv = [S::zero(); QUERY_TILE];
        for (i, r) in inv[..rows].iter_mut().enumerate() {
            let row = &mut scores[i * cols..(i + 1) * cols];
            let valid = if causal { start + i + 1 } else { cols };
            *r = S::one() / S::softmax_numerator(&mut row[..valid], scale);
            row[valid..].iter_mut().for_each(|x| *x = S::zero());
        }
        S::gemm_raw(rows, cols, d, scores, (cols, 1), &v[base..], (w, 1), &mut out[q_at..], (w, 1), false);
        for (i, &r) in inv[..rows].iter().enumerate() {
            out[q_at + i * w..q_at + i * w + d].iter_mut().for_each(|o| *o *= r);
        }
        start += rows;
    }
}

/// Unscaled scores `Q_bh · K_bhᵀ`.
fn scores_into<S: Scalar>(geo: &AttentionGeometry, q: &[S], k: &[S], b: usize, h: usize, out: &mut [S]) {
    let (l, d, w) = (geo.len, geo.head_dim, geo.width);
    let base = geo.base(b, h);
    // Q_bh (L×d, row stride w) · K_bhᵀ (d×L, strides (1, w))
    S::gemm_raw(l, d, l, &q[base..], (w, 1), &k[base..], (1, w), out, (l, 1), false);
}

/// Softmax attention weights `[B, H, L, L]` for already-projected queries
/// and keys of shape `[B, L, F]`, split into `heads` heads.
pub fn attention_probabilities<S: Scalar>(q: &Tensor<S>, k: &Tensor<S>, heads: usize, causal: bool) -> Result<Vec<S>> {
    let geo = AttentionGeometry::new(q, k, k, heads)?;
    let l = geo.len;
    let scale = S::one() / S::from_f64_lossy(geo.head_dim as f64).sqrt();
    let mut all = vec![S::zero(); geo.batch * heads * l * l];
    for b in 0..geo.batch {
        for h in 0..heads {
            let block = &mut all[(b * heads + h) * l * l..(b * heads + h + 1) * l * l];
            scores_into(&geo, q.data(), k.data(), b, h, block);
            softmax_rows(block, l, scale, causal);
        }
    }
    Ok(all)
}

/// Multi-head scaled dot-product attention on projected `q`, `k`, `v` of
/// shape `[B, L, F]`. Heads are contiguous `F/heads`-wide column groups.
/// With `causal`, position `i` attends to positions `0..=i` only.
///
/// Without gradients the kernel holds one tile of query rows at a time.
pub fn multi_head_attention_core<S: Scalar>(
    q: &Tensor<S>,
    k: &Tensor<S>,
    v: &Tensor<S>,
    heads: usize,
    causal: bool,
) -> Result<Tensor<S>> {
    let geo = AttentionGeometry::new(q, k, v, heads)?;
    let (l, d, w) = (geo.len, geo.head_dim, geo.width);
    let scale = S::one() / S::from_f64_lossy(d as f64).sqrt();
    let need_grad = any_requires_grad(&[q, k, v]);
    let blocks = geo.batch * heads;

    let mut out = Buffer::zeros(q.numel())?;
    let mut saved = if need_grad {
        Some(Buffer::zeros(blocks * l * l)?)
    } else {
        None
    };
    let mut scratch = if need_grad {
        None
    } else {
        Some(Buffer::zeros(QUERY_TILE.min(l) * l)?)
    };
    for b in 0..geo.batch {
        for h in 0..heads {
            let idx = b * heads + h;
            let base = geo.base(b, h);
            match (&mut saved, &mut scratch) {
                (Some(all), _) => {
                    let p = &mut all[idx * l * l..(idx + 1) * l * l];
                    scores_into(&geo, q.data(), k.data(), b, h, p);
                    softmax_rows(p, l, scale, causal);
                    S::gemm_raw(l, l, d, p, (l, 1), &v.data()[base..], (w, 1), &mut out[base..], (w, 1), false);
                }
                (None, Some(tile)) => {
                    attend_tiled(&geo, q.data(), k.data(), v.data(), b, h, scale, causal, tile, &mut out);
                }
                _ => unreachable!(),
            }
        }
    }
    instrument::count_macs((2 * blocks * l * l * d) as u64);
    drop(scratch);

    let probs = saved.map(std::sync::Arc::new);
    let (qb, kb, vb) = (q.buffer(), k.buffer(), v.buffer());
    Ok(Tensor::from_op(q.shape().to_vec(), out, &[q, k, v], move |g| {
        let probs = probs.expect("attention probabilities saved when gradients are required");
        let n = g.len();
        let (mut gq, mut gk, mut gv) = (vec![S::zero(); n], vec![S::zero(); n], vec![S::zero(); n]);
        let mut dp = vec![S::zero(); l * l];
        for b in 0..geo.batch {
            for h in 0..geo.heads {
                let idx = b * geo.heads + h;
                let p = &probs[idx * l * l..(idx + 1) * l * l];
                let base = geo.base(b, h);
                // dV = Pᵀ · G
                S::gemm_raw(l, l, d, p, (1, l), &g[base..], (w, 1), &mut gv[base..], (w, 1), false);
                // dP = G · Vᵀ
                S::gemm_raw(l, d, l, &g[base..], (w, 1), &vb[base..], (1, w), &mut dp, (l, 1), false);
                // dS = P ⊙ (dP − rowsum(dP ⊙ P)), folded with the score scale.
                for i in 0..l {
                    let pr = &p[i * l..(i + 1) * l];
                    let dr = &mut dp[i * l..(i + 1) * l];
                    let dot: S = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum();
                    for (dv, &pv) in dr.iter_mut().zip(pr) {
                        *dv = pv * (*dv - dot) * scale;
                    }
                }
                // dQ = dS · K,  dK = dSᵀ · Q
                S::gemm_raw(l, l, d, &dp, (l, 1), &kb[base..], (w, 1), &mut gq[base..], (w, 1), false);
                S::gemm_raw(l, l, d, &dp, (1, l), &qb[base..], (w, 1), &mut gk[base..], (w, 1), false);
            }
        }
        Ok(vec![Some(gq), Some(gk), Some(gv)])
    }))
}
