//! Arithmetic, reduction and shape operations.

use super::{instrument, numel, Buffer, Result, Scalar, Tensor, TensorError};

fn same_shape<S: Scalar>(op: &'static str, a: &Tensor<S>, b: &Tensor<S>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn check_axis(op: &'static str, axis: usize, shape: &[usize]) -> Result<()> {
    if axis >= shape.len() {
        return Err(TensorError::AxisOutOfRange {
            op,
            axis,
            shape: shape.to_vec(),
        });
    }
    Ok(())
}

/// (outer, extent, inner) decomposition of a shape around `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    )
}

fn map<S: Scalar>(src: &[S], f: impl Fn(S) -> S) -> Result<Buffer<S>> {
    let mut out = Buffer::zeros(src.len())?;
    out.iter_mut().zip(src).for_each(|(o, &x)| *o = f(x));
    Ok(out)
}

fn zip_map<S: Scalar>(a: &[S], b: &[S], f: impl Fn(S, S) -> S) -> Result<Buffer<S>> {
    let mut out = Buffer::zeros(a.len())?;
    out.iter_mut()
        .zip(a.iter().zip(b))
        .for_each(|(o, (&x, &y))| *o = f(x, y));
    Ok(out)
}

impl<S: Scalar> Tensor<S> {
    pub fn add(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("add", self, other)?;
        let out = zip_map(self.data(), other.data(), |x, y| x + y)?;
        Ok(Tensor::from_op(self.shape().to_vec(), out, &[self, other], |g| {
            Ok(vec![Some(g.to_vec()), Some(g.to_vec())])
        }))
    }

    pub fn sub(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("sub", self, other)?;
        let out = zip_map(self.data(), other.data(), |x, y| x - y)?;
        Ok(Tensor::from_op(self.shape().to_vec(), out, &[self, other], |g| {
            Ok(vec![Some(g.to_vec()), Some(g.iter().map(|&v| -v).collect())])
        }))
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("mul", self, other)?;
        let out = zip_map(self.data(), other.data(), |x, y| x * y)?;
        let (a, b) = (self.buffer(), other.buffer());
        let (need_a, need_b) = (self.requires_grad(), other.requires_grad());
        Ok(Tensor::from_op(self.shape().to_vec(), out, &[self, other], move |g| {
            let ga = need_a.then(|| g.iter().zip(b.iter()).map(|(&g, &y)| g * y).collect());
            let gb = need_b.then(|| g.iter().zip(a.iter()).map(|(&g, &x)| g * x).collect());
            Ok(vec![ga, gb])
        }))
    }

    pub fn scale(&self, factor: S) -> Result<Tensor<S>> {
        let out = map(self.data(), |x| x * factor)?;
        Ok(Tensor::from_op(self.shape().to_vec(), out, &[self], move |g| {
            Ok(vec![Some(g.iter().map(|&v| v * factor).collect())])
        }))
    }

    pub fn add_scalar(&self, value: S) -> Result<Tensor<S>> {
        let out = map(self.data(), |x| x + value)?;
        Ok(Tensor::from_op(self.shape().to_vec(), out, &[self], |g| {
            Ok(vec![Some(g.to_vec())])
        }))
    }

    pub fn square(&self) -> Result<Tensor<S>> {
        self.mul(self)
    }

    /// `self + other` where `other.shape()` equals the trailing axes of
    /// `self.shape()`; `other` is replicated along the leading axes.
    pub fn broadcast_add(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        let (a, b) = (self.shape(), other.shape());
        if b.len() > a.len() || a[a.len() - b.len()..] != *b {
            return Err(TensorError::ShapeMismatch {
                op: "broadcast_add",
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        }
        let period = other.numel();
        let mut out = Buffer::zeros(self.numel())?;
        if period > 0 {
            for (o_row, x_row) in out.chunks_mut(period).zip(self.data().chunks(period)) {
                for ((o, &x), &y) in o_row.iter_mut().zip(x_row).zip(other.data()) {
                    *o = x + y;
                }
            }
        }
        Ok(Tensor::from_op(a.to_vec(), out, &[self, other], move |g| {
            let mut gb = vec![S::zero(); period];
            if period > 0 {
                for row in g.chunks(period) {
                    gb.iter_mut().zip(row).for_each(|(acc, &v)| *acc += v);
                }
            }
            Ok(vec![Some(g.to_vec()), Some(gb)])
        }))
    }

    /// Matrix product of `m×k` and `k×n`.
    pub fn matmul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.matmul_impl(other, false)
    }

    /// `self · otherᵀ` for `self: m×k`, `other: n×k`.
    pub fn matmul_bt(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.matmul_impl(other, true)
    }

    fn matmul_impl(&self, other: &Tensor<S>, transpose_b: bool) -> Result<Tensor<S>> {
        let op = if transpose_b { "matmul_bt" } else { "matmul" };
        let mismatch = || TensorError::ShapeMismatch {
            op,
            lhs: self.shape().to_vec(),
            rhs: other.shape().to_vec(),
        };
        if self.rank() != 2 || other.rank() != 2 {
            return Err(mismatch());
        }
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let (k2, n) = if transpose_b {
            (other.shape()[1], other.shape()[0])
        } else {
            (other.shape()[0], other.shape()[1])
        };
        if k != k2 {
            return Err(mismatch());
        }
        // Strides of B viewed as k×n.
        let b_strides = if transpose_b { (1, k) } else { (n, 1) };
        let mut out = Buffer::zeros(m * n)?;
        S::gemm_raw(m, k, n, self.data(), (k, 1), other.data(), b_strides, &mut out, (n, 1), false);
        instrument::count_macs((m * k * n) as u64);

        let (a, b) = (self.buffer(), other.buffer());
        let (need_a, need_b) = (self.requires_grad(), other.requires_grad());
        Ok(Tensor::from_op(vec![m, n], out, &[self, other], move |g| {
            // dA = G · Bᵀ   (m×n · n×k)
            let ga = need_a.then(|| {
                let mut ga = vec![S::zero(); m * k];
                let bt = (b_strides.1, b_strides.0);
                S::gemm_raw(m, n, k, g, (n, 1), &b, bt, &mut ga, (k, 1), false);
                ga
            });
            // dB = Aᵀ · G (k×n), stored in B's own layout.
            let gb = need_b.then(|| {
                let mut gb = vec![S::zero(); k * n];
                S::gemm_raw(k, m, n, &a, (1, k), g, (n, 1), &mut gb, b_strides, false);
                gb
            });
            Ok(vec![ga, gb])
        }))
    }

    /// `self · weightᵀ + bias` for `self: m×k`, `weight: n×k`, `bias: [n]`.
    pub fn linear(&self, weight: &Tensor<S>, bias: Option<&Tensor<S>>) -> Result<Tensor<S>> {
        self.linear_impl(weight, bias, false)
    }

    /// [`Tensor::linear`] followed by ReLU, in one pass over the output.
    pub fn linear_relu(&self, weight: &Tensor<S>, bias: Option<&Tensor<S>>) -> Result<Tensor<S>> {
        self.linear_impl(weight, bias, true)
    }

    fn linear_impl(&self, weight: &Tensor<S>, bias: Option<&Tensor<S>>, relu: bool) -> Result<Tensor<S>> {
        let mismatch = |rhs: &Tensor<S>| TensorError::ShapeMismatch {
            op: "linear",
            lhs: self.shape().to_vec(),
            rhs: rhs.shape().to_vec(),
        };
        if self.rank() != 2 || weight.rank() != 2 || self.shape()[1] != weight.shape()[1] {
            return Err(mismatch(weight));
        }
        let (m, k, n) = (self.shape()[0], self.shape()[1], weight.shape()[0]);
        if let Some(b) = bias {
            if b.shape() != [n] {
                return Err(mismatch(b));
            }
        }
        let mut out = Buffer::zeros(m * n)?;
        S::gemm_raw(m, k, n, self.data(), (k, 1), weight.data(), (1, k), &mut out, (n, 1), false);
        instrument::count_macs((m * k * n) as u64);
        if n > 0 {
            let zero = S::zero();
            match (bias, relu) {
                (Some(b), true) => out.chunks_mut(n).for_each(|row| {
                    row.iter_mut().zip(b.data()).for_each(|(v, &c)| {
                        let y = *v + c;
                        *v = if y > zero { y } else { zero };
                    })
                }),
                (Some(b), false) => out
                    .chunks_mut(n)
                    .for_each(|row| row.iter_mut().zip(b.data()).for_each(|(v, &c)| *v += c)),
                (None, true) => out.iter_mut().for_each(|v| *v = if *v > zero { *v } else { zero }),
                (None, false) => {}
            }
        }

        let mut inputs = vec![self, weight];
        inputs.extend(bias);
        let out = std::sync::Arc::new(out);
        let y = std::sync::Arc::clone(&out);
        let (x, w) = (self.buffer(), weight.buffer());
        let (need_x, need_w, need_b) = (
            self.requires_grad(),
            weight.requires_grad(),
            bias.is_some_and(|b| b.requires_grad()),
        );
        let has_bias = bias.is_some();
        Ok(Tensor::from_op_shared(vec![m, n], out, &inputs, move |g| {
            let masked;
            let g = if relu {
                masked = g
                    .iter()
                    .zip(y.iter())
                    .map(|(&g, &y)| if y > S::zero() { g } else { S::zero() })
                    .collect::<Vec<_>>();
                &masked[..]
            } else {
                g
            };
            // dX = G · W  (m×n · n×k)
            let gx = need_x.then(|| {
                let mut gx = vec![S::zero(); m * k];
                S::gemm_raw(m, n, k, g, (n, 1), &w, (k, 1), &mut gx, (k, 1), false);
                gx
            });
            // dW = Gᵀ · X  (n×m · m×k)
            let gw = need_w.then(|| {
                let mut gw = vec![S::zero(); n * k];
                S::gemm_raw(n, m, k, g, (1, n), &x, (k, 1), &mut gw, (k, 1), false);
                gw
            });
            let mut grads = vec![gx, gw];
            if has_bias {
                grads.push(need_b.then(|| {
                    let mut gb = vec![S::zero(); n];
                    if n > 0 {
                        for row in g.chunks(n) {
                            gb.iter_mut().zip(row).for_each(|(acc, &v)| *acc += v);
                        }
                    }
                    gb
                }));
            }
            Ok(grads)
        }))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&self) -> Result<Tensor<S>> {
        let total: S = self.data().iter().copied().sum();
        let n = self.numel();
        Ok(Tensor::from_op(vec![], Buffer::from_vec(vec![total])?, &[self], move |g| {
            Ok(vec![Some(vec![g[0]; n])])
        }))
    }

    /// Mean of all elements, as a rank-0 tensor.
    pub fn mean(&self) -> Result<Tensor<S>> {
        if self.numel() == 0 {
            return Err(TensorError::Degenerate {
                op: "mean",
                reason: "empty tensor".into(),
            });
        }
        self.sum()?.scale(S::one() / S::from_f64_lossy(self.numel() as f64))
    }

    /// Arithmetic mean along `axis`; the axis is removed from the shape.
    pub fn reduce_mean(&self, axis: usize) -> Result<Tensor<S>> {
        check_axis("reduce_mean", axis, self.shape())?;
        let (outer, n, inner) = split_axis(self.shape(), axis);
        if n == 0 {
            return Err(TensorError::Degenerate {
                op: "reduce_mean",
                reason: format!("axis {axis} has zero extent"),
            });
        }
        let inv = S::one() / S::from_f64_lossy(n as f64);
        let x = self.data();
        let mut out = Buffer::zeros(outer * inner)?;
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for i in 0..n {
                let src = &x[(o * n + i) * inner..(o * n + i + 1) * inner];
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
            }
            dst.iter_mut().for_each(|d| *d *= inv);
        }
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        Ok(Tensor::from_op(shape, out, &[self], move |g| {
            let mut gx = vec![S::zero(); outer * n * inner];
            for o in 0..outer {
                let src = &g[o * inner..(o + 1) * inner];
                for i in 0..n {
                    let dst = &mut gx[(o * n + i) * inner..(o * n + i + 1) * inner];
                    dst.iter_mut().zip(src).for_each(|(d, &s)| *d = s * inv);
                }
            }
            Ok(vec![Some(gx)])
        }))
    }

    /// Same data, new shape with the same element count. Shares storage.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<S>> {
        if numel(shape) != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor::from_op_shared(shape.to_vec(), self.buffer(), &[self], |g| {
            Ok(vec![Some(g.to_vec())])
        }))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor<S>> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(TensorError::InvalidArgument {
                op: "permute",
                reason: format!("{axes:?} is not a permutation of 0..{rank}"),
            });
        }
        let in_shape = self.shape().to_vec();
        let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
        let mut out = Buffer::zeros(self.numel())?;
        permute_into(self.data(), &in_shape, axes, &mut out);

        let mut inverse = vec![0; rank];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        let back_shape = out_shape.clone();
        Ok(Tensor::from_op(out_shape, out, &[self], move |g| {
            let mut gx = vec![S::zero(); g.len()];
            permute_into(g, &back_shape, &inverse, &mut gx);
            Ok(vec![Some(gx)])
        }))
    }

    /// Appends `extra` zero rows along axis 0.
    pub fn pad_rows(&self, extra: usize) -> Result<Tensor<S>> {
        if self.rank() == 0 {
            return Err(TensorError::AxisOutOfRange {
                op: "pad_rows",
                axis: 0,
                shape: vec![],
            });
        }
        let n = self.numel();
        let row = if self.shape()[0] == 0 { numel(&self.shape()[1..]) } else { n / self.shape()[0] };
        let mut out = Buffer::zeros(n + extra * row)?;
        out[..n].copy_from_slice(self.data());
        let mut shape = self.shape().to_vec();
        shape[0] += extra;
        Ok(Tensor::from_op(shape, out, &[self], move |g| Ok(vec![Some(g[..n].to_vec())])))
    }

    /// Rows `start..start + len` along axis 0.
    pub fn narrow_rows(&self, start: usize, len: usize) -> Result<Tensor<S>> {
        if self.rank() == 0 || start + len > self.shape()[0] {
            return Err(TensorError::InvalidArgument {
                op: "narrow_rows",
                reason: format!("rows {start}..{} out of shape {:?}", start + len, self.shape()),
            });
        }
        let row = numel(&self.shape()[1..]);
        let total = self.numel();
        let mut out = Buffer::zeros(len * row)?;
        out.copy_from_slice(&self.data()[start * row..(start + len) * row]);
        let mut shape = self.shape().to_vec();
        shape[0] = len;
        Ok(Tensor::from_op(shape, out, &[self], move |g| {
            let mut gx = vec![S::zero(); total];
            gx[start * row..(start + len) * row].copy_from_slice(g);
            Ok(vec![Some(gx)])
        }))
    }

    /// Applies `f` to consecutive groups of at most `group` rows and
    /// stacks the results along axis 0. Inference only: `self` and every
    /// tensor `f` touches must be gradient-free, and `f` must map `n` rows
    /// to `n` rows of a fixed trailing shape.
    pub fn map_row_groups<E: From<TensorError>>(
        &self,
        group: usize,
        mut f: impl FnMut(&Tensor<S>) -> std::result::Result<Tensor<S>, E>,
    ) -> std::result::Result<Tensor<S>, E> {
        let invalid = |reason: String| TensorError::InvalidArgument {
            op: "map_row_groups",
            reason,
        };
        if self.rank() == 0 || group == 0 {
            return Err(invalid(format!("group {group} on shape {:?}", self.shape())).into());
        }
        if self.requires_grad() {
            return Err(invalid("input records gradients".into()).into());
        }
        let rows = self.shape()[0];
        let mut out: Option<(Vec<usize>, Buffer<S>)> = None;
        let mut start = 0;
        while start < rows {
            let len = group.min(rows - start);
            let y = f(&self.narrow_rows(start, len)?)?;
            if y.requires_grad() || y.rank() == 0 || y.shape()[0] != len {
                return Err(invalid(format!("group of {len} rows mapped to {:?}", y.shape())).into());
            }
            let row = numel(&y.shape()[1..]);
            let (shape, buf) = match &mut out {
                Some(o) => o,
                None => {
                    let mut shape = y.shape().to_vec();
                    shape[0] = rows;
                    out.insert((shape, Buffer::zeros(rows * row)?))
                }
            };
            if shape[1..] != y.shape()[1..] {
                return Err(invalid(format!("inconsistent group shape {:?}", y.shape())).into());
            }
            buf[start * row..(start + len) * row].copy_from_slice(y.data());
            start += len;
        }
        let (shape, buf) = match out {
            Some(o) => o,
            None => (self.shape().to_vec(), Buffer::zeros(0)?),
        };
        Ok(Tensor::from_op(shape, buf, &[], |_| Ok(Vec::new())))
    }

    /// Sliding windows along axis 0: `[T, ...]` → `[N, size, ...]` with
    /// window `j` covering rows `j·hop .. j·hop + size` and
    /// `N = (T − size) / hop + 1`.
    pub fn unfold_rows(&self, size: usize, hop: usize) -> Result<Tensor<S>> {
        if self.rank() == 0 || size == 0 || hop == 0 {
            return Err(TensorError::InvalidArgument {
                op: "unfold_rows",
                reason: format!("size {size}, hop {hop} on shape {:?}", self.shape()),
            });
        }
        let rows = self.shape()[0];
        if rows < size {
            return Err(TensorError::Degenerate {
                op: "unfold_rows",
                reason: format!("{rows} rows is shorter than window {size}"),
            });
        }
        let row = numel(&self.shape()[1..]);
        let windows = (rows - size) / hop + 1;
        let mut out = Buffer::zeros(windows * size * row)?;
        unfold_into(self.data(), row, size, hop, windows, &mut out);
        let mut shape = vec![windows, size];
        shape.extend_from_slice(&self.shape()[1..]);
        let total = self.numel();
        Ok(Tensor::from_op(shape, out, &[self], move |g| {
            let mut gx = vec![S::zero(); total];
            fold_into(g, row, size, hop, windows, &mut gx);
            Ok(vec![Some(gx)])
        }))
    }

    /// Overlap-add, the adjoint of [`unfold_rows`](Self::unfold_rows):
    /// `[N, size, ...]` → `[out_rows, ...]`, summing overlapping rows.
    pub fn fold_rows(&self, hop: usize, out_rows: usize) -> Result<Tensor<S>> {
        if self.rank() < 2 || hop == 0 {
            return Err(TensorError::InvalidArgument {
                op: "fold_rows",
                reason: format!("hop {hop} on shape {:?}", self.shape()),
            });
        }
        let (windows, size) = (self.shape()[0], self.shape()[1]);
        if windows > 0 && (windows - 1) * hop + size > out_rows {
            return Err(TensorError::InvalidArgument {
                op: "fold_rows",
                reason: format!("{windows} windows of {size} at hop {hop} exceed {out_rows} rows"),
            });
        }
        let row = numel(&self.shape()[2..]);
        let mut out = Buffer::zeros(out_rows * row)?;
        fold_into(self.data(), row, size, hop, windows, &mut out);
        let mut shape = vec![out_rows];
        shape.extend_from_slice(&self.shape()[2..]);
        Ok(Tensor::from_op(shape, out, &[self], move |g| {
            let mut gx = vec![S::zero(); windows * size * row];
            unfold_into(g, row, size, hop, windows, &mut gx);
            Ok(vec![Some(gx)])
        }))
    }
}

fn unfold_into<S: Scalar>(src: &[S], row: usize, size: usize, hop: usize, windows: usize, dst: &mut [S]) {
    let span = size * row;
    for j in 0..windows {
        let start = j * hop * row;
        dst[j * span..(j + 1) * span].copy_from_slice(&src[start..start + span]);
    }
}

fn fold_into<S: Scalar>(src: &[S], row: usize, size: usize, hop: usize, windows: usize, dst: &mut [S]) {
    let span = size * row;
    for j in 0..windows {
        let start = j * hop * row;
        dst[start..start + span]
            .iter_mut()
            .zip(&src[j * span..(j + 1) * span])
            .for_each(|(d, &s)| *d += s);
    }
}

/// Writes `src` (of `shape`) permuted by `axes` into `dst`. The innermost
/// output axis is copied as a contiguous run when it is also innermost in
/// the input.
fn permute_into<S: Scalar>(src: &[S], shape: &[usize], axes: &[usize], dst: &mut [S]) {
    let rank = shape.len();
    if rank == 0 || src.is_empty() {
        dst.copy_from_slice(src);
        return;
    }
    let mut in_strides = vec![1; rank];
    for i in (0..rank - 1).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();

    let contiguous_tail = axes[rank - 1] == rank - 1;
    let (outer_rank, run) = if contiguous_tail {
        (rank - 1, out_shape[rank - 1])
    } else {
        (rank, 1)
    };
    let mut index = vec![0usize; outer_rank];
    let mut offset = 0usize;
    for chunk in dst.chunks_mut(run) {
        if contiguous_tail {
            chunk.copy_from_slice(&src[offset..offset + run]);
        } else {
            chunk[0] = src[offset];
        }
        // Odometer increment over the outer output axes.
        for ax in (0..outer_rank).rev() {
            index[ax] += 1;
            offset += strides[ax];
            if index[ax] < out_shape[ax] {
                break;
            }
            offset -= strides[ax] * out_shape[ax];
            index[ax] = 0;
        }
    }
}
