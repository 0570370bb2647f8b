use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Element type of a [`Tensor`](super::Tensor).
///
/// `f64` is the default everywhere correctness is checked; `f32` exists for
/// the inference benchmark.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    /// Short name used in reports ("f32" / "f64").
    const NAME: &'static str;

    /// `c = a · b` (or `c += a · b` when `accumulate`), with `a` of shape
    /// `m×k`, `b` of shape `k×n` and `c` of shape `m×n`, all addressed by
    /// element strides relative to the start of their slices.
    #[allow(clippy::too_many_arguments)]
    fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        c: &mut [Self],
        c_strides: (usize, usize),
        accumulate: bool,
    );

    /// `x ← eˣ` over a slice. The `f32` version is a branch-free polynomial
    /// accurate to a few ulp; `f64` uses the standard library.
    fn exp_in_place(xs: &mut [Self]);

    /// `xs ← exp(scale · (xs − max xs))`, returning the sum; `scale > 0`.
    fn softmax_numerator(xs: &mut [Self], scale: Self) -> Self;

    /// `xs ← softmax(scale · xs)` over the whole slice.
    fn softmax_scaled(xs: &mut [Self], scale: Self) {
        let inv = Self::one() / Self::softmax_numerator(xs, scale);
        xs.iter_mut().for_each(|x| *x *= inv);
    }

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 is representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, (rs, cs): (usize, usize), what: &str) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) * rs + (cols - 1) * cs;
    assert!(last < len, "gemm operand {what} out of bounds: index {last} >= len {len}");
}

macro_rules! impl_scalar {
    ($t:ty, $name:literal, $gemm:path, $exp:path, $softmax:path) => {
        impl Scalar for $t {
            const NAME: &'static str = $name;

            fn exp_in_place(xs: &mut [Self]) {
                $exp(xs)
            }

            fn softmax_numerator(xs: &mut [Self], scale: Self) -> Self {
                $softmax(xs, scale)
            }

            fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_strides: (usize, usize),
                b: &[Self],
                b_strides: (usize, usize),
                c: &mut [Self],
                c_strides: (usize, usize),
                accumulate: bool,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                check_extent(c.len(), m, n, c_strides, "c");
                if k == 0 {
                    if !accumulate {
                        for i in 0..m {
                            for j in 0..n {
                                c[i * c_strides.0 + j * c_strides.1] = 0.0;
                            }
                        }
                    }
                    return;
                }
                check_extent(a.len(), m, k, a_strides, "a");
                check_extent(b.len(), k, n, b_strides, "b");
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: every addressed element was bounds-checked above and
                // `c` does not alias `a` or `b` (distinct borrows).
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_strides.0 as isize,
                        a_strides.1 as isize,
                        b.as_ptr(),
                        b_strides.0 as isize,
                        b_strides.1 as isize,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0 as isize,
                        c_strides.1 as isize,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, "f32", matrixmultiply::sgemm, exp_f32, softmax_f32);
impl_scalar!(f64, "f64", matrixmultiply::dgemm, exp_f64, softmax_f64);

fn exp_f64(xs: &mut [f64]) {
    xs.iter_mut().for_each(|x| *x = x.exp());
}

fn softmax_f64(xs: &mut [f64], scale: f64) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (scale * (*x - max)).exp();
        total += *x;
    }
    total
}

const LANES: usize = 16;

/// Picks the widest vector extension available at run time.
fn softmax_f32(xs: &mut [f32], scale: f32) -> f32 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the required target feature was detected above.
            return unsafe { softmax_f32_avx512(xs, scale) };
        }
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the required target features were detected above.
            return unsafe { softmax_f32_avx2(xs, scale) };
        }
    }
    softmax_f32_lanes(xs, scale, |a, b, c| a * b + c)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,fma")]
unsafe fn softmax_f32_avx512(xs: &mut [f32], scale: f32) -> f32 {
    softmax_f32_lanes(xs, scale, f32::mul_add)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn softmax_f32_avx2(xs: &mut [f32], scale: f32) -> f32 {
    softmax_f32_lanes(xs, scale, f32::mul_add)
}

/// Lane-parallel passes so the loops vectorize; assumes `scale > 0`.
#[inline(always)]
fn softmax_f32_lanes(xs: &mut [f32], scale: f32, fma: impl Fn(f32, f32, f32) -> f32 + Copy) -> f32 {
    let mut lane_max = [f32::NEG_INFINITY; LANES];
    let mut chunks = xs.chunks_exact(LANES);
    for c in &mut chunks {
        for (m, &x) in lane_max.iter_mut().zip(c) {
            *m = if x > *m { x } else { *m };
        }
    }
    let max = chunks
        .remainder()
        .iter()
        .chain(&lane_max)
        .copied()
        .fold(f32::NEG_INFINITY, f32::max);
    // e^(scale·(x − max)) = 2^(x·a − b)
    let a = scale * std::f32::consts::LOG2_E;
    let b = a * max;
    let mut lane_sum = [0.0f32; LANES];
    let mut chunks = xs.chunks_exact_mut(LANES);
    for c in &mut chunks {
        for (s, x) in lane_sum.iter_mut().zip(c.iter_mut()) {
            *x = exp2_non_positive(fma(*x, a, -b), fma);
            *s += *x;
        }
    }
    let mut total: f32 = lane_sum.iter().sum();
    for x in chunks.into_remainder() {
        *x = exp2_non_positive(fma(*x, a, -b), fma);
        total += *x;
    }
    total
}

/// `2ᵗ` for `t ≤ 0`, flushing below `2⁻¹²⁶`. Degree-6 Taylor polynomial on
/// the fractional part in `[−½, ½]`, relative error below `2e-7`.
#[inline(always)]
fn exp2_non_positive(t: f32, fma: impl Fn(f32, f32, f32) -> f32) -> f32 {
    const ROUND: f32 = 12_582_912.0; // 1.5 · 2²³
    const C: [f32; 6] = [
        0.693_147_2,
        0.240_226_5,
        0.055_504_11,
        0.009_618_129,
        0.001_333_355_8,
        0.000_154_035_3,
    ];
    let t = if t > -126.0 { t } else { -126.0 };
    let shifted = t + ROUND;
    let r = t - (shifted - ROUND);
    let mut p = C[5];
    p = fma(p, r, C[4]);
    p = fma(p, r, C[3]);
    p = fma(p, r, C[2]);
    p = fma(p, r, C[1]);
    p = fma(p, r, C[0]);
    let e = fma(p, r, 1.0);
    let n = shifted.to_bits().wrapping_sub(ROUND.to_bits());
    e * f32::from_bits(n.wrapping_add(127) << 23)
}

/// Range reduction `x = n·ln2 + r`, `|r| ≤ ln2/2`, then a degree-6
/// polynomial for `eʳ` scaled by `2ⁿ` through the exponent bits.
fn exp_f32(xs: &mut [f32]) {
    xs.iter_mut().for_each(|x| *x = exp1(*x));
}

#[inline(always)]
fn exp1(x: f32) -> f32 {
    exp_poly(x, |a, b, c| a * b + c)
}

#[inline(always)]
fn exp_poly(x: f32, fma: impl Fn(f32, f32, f32) -> f32) -> f32 {
    const LOG2E: f32 = std::f32::consts::LOG2_E;
    const LN2_HI: f32 = 0.693_359_4;
    const LN2_LO: f32 = -2.121_944_4e-4;
    const ROUND: f32 = 12_582_912.0; // 1.5 · 2²³
    let v = if x < -87.0 { -87.0 } else if x > 88.0 { 88.0 } else { x };
    // The rounded multiple of ln2 lands in the low mantissa bits.
    let t = fma(v, LOG2E, ROUND);
    let n = t - ROUND;
    let r = fma(-n, LN2_LO, fma(-n, LN2_HI, v));
    let mut p = 1.987_569_2e-4_f32;
    p = fma(p, r, 1.398_199_9e-3);
    p = fma(p, r, 8.333_452e-3);
    p = fma(p, r, 4.166_579_6e-2);
    p = fma(p, r, 1.666_666_5e-1);
    p = fma(p, r, 5.000_000_1e-1);
    let e = fma(p, r * r, r + 1.0);
    let n_int = t.to_bits().wrapping_sub(ROUND.to_bits());
    let scale = f32::from_bits(n_int.wrapping_add(127) << 23);
    if x < -87.0 {
        0.0
    } else {
        e * scale
    }
}
