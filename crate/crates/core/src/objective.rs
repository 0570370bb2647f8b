//! Scale-invariant SNR, a simple SDR ratio, and the permutation-invariant
//! training loss.
//!
//! SDR here is the plain energy ratio `‖t‖² / ‖t − e‖²`, not the
//! BSS-eval decomposition with distortion filters; its values are not
//! comparable to BSS-eval SDR.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const SI_SNR_EPS: f64 = 1e-8;
/// Training-loss clamp, in dB, on either side.
pub const SI_SNR_CLAMP_DB: f64 = 30.0;

const DB: f64 = 10.0 / std::f64::consts::LN_10;

struct Projection {
    est: Vec<f64>,
    target: Vec<f64>,
    alpha: f64,
    target_energy: f64,
    signal_energy: f64,
    noise_energy: f64,
}

impl Projection {
    fn new<S: Scalar>(est: &Tensor<S>, target: &Tensor<S>) -> Result<Self> {
        if est.rank() != 1 || target.rank() != 1 || est.numel() != target.numel() {
            return Err(Error::Tensor(crate::tensor::TensorError::ShapeMismatch {
                op: "si_snr",
                lhs: est.shape().to_vec(),
                rhs: target.shape().to_vec(),
            }));
        }
        if est.numel() < 2 {
            return Err(Error::Degenerate("si_snr needs at least 2 samples".into()));
        }
        let est = zero_mean(&est.to_f64_vec());
        let target = zero_mean(&target.to_f64_vec());
        let target_energy = dot(&target, &target);
        if target_energy == 0.0 {
            return Err(Error::Degenerate("target is all-zero after removing its mean".into()));
        }
        let alpha = dot(&est, &target) / (target_energy + SI_SNR_EPS);
        let signal_energy = alpha * alpha * target_energy;
        let noise_energy = est
            .iter()
            .zip(&target)
            .map(|(e, t)| (e - alpha * t).powi(2))
            .sum();
        Ok(Projection {
            est,
            target,
            alpha,
            target_energy,
            signal_energy,
            noise_energy,
        })
    }

    /// Noise energy plus `ε` times the signal energy, so that `ε` scales
    /// with the estimate and leaves the ratio exactly scale-invariant.
    fn floored_noise(&self) -> f64 {
        self.noise_energy + SI_SNR_EPS * self.signal_energy
    }

    fn db(&self) -> f64 {
        if self.signal_energy == 0.0 {
            return f64::NEG_INFINITY;
        }
        DB * (self.signal_energy / self.floored_noise()).ln()
    }

    /// Gradient of the unclamped dB value w.r.t. the raw estimate.
    fn grad(&self) -> Vec<f64> {
        let (a, tt) = (self.alpha, self.target_energy);
        let d = tt + SI_SNR_EPS;
        let p = self.signal_energy;
        let n = self.floored_noise();
        let mut g: Vec<f64> = self
            .est
            .iter()
            .zip(&self.target)
            .map(|(&e, &t)| {
                let dp = 2.0 * a * tt * t / d;
                let dn = 2.0 * e - 4.0 * a * t + 2.0 * a * (tt / d) * t;
                DB * (dp / p - (dn + SI_SNR_EPS * dp) / n)
            })
            .collect();
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        g.iter_mut().for_each(|v| *v -= mean);
        g
    }
}

fn zero_mean(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// SI-SNR in dB, unclamped. `−∞` when the estimate is orthogonal to the
/// target.
pub fn si_snr<S: Scalar>(est: &Tensor<S>, target: &Tensor<S>) -> Result<f64> {
    Ok(Projection::new(est, target)?.db())
}

/// SI-SNR clamped to `±30 dB` as a differentiable scalar. The gradient
/// flows to `est` only and vanishes where the clamp is active.
pub fn si_snr_clamped<S: Scalar>(est: &Tensor<S>, target: &Tensor<S>) -> Result<Tensor<S>> {
    let proj = Projection::new(est, target)?;
    let raw = proj.db();
    let value = raw.clamp(-SI_SNR_CLAMP_DB, SI_SNR_CLAMP_DB);
    let active = raw > -SI_SNR_CLAMP_DB && raw < SI_SNR_CLAMP_DB;
    Ok(Tensor::custom_op(&[], vec![S::from_f64_lossy(value)], &[est, target], move |g| {
        let scale = g[0].to_f64_lossy();
        let ge: Vec<S> = if active {
            proj.grad().into_iter().map(|v| S::from_f64_lossy(v * scale)).collect()
        } else {
            vec![S::zero(); proj.est.len()]
        };
        Ok(vec![Some(ge), None])
    })?)
}

/// `SI-SNR(est, target) − SI-SNR(mixture, target)`.
pub fn si_snr_improvement<S: Scalar>(est: &Tensor<S>, target: &Tensor<S>, mixture: &Tensor<S>) -> Result<f64> {
    Ok(si_snr(est, target)? - si_snr(mixture, target)?)
}

/// `10·log₁₀(‖target‖² / ‖target − est‖²)`.
pub fn sdr<S: Scalar>(est: &Tensor<S>, target: &Tensor<S>) -> Result<f64> {
    if est.shape() != target.shape() {
        return Err(Error::LengthMismatch(est.numel(), target.numel()));
    }
    let (e, t) = (est.to_f64_vec(), target.to_f64_vec());
    let signal = dot(&t, &t);
    let residual: f64 = t.iter().zip(&e).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(DB * (signal / residual).ln())
}

pub fn sdr_improvement<S: Scalar>(est: &Tensor<S>, target: &Tensor<S>, mixture: &Tensor<S>) -> Result<f64> {
    Ok(sdr(est, target)? - sdr(mixture, target)?)
}

#[derive(Debug, Clone)]
pub struct PitResult<S: Scalar = f64> {
    /// `−mean` of the clamped SI-SNRs under the best assignment.
    pub loss: Tensor<S>,
    /// `best_permutation[k]` is the estimate matched to target `k`.
    pub best_permutation: Vec<usize>,
    /// Clamped SI-SNR of each target against its matched estimate.
    pub per_source_si_snr: Vec<f64>,
}

/// Permutation-invariant SI-SNR loss by exhaustive search over all `Ns!`
/// assignments. Ties keep the lexicographically first permutation.
pub fn pit_loss<S: Scalar>(ests: &[Tensor<S>], targets: &[Tensor<S>]) -> Result<PitResult<S>> {
    let ns = targets.len();
    if ns == 0 || ests.len() != ns {
        return Err(Error::LengthMismatch(ests.len(), ns));
    }
    let mut pair = vec![vec![0.0; ns]; ns];
    for (i, est) in ests.iter().enumerate() {
        for (k, target) in targets.iter().enumerate() {
            pair[i][k] = si_snr(est, target)?.clamp(-SI_SNR_CLAMP_DB, SI_SNR_CLAMP_DB);
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in permutations(ns) {
        let total = perm.iter().enumerate().map(|(k, &i)| pair[i][k]).sum::<f64>();
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, perm));
        }
    }
    let (_, perm) = best.expect("at least one permutation");

    let mut sum: Option<Tensor<S>> = None;
    for (k, &i) in perm.iter().enumerate() {
        let term = si_snr_clamped(&ests[i], &targets[k])?;
        sum = Some(match sum {
            None => term,
            Some(acc) => acc.add(&term)?,
        });
    }
    let loss = sum.expect("ns ≥ 1").scale(S::from_f64_lossy(-1.0 / ns as f64))?;
    let per_source_si_snr = perm.iter().enumerate().map(|(k, &i)| pair[i][k]).collect();
    Ok(PitResult {
        loss,
        best_permutation: perm,
        per_source_si_snr,
    })
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                extend(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}
