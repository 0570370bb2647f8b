//! Toy-scale training with the permutation-invariant SI-SNR loss on
//! dynamically mixed synthetic speakers.

use std::sync::mpsc::sync_channel;

use serde::{Deserialize, Serialize};

use crate::data::{dynamic_mix, generate_sources, MixSpec, MixtureExample};
use crate::error::{Error, Result};
use crate::model::SeparationModel;
use crate::objective::{permutations, pit_loss, si_snr};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const METRICS_HEADER: &str = "step,loss,heldout_si_snri_db";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Linear ramp from 0 to `learning_rate` over this many steps.
    pub warmup_steps: usize,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    pub eval_every: usize,
    pub heldout_examples: usize,
    pub heldout_seed: u64,
    /// Training stream seed; set from the run seed, not from JSON.
    #[serde(skip)]
    pub seed: u64,
    /// Batches generated ahead of the optimizer.
    pub queue_capacity: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 600,
            batch_size: 4,
            learning_rate: 1e-3,
            warmup_steps: 0,
            grad_clip: 5.0,
            eval_every: 50,
            heldout_examples: 8,
            heldout_seed: 1 << 40,
            seed: 0,
            queue_capacity: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_every == 0 || self.heldout_examples == 0 || self.queue_capacity == 0 {
            return Err(Error::Config(
                "batch_size, eval_every, heldout_examples and queue_capacity must be ≥ 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.grad_clip >= 0.0) {
            return Err(Error::Config("learning_rate must be > 0 and grad_clip ≥ 0".into()));
        }
        Ok(())
    }

    fn rate_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64
        } else {
            self.learning_rate
        }
    }
}

/// Adam with bias-corrected moments, `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8`.
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Updates `params` in registration order from `grads`, one flat
    /// gradient per parameter.
    pub fn update(&mut self, params: &mut ParamStore, grads: &[Vec<f64>], lr: f64) -> Result<()> {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let ids: Vec<_> = params.ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads[i]);
            let current = params.get(id);
            let shape = current.shape().to_vec();
            let mut w = current.to_vec();
            for j in 0..w.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                w[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
            }
            params.set(id, Tensor::new(&shape, w)?)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub loss: f64,
    pub heldout_si_snri_db: f64,
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.step, r.loss, r.heldout_si_snri_db));
    }
    s
}

pub struct TrainReport {
    pub model: SeparationModel,
    /// Training loss of every step, before its update.
    pub losses: Vec<f64>,
    pub metrics: Vec<MetricRow>,
}

/// Seed of the `index`-th example drawn from stream `base`.
pub fn example_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn make_example(spec: &MixSpec, seed: u64) -> Result<MixtureExample> {
    let spec = spec.with_seed(seed);
    dynamic_mix(&generate_sources(&spec)?, &spec)
}

/// Fixed held-out set, independent of the training stream.
pub fn heldout_set(spec: &MixSpec, config: &TrainConfig) -> Result<Vec<MixtureExample>> {
    (0..config.heldout_examples as u64)
        .map(|i| make_example(spec, example_seed(config.heldout_seed, i)))
        .collect()
}

/// Mean SI-SNR improvement over targets, each matched to its estimate by
/// the best permutation of unclamped SI-SNR.
pub fn mean_si_snri(model: &SeparationModel, examples: &[MixtureExample]) -> Result<f64> {
    let frozen = model.frozen();
    let mut total = 0.0;
    for ex in examples {
        let targets = ex.scaled_sources()?;
        let ests = frozen.separate(&ex.mixture)?.sources;
        let ns = targets.len();
        let mut pair = vec![vec![0.0; ns]; ns];
        for (i, e) in ests.iter().enumerate() {
            for (k, t) in targets.iter().enumerate() {
                pair[i][k] = si_snr(e, t)?;
            }
        }
        let best = permutations(ns)
            .into_iter()
            .map(|p| p.iter().enumerate().map(|(k, &i)| pair[i][k]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let baseline: f64 = targets.iter().map(|t| si_snr(&ex.mixture, t)).sum::<Result<f64>>()?;
        total += (best - baseline) / ns as f64;
    }
    Ok(total / examples.len() as f64)
}

/// Runs `config.steps` Adam steps from `model`. Training examples are
/// generated on a second thread, at most `queue_capacity` batches ahead.
pub fn train(model: SeparationModel, spec: &MixSpec, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    spec.validate()?;
    if spec.num_sources != model.config().num_sources {
        return Err(Error::Config(format!(
            "mixtures have {} sources but the model separates {}",
            spec.num_sources,
            model.config().num_sources
        )));
    }
    let heldout = heldout_set(spec, config)?;
    let mut model = model;
    let mut adam = Adam::new(&model.params);
    let mut losses = Vec::with_capacity(config.steps);
    let mut metrics = Vec::new();

    std::thread::scope(|scope| {
        let (tx, rx) = sync_channel::<Result<Vec<MixtureExample>>>(config.queue_capacity);
        scope.spawn(move || {
            for step in 0..config.steps {
                let batch = (0..config.batch_size)
                    .map(|b| make_example(spec, example_seed(config.seed, (step * config.batch_size + b) as u64)))
                    .collect();
                if tx.send(batch).is_err() {
                    break;
                }
            }
        });

        for step in 0..config.steps {
            let batch = rx.recv().expect("producer runs for every step")?;
            let trainable = model.trainable();
            let mut loss: Option<Tensor> = None;
            for ex in &batch {
                let ests = trainable.separate(&ex.mixture)?.sources;
                let term = pit_loss(&ests, &ex.scaled_sources()?)?.loss;
                loss = Some(match loss {
                    None => term,
                    Some(acc) => acc.add(&term)?,
                });
            }
            let loss = loss.expect("batch_size ≥ 1").scale(1.0 / batch.len() as f64)?;
            let value = loss.item()?;
            let grads = loss.backward()?;
            let mut flat: Vec<Vec<f64>> = trainable
                .params
                .iter()
                .map(|(_, p)| grads.wrt(p).map(|g| g.to_vec()))
                .collect::<std::result::Result<_, _>>()?;
            let norm = flat.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
            if !value.is_finite() || !norm.is_finite() {
                return Err(Error::NonFinite { step, grad_norm: norm });
            }
            if config.grad_clip > 0.0 && norm > config.grad_clip {
                let s = config.grad_clip / norm;
                flat.iter_mut().flatten().for_each(|g| *g *= s);
            }
            if step % config.eval_every == 0 {
                metrics.push(MetricRow {
                    step,
                    loss: value,
                    heldout_si_snri_db: mean_si_snri(&model, &heldout)?,
                });
            }
            losses.push(value);
            adam.update(&mut model.params, &flat, config.rate_at(step))?;
        }
        Ok::<_, Error>(())
    })?;

    let final_loss = losses.last().copied().unwrap_or(f64::NAN);
    metrics.push(MetricRow {
        step: config.steps,
        loss: final_loss,
        heldout_si_snri_db: mean_si_snri(&model, &heldout)?,
    });
    Ok(TrainReport { model, losses, metrics })
}
