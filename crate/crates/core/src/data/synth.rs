use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const LOWEST_HZ: f64 = 100.0;
const HIGHEST_HZ: f64 = 3800.0;
const FORMANTS: usize = 3;
const FILTER_WARMUP: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixSpec {
    pub num_sources: usize,
    pub sample_rate: u32,
    pub duration_s: f64,
    /// Relative gain of sources 2..Ns, in dB, drawn uniformly.
    pub relative_gain_range_db: [f64; 2],
    pub noise: Option<NoiseSpec>,
    /// Set programmatically per example, not from JSON.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for MixSpec {
    fn default() -> Self {
        MixSpec {
            num_sources: 2,
            sample_rate: 8000,
            duration_s: 1.0,
            relative_gain_range_db: [0.0, 5.0],
            noise: None,
            seed: 0,
        }
    }
}

/// Colored noise whose level changes between piecewise-stationary
/// segments, mixed at an SNR drawn uniformly from `snr_db_range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub snr_db_range: [f64; 2],
}

impl MixSpec {
    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        MixSpec { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_sources == 0 {
            return Err(Error::Config("num_sources must be ≥ 1".into()));
        }
        if !(self.duration_s > 0.0) || self.num_samples() == 0 {
            return Err(Error::Config(format!("duration {} s is empty", self.duration_s)));
        }
        if self.sample_rate == 0 || (self.sample_rate as f64) < 2.0 * HIGHEST_HZ {
            return Err(Error::Config(format!(
                "sample rate {} Hz is below {} Hz",
                self.sample_rate,
                2.0 * HIGHEST_HZ
            )));
        }
        let [lo, hi] = self.relative_gain_range_db;
        if !(lo <= hi) {
            return Err(Error::Config(format!("gain range [{lo}, {hi}] dB is empty")));
        }
        if let Some(noise) = &self.noise {
            let [lo, hi] = noise.snr_db_range;
            if !(lo <= hi) {
                return Err(Error::Config(format!("noise SNR range [{lo}, {hi}] dB is empty")));
            }
        }
        Ok(())
    }
}

/// Frequency band `[lo, hi]` in Hz reserved for speaker `k` of `n`: the
/// log-frequency axis is split into `n` equal regions and the outer 15%
/// of each region is left empty.
pub fn speaker_band(k: usize, n: usize) -> (f64, f64) {
    let (a, b) = (LOWEST_HZ.ln(), HIGHEST_HZ.ln());
    let width = (b - a) / n as f64;
    let lo = a + width * (k as f64 + 0.15);
    let hi = a + width * (k as f64 + 0.85);
    (lo.exp(), hi.exp())
}

/// `Ns` synthetic speakers: white noise through three cascaded band-pass
/// resonators placed inside the speaker's band, modulated at 2–8 Hz, then
/// scaled to unit RMS.
pub fn generate_sources(spec: &MixSpec) -> Result<Vec<Tensor>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let len = spec.num_samples();
    let fs = spec.sample_rate as f64;
    (0..spec.num_sources)
        .map(|k| {
            let (lo, hi) = speaker_band(k, spec.num_sources);
            let mut voice = vec![0.0; len];
            for _ in 0..FORMANTS {
                let centre = rng.random_range(lo.ln()..hi.ln()).exp();
                let q = rng.random_range(4.0..8.0);
                let weight = rng.random_range(0.5..1.0);
                let noise: Vec<f64> = (0..len + FILTER_WARMUP).map(|_| rng.random_range(-1.0..1.0)).collect();
                let band = Biquad::band_pass(centre, q, fs).run(&Biquad::band_pass(centre, q, fs).run(&noise));
                voice
                    .iter_mut()
                    .zip(&band[FILTER_WARMUP..])
                    .for_each(|(v, b)| *v += weight * b);
            }
            let rate = rng.random_range(2.0..8.0);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let depth = rng.random_range(0.5..0.9);
            for (n, v) in voice.iter_mut().enumerate() {
                let t = n as f64 / fs;
                *v *= 1.0 - depth * 0.5 * (1.0 + (std::f64::consts::TAU * rate * t + phase).sin());
            }
            normalize_rms(&mut voice);
            Ok(Tensor::from_f64(&[len], &voice)?)
        })
        .collect()
}

fn normalize_rms(x: &mut [f64]) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
}

/// RBJ band-pass with 0 dB peak gain, direct form I.
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn band_pass(centre: f64, q: f64, fs: f64) -> Self {
        let w0 = std::f64::consts::TAU * centre / fs;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Biquad {
            b: [alpha / a0, 0.0, -alpha / a0],
            a: [-2.0 * w0.cos() / a0, (1.0 - alpha) / a0],
        }
    }

    fn run(&self, x: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&x0| {
                let y0 = self.b[0] * x0 + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
                (x2, x1, y2, y1) = (x1, x0, y1, y0);
                y0
            })
            .collect()
    }
}

/// A mixture and the exact recipe that produced it.
#[derive(Debug, Clone)]
pub struct MixtureExample {
    pub mixture: Tensor,
    pub sources: Vec<Tensor>,
    pub gains_db: Vec<f64>,
    pub noise: Option<Tensor>,
}

impl MixtureExample {
    pub fn linear_gains(&self) -> Vec<f64> {
        self.gains_db.iter().map(|&g| db_to_gain(g)).collect()
    }

    /// Each source as it appears in the mixture, `g_k · s_k`.
    pub fn scaled_sources(&self) -> Result<Vec<Tensor>> {
        self.sources
            .iter()
            .zip(self.linear_gains())
            .map(|(s, g)| Ok(s.scale(g)?))
            .collect()
    }
}

pub fn db_to_gain(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Source 1 at 0 dB, every other source at a gain drawn from
/// `relative_gain_range_db`, plus optional noise.
pub fn dynamic_mix(sources: &[Tensor], spec: &MixSpec) -> Result<MixtureExample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let [lo, hi] = spec.relative_gain_range_db;
    let gains_db: Vec<f64> = (0..sources.len())
        .map(|k| if k == 0 { 0.0 } else { rng.random_range(lo..=hi) })
        .collect();
    let noise = match &spec.noise {
        None => None,
        Some(noise) => {
            let speech = mix_with_gains(sources, &gains_db, None)?.mixture;
            let snr_db = rng.random_range(noise.snr_db_range[0]..=noise.snr_db_range[1]);
            Some(nonstationary_noise(&mut rng, &speech, snr_db, spec.sample_rate)?)
        }
    };
    mix_with_gains(sources, &gains_db, noise)
}

/// `mixture = Σ_k 10^(g_k/20)·s_k (+ noise)`, summed in source order.
pub fn mix_with_gains(sources: &[Tensor], gains_db: &[f64], noise: Option<Tensor>) -> Result<MixtureExample> {
    let first = sources.first().ok_or_else(|| Error::Config("no sources to mix".into()))?;
    if gains_db.len() != sources.len() {
        return Err(Error::LengthMismatch(gains_db.len(), sources.len()));
    }
    let len = first.numel();
    if let Some(bad) = sources.iter().chain(&noise).find(|s| s.shape() != [len]) {
        return Err(Error::LengthMismatch(bad.numel(), len));
    }
    let mut mix = vec![0.0; len];
    for (s, &g) in sources.iter().zip(gains_db) {
        let g = db_to_gain(g);
        mix.iter_mut().zip(s.data()).for_each(|(m, v)| *m += g * v);
    }
    if let Some(n) = &noise {
        mix.iter_mut().zip(n.data()).for_each(|(m, v)| *m += v);
    }
    Ok(MixtureExample {
        mixture: Tensor::from_f64(&[len], &mix)?,
        sources: sources.to_vec(),
        gains_db: gains_db.to_vec(),
        noise,
    })
}

/// Low-passed white noise with a level that jumps every 0.25–1 s, scaled
/// so that `speech` over noise energy equals `snr_db`.
fn nonstationary_noise(rng: &mut ChaCha8Rng, speech: &Tensor, snr_db: f64, sample_rate: u32) -> Result<Tensor> {
    let len = speech.numel();
    let pole = rng.random_range(0.0..0.95);
    let mut state = 0.0;
    let mut noise = Vec::with_capacity(len);
    let mut level = 1.0;
    let mut left = 0usize;
    for _ in 0..len {
        if left == 0 {
            left = (rng.random_range(0.25..1.0) * sample_rate as f64) as usize + 1;
            level = db_to_gain(rng.random_range(-6.0..6.0));
        }
        left -= 1;
        state = pole * state + (1.0 - pole) * rng.random_range(-1.0..1.0);
        noise.push(level * state);
    }
    let speech_energy: f64 = speech.data().iter().map(|v| v * v).sum();
    let noise_energy: f64 = noise.iter().map(|v| v * v).sum();
    if noise_energy > 0.0 {
        let scale = (speech_energy / noise_energy / db_to_gain(snr_db).powi(2)).sqrt();
        noise.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(Tensor::from_f64(&[len], &noise)?)
}
