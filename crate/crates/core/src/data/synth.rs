//! Synthetic stand-in for recorded kinematics.
//!
//! Activities follow a per-subject Markov chain with geometric segment
//! durations. Each activity drives every channel with its own sinusoid;
//! subjects scale channel amplitudes and the recording adds Gaussian noise.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Trial};
use crate::error::{Error, Result};
use crate::math::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub trials_per_subject: usize,
    pub n_classes: usize,
    pub n_x: usize,
    /// Mean segment duration in raw frames.
    pub mean_segment_len: f64,
    /// Trial length in raw frames.
    pub trial_len: usize,
    pub noise_std: f64,
    /// Standard deviation of the per-subject, per-channel amplitude factor.
    pub amplitude_jitter: f64,
    /// Spread of the per-activity channel offsets.
    pub offset_scale: f64,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 8,
            trials_per_subject: 4,
            n_classes: 4,
            n_x: 14,
            mean_segment_len: 90.0,
            trial_len: 960,
            noise_std: 0.1,
            amplitude_jitter: 0.25,
            offset_scale: 0.15,
            sample_rate_hz: 30.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let counts = [
            ("n_subjects", self.n_subjects),
            ("trials_per_subject", self.trials_per_subject),
            ("n_classes", self.n_classes),
            ("n_x", self.n_x),
            ("trial_len", self.trial_len),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("synthetic {name} must be at least 1")));
        }
        if !(self.mean_segment_len >= 1.0) {
            return Err(Error::invalid("mean_segment_len must be at least 1"));
        }
        let reals = [self.noise_std, self.amplitude_jitter, self.offset_scale];
        if reals.iter().any(|v| !v.is_finite() || *v < 0.0) || !(self.sample_rate_hz > 0.0) {
            return Err(Error::invalid("synthetic noise, jitter, and offset scales must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Emission parameters of one (activity, channel) pair.
#[derive(Clone, Copy)]
struct Wave {
    freq_hz: f64,
    amplitude: f64,
    phase: f64,
    offset: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Samples from unnormalized non-negative weights.
fn categorical(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if r < *w {
            return k;
        }
        r -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Geometric duration on {1, 2, …} with the given mean.
fn duration(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 1.0 {
        return 1;
    }
    let p = 1.0 / mean;
    let u: f64 = 1.0 - rng.random::<f64>();
    (u.ln() / (1.0 - p).ln()).ceil().max(1.0) as usize
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let k = cfg.n_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let waves: Vec<Vec<Wave>> = (0..k)
        .map(|_| {
            (0..cfg.n_x)
                .map(|_| Wave {
                    freq_hz: rng.random_range(0.1..1.0),
                    amplitude: rng.random_range(0.5..1.5),
                    phase: rng.random_range(0.0..TAU),
                    offset: cfg.offset_scale * normal(&mut rng),
                })
                .collect()
        })
        .collect();
    // base transitions never stay in place; durations govern self-persistence
    let base: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { 0.0 } else { rng.random_range(0.2..1.0) }).collect())
        .collect();

    let mut trials = Vec::with_capacity(cfg.n_subjects * cfg.trials_per_subject);
    for s in 0..cfg.n_subjects {
        let transitions: Vec<Vec<f64>> = base
            .iter()
            .map(|row| row.iter().map(|w| w * (0.5 * normal(&mut rng)).exp()).collect())
            .collect();
        let gains: Vec<f64> = (0..cfg.n_x)
            .map(|_| (1.0 + cfg.amplitude_jitter * normal(&mut rng)).max(0.1))
            .collect();
        for j in 0..cfg.trials_per_subject {
            let mut labels = Vec::with_capacity(cfg.trial_len);
            let mut act = rng.random_range(0..k);
            while labels.len() < cfg.trial_len {
                let d = duration(&mut rng, cfg.mean_segment_len).min(cfg.trial_len - labels.len());
                labels.extend(std::iter::repeat_n(act, d));
                if k > 1 {
                    act = categorical(&mut rng, &transitions[act]);
                }
            }
            let mut data = Vec::with_capacity(cfg.trial_len * cfg.n_x);
            for (t, &a) in labels.iter().enumerate() {
                let time = t as f64 / cfg.sample_rate_hz;
                for (c, w) in waves[a].iter().enumerate() {
                    let clean = w.offset + gains[c] * w.amplitude * (TAU * w.freq_hz * time + w.phase).sin();
                    data.push(clean + cfg.noise_std * normal(&mut rng));
                }
            }
            trials.push(Trial {
                trial_id: format!("s{s:02}_t{j:02}"),
                subject_id: format!("s{s:02}"),
                kinematics: Matrix::from_vec(cfg.trial_len, cfg.n_x, data)?,
                labels: Some(labels),
            });
        }
    }
    let ds = Dataset {
        trials,
        activity_names: (0..k).map(|i| format!("activity{i}")).collect(),
        sample_rate_hz: cfg.sample_rate_hz,
    };
    ds.validate()?;
    Ok(ds)
}
