//! Epoch loop shared by every model: seeded shuffle, batch size 1, one Adam
//! step per example.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::models::{GenerativeModel, Recognizer, WindowedModel};
use crate::optim::{Gradients, HasParameters};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Optional global gradient-norm clip; off unless set.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

/// Mean training loss of each epoch, computed from the per-example losses
/// seen before each update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epoch_losses: Vec<f64>,
}

impl TrainingTrace {
    pub fn first(&self) -> Option<f64> {
        self.epoch_losses.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }

    /// `epoch,loss` lines with a header; epochs count from 1.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for (i, l) in self.epoch_losses.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, l));
        }
        s
    }
}

/// Runs `epochs` passes over `examples` in a freshly shuffled order each
/// epoch. `step` returns the loss and gradient for one example and may draw
/// from the training generator.
pub fn train<M, E, F>(model: &mut M, examples: &[E], cfg: &TrainConfig, mut step: F) -> Result<TrainingTrace>
where
    M: HasParameters,
    F: FnMut(&M, &E, &mut ChaCha8Rng) -> Result<(f64, Gradients)>,
{
    if examples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut trace = TrainingTrace::default();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let (loss, grads) = step(model, &examples[i], &mut rng)?;
            total += loss;
            let store = model.params_mut();
            store.accumulate(&grads)?;
            if let Some(max) = cfg.clip_norm {
                store.clip_grad_norm(max);
            }
            store.adam_step(cfg.lr)?;
        }
        trace.epoch_losses.push(total / examples.len() as f64);
    }
    Ok(trace)
}

pub fn train_generative(model: &mut GenerativeModel, trials: &[Matrix], cfg: &TrainConfig) -> Result<TrainingTrace> {
    train(model, trials, cfg, |m, x, _| m.nll_grad(x))
}

/// One randomly placed window (or past/future pair) per trial per epoch.
/// Trials too short for a single example are skipped.
pub fn train_windowed(model: &mut WindowedModel, trials: &[Matrix], cfg: &TrainConfig) -> Result<TrainingTrace> {
    let span = model.config().span();
    let usable: Vec<&Matrix> = trials.iter().filter(|t| t.rows() >= span).collect();
    if usable.is_empty() && !trials.is_empty() {
        return Err(Error::invalid(format!(
            "no trial has the {span} frames one windowed example needs"
        )));
    }
    train(model, &usable, cfg, |m, x, rng| {
        let start = rng.random_range(0..=x.rows() - span);
        m.example_loss_grad(x, start)
    })
}

/// A labeled feature sequence for recognizer training.
#[derive(Clone, Copy, Debug)]
pub struct LabeledSequence<'a> {
    pub features: &'a Matrix,
    pub labels: &'a [usize],
}

pub fn train_recognizer(model: &mut Recognizer, examples: &[LabeledSequence<'_>], cfg: &TrainConfig) -> Result<TrainingTrace> {
    train(model, examples, cfg, |m, ex, _| m.loss_grad(ex.features, ex.labels))
}
