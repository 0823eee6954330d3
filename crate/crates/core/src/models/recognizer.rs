//! Frame-wise activity recognizer: a multilayer bidirectional LSTM followed by
//! a per-frame affine map and softmax, trained with cross entropy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{bidirectional_stack_backward, bidirectional_stack_forward, BiLayerWeights};
use crate::math::{affine, gemv_t_acc, log_sum_exp, outer_acc, softmax, Matrix};
use crate::models::layers::{AffineParams, LstmParams};
use crate::optim::{Gradients, HasParameters, ParameterStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecognizerConfig {
    pub input_dim: usize,
    pub n_classes: usize,
    pub layers: usize,
    pub hidden: usize,
    /// Whether `hidden` counts both directions together (halved per
    /// direction) rather than each direction separately.
    #[serde(default)]
    pub hidden_is_total: bool,
}

impl RecognizerConfig {
    pub fn new(input_dim: usize, n_classes: usize) -> Self {
        RecognizerConfig {
            input_dim,
            n_classes,
            layers: 3,
            hidden: 64,
            hidden_is_total: false,
        }
    }

    pub fn hidden_per_direction(&self) -> usize {
        if self.hidden_is_total {
            (self.hidden / 2).max(1)
        } else {
            self.hidden
        }
    }
}

#[derive(Clone, Debug)]
pub struct Recognizer {
    config: RecognizerConfig,
    store: ParameterStore,
    layers: Vec<(LstmParams, LstmParams)>,
    output: AffineParams,
}

impl HasParameters for Recognizer {
    fn params(&self) -> &ParameterStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }
}

impl Recognizer {
    pub fn new(config: RecognizerConfig, seed: u64) -> Result<Self> {
        if config.input_dim == 0 || config.n_classes == 0 || config.layers == 0 || config.hidden == 0 {
            return Err(Error::Config(format!("invalid recognizer sizes {config:?}")));
        }
        let n = config.hidden_per_direction();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let mut layers = Vec::with_capacity(config.layers);
        let mut input = config.input_dim;
        for k in 0..config.layers {
            let f = LstmParams::register(&mut store, &format!("layer{k}.fwd"), input, n, &mut rng)?;
            let b = LstmParams::register(&mut store, &format!("layer{k}.bwd"), input, n, &mut rng)?;
            layers.push((f, b));
            input = 2 * n;
        }
        let output = AffineParams::register(&mut store, "out", 2 * n, config.n_classes, &mut rng)?;
        Ok(Recognizer {
            config,
            store,
            layers,
            output,
        })
    }

    pub fn config(&self) -> RecognizerConfig {
        self.config
    }

    fn stack(&self) -> Vec<BiLayerWeights<'_>> {
        self.layers
            .iter()
            .map(|(f, b)| BiLayerWeights {
                forward: f.view(&self.store),
                backward: b.view(&self.store),
            })
            .collect()
    }

    fn check_features(&self, feats: &Matrix) -> Result<()> {
        if feats.rows() == 0 || feats.cols() != self.config.input_dim {
            return Err(Error::invalid(format!(
                "features are {} x {}, recognizer expects T x {} with T >= 1",
                feats.rows(),
                feats.cols(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    fn check_labels(&self, labels: &[usize], t_len: usize) -> Result<()> {
        if labels.len() != t_len {
            return Err(Error::invalid(format!(
                "{} labels for {t_len} frames",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= self.config.n_classes) {
            return Err(Error::invalid(format!(
                "label {bad} outside [0, {})",
                self.config.n_classes
            )));
        }
        Ok(())
    }

    fn logits(&self, feats: &Matrix) -> Result<(Matrix, Matrix, crate::lstm::BiStackCache)> {
        self.check_features(feats)?;
        let (hs, cache) = bidirectional_stack_forward(feats, &self.stack())?;
        let w = self.store.value(self.output.w);
        let b = self.store.value(self.output.b);
        let mut logits = Matrix::zeros(hs.rows(), self.config.n_classes);
        for t in 0..hs.rows() {
            logits.row_mut(t).copy_from_slice(&affine(w, b, hs.row(t)));
        }
        Ok((logits, hs, cache))
    }

    /// Per-frame class distributions, `T x K`.
    pub fn forward(&self, feats: &Matrix) -> Result<Matrix> {
        let (logits, _, _) = self.logits(feats)?;
        let mut probs = Matrix::zeros(logits.rows(), logits.cols());
        for t in 0..logits.rows() {
            probs.row_mut(t).copy_from_slice(&softmax(logits.row(t))?);
        }
        Ok(probs)
    }

    /// Mean per-frame cross entropy.
    pub fn loss(&self, feats: &Matrix, labels: &[usize]) -> Result<f64> {
        self.check_labels(labels, feats.rows())?;
        let (logits, _, _) = self.logits(feats)?;
        let mut total = 0.0;
        for (t, &y) in labels.iter().enumerate() {
            let row = logits.row(t);
            total += log_sum_exp(row)? - row[y];
        }
        Ok(total / labels.len() as f64)
    }

    pub fn loss_grad(&self, feats: &Matrix, labels: &[usize]) -> Result<(f64, Gradients)> {
        self.check_labels(labels, feats.rows())?;
        let (logits, hs, cache) = self.logits(feats)?;
        let t_len = labels.len();
        let scale = 1.0 / t_len as f64;
        let w = self.store.value(self.output.w);
        let mut grads = self.store.zero_gradients();
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; self.config.n_classes];
        let mut dh = Matrix::zeros(t_len, hs.cols());
        let mut total = 0.0;
        for (t, &y) in labels.iter().enumerate() {
            let row = logits.row(t);
            total += log_sum_exp(row)? - row[y];
            let mut d = softmax(row)?;
            d[y] -= 1.0;
            d.iter_mut().for_each(|v| *v *= scale);
            outer_acc(&d, hs.row(t), &mut dw);
            for (b, g) in db.iter_mut().zip(&d) {
                *b += g;
            }
            gemv_t_acc(w, &d, dh.row_mut(t));
        }
        let stack = self.stack();
        let (layer_grads, _) = bidirectional_stack_backward(&cache, &stack, &dh)?;
        for ((fp, bp), (fg, bg)) in self.layers.iter().zip(&layer_grads) {
            fp.add_grads(&mut grads, fg);
            bp.add_grads(&mut grads, bg);
        }
        grads.add(self.output.w, &dw);
        grads.add(self.output.b, &db);
        Ok((total * scale, grads))
    }

    /// Per-frame argmax, ties going to the lowest class index.
    pub fn predict(&self, feats: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.forward(feats)?))
    }
}

/// Row-wise argmax with ties resolved toward the lowest index.
pub fn argmax_rows(probs: &Matrix) -> Vec<usize> {
    probs
        .iter_rows()
        .map(|row| {
            let mut best = 0;
            for (k, p) in row.iter().enumerate().skip(1) {
                if *p > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{grad_check, GradCheckOptions};
    use rand::Rng;

    fn random_seq(t: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(t, d, (0..t * d).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
    }

    fn tiny(seed: u64) -> Recognizer {
        Recognizer::new(
            RecognizerConfig {
                input_dim: 3,
                n_classes: 4,
                layers: 2,
                hidden: 5,
                hidden_is_total: false,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn defaults_and_hidden_interpretation() {
        let c = RecognizerConfig::new(14, 4);
        assert_eq!((c.layers, c.hidden, c.hidden_per_direction()), (3, 64, 64));
        let total = RecognizerConfig {
            hidden_is_total: true,
            ..c
        };
        assert_eq!(total.hidden_per_direction(), 32);
    }

    #[test]
    fn zero_weights_give_uniform() {
        let mut r = tiny(1);
        let ids: Vec<_> = r.store.ids().collect();
        for id in ids {
            r.store.value_mut(id).iter_mut().for_each(|v| *v = 0.0);
        }
        let feats = random_seq(7, 3, 2);
        let p = r.forward(&feats).unwrap();
        assert_eq!((p.rows(), p.cols()), (7, 4));
        assert!(p.data().iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert!((r.loss(&feats, &[0, 1, 2, 3, 0, 1, 2]).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert_eq!(r.predict(&feats).unwrap(), vec![0; 7]);
    }

    #[test]
    fn rows_sum_to_one() {
        let r = tiny(3);
        let p = r.forward(&random_seq(9, 3, 4)).unwrap();
        for row in p.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_matches_straight_line_sum() {
        let r = tiny(5);
        let feats = random_seq(6, 3, 6);
        let labels = [3, 1, 1, 0, 2, 3];
        let p = r.forward(&feats).unwrap();
        let mut direct = 0.0;
        for t in 0..6 {
            direct -= p.get(t, labels[t]).ln();
        }
        assert!((r.loss(&feats, &labels).unwrap() - direct / 6.0).abs() < 1e-12);
    }

    #[test]
    fn label_validation() {
        let r = tiny(7);
        let feats = random_seq(3, 3, 8);
        assert!(r.loss(&feats, &[0, 4, 1]).is_err());
        assert!(r.loss(&feats, &[0, 1]).is_err());
        assert!(r.forward(&random_seq(3, 2, 0)).is_err());
    }

    #[test]
    fn time_reversal_with_swapped_directions() {
        // Single layer so swapping directions maps onto a column permutation
        // that the output layer undoes.
        let cfg = RecognizerConfig {
            input_dim: 3,
            n_classes: 3,
            layers: 1,
            hidden: 4,
            hidden_is_total: false,
        };
        let r = Recognizer::new(cfg, 9).unwrap();
        let mut s = r.clone();
        let (f, b) = (&r.layers[0].0, &r.layers[0].1);
        let fw = r.store.value(f.w).to_vec();
        let fb = r.store.value(f.b).to_vec();
        s.store.value_mut(f.w).copy_from_slice(r.store.value(b.w));
        s.store.value_mut(f.b).copy_from_slice(r.store.value(b.b));
        s.store.value_mut(b.w).copy_from_slice(&fw);
        s.store.value_mut(b.b).copy_from_slice(&fb);
        // swap the two column halves of the output map
        let ow = r.store.value(r.output.w).to_vec();
        let out = s.store.value_mut(r.output.w);
        for k in 0..3 {
            for j in 0..4 {
                out[k * 8 + j] = ow[k * 8 + 4 + j];
                out[k * 8 + 4 + j] = ow[k * 8 + j];
            }
        }
        let feats = random_seq(8, 3, 10);
        let a = r.forward(&feats).unwrap();
        let b2 = s.forward(&feats.reversed()).unwrap();
        for t in 0..8 {
            for k in 0..3 {
                assert!((a.get(t, k) - b2.get(7 - t, k)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // spread weights and inputs so no coordinate's gradient sits near the
        // finite-difference roundoff floor
        let mut r = tiny(11);
        r.params_mut().scale_values(3.0);
        let feats = random_seq(10, 3, 12).scaled(2.0);
        let labels = [0, 0, 1, 1, 1, 2, 3, 3, 2, 0];
        let (_, g) = r.loss_grad(&feats, &labels).unwrap();
        let report = grad_check(&mut r, |r| r.loss(&feats, &labels), &g, GradCheckOptions::default()).unwrap();
        assert!(report.max_error() < 1e-4, "{report:?}");
    }

    #[test]
    fn argmax_agrees_with_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let data: Vec<f64> = (0..50 * 5).map(|_| rng.random_range(0..4) as f64).collect();
        let m = Matrix::from_vec(50, 5, data).unwrap();
        let got = argmax_rows(&m);
        for (t, row) in m.iter_rows().enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let first = row.iter().position(|v| *v == max).unwrap();
            assert_eq!(got[t], first);
        }
        let concentrated = Matrix::from_rows(&vec![vec![0.01, 0.01, 0.97, 0.01]; 4], 4).unwrap();
        assert_eq!(argmax_rows(&concentrated), vec![2; 4]);
    }
}
