//! Window-to-window models: an encoder LSTM compresses a window into its final
//! state, and a decoder LSTM started from that state (with no inputs) emits one
//! mixture per output step.
//!
//! The autoencoder scores the encoded window itself; the future predictor
//! scores the following window. Decoder steps never see true or sampled
//! frames, so future frames are conditionally independent given the past.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{unroll_backward, unroll_forward, LstmState};
use crate::math::Matrix;
use crate::mdn::{mdn_forward, mdn_nll, mdn_nll_backward, mdn_params, mdn_sample, MdnGrads, MdnParams};
use crate::models::layers::{LstmParams, MdnHeadParams};
use crate::optim::{Gradients, HasParameters, ParameterStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowTask {
    Autoencoder,
    FuturePrediction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub task: WindowTask,
    pub n_x: usize,
    pub n_h: usize,
    pub n_c: usize,
    /// Frames per window.
    pub window: usize,
}

impl WindowConfig {
    pub fn new(task: WindowTask, n_x: usize) -> Self {
        WindowConfig {
            task,
            n_x,
            n_h: 64,
            n_c: 16,
            window: 64,
        }
    }

    /// Frames a trial must have to yield one training example.
    pub fn span(&self) -> usize {
        match self.task {
            WindowTask::Autoencoder => self.window,
            WindowTask::FuturePrediction => 2 * self.window,
        }
    }
}

#[derive(Clone, Debug)]
pub struct WindowedModel {
    config: WindowConfig,
    store: ParameterStore,
    encoder: LstmParams,
    decoder: LstmParams,
    head: MdnHeadParams,
}

impl HasParameters for WindowedModel {
    fn params(&self) -> &ParameterStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }
}

impl WindowedModel {
    pub fn new(config: WindowConfig, seed: u64) -> Result<Self> {
        if config.n_x == 0 || config.n_h == 0 || config.n_c == 0 || config.window == 0 {
            return Err(Error::Config(format!("invalid windowed model sizes {config:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let encoder = LstmParams::register(&mut store, "encoder", config.n_x, config.n_h, &mut rng)?;
        let decoder = LstmParams::register(&mut store, "decoder", 0, config.n_h, &mut rng)?;
        let head = MdnHeadParams::register(&mut store, "mdn", config.n_h, config.n_c, config.n_x, &mut rng)?;
        Ok(WindowedModel {
            config,
            store,
            encoder,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> WindowConfig {
        self.config
    }

    fn check_window(&self, w: &Matrix, what: &str) -> Result<()> {
        if w.rows() != self.config.window || w.cols() != self.config.n_x {
            return Err(Error::invalid(format!(
                "{what} window is {} x {}, expected {} x {}",
                w.rows(),
                w.cols(),
                self.config.window,
                self.config.n_x
            )));
        }
        Ok(())
    }

    /// Final encoder state after consuming `frames` from a zero state.
    pub fn bottleneck(&self, frames: &Matrix) -> Result<LstmState> {
        let w = self.encoder.view(&self.store);
        let (_, cache) = unroll_forward(frames, &w, &LstmState::zeros(self.config.n_h))?;
        Ok(cache.final_state().clone())
    }

    /// Per-step output mixtures decoded from an encoded `input` window.
    pub fn decode(&self, input: &Matrix) -> Result<Vec<MdnParams>> {
        self.check_window(input, "input")?;
        let state = self.bottleneck(input)?;
        let dw = self.decoder.view(&self.store);
        let (hs, _) = unroll_forward(&Matrix::zeros(self.config.window, 0), &dw, &state)?;
        let head = self.head.view(&self.store);
        hs.iter_rows().map(|h| mdn_params(h, &head)).collect()
    }

    fn loss(&self, input: &Matrix, target: &Matrix) -> Result<f64> {
        self.check_window(target, "target")?;
        let params = self.decode(input)?;
        let mut total = 0.0;
        for (p, x) in params.iter().zip(target.iter_rows()) {
            total += mdn_nll(p, x)?;
        }
        Ok(total / self.config.window as f64)
    }

    fn loss_grad(&self, input: &Matrix, target: &Matrix) -> Result<(f64, Gradients)> {
        self.check_window(input, "input")?;
        self.check_window(target, "target")?;
        let l = self.config.window;
        let n_h = self.config.n_h;
        let ew = self.encoder.view(&self.store);
        let dw = self.decoder.view(&self.store);
        let head = self.head.view(&self.store);

        let (_, enc_cache) = unroll_forward(input, &ew, &LstmState::zeros(n_h))?;
        let (hs, dec_cache) = unroll_forward(&Matrix::zeros(l, 0), &dw, enc_cache.final_state())?;
        let scale = 1.0 / l as f64;
        let mut mg = MdnGrads::zeros(&head);
        let mut dh = Matrix::zeros(l, n_h);
        let mut total = 0.0;
        for t in 0..l {
            let (p, c) = mdn_forward(hs.row(t), &head)?;
            total += mdn_nll_backward(hs.row(t), &p, &c, target.row(t), &head, scale, &mut mg, dh.row_mut(t))?;
        }
        let dec_grads = unroll_backward(&dec_cache, &dw, &dh, None)?;
        let enc_grads = unroll_backward(&enc_cache, &ew, &Matrix::zeros(l, n_h), Some(&dec_grads.init))?;

        let mut grads = self.store.zero_gradients();
        self.encoder.add_grads(&mut grads, &enc_grads);
        self.decoder.add_grads(&mut grads, &dec_grads);
        self.head.add_grads(&mut grads, &mg);
        Ok((total * scale, grads))
    }

    /// Mean NLL per frame of `window` under its own decoded reconstruction.
    pub fn autoencoder_loss(&self, window: &Matrix) -> Result<f64> {
        self.loss(window, window)
    }

    pub fn autoencoder_loss_grad(&self, window: &Matrix) -> Result<(f64, Gradients)> {
        self.loss_grad(window, window)
    }

    /// Mean NLL per frame of `future` given `past`.
    pub fn futurepred_loss(&self, past: &Matrix, future: &Matrix) -> Result<f64> {
        self.loss(past, future)
    }

    pub fn futurepred_loss_grad(&self, past: &Matrix, future: &Matrix) -> Result<(f64, Gradients)> {
        self.loss_grad(past, future)
    }

    /// The task's loss on the example starting at `start` within `trial`.
    pub fn example_loss(&self, trial: &Matrix, start: usize) -> Result<f64> {
        let (input, target) = self.example(trial, start)?;
        self.loss(&input, &target)
    }

    pub fn example_loss_grad(&self, trial: &Matrix, start: usize) -> Result<(f64, Gradients)> {
        let (input, target) = self.example(trial, start)?;
        self.loss_grad(&input, &target)
    }

    fn example(&self, trial: &Matrix, start: usize) -> Result<(Matrix, Matrix)> {
        let l = self.config.window;
        if start + self.config.span() > trial.rows() {
            return Err(Error::invalid(format!(
                "trial of {} frames has no {}-frame example at {start}",
                trial.rows(),
                self.config.span()
            )));
        }
        let input = trial.slice_rows(start, start + l);
        let target = match self.config.task {
            WindowTask::Autoencoder => input.clone(),
            WindowTask::FuturePrediction => trial.slice_rows(start + l, start + 2 * l),
        };
        Ok((input, target))
    }

    /// One independent draw per output step.
    pub fn sample<R: Rng + ?Sized>(&self, input: &Matrix, rng: &mut R) -> Result<Matrix> {
        let params = self.decode(input)?;
        let mut out = Matrix::zeros(self.config.window, self.config.n_x);
        for (t, p) in params.iter().enumerate() {
            out.row_mut(t).copy_from_slice(&mdn_sample(p, rng));
        }
        Ok(out)
    }

    /// Sliding stride-1 features: row `t` is the bottleneck `h` of the window
    /// ending at `t`, truncated to the frames available when `t < L - 1`.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() == 0 || x.cols() != self.config.n_x {
            return Err(Error::invalid(format!(
                "sequence is {} x {}, expected T x {} with T >= 1",
                x.rows(),
                x.cols(),
                self.config.n_x
            )));
        }
        let l = self.config.window;
        let mut out = Matrix::zeros(x.rows(), self.config.n_h);
        for t in 0..x.rows() {
            let start = (t + 1).saturating_sub(l);
            let state = self.bottleneck(&x.slice_rows(start, t + 1))?;
            out.row_mut(t).copy_from_slice(&state.h);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{grad_check, GradCheckOptions};

    fn random_seq(t: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(t, d, (0..t * d).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
    }

    fn tiny(task: WindowTask, seed: u64) -> WindowedModel {
        WindowedModel::new(
            WindowConfig {
                task,
                n_x: 3,
                n_h: 8,
                n_c: 3,
                window: 6,
            },
            seed,
        )
        .unwrap()
    }

    fn zero_all(m: &mut WindowedModel) {
        let ids: Vec<_> = m.store.ids().collect();
        for id in ids {
            m.store.value_mut(id).iter_mut().for_each(|v| *v = 0.0);
        }
    }

    #[test]
    fn defaults() {
        let c = WindowConfig::new(WindowTask::FuturePrediction, 14);
        assert_eq!((c.n_h, c.n_c, c.window), (64, 16, 64));
        assert_eq!(c.span(), 128);
    }

    #[test]
    fn window_length_is_enforced() {
        let m = tiny(WindowTask::Autoencoder, 1);
        assert!(m.autoencoder_loss(&random_seq(5, 3, 0)).is_err());
        assert!(m.futurepred_loss(&random_seq(6, 3, 0), &random_seq(7, 3, 0)).is_err());
        assert!(m.example_loss(&random_seq(8, 3, 0), 3).is_err());
    }

    #[test]
    fn zero_model_matches_closed_form() {
        let mut m = tiny(WindowTask::Autoencoder, 2);
        zero_all(&mut m);
        let w = random_seq(6, 3, 3);
        let v = std::f64::consts::LN_2 + crate::mdn::VARIANCE_FLOOR;
        let expected: f64 = w
            .data()
            .iter()
            .map(|x| 0.5 * (2.0 * std::f64::consts::PI * v).ln() + x * x / (2.0 * v))
            .sum::<f64>()
            / 6.0;
        assert!((m.autoencoder_loss(&w).unwrap() - expected).abs() < 1e-12);
        assert!((m.futurepred_loss(&random_seq(6, 3, 9), &w).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for task in [WindowTask::Autoencoder, WindowTask::FuturePrediction] {
            // spread weights and inputs so no coordinate's gradient sits near the
            // finite-difference roundoff floor
            let mut m = tiny(task, 4);
            m.params_mut().scale_values(3.0);
            let trial = random_seq(12, 3, 5).scaled(2.0);
            let (_, g) = m.example_loss_grad(&trial, 0).unwrap();
            let report = grad_check(&mut m, |m| m.example_loss(&trial, 0), &g, GradCheckOptions::default()).unwrap();
            assert!(report.max_error() < 1e-4, "{task:?}: {report:?}");
        }
    }

    #[test]
    fn shared_decoder_output_makes_future_order_irrelevant() {
        // With zero head weights every step has the same mixture.
        let mut m = tiny(WindowTask::FuturePrediction, 6);
        for name in ["mdn.pi.w", "mdn.mu.w", "mdn.v.w"] {
            let id = m.store.id(name).unwrap();
            m.store.value_mut(id).iter_mut().for_each(|v| *v = 0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for name in ["mdn.pi.b", "mdn.mu.b", "mdn.v.b"] {
            let id = m.store.id(name).unwrap();
            m.store.value_mut(id).iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        let past = random_seq(6, 3, 8);
        let future = random_seq(6, 3, 9);
        let permuted = Matrix::from_rows(&[5, 2, 0, 4, 1, 3].map(|i| future.row(i).to_vec()), 3).unwrap();
        let a = m.futurepred_loss(&past, &future).unwrap();
        let b = m.futurepred_loss(&past, &permuted).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn encode_uses_partial_then_full_windows() {
        let m = tiny(WindowTask::Autoencoder, 10);
        let x = random_seq(9, 3, 11);
        let f = m.encode(&x).unwrap();
        assert_eq!((f.rows(), f.cols()), (9, 8));
        assert_eq!(f.row(2), m.bottleneck(&x.slice_rows(0, 3)).unwrap().h.as_slice());
        assert_eq!(f.row(8), m.bottleneck(&x.slice_rows(3, 9)).unwrap().h.as_slice());
    }

    #[test]
    fn sampling_is_seeded() {
        let m = tiny(WindowTask::FuturePrediction, 12);
        let w = random_seq(6, 3, 13);
        let a = m.sample(&w, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = m.sample(&w, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.rows(), a.cols()), (6, 3));
    }
}
