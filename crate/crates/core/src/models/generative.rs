//! Autoregressive LSTM + mixture-density model over whole kinematic sequences.
//!
//! The joint density factorizes by the chain rule; at step `t` the LSTM
//! consumes `x_{t-1}` (the zero vector for `t = 1`) and the head emits the
//! mixture for `x_t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{lstm_step, unroll_backward, unroll_forward, LstmState};
use crate::math::Matrix;
use crate::mdn::{mdn_forward, mdn_nll, mdn_nll_backward, mdn_params, mdn_sample, MdnGrads};
use crate::models::layers::{LstmParams, MdnHeadParams};
use crate::optim::{Gradients, HasParameters, ParameterStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerativeConfig {
    pub n_x: usize,
    pub n_h: usize,
    pub n_c: usize,
}

impl GenerativeConfig {
    pub fn new(n_x: usize) -> Self {
        GenerativeConfig { n_x, n_h: 128, n_c: 8 }
    }
}

#[derive(Clone, Debug)]
pub struct GenerativeModel {
    config: GenerativeConfig,
    store: ParameterStore,
    lstm: LstmParams,
    head: MdnHeadParams,
}

impl HasParameters for GenerativeModel {
    fn params(&self) -> &ParameterStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }
}

impl GenerativeModel {
    pub fn new(config: GenerativeConfig, seed: u64) -> Result<Self> {
        if config.n_x == 0 || config.n_h == 0 || config.n_c == 0 {
            return Err(Error::Config(format!("invalid generative model sizes {config:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let lstm = LstmParams::register(&mut store, "lstm", config.n_x, config.n_h, &mut rng)?;
        let head = MdnHeadParams::register(&mut store, "mdn", config.n_h, config.n_c, config.n_x, &mut rng)?;
        Ok(GenerativeModel {
            config,
            store,
            lstm,
            head,
        })
    }

    pub fn config(&self) -> GenerativeConfig {
        self.config
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.rows() == 0 {
            return Err(Error::invalid("sequence must have at least one frame"));
        }
        if x.cols() != self.config.n_x {
            return Err(Error::invalid(format!(
                "sequence has {} channels, model expects {}",
                x.cols(),
                self.config.n_x
            )));
        }
        Ok(())
    }

    /// Conditioning inputs `[0, x_1, …, x_{T-1}]`.
    fn shifted(x: &Matrix) -> Matrix {
        let mut inputs = Matrix::zeros(x.rows(), x.cols());
        for t in 1..x.rows() {
            inputs.row_mut(t).copy_from_slice(x.row(t - 1));
        }
        inputs
    }

    /// Teacher-forced hidden states `h_1 … h_T`.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let w = self.lstm.view(&self.store);
        let (hs, _) = unroll_forward(&Self::shifted(x), &w, &LstmState::zeros(self.config.n_h))?;
        Ok(hs)
    }

    /// Mean negative log-likelihood per frame, in nats.
    pub fn nll(&self, x: &Matrix) -> Result<f64> {
        let hs = self.encode(x)?;
        let head = self.head.view(&self.store);
        let mut total = 0.0;
        for t in 0..x.rows() {
            total += mdn_nll(&mdn_params(hs.row(t), &head)?, x.row(t))?;
        }
        Ok(total / x.rows() as f64)
    }

    /// [`nll`](Self::nll) and its exact gradient.
    pub fn nll_grad(&self, x: &Matrix) -> Result<(f64, Gradients)> {
        self.check_input(x)?;
        let t_len = x.rows();
        let lw = self.lstm.view(&self.store);
        let head = self.head.view(&self.store);
        let (hs, cache) = unroll_forward(&Self::shifted(x), &lw, &LstmState::zeros(self.config.n_h))?;
        let scale = 1.0 / t_len as f64;
        let mut mg = MdnGrads::zeros(&head);
        let mut dh = Matrix::zeros(t_len, self.config.n_h);
        let mut total = 0.0;
        for t in 0..t_len {
            let (p, c) = mdn_forward(hs.row(t), &head)?;
            total += mdn_nll_backward(hs.row(t), &p, &c, x.row(t), &head, scale, &mut mg, dh.row_mut(t))?;
        }
        let lg = unroll_backward(&cache, &lw, &dh, None)?;
        let mut grads = self.store.zero_gradients();
        self.lstm.add_grads(&mut grads, &lg);
        self.head.add_grads(&mut grads, &mg);
        Ok((total * scale, grads))
    }

    /// Consumes `prefix` teacher-forced, then samples `horizon` frames, each
    /// fed back as the next input.
    pub fn sample<R: Rng + ?Sized>(&self, prefix: &Matrix, horizon: usize, rng: &mut R) -> Result<Matrix> {
        if horizon == 0 {
            return Err(Error::invalid("sampling horizon must be at least 1"));
        }
        if prefix.cols() != self.config.n_x {
            return Err(Error::invalid(format!(
                "prefix has {} channels, model expects {}",
                prefix.cols(),
                self.config.n_x
            )));
        }
        let lw = self.lstm.view(&self.store);
        let head = self.head.view(&self.store);
        let mut state = lstm_step(&vec![0.0; self.config.n_x], &LstmState::zeros(self.config.n_h), &lw)?;
        for frame in prefix.iter_rows() {
            state = lstm_step(frame, &state, &lw)?;
        }
        let mut out = Matrix::zeros(horizon, self.config.n_x);
        for t in 0..horizon {
            let frame = mdn_sample(&mdn_params(&state.h, &head)?, rng);
            out.row_mut(t).copy_from_slice(&frame);
            if t + 1 < horizon {
                state = lstm_step(&frame, &state, &lw)?;
            }
        }
        Ok(out)
    }

    /// Mixture for the frame following `prefix`.
    pub fn next_frame_params(&self, prefix: &Matrix) -> Result<crate::mdn::MdnParams> {
        let lw = self.lstm.view(&self.store);
        let mut state = lstm_step(&vec![0.0; self.config.n_x], &LstmState::zeros(self.config.n_h), &lw)?;
        for frame in prefix.iter_rows() {
            state = lstm_step(frame, &state, &lw)?;
        }
        mdn_params(&state.h, &self.head.view(&self.store))
    }
}
