//! Registration of LSTM cells, mixture heads, and affine maps inside a
//! [`ParameterStore`], plus their gradient write-back.

use rand::Rng;

use crate::error::Result;
use crate::lstm::{init_weights, LstmGrads, LstmWeights};
use crate::mdn::{MdnGrads, MdnWeights};
use crate::optim::{Gradients, ParamId, ParameterStore};

#[derive(Clone, Debug)]
pub(crate) struct LstmParams {
    pub w: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let (w, b) = init_weights(input_dim, hidden_dim, rng);
        Ok(LstmParams {
            w: store.add(&format!("{prefix}.w"), &[4 * hidden_dim, input_dim + hidden_dim], w)?,
            b: store.add(&format!("{prefix}.b"), &[4 * hidden_dim], b)?,
            input_dim,
            hidden_dim,
        })
    }

    pub fn view<'a>(&self, store: &'a ParameterStore) -> LstmWeights<'a> {
        LstmWeights::new(self.input_dim, self.hidden_dim, store.value(self.w), store.value(self.b))
            .expect("registered LSTM shapes are consistent")
    }

    pub fn add_grads(&self, g: &mut Gradients, lg: &LstmGrads) {
        g.add(self.w, &lg.w);
        g.add(self.b, &lg.b);
    }
}

#[derive(Clone, Debug)]
pub(crate) struct MdnHeadParams {
    pub pi_w: ParamId,
    pub pi_b: ParamId,
    pub mu_w: ParamId,
    pub mu_b: ParamId,
    pub v_w: ParamId,
    pub v_b: ParamId,
    pub n_c: usize,
    pub n_x: usize,
    pub n_h: usize,
}

impl MdnHeadParams {
    /// Weights uniform in `±1/√n_h`, biases zero.
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        n_h: usize,
        n_c: usize,
        n_x: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = 1.0 / (n_h as f64).sqrt();
        let mut uniform = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..=bound)).collect() };
        let pi_w = uniform(n_c * n_h);
        let mu_w = uniform(n_c * n_x * n_h);
        let v_w = uniform(n_c * n_x * n_h);
        Ok(MdnHeadParams {
            pi_w: store.add(&format!("{prefix}.pi.w"), &[n_c, n_h], pi_w)?,
            pi_b: store.add(&format!("{prefix}.pi.b"), &[n_c], vec![0.0; n_c])?,
            mu_w: store.add(&format!("{prefix}.mu.w"), &[n_c * n_x, n_h], mu_w)?,
            mu_b: store.add(&format!("{prefix}.mu.b"), &[n_c * n_x], vec![0.0; n_c * n_x])?,
            v_w: store.add(&format!("{prefix}.v.w"), &[n_c * n_x, n_h], v_w)?,
            v_b: store.add(&format!("{prefix}.v.b"), &[n_c * n_x], vec![0.0; n_c * n_x])?,
            n_c,
            n_x,
            n_h,
        })
    }

    pub fn view<'a>(&self, store: &'a ParameterStore) -> MdnWeights<'a> {
        MdnWeights {
            n_c: self.n_c,
            n_x: self.n_x,
            n_h: self.n_h,
            pi_w: store.value(self.pi_w),
            pi_b: store.value(self.pi_b),
            mu_w: store.value(self.mu_w),
            mu_b: store.value(self.mu_b),
            v_w: store.value(self.v_w),
            v_b: store.value(self.v_b),
        }
    }

    pub fn add_grads(&self, g: &mut Gradients, mg: &MdnGrads) {
        g.add(self.pi_w, &mg.pi_w);
        g.add(self.pi_b, &mg.pi_b);
        g.add(self.mu_w, &mg.mu_w);
        g.add(self.mu_b, &mg.mu_b);
        g.add(self.v_w, &mg.v_w);
        g.add(self.v_b, &mg.v_b);
    }
}

#[derive(Clone, Debug)]
pub(crate) struct AffineParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl AffineParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        input_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = 1.0 / (input_dim as f64).sqrt();
        let w = (0..input_dim * output_dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Ok(AffineParams {
            w: store.add(&format!("{prefix}.w"), &[output_dim, input_dim], w)?,
            b: store.add(&format!("{prefix}.b"), &[output_dim], vec![0.0; output_dim])?,
        })
    }
}
