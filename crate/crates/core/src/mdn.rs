//! Mixture-density head: hidden state → diagonal Gaussian mixture.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::{affine, diag_gaussian_logpdf, gemv_t_acc, log_sum_exp, outer_acc, sigmoid, softmax, softplus, Vector};

/// Added to every softplus variance so repeated frames cannot drive the
/// likelihood to infinity.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Borrowed view of a mixture head.
///
/// Mean and variance weights stack the per-component `n_x x n_h` maps, so
/// component `c` owns rows `c·n_x .. (c+1)·n_x`.
#[derive(Clone, Copy, Debug)]
pub struct MdnWeights<'a> {
    pub n_c: usize,
    pub n_x: usize,
    pub n_h: usize,
    pub pi_w: &'a [f64],
    pub pi_b: &'a [f64],
    pub mu_w: &'a [f64],
    pub mu_b: &'a [f64],
    pub v_w: &'a [f64],
    pub v_b: &'a [f64],
}

impl MdnWeights<'_> {
    pub fn validate(&self) -> Result<()> {
        let (nc, nx, nh) = (self.n_c, self.n_x, self.n_h);
        let ok = nc > 0
            && nx > 0
            && self.pi_w.len() == nc * nh
            && self.pi_b.len() == nc
            && self.mu_w.len() == nc * nx * nh
            && self.mu_b.len() == nc * nx
            && self.v_w.len() == nc * nx * nh
            && self.v_b.len() == nc * nx;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "mixture head shapes inconsistent with n_c={nc}, n_x={nx}, n_h={nh}"
            )))
        }
    }
}

/// Mixture weights, means, and diagonal variances for one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct MdnParams {
    pub pi: Vector,
    pub mu: Vec<Vector>,
    pub v: Vec<Vector>,
}

impl MdnParams {
    pub fn n_c(&self) -> usize {
        self.pi.len()
    }

    pub fn n_x(&self) -> usize {
        self.mu.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let nc = self.pi.len();
        if nc == 0 || self.mu.len() != nc || self.v.len() != nc {
            return Err(Error::invalid("mixture must have matching, non-empty component lists"));
        }
        let nx = self.n_x();
        if self.mu.iter().chain(&self.v).any(|r| r.len() != nx) {
            return Err(Error::invalid("mixture components have inconsistent dimensions"));
        }
        if self.pi.iter().any(|p| !(*p >= 0.0)) || (self.pi.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("mixture weights must be non-negative and sum to 1"));
        }
        if self.v.iter().flatten().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("mixture variances must be positive"));
        }
        Ok(())
    }
}

/// Pre-activation values needed to backpropagate through the head.
#[derive(Clone, Debug)]
pub struct MdnCache {
    v_pre: Vector,
}

/// Gradients of the NLL with respect to the mixture parameters themselves.
#[derive(Clone, Debug, PartialEq)]
pub struct MdnParamGrads {
    pub logits: Vector,
    pub mu: Vec<Vector>,
    pub v: Vec<Vector>,
}

/// Accumulated head-weight gradients, laid out like [`MdnWeights`].
#[derive(Clone, Debug, PartialEq)]
pub struct MdnGrads {
    pub pi_w: Vector,
    pub pi_b: Vector,
    pub mu_w: Vector,
    pub mu_b: Vector,
    pub v_w: Vector,
    pub v_b: Vector,
}

impl MdnGrads {
    pub fn zeros(w: &MdnWeights<'_>) -> Self {
        MdnGrads {
            pi_w: vec![0.0; w.pi_w.len()],
            pi_b: vec![0.0; w.pi_b.len()],
            mu_w: vec![0.0; w.mu_w.len()],
            mu_b: vec![0.0; w.mu_b.len()],
            v_w: vec![0.0; w.v_w.len()],
            v_b: vec![0.0; w.v_b.len()],
        }
    }
}

/// Forward pass with cache.
pub fn mdn_forward(h: &[f64], w: &MdnWeights<'_>) -> Result<(MdnParams, MdnCache)> {
    w.validate()?;
    if h.len() != w.n_h {
        return Err(Error::invalid(format!(
            "hidden state has length {}, head expects {}",
            h.len(),
            w.n_h
        )));
    }
    let pi = softmax(&affine(w.pi_w, w.pi_b, h))?;
    let mu_flat = affine(w.mu_w, w.mu_b, h);
    let v_pre = affine(w.v_w, w.v_b, h);
    let nx = w.n_x;
    let mu = mu_flat.chunks_exact(nx).map(<[f64]>::to_vec).collect();
    let v = v_pre
        .chunks_exact(nx)
        .map(|c| c.iter().map(|a| softplus(*a) + VARIANCE_FLOOR).collect())
        .collect();
    Ok((MdnParams { pi, mu, v }, MdnCache { v_pre }))
}

/// `π = softmax(W_π h + b_π)`, `μ_c = W_μc h + b_μc`, `v_c = softplus(W_vc h + b_vc)`.
pub fn mdn_params(h: &[f64], w: &MdnWeights<'_>) -> Result<MdnParams> {
    mdn_forward(h, w).map(|(p, _)| p)
}

fn component_log_terms(params: &MdnParams, x: &[f64]) -> Result<Vector> {
    params
        .pi
        .iter()
        .zip(params.mu.iter().zip(&params.v))
        .map(|(p, (mu, v))| Ok(p.ln() + diag_gaussian_logpdf(x, mu, v)?))
        .collect()
}

/// `-log Σ_c π_c N(x; μ_c, diag v_c)`.
pub fn mdn_nll(params: &MdnParams, x: &[f64]) -> Result<f64> {
    params.validate()?;
    if x.len() != params.n_x() {
        return Err(Error::invalid(format!(
            "target has length {}, mixture has dimension {}",
            x.len(),
            params.n_x()
        )));
    }
    Ok(-log_sum_exp(&component_log_terms(params, x)?)?)
}

/// NLL and its gradients with respect to π-logits, means, and variances,
/// expressed through the posterior component responsibilities.
pub fn mdn_nll_param_grads(params: &MdnParams, x: &[f64]) -> Result<(f64, MdnParamGrads)> {
    let nll = mdn_nll(params, x)?;
    let terms = component_log_terms(params, x)?;
    let resp = softmax(&terms)?;
    let logits = params.pi.iter().zip(&resp).map(|(p, r)| p - r).collect();
    let mut mu = Vec::with_capacity(params.n_c());
    let mut v = Vec::with_capacity(params.n_c());
    for ((m, var), r) in params.mu.iter().zip(&params.v).zip(&resp) {
        let mut dm = Vec::with_capacity(x.len());
        let mut dv = Vec::with_capacity(x.len());
        for ((xi, mi), vi) in x.iter().zip(m).zip(var) {
            let d = mi - xi;
            dm.push(r * d / vi);
            dv.push(r * (0.5 / vi - d * d / (2.0 * vi * vi)));
        }
        mu.push(dm);
        v.push(dv);
    }
    Ok((nll, MdnParamGrads { logits, mu, v }))
}

/// Backpropagates the NLL at `x` through the head, adding weight gradients
/// (scaled by `scale`) into `grads` and the hidden-state gradient into `dh`.
/// Returns the unscaled NLL.
#[allow(clippy::too_many_arguments)]
pub fn mdn_nll_backward(
    h: &[f64],
    params: &MdnParams,
    cache: &MdnCache,
    x: &[f64],
    w: &MdnWeights<'_>,
    scale: f64,
    grads: &mut MdnGrads,
    dh: &mut [f64],
) -> Result<f64> {
    if dh.len() != w.n_h || h.len() != w.n_h || cache.v_pre.len() != w.n_c * w.n_x {
        return Err(Error::invalid("mixture backward shapes do not match the head"));
    }
    let (nll, pg) = mdn_nll_param_grads(params, x)?;
    let d_logits: Vector = pg.logits.iter().map(|g| g * scale).collect();
    let d_mu: Vector = pg.mu.iter().flatten().map(|g| g * scale).collect();
    let d_vpre: Vector = pg
        .v
        .iter()
        .flatten()
        .zip(&cache.v_pre)
        .map(|(g, a)| g * sigmoid(*a) * scale)
        .collect();

    outer_acc(&d_logits, h, &mut grads.pi_w);
    outer_acc(&d_mu, h, &mut grads.mu_w);
    outer_acc(&d_vpre, h, &mut grads.v_w);
    for (b, g) in grads.pi_b.iter_mut().zip(&d_logits) {
        *b += g;
    }
    for (b, g) in grads.mu_b.iter_mut().zip(&d_mu) {
        *b += g;
    }
    for (b, g) in grads.v_b.iter_mut().zip(&d_vpre) {
        *b += g;
    }
    gemv_t_acc(w.pi_w, &d_logits, dh);
    gemv_t_acc(w.mu_w, &d_mu, dh);
    gemv_t_acc(w.v_w, &d_vpre, dh);
    Ok(nll)
}

/// Draws a component from `π`, then a point from its Gaussian.
pub fn mdn_sample<R: Rng + ?Sized>(params: &MdnParams, rng: &mut R) -> Vector {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut comp = params.pi.len() - 1;
    for (c, p) in params.pi.iter().enumerate() {
        acc += p;
        if u < acc {
            comp = c;
            break;
        }
    }
    params.mu[comp]
        .iter()
        .zip(&params.v[comp])
        .map(|(m, v)| {
            let z: f64 = rng.sample(StandardNormal);
            m + v.sqrt() * z
        })
        .collect()
}
