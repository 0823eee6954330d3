//! Named parameter storage, Adam, and the finite-difference gradient checker.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// `10^-2.5`, the recognizer learning rate.
pub const LR_RECOGNIZER: f64 = 0.003_162_277_660_168_379_4;
/// Representation-learning learning rate.
pub const LR_REPRESENTATION: f64 = 0.005;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Handle to a tensor inside a [`ParameterStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug, PartialEq)]
struct Tensor {
    name: String,
    dims: Vec<usize>,
    value: Vec<f64>,
    grad: Vec<f64>,
    m: Vec<f64>,
    u: Vec<f64>,
}

/// Trainable tensors with matching gradient and Adam moment buffers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    tensors: Vec<Tensor>,
    step: u64,
}

/// Gradients laid out parallel to a store's tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(Vec<Vec<f64>>);

impl Gradients {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.0[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.0[id.0]
    }

    pub fn add(&mut self, id: ParamId, g: &[f64]) {
        for (a, b) in self.0[id.0].iter_mut().zip(g) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().flatten().for_each(|v| *v *= s);
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.0.iter().map(Vec::as_slice)
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor. Names must be unique.
    pub fn add(&mut self, name: &str, dims: &[usize], value: Vec<f64>) -> Result<ParamId> {
        let n: usize = dims.iter().product();
        if value.len() != n {
            return Err(Error::invalid(format!(
                "tensor `{name}` has {} values for dims {dims:?}",
                value.len()
            )));
        }
        if self.id(name).is_some() {
            return Err(Error::invalid(format!("duplicate tensor name `{name}`")));
        }
        self.tensors.push(Tensor {
            name: name.to_string(),
            dims: dims.to_vec(),
            value,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            u: vec![0.0; n],
        });
        Ok(ParamId(self.tensors.len() - 1))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.tensors.iter().position(|t| t.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.tensors[id.0].name
    }

    pub fn dims(&self, id: ParamId) -> &[usize] {
        &self.tensors[id.0].dims
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.tensors[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.tensors[id.0].value
    }

    /// Multiplies every parameter value by `k`.
    pub fn scale_values(&mut self, k: f64) {
        self.tensors.iter_mut().flat_map(|t| t.value.iter_mut()).for_each(|v| *v *= k);
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.tensors[id.0].grad
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    /// A zeroed gradient set shaped like this store.
    pub fn zero_gradients(&self) -> Gradients {
        Gradients(self.tensors.iter().map(|t| vec![0.0; t.value.len()]).collect())
    }

    /// Adds `g` into the gradient buffers.
    pub fn accumulate(&mut self, g: &Gradients) -> Result<()> {
        if g.0.len() != self.tensors.len() {
            return Err(Error::invalid("gradient set does not match the store"));
        }
        for (t, gi) in self.tensors.iter_mut().zip(&g.0) {
            if gi.len() != t.grad.len() {
                return Err(Error::invalid(format!("gradient shape mismatch for `{}`", t.name)));
            }
            for (a, b) in t.grad.iter_mut().zip(gi) {
                *a += b;
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            t.grad.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| &t.grad)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales the gradient buffers so their global L2 norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for t in &mut self.tensors {
                t.grad.iter_mut().for_each(|v| *v *= s);
            }
        }
    }

    /// Bias-corrected Adam update from the current gradients, which are then
    /// zeroed.
    pub fn adam_step(&mut self, lr: f64) -> Result<()> {
        for t in &self.tensors {
            if t.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient { tensor: t.name.clone() });
            }
        }
        self.step += 1;
        let step = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(step);
        let c2 = 1.0 - ADAM_BETA2.powi(step);
        for t in &mut self.tensors {
            for k in 0..t.value.len() {
                let g = t.grad[k];
                t.m[k] = ADAM_BETA1 * t.m[k] + (1.0 - ADAM_BETA1) * g;
                t.u[k] = ADAM_BETA2 * t.u[k] + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = t.m[k] / c1;
                let u_hat = t.u[k] / c2;
                t.value[k] -= lr * m_hat / (u_hat.sqrt() + ADAM_EPS);
                t.grad[k] = 0.0;
            }
        }
        Ok(())
    }

    /// `(name, dims, values)` for every tensor, in insertion order.
    pub fn tensors(&self) -> impl Iterator<Item = (&str, &[usize], &[f64])> {
        self.tensors
            .iter()
            .map(|t| (t.name.as_str(), t.dims.as_slice(), t.value.as_slice()))
    }
}

/// Anything that owns a parameter store.
pub trait HasParameters {
    fn params(&self) -> &ParameterStore;
    fn params_mut(&mut self) -> &mut ParameterStore;
}

impl HasParameters for ParameterStore {
    fn params(&self) -> &ParameterStore {
        self
    }

    fn params_mut(&mut self) -> &mut ParameterStore {
        self
    }
}

/// Result of a gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error per tensor name over the coordinates checked.
    pub per_tensor: BTreeMap<String, f64>,
    pub coordinates_checked: usize,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.per_tensor.values().copied().fold(0.0, f64::max)
    }

    pub fn worst_tensor(&self) -> Option<(&str, f64)> {
        self.per_tensor
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, v)| (k.as_str(), *v))
    }
}

/// Options for [`grad_check`].
#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Every coordinate is checked when the model has at most this many;
    /// otherwise a seeded random subset of this size. Never below 200.
    pub max_coordinates: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-5,
            max_coordinates: 2000,
            seed: 0,
        }
    }
}

/// Compares `analytic` against central differences of `loss`.
///
/// Relative error per coordinate is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<M, F>(
    model: &mut M,
    loss: F,
    analytic: &Gradients,
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    M: HasParameters,
    F: Fn(&M) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&opts.epsilon) {
        return Err(Error::invalid(format!(
            "grad_check epsilon {} outside [1e-7, 1e-3]",
            opts.epsilon
        )));
    }
    let first = loss(model)?;
    let second = loss(model)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::invalid(format!(
            "loss is not deterministic: {first} then {second}"
        )));
    }
    let store = model.params();
    if analytic.0.len() != store.len() {
        return Err(Error::invalid("analytic gradient does not match the store"));
    }
    let mut coords = Vec::new();
    for id in store.ids() {
        for k in 0..store.value(id).len() {
            coords.push((id, k));
        }
    }
    let budget = opts.max_coordinates.max(200);
    if coords.len() > budget {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut picked: Vec<usize> = sample(&mut rng, coords.len(), budget).into_vec();
        picked.sort_unstable();
        coords = picked.into_iter().map(|i| coords[i]).collect();
    }

    let mut per_tensor: BTreeMap<String, f64> = BTreeMap::new();
    for id in model.params().ids() {
        per_tensor.insert(model.params().name(id).to_string(), 0.0);
    }
    let eps = opts.epsilon;
    for &(id, k) in &coords {
        let orig = model.params().value(id)[k];
        model.params_mut().value_mut(id)[k] = orig + eps;
        let plus = loss(model);
        model.params_mut().value_mut(id)[k] = orig - eps;
        let minus = loss(model);
        model.params_mut().value_mut(id)[k] = orig;
        let numeric = (plus? - minus?) / (2.0 * eps);
        let a = analytic.0[id.0][k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        let entry = per_tensor.get_mut(model.params().name(id)).expect("tensor registered");
        *entry = entry.max(rel);
    }
    Ok(GradCheckReport {
        per_tensor,
        coordinates_checked: coords.len(),
    })
}
