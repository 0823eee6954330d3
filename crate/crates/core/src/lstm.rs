//! Forget-gate LSTM: single steps, unrolled sequences, exact backpropagation
//! through time, and bidirectional multilayer stacks.
//!
//! Gate parameters are stored as one row-major `4h x (in + h)` matrix acting on
//! the concatenated input `x ⊕ h_prev`, with row blocks ordered input, forget,
//! output, candidate. No peepholes.

use crate::error::{Error, Result};
use crate::math::{affine, gemv_t_acc, outer_acc, sigmoid, Matrix, Vector};

/// Per-step hidden states, `T x hidden_dim`.
pub type HiddenSequence = Matrix;

/// Index of each gate's row block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Candidate = 3,
}

/// Borrowed view of one LSTM cell's parameters.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights<'a> {
    input_dim: usize,
    hidden_dim: usize,
    w: &'a [f64],
    b: &'a [f64],
}

impl<'a> LstmWeights<'a> {
    pub fn new(input_dim: usize, hidden_dim: usize, w: &'a [f64], b: &'a [f64]) -> Result<Self> {
        if hidden_dim == 0 {
            return Err(Error::invalid("LSTM hidden size must be positive"));
        }
        let expected = 4 * hidden_dim * (input_dim + hidden_dim);
        if w.len() != expected || b.len() != 4 * hidden_dim {
            return Err(Error::invalid(format!(
                "LSTM weights have {} / {} values, expected {expected} / {}",
                w.len(),
                b.len(),
                4 * hidden_dim
            )));
        }
        Ok(LstmWeights {
            input_dim,
            hidden_dim,
            w,
            b,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// The `h x (in + h)` block for one gate.
    pub fn gate_matrix(&self, gate: Gate) -> &'a [f64] {
        let block = self.hidden_dim * (self.input_dim + self.hidden_dim);
        let g = gate as usize;
        &self.w[g * block..(g + 1) * block]
    }

    pub fn gate_bias(&self, gate: Gate) -> &'a [f64] {
        let g = gate as usize;
        &self.b[g * self.hidden_dim..(g + 1) * self.hidden_dim]
    }
}

/// Hidden and cell state.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vector,
    pub c: Vector,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

/// Activations of one step, kept for the backward pass.
#[derive(Clone, Debug)]
struct StepCache {
    /// `x ⊕ h_prev`
    z: Vector,
    /// post-nonlinearity gates `[i, f, o, g]`
    gates: Vector,
    c_prev: Vector,
    tanh_c: Vector,
}

/// Everything the backward pass needs from [`unroll_forward`].
#[derive(Clone, Debug)]
pub struct LstmCache {
    input_dim: usize,
    hidden_dim: usize,
    steps: Vec<StepCache>,
    final_state: LstmState,
}

impl LstmCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_state(&self) -> &LstmState {
        &self.final_state
    }
}

/// Gradients of a scalar loss with respect to one cell's parameters and inputs.
#[derive(Clone, Debug)]
pub struct LstmGrads {
    pub w: Vector,
    pub b: Vector,
    /// `T x input_dim`
    pub inputs: Matrix,
    /// Gradient with respect to the initial state.
    pub init: LstmState,
}

fn check_state(state: &LstmState, hidden_dim: usize) -> Result<()> {
    if state.h.len() != hidden_dim || state.c.len() != hidden_dim {
        return Err(Error::invalid(format!(
            "LSTM state has dims ({}, {}), expected {hidden_dim}",
            state.h.len(),
            state.c.len()
        )));
    }
    Ok(())
}

fn step_cached(x: &[f64], prev: &LstmState, w: &LstmWeights<'_>) -> (LstmState, StepCache) {
    let n = w.hidden_dim;
    let mut z = Vec::with_capacity(w.input_dim + n);
    z.extend_from_slice(x);
    z.extend_from_slice(&prev.h);
    let mut gates = affine(w.w, w.b, &z);
    for a in &mut gates[..3 * n] {
        *a = sigmoid(*a);
    }
    for a in &mut gates[3 * n..] {
        *a = a.tanh();
    }
    let mut c = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut tanh_c = vec![0.0; n];
    for j in 0..n {
        let (i, f, o, g) = (gates[j], gates[n + j], gates[2 * n + j], gates[3 * n + j]);
        c[j] = f * prev.c[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h[j] = o * tanh_c[j];
    }
    let cache = StepCache {
        z,
        gates,
        c_prev: prev.c.clone(),
        tanh_c,
    };
    (LstmState { h, c }, cache)
}

/// One LSTM update: `c' = f ⊙ c + i ⊙ g`, `h' = o ⊙ tanh(c')`.
pub fn lstm_step(x: &[f64], prev: &LstmState, w: &LstmWeights<'_>) -> Result<LstmState> {
    if x.len() != w.input_dim {
        return Err(Error::invalid(format!(
            "LSTM input has length {}, expected {}",
            x.len(),
            w.input_dim
        )));
    }
    check_state(prev, w.hidden_dim)?;
    Ok(step_cached(x, prev, w).0)
}

/// Runs the cell over every row of `xs` starting from `init`.
pub fn unroll_forward(
    xs: &Matrix,
    w: &LstmWeights<'_>,
    init: &LstmState,
) -> Result<(HiddenSequence, LstmCache)> {
    if xs.rows() == 0 {
        return Err(Error::invalid("cannot unroll an LSTM over an empty sequence"));
    }
    if xs.cols() != w.input_dim {
        return Err(Error::invalid(format!(
            "LSTM input has {} columns, expected {}",
            xs.cols(),
            w.input_dim
        )));
    }
    check_state(init, w.hidden_dim)?;
    let mut hs = Matrix::zeros(xs.rows(), w.hidden_dim);
    let mut steps = Vec::with_capacity(xs.rows());
    let mut state = init.clone();
    for (t, x) in xs.iter_rows().enumerate() {
        let (next, cache) = step_cached(x, &state, w);
        hs.row_mut(t).copy_from_slice(&next.h);
        steps.push(cache);
        state = next;
    }
    Ok((
        hs,
        LstmCache {
            input_dim: w.input_dim,
            hidden_dim: w.hidden_dim,
            steps,
            final_state: state,
        },
    ))
}

/// Reverse-time gradient recursion.
///
/// `grad_h` holds `∂L/∂h_t` for every step. `grad_final` optionally adds
/// gradient flowing into the final `(h_T, c_T)` from a downstream consumer of
/// the last state.
pub fn unroll_backward(
    cache: &LstmCache,
    w: &LstmWeights<'_>,
    grad_h: &Matrix,
    grad_final: Option<&LstmState>,
) -> Result<LstmGrads> {
    let n = cache.hidden_dim;
    let nin = cache.input_dim;
    if w.hidden_dim != n || w.input_dim != nin {
        return Err(Error::invalid("LSTM weights do not match the forward cache"));
    }
    if grad_h.rows() != cache.len() || grad_h.cols() != n {
        return Err(Error::invalid(format!(
            "upstream gradient is {} x {}, cache is {} x {n}",
            grad_h.rows(),
            grad_h.cols(),
            cache.len()
        )));
    }
    let mut dh_next = vec![0.0; n];
    let mut dc_next = vec![0.0; n];
    if let Some(g) = grad_final {
        check_state(g, n)?;
        dh_next.copy_from_slice(&g.h);
        dc_next.copy_from_slice(&g.c);
    }
    let mut dw = vec![0.0; w.w.len()];
    let mut db = vec![0.0; w.b.len()];
    let mut dx = Matrix::zeros(cache.len(), nin);
    let mut da = vec![0.0; 4 * n];
    let mut dz = vec![0.0; nin + n];

    for t in (0..cache.len()).rev() {
        let s = &cache.steps[t];
        let up = grad_h.row(t);
        for j in 0..n {
            let (i, f, o, g) = (s.gates[j], s.gates[n + j], s.gates[2 * n + j], s.gates[3 * n + j]);
            let tc = s.tanh_c[j];
            let dh = up[j] + dh_next[j];
            let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
            da[j] = dc * g * i * (1.0 - i);
            da[n + j] = dc * s.c_prev[j] * f * (1.0 - f);
            da[2 * n + j] = dh * tc * o * (1.0 - o);
            da[3 * n + j] = dc * i * (1.0 - g * g);
            dc_next[j] = dc * f;
        }
        outer_acc(&da, &s.z, &mut dw);
        for (b, a) in db.iter_mut().zip(&da) {
            *b += a;
        }
        dz.iter_mut().for_each(|v| *v = 0.0);
        gemv_t_acc(w.w, &da, &mut dz);
        dx.row_mut(t).copy_from_slice(&dz[..nin]);
        dh_next.copy_from_slice(&dz[nin..]);
    }
    Ok(LstmGrads {
        w: dw,
        b: db,
        inputs: dx,
        init: LstmState {
            h: dh_next,
            c: dc_next,
        },
    })
}

/// One bidirectional layer: a forward-time cell and a reverse-time cell.
#[derive(Clone, Copy, Debug)]
pub struct BiLayerWeights<'a> {
    pub forward: LstmWeights<'a>,
    pub backward: LstmWeights<'a>,
}

/// Forward caches for every layer of a bidirectional stack.
#[derive(Clone, Debug)]
pub struct BiStackCache {
    layers: Vec<(LstmCache, LstmCache)>,
}

/// Runs each layer in both time directions and concatenates
/// `[h_fwd_t, h_bwd_t]`, feeding the `T x 2h` result to the next layer.
pub fn bidirectional_stack_forward(
    xs: &Matrix,
    layers: &[BiLayerWeights<'_>],
) -> Result<(HiddenSequence, BiStackCache)> {
    if layers.is_empty() {
        return Err(Error::Config("bidirectional stack has no layers".into()));
    }
    let mut expected_in = xs.cols();
    for (k, layer) in layers.iter().enumerate() {
        let n = layer.forward.hidden_dim;
        if layer.forward.input_dim != expected_in
            || layer.backward.input_dim != expected_in
            || layer.backward.hidden_dim != n
        {
            return Err(Error::Config(format!(
                "layer {k} expects input {} / {} and hidden {} / {}, chain provides input {expected_in}",
                layer.forward.input_dim, layer.backward.input_dim, n, layer.backward.hidden_dim
            )));
        }
        expected_in = 2 * n;
    }

    let mut input = xs.clone();
    let mut caches = Vec::with_capacity(layers.len());
    for layer in layers {
        let n = layer.forward.hidden_dim;
        let (hf, cf) = unroll_forward(&input, &layer.forward, &LstmState::zeros(n))?;
        let (hb_rev, cb) = unroll_forward(&input.reversed(), &layer.backward, &LstmState::zeros(n))?;
        let t_len = input.rows();
        let mut out = Matrix::zeros(t_len, 2 * n);
        for t in 0..t_len {
            let row = out.row_mut(t);
            row[..n].copy_from_slice(hf.row(t));
            row[n..].copy_from_slice(hb_rev.row(t_len - 1 - t));
        }
        caches.push((cf, cb));
        input = out;
    }
    Ok((input, BiStackCache { layers: caches }))
}

/// Backpropagates `grad_out` (`T x 2h` of the last layer) through the stack.
/// Returns per-layer `(forward, backward)` gradients and the input gradient.
pub fn bidirectional_stack_backward(
    cache: &BiStackCache,
    layers: &[BiLayerWeights<'_>],
    grad_out: &Matrix,
) -> Result<(Vec<(LstmGrads, LstmGrads)>, Matrix)> {
    if cache.layers.len() != layers.len() {
        return Err(Error::invalid("layer count differs from the forward cache"));
    }
    let mut grads: Vec<(LstmGrads, LstmGrads)> = Vec::with_capacity(layers.len());
    let mut upstream = grad_out.clone();
    for (layer, (cf, cb)) in layers.iter().zip(&cache.layers).rev() {
        let n = layer.forward.hidden_dim;
        let t_len = cf.len();
        if upstream.rows() != t_len || upstream.cols() != 2 * n {
            return Err(Error::invalid("upstream gradient shape mismatch"));
        }
        let mut gf = Matrix::zeros(t_len, n);
        let mut gb = Matrix::zeros(t_len, n);
        for t in 0..t_len {
            let row = upstream.row(t);
            gf.row_mut(t).copy_from_slice(&row[..n]);
            gb.row_mut(t_len - 1 - t).copy_from_slice(&row[n..]);
        }
        let df = unroll_backward(cf, &layer.forward, &gf, None)?;
        let dbk = unroll_backward(cb, &layer.backward, &gb, None)?;
        let nin = layer.forward.input_dim;
        let mut dx = Matrix::zeros(t_len, nin);
        for t in 0..t_len {
            let a = df.inputs.row(t);
            let b = dbk.inputs.row(t_len - 1 - t);
            for (o, (x, y)) in dx.row_mut(t).iter_mut().zip(a.iter().zip(b)) {
                *o = x + y;
            }
        }
        upstream = dx;
        grads.push((df, dbk));
    }
    grads.reverse();
    Ok((grads, upstream))
}

/// Standard initialization: uniform `±1/√(in + h)` weights, forget-gate bias
/// 1, other biases 0. Returns `(w, b)`.
pub fn init_weights<R: rand::Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> (Vector, Vector) {
    let fan_in = (input_dim + hidden_dim) as f64;
    let bound = 1.0 / fan_in.sqrt();
    let w = (0..4 * hidden_dim * (input_dim + hidden_dim))
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    let mut b = vec![0.0; 4 * hidden_dim];
    b[hidden_dim..2 * hidden_dim].iter_mut().for_each(|v| *v = 1.0);
    (w, b)
}
