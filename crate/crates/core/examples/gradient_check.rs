//! Checks the built-in losses, then shows the finite-difference harness on a
//! hand-written model with a deliberately wrong gradient.
//!
//! cargo run --release --example gradient_check

use surgrec::cli::run_gradchecks;
use surgrec::optim::{grad_check, GradCheckOptions, Gradients, HasParameters, ParamId, ParameterStore};

/// Least squares `0.5 * sum (w·x_i - y_i)^2`.
struct Linear {
    store: ParameterStore,
    w: ParamId,
}

impl HasParameters for Linear {
    fn params(&self) -> &ParameterStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }
}

const DATA: [([f64; 2], f64); 3] = [([1.0, 2.0], 1.0), ([-1.0, 0.5], 0.0), ([0.3, -2.0], 2.0)];

fn loss(m: &Linear) -> surgrec::Result<f64> {
    let w = m.store.value(m.w);
    Ok(DATA.iter().map(|(x, y)| 0.5 * (w[0] * x[0] + w[1] * x[1] - y).powi(2)).sum())
}

fn gradient(m: &Linear, halve_second: bool) -> Gradients {
    let w = m.store.value(m.w);
    let mut g = [0.0; 2];
    for (x, y) in DATA {
        let r = w[0] * x[0] + w[1] * x[1] - y;
        g[0] += r * x[0];
        g[1] += r * x[1];
    }
    if halve_second {
        g[1] *= 0.5;
    }
    let mut out = m.store.zero_gradients();
    out.add(m.w, &g);
    out
}

fn main() -> surgrec::Result<()> {
    for line in run_gradchecks(0, None)? {
        println!("{:<12} max relative error {:.2e} ({})", line.loss, line.max_error, line.worst_tensor);
    }

    let mut store = ParameterStore::new();
    let w = store.add("w", &[2], vec![0.4, -0.7])?;
    let mut model = Linear { store, w };
    for broken in [false, true] {
        let g = gradient(&model, broken);
        let report = grad_check(&mut model, loss, &g, GradCheckOptions::default())?;
        println!("linear model, broken={broken}: max relative error {:.2e}", report.max_error());
    }
    Ok(())
}
