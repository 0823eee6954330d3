//! Dense row-major kernels and stable statistical primitives.

use crate::error::{Error, Result};

/// A plain owned vector of doubles.
pub type Vector = Vec<f64>;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has {} values, expected {rows} x {cols}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column {}",
                i / cols.max(1),
                i % cols.max(1)
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. An empty row list gives a
    /// `0 x cols` matrix.
    pub fn from_rows(rows: &[Vector], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::invalid(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn to_rows(&self) -> Vec<Vector> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }

    /// Copy of rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Every entry multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * k).collect(),
        }
    }

    /// Rows in reverse order.
    pub fn reversed(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for r in (0..self.rows).rev() {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = W x + b` for a row-major `W` with `b.len()` rows.
pub fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vector {
    let cols = x.len();
    debug_assert_eq!(w.len(), b.len() * cols);
    if cols == 0 {
        return b.to_vec();
    }
    w.chunks_exact(cols)
        .zip(b)
        .map(|(row, bias)| dot(row, x) + bias)
        .collect()
}

/// `out += Wᵀ g` for a row-major `W` of shape `g.len() x out.len()`.
pub fn gemv_t_acc(w: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = out.len();
    if cols == 0 {
        return;
    }
    debug_assert_eq!(w.len(), g.len() * cols);
    for (row, &gr) in w.chunks_exact(cols).zip(g) {
        if gr != 0.0 {
            axpy(gr, row, out);
        }
    }
}

/// `dW += g xᵀ` for a row-major `dW` of shape `g.len() x x.len()`.
pub fn outer_acc(g: &[f64], x: &[f64], dw: &mut [f64]) {
    let cols = x.len();
    if cols == 0 {
        return;
    }
    debug_assert_eq!(dw.len(), g.len() * cols);
    for (row, &gr) in dw.chunks_exact_mut(cols).zip(g) {
        if gr != 0.0 {
            axpy(gr, x, row);
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` evaluated as `max(x, 0) + ln(1 + e^{-|x|})`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(v: &[f64]) -> Result<Vector> {
    if v.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vector = v.iter().map(|x| (x - m).exp()).collect();
    let total: f64 = out.iter().sum();
    for o in &mut out {
        *o /= total;
    }
    Ok(out)
}

/// `log Σ e^{v_i}`, exact for a single element.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    match v {
        [] => Err(Error::invalid("log_sum_exp of an empty vector")),
        [a] => Ok(*a),
        _ => {
            let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                return Ok(m);
            }
            let s: f64 = v.iter().map(|x| (x - m).exp()).sum();
            Ok(m + s.ln())
        }
    }
}

/// Log density of a diagonal-covariance Gaussian with variances `v`.
pub fn diag_gaussian_logpdf(x: &[f64], mu: &[f64], v: &[f64]) -> Result<f64> {
    if x.len() != mu.len() || x.len() != v.len() {
        return Err(Error::invalid(format!(
            "gaussian dims differ: x={}, mu={}, v={}",
            x.len(),
            mu.len(),
            v.len()
        )));
    }
    let mut acc = 0.0;
    for ((&xi, &mi), &vi) in x.iter().zip(mu).zip(v) {
        if !(vi > 0.0) {
            return Err(Error::invalid(format!("non-positive variance {vi}")));
        }
        let d = xi - mi;
        acc += -0.5 * (LN_2PI + vi.ln()) - d * d / (2.0 * vi);
    }
    Ok(acc)
}
