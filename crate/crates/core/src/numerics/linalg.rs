use crate::error::{shape_mismatch, Error, Result};

use super::Matrix;

/// Singular values below this fraction of the largest one count as zero.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

const LOG_CLAMP: f64 = 1e-12;
const UNIT_INTERVAL_TOL: f64 = 1e-9;

/// Thin singular value decomposition `M = U diag(s) Vᵀ`, singular values in
/// descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v_t: Matrix,
}

impl Svd {
    /// Number of singular values above the relative cutoff.
    pub fn rank(&self) -> usize {
        let cutoff = self.cutoff();
        self.singular_values.iter().filter(|&&s| s > cutoff).count()
    }

    fn cutoff(&self) -> f64 {
        let largest = self.singular_values.first().copied().unwrap_or(0.0);
        PINV_RELATIVE_CUTOFF * largest
    }
}

pub fn svd(m: &Matrix) -> Svd {
    if m.rows() == 0 || m.cols() == 0 {
        return Svd {
            u: Matrix::zeros(m.rows(), 0),
            singular_values: Vec::new(),
            v_t: Matrix::zeros(0, m.cols()),
        };
    }
    let dec = m.to_na().svd(true, true);
    let u = dec.u.as_ref().expect("requested U");
    let v_t = dec.v_t.as_ref().expect("requested Vt");
    let mut order: Vec<usize> = (0..dec.singular_values.len()).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    Svd {
        u: Matrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]),
        singular_values: order.iter().map(|&k| dec.singular_values[k]).collect(),
        v_t: Matrix::from_fn(order.len(), v_t.ncols(), |i, j| v_t[(order[i], j)]),
    }
}

/// Moore–Penrose pseudo-inverse with a relative singular-value cutoff.
pub fn pseudo_inverse(m: &Matrix) -> Matrix {
    let dec = svd(m);
    let cutoff = dec.cutoff();
    let (rows, cols) = m.shape();
    let mut out = Matrix::zeros(cols, rows);
    for (k, &s) in dec.singular_values.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..cols {
            let v = dec.v_t.get(k, i) * inv;
            if v == 0.0 {
                continue;
            }
            for j in 0..rows {
                let cur = out.get(i, j);
                out.set(i, j, cur + v * dec.u.get(j, k));
            }
        }
    }
    out
}

pub fn rank(m: &Matrix) -> usize {
    svd(m).rank()
}

/// Sum of singular values.
pub fn nuclear_norm(m: &Matrix) -> f64 {
    svd(m).singular_values.iter().sum()
}

/// The subgradient `U Vᵀ` of the nuclear norm, restricted to the nonzero
/// singular directions. It is the gradient when all singular values are
/// positive.
pub fn nuclear_norm_gradient(m: &Matrix) -> Matrix {
    let dec = svd(m);
    let cutoff = dec.cutoff();
    let (rows, cols) = m.shape();
    let mut out = Matrix::zeros(rows, cols);
    for (k, &s) in dec.singular_values.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        for i in 0..rows {
            let u = dec.u.get(i, k);
            for j in 0..cols {
                let cur = out.get(i, j);
                out.set(i, j, cur + u * dec.v_t.get(k, j));
            }
        }
    }
    out
}

/// Minimizes `‖XW − Y‖_F`; the minimum-norm solution when `X` is rank deficient.
pub fn solve_least_squares(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.rows() != y.rows() {
        return Err(shape_mismatch("solve_least_squares", x.rows(), y.rows()));
    }
    if x.rows() == 0 {
        return Err(Error::InvalidArgument(
            "least squares needs at least one observation".into(),
        ));
    }
    pseudo_inverse(x).matmul(y)
}

/// Row-wise softmax, stabilized by subtracting each row maximum.
pub fn row_softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

/// Pulls a gradient with respect to `softmax(logits)` back to the logits.
/// `probs` is the softmax output.
pub fn softmax_backward(probs: &Matrix, grad: &Matrix) -> Result<Matrix> {
    if probs.shape() != grad.shape() {
        return Err(shape_mismatch(
            "softmax_backward",
            format!("{:?}", probs.shape()),
            format!("{:?}", grad.shape()),
        ));
    }
    let mut out = Matrix::zeros(probs.rows(), probs.cols());
    for i in 0..probs.rows() {
        let p = probs.row(i);
        let g = grad.row(i);
        let inner: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        for (o, (a, b)) in out.row_mut(i).iter_mut().zip(p.iter().zip(g)) {
            *o = a * (b - inner);
        }
    }
    Ok(out)
}

/// Entropy `−Σ a·ln a` of the entries, with `0·ln 0 = 0`.
pub fn entropy_penalty(a: &Matrix) -> Result<f64> {
    let mut total = 0.0;
    for &v in a.as_slice() {
        if !(-UNIT_INTERVAL_TOL..=1.0 + UNIT_INTERVAL_TOL).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "entropy penalty needs entries in [0, 1], found {v}"
            )));
        }
        if v > 0.0 {
            total -= v * v.max(LOG_CLAMP).ln();
        }
    }
    Ok(total)
}

/// Entry-wise derivative of [`entropy_penalty`].
pub fn entropy_gradient(a: &Matrix) -> Matrix {
    Matrix::from_raw(
        a.rows(),
        a.cols(),
        a.as_slice()
            .iter()
            .map(|&v| -(v.max(LOG_CLAMP).ln() + 1.0))
            .collect(),
    )
}

/// Central finite differences of `f` at `x`, one entry at a time.
pub fn finite_diff_gradient(f: impl Fn(&Matrix) -> f64, x: &Matrix, h: f64) -> Matrix {
    let mut probe = x.clone();
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for idx in 0..x.as_slice().len() {
        let orig = probe.as_slice()[idx];
        probe.as_mut_slice()[idx] = orig + h;
        let plus = f(&probe);
        probe.as_mut_slice()[idx] = orig - h;
        let minus = f(&probe);
        probe.as_mut_slice()[idx] = orig;
        out.as_mut_slice()[idx] = (plus - minus) / (2.0 * h);
    }
    out
}
