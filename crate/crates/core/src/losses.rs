//! Objective values and block gradients for `V ≈ WᵀH`.
//!
//! Shapes throughout: `V` is M×N, `W` is R×M, `H` is R×N.
//!
//! The KL value includes the constant `v·(log v − 1)` so that it is zero at a
//! perfect fit and comparable across algorithms. Zero data entries contribute
//! only the model term (`0·log 0 = 0`).

use std::fmt;
use std::str::FromStr;

use crate::error::{NmfError, Result};
use crate::matrix::{dot, DenseMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Loss {
    /// `½‖V − WᵀH‖_F²`
    Frobenius,
    /// Generalized Kullback-Leibler divergence `Σ v log(v/m) − v + m`.
    Kl,
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::Frobenius => "fro",
            Loss::Kl => "kl",
        })
    }
}

impl FromStr for Loss {
    type Err = NmfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fro" | "frobenius" => Ok(Loss::Frobenius),
            "kl" => Ok(Loss::Kl),
            other => Err(NmfError::config(format!("unknown loss {other:?}"))),
        }
    }
}

fn check_shapes(v: &DenseMatrix, w: &DenseMatrix, h: &DenseMatrix) -> Result<()> {
    if w.rows() != h.rows() || w.cols() != v.rows() || h.cols() != v.cols() {
        return Err(NmfError::Dimension {
            op: "factor shapes (V: MxN, W: RxM, H: RxN)",
            left_rows: w.rows(),
            left_cols: w.cols(),
            right_rows: h.rows(),
            right_cols: h.cols(),
        });
    }
    Ok(())
}

/// The model `WᵀH`.
pub fn model(w: &DenseMatrix, h: &DenseMatrix) -> Result<DenseMatrix> {
    w.t_matmul(h)
}

pub(crate) fn ensure_positive_model(model: &DenseMatrix) -> Result<()> {
    if let Some(pos) = model.as_slice().iter().position(|&m| m <= 0.0) {
        return Err(NmfError::domain(format!(
            "KL requires a positive model; entry ({}, {}) is {} (factors not ε-clipped?)",
            pos / model.cols(),
            pos % model.cols(),
            model.as_slice()[pos]
        )));
    }
    Ok(())
}

/// Loss value between data and a precomputed model of the same shape.
pub fn loss_from_model(v: &DenseMatrix, model: &DenseMatrix, loss: Loss) -> Result<f64> {
    if v.shape() != model.shape() {
        return Err(NmfError::Dimension {
            op: "loss",
            left_rows: v.rows(),
            left_cols: v.cols(),
            right_rows: model.rows(),
            right_cols: model.cols(),
        });
    }
    let mut total = NeumaierSum::default();
    for (&x, &m) in v.as_slice().iter().zip(model.as_slice()) {
        total.add(entry_loss(x, m - x, m, loss)?);
    }
    Ok(total.value())
}

/// Evaluates the loss from residuals `WᵀH − V` formed with compensated dot
/// products, so that traces stay monotone down to the last few ulps instead
/// of flickering once the fit reaches the noise floor.
pub fn loss(v: &DenseMatrix, w: &DenseMatrix, h: &DenseMatrix, loss: Loss) -> Result<f64> {
    check_shapes(v, w, h)?;
    let wt = w.transpose();
    let rank = w.rows();
    let hd = h.as_slice();
    let n = h.cols();
    let mut total = NeumaierSum::default();
    let mut col = vec![0.0; rank];
    for i in 0..v.rows() {
        let wi = wt.row(i);
        for j in 0..n {
            for (r, c) in col.iter_mut().enumerate() {
                *c = hd[r * n + j];
            }
            let x = v.get(i, j);
            let residual = compensated_dot_minus(wi, &col, x);
            total.add(entry_loss(x, residual, x + residual, loss)?);
        }
    }
    Ok(total.value())
}

fn entry_loss(x: f64, residual: f64, m: f64, loss: Loss) -> Result<f64> {
    match loss {
        Loss::Frobenius => Ok(0.5 * residual * residual),
        Loss::Kl => {
            if x < 0.0 {
                return Err(NmfError::domain("KL requires nonnegative data"));
            }
            if !(m > 0.0) {
                return Err(NmfError::domain(format!(
                    "KL requires a positive model; found {m} (factors not ε-clipped?)"
                )));
            }
            if x == 0.0 {
                Ok(m)
            } else {
                Ok(x * r_minus_log1p(residual / x))
            }
        }
    }
}

/// `r − ln(1 + r)`, which equals the KL term `v log(v/m) − v + m` divided by
/// `v` when `m = v(1 + r)`. A series avoids the cancellation near `r = 0`.
fn r_minus_log1p(r: f64) -> f64 {
    if r.abs() < 0.1 {
        // Σ_{k≥2} (−r)^k / k, truncated where the tail is below 1e-20·r².
        let mut acc = 0.0;
        for k in (2..=20).rev() {
            acc = acc * -r + 1.0 / k as f64;
        }
        acc * r * r
    } else {
        r - r.ln_1p()
    }
}

/// `a·b − c` with products and sums carried in double-double precision.
fn compensated_dot_minus(a: &[f64], b: &[f64], c: f64) -> f64 {
    let (mut s, mut err) = (-c, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let p = x * y;
        let pe = x.mul_add(y, -p);
        let t = s + p;
        let z = t - s;
        err += (s - (t - z)) + (p - z) + pe;
        s = t;
    }
    s + err
}

#[derive(Default)]
struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `loss / (M·N)`, the quantity reported in every trace.
pub fn loss_normalized(
    v: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    kind: Loss,
) -> Result<f64> {
    Ok(loss(v, w, h, kind)? / (v.rows() * v.cols()) as f64)
}

/// Gradient with respect to the block `x` (R×K) of `loss(v, fixed, x)` where
/// `v` is M×K and `fixed` is R×M. Both block gradients go through here.
pub(crate) fn block_gradient(
    v: &DenseMatrix,
    fixed: &DenseMatrix,
    x: &DenseMatrix,
    kind: Loss,
) -> Result<DenseMatrix> {
    check_shapes(v, fixed, x)?;
    let model = fixed.t_matmul(x)?;
    block_gradient_from_model(v, fixed, &model, kind)
}

pub(crate) fn block_gradient_from_model(
    v: &DenseMatrix,
    fixed: &DenseMatrix,
    model: &DenseMatrix,
    kind: Loss,
) -> Result<DenseMatrix> {
    match kind {
        Loss::Frobenius => fixed.matmul(&model.sub(v)?),
        Loss::Kl => {
            ensure_positive_model(model)?;
            let one_minus_ratio = v.zip_map(model, |x, m| 1.0 - x / m);
            fixed.matmul(&one_minus_ratio)
        }
    }
}

/// `∇_H Ψ(W, H)`, an R×N matrix.
pub fn grad_h(
    v: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    kind: Loss,
) -> Result<DenseMatrix> {
    block_gradient(v, w, h, kind)
}

/// `∇_W Ψ(W, H)`, an R×M matrix; the H-gradient of the transposed problem.
pub fn grad_w(
    v: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    kind: Loss,
) -> Result<DenseMatrix> {
    check_shapes(v, w, h)?;
    block_gradient(&v.transpose(), h, w, kind)
}

/// Largest eigenvalue of `fixed · fixedᵀ`, i.e. the Lipschitz constant of the
/// Frobenius block gradient. Power iteration on the R×R Gram matrix, stopped
/// at 1e−10 relative change of the Rayleigh quotient or 1000 iterations.
pub fn lipschitz_constant(fixed: &DenseMatrix) -> Result<f64> {
    let gram = fixed.matmul_t(fixed)?;
    lipschitz_from_gram(&gram)
}

pub(crate) fn lipschitz_from_gram(gram: &DenseMatrix) -> Result<f64> {
    let n = gram.rows();
    if n == 0 || gram.as_slice().iter().all(|&x| x == 0.0) {
        return Err(NmfError::domain("Lipschitz constant of a zero factor"));
    }
    // The Gram of a nonnegative factor has a nonnegative Perron vector, so the
    // all-ones start is never orthogonal to it. Mixed-sign input may still
    // land in a null direction; the fallback start handles that.
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    for iter in 0..1000 {
        let y = gram.matvec(&x)?;
        let norm = dot(&y, &y).sqrt();
        if norm == 0.0 {
            if iter == 0 {
                x = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
                continue;
            }
            break;
        }
        let rayleigh = dot(&x, &y);
        x = y.iter().map(|v| v / norm).collect();
        if iter > 0 && (rayleigh - lambda).abs() <= 1e-10 * rayleigh.abs() {
            lambda = rayleigh;
            break;
        }
        lambda = rayleigh;
    }
    if !(lambda > 0.0) {
        return Err(NmfError::domain("Lipschitz constant is not positive"));
    }
    Ok(lambda)
}
