//! Diagonal majorant metrics for the per-column NMF subproblems.
//!
//! For a column subproblem with Hessian `B` (R×R, nonnegative, symmetric) and
//! any positive vector `u`, `Diag((B u) ⊘ u) − B` is positive semidefinite, so
//! `(B u) ⊘ u` is a valid diagonal metric. The kinds below differ only in the
//! choice of `u` and of `B`:
//!
//! | kind               | `B`                            | `u`                         |
//! |--------------------|--------------------------------|-----------------------------|
//! | `MuFro`            | `W Wᵀ`                         | the iterate `x`             |
//! | `MuKl`             | `Σ w_m w_mᵀ / (w_mᵀx)`         | the iterate `x`             |
//! | `FastMuFro`        | `W Wᵀ`                         | `sqrt((W v) ⊘ (W 𝟙))`       |
//! | `FastMuKlExact`    | `Σ v_m w_m w_mᵀ / (w_mᵀx)²`    | `𝟙`                         |
//! | `FastMuKlApprox`   | `Σ w_m w_mᵀ / v_m`             | `𝟙`                         |
//!
//! Metrics are returned for all columns at once as an R×K matrix whose column
//! `n` holds the diagonal for column `n` of the block.

use std::fmt;

use crate::error::{NmfError, Result};
use crate::losses::Loss;
use crate::matrix::{symmetric_eigenvalues, DenseMatrix};

/// Floor applied to data entries before they are used as divisors or
/// weights in the KL metrics.
pub const DEFAULT_DATA_FLOOR: f64 = 1e-8;

/// Tolerance on the smallest eigenvalue for [`check_majorant_psd`].
pub const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MajorantKind {
    MuFro,
    MuKl,
    FastMuFro,
    FastMuKlExact,
    FastMuKlApprox,
}

impl MajorantKind {
    pub const ALL: [MajorantKind; 5] = [
        MajorantKind::MuFro,
        MajorantKind::MuKl,
        MajorantKind::FastMuFro,
        MajorantKind::FastMuKlExact,
        MajorantKind::FastMuKlApprox,
    ];

    pub fn loss(self) -> Loss {
        match self {
            MajorantKind::MuFro | MajorantKind::FastMuFro => Loss::Frobenius,
            _ => Loss::Kl,
        }
    }

    /// Whether the metric depends on the current iterate.
    pub fn depends_on_iterate(self) -> bool {
        matches!(
            self,
            MajorantKind::MuFro | MajorantKind::MuKl | MajorantKind::FastMuKlExact
        )
    }
}

impl fmt::Display for MajorantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MajorantKind::MuFro => "mu_fro",
            MajorantKind::MuKl => "mu_kl",
            MajorantKind::FastMuFro => "fastmu_fro",
            MajorantKind::FastMuKlExact => "fastmu_kl_exact",
            MajorantKind::FastMuKlApprox => "fastmu_kl_approx",
        })
    }
}

/// Strictly positive, finite R×K matrix of diagonal metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricMatrix(DenseMatrix);

impl MetricMatrix {
    pub fn new(values: DenseMatrix) -> Result<Self> {
        if let Some(pos) = values
            .as_slice()
            .iter()
            .position(|&z| !(z > 0.0 && z.is_finite()))
        {
            return Err(NmfError::domain(format!(
                "metric entry ({}, {}) is {}; a factor row or data column is degenerate",
                pos / values.cols(),
                pos % values.cols(),
                values.as_slice()[pos]
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_inner(self) -> DenseMatrix {
        self.0
    }

    /// Smallest and largest entry.
    pub fn range(&self) -> (f64, f64) {
        (self.0.min(), self.0.max())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricOptions {
    /// Replaces the zero entries of the fastMU-Fro `u` vector.
    pub epsilon: f64,
    /// Lower bound applied to the data in both fastMU KL metrics.
    pub data_floor: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-16,
            data_floor: DEFAULT_DATA_FLOOR,
        }
    }
}

/// Minimizer of `‖b ⊘ u‖₁` over `u ≥ 0` subject to `‖Wᵀu‖₁ = v_l1`.
///
/// The solution is `u = κ·sqrt(b ⊘ (W 𝟙))` with
/// `κ = v_l1 / Σ_r sqrt(b_r (W 𝟙)_r)`, which makes the constraint hold exactly
/// and satisfies stationarity with multiplier `λ = 1/κ²`. Entries with
/// `b_r = 0` would be zero at the optimum; they are set to `epsilon` so the
/// resulting metric stays invertible.
pub fn solve_u(b: &[f64], w: &DenseMatrix, v_l1: f64, epsilon: f64) -> Result<Vec<f64>> {
    if b.len() != w.rows() {
        return Err(NmfError::Dimension {
            op: "solve_u",
            left_rows: b.len(),
            left_cols: 1,
            right_rows: w.rows(),
            right_cols: w.cols(),
        });
    }
    if b.iter().any(|&x| x < 0.0) {
        return Err(NmfError::domain("solve_u needs b >= 0"));
    }
    if b.iter().all(|&x| x == 0.0) {
        return Err(NmfError::domain("solve_u needs a nonzero b"));
    }
    if !(v_l1 > 0.0) {
        return Err(NmfError::domain("solve_u needs a positive l1 target"));
    }
    let row_sums = w.row_sums();
    if row_sums.iter().any(|&s| !(s > 0.0)) {
        return Err(NmfError::domain(
            "every row of W must have a positive sum; clip W first",
        ));
    }
    let normalizer: f64 = b
        .iter()
        .zip(&row_sums)
        .map(|(&bi, &si)| (bi * si).sqrt())
        .sum();
    let kappa = v_l1 / normalizer;
    Ok(b.iter()
        .zip(&row_sums)
        .map(|(&bi, &si)| {
            if bi == 0.0 {
                epsilon
            } else {
                kappa * (bi / si).sqrt()
            }
        })
        .collect())
}

/// Metric for every column of `x` (R×K), given data `v` (M×K) and the fixed
/// factor `w` (R×M).
pub fn metric(
    kind: MajorantKind,
    v: &DenseMatrix,
    w: &DenseMatrix,
    x: &DenseMatrix,
) -> Result<MetricMatrix> {
    metric_with(kind, v, w, x, &MetricOptions::default())
}

pub fn metric_with(
    kind: MajorantKind,
    v: &DenseMatrix,
    w: &DenseMatrix,
    x: &DenseMatrix,
    opts: &MetricOptions,
) -> Result<MetricMatrix> {
    if w.cols() != v.rows() || w.rows() != x.rows() || x.cols() != v.cols() {
        return Err(NmfError::Dimension {
            op: "metric (V: MxK, W: RxM, X: RxK)",
            left_rows: w.rows(),
            left_cols: w.cols(),
            right_rows: x.rows(),
            right_cols: x.cols(),
        });
    }
    match kind {
        MajorantKind::MuFro => mu_fro(&w.matmul_t(w)?, x),
        MajorantKind::MuKl => mu_kl(&w.row_sums(), x),
        MajorantKind::FastMuFro => {
            fastmu_fro(&w.matmul_t(w)?, &w.matmul(v)?, &w.row_sums(), opts.epsilon)
        }
        MajorantKind::FastMuKlExact => {
            fastmu_kl_exact(w, v, &w.col_sums(), &w.t_matmul(x)?, opts.data_floor)
        }
        MajorantKind::FastMuKlApprox => fastmu_kl_approx(w, v, &w.col_sums(), opts.data_floor),
    }
}

/// `(W Wᵀ X) ⊘ X`
pub(crate) fn mu_fro(gram: &DenseMatrix, x: &DenseMatrix) -> Result<MetricMatrix> {
    MetricMatrix::new(gram.matmul(x)?.div_elem(x)?)
}

/// `(W 𝟙_M) ⊘ X`, the row sum broadcast along each row.
pub(crate) fn mu_kl(row_sums: &[f64], x: &DenseMatrix) -> Result<MetricMatrix> {
    let mut z = x.clone();
    for (r, &s) in row_sums.iter().enumerate() {
        for zi in z.row_mut(r) {
            *zi = s / *zi;
        }
    }
    MetricMatrix::new(z)
}

/// The `u` vectors of the fastMU-Fro metric, one per column, up to a
/// per-column scale: `sqrt((W V) ⊘ (W 𝟙))`, zeros replaced by `epsilon`. A
/// column of `W V` that is entirely zero (an all-zero data column) gets
/// `u = 𝟙`.
pub(crate) fn fastmu_fro_directions(
    wv: &DenseMatrix,
    row_sums: &[f64],
    epsilon: f64,
) -> Result<DenseMatrix> {
    if let Some(r) = row_sums.iter().position(|&s| !(s > 0.0)) {
        return Err(NmfError::domain(format!(
            "row {r} of the fixed factor sums to zero; clip it first"
        )));
    }
    let mut s = wv.clone();
    for (r, &sum) in row_sums.iter().enumerate() {
        for x in s.row_mut(r) {
            *x = if *x > 0.0 { (*x / sum).sqrt() } else { epsilon };
        }
    }
    for n in 0..wv.cols() {
        if (0..wv.rows()).all(|r| wv.get(r, n) <= 0.0) {
            for r in 0..wv.rows() {
                s.set(r, n, 1.0);
            }
        }
    }
    Ok(s)
}

/// `(W Wᵀ S) ⊘ S` with `S` from [`fastmu_fro_directions`]. Independent of
/// the iterate.
pub(crate) fn fastmu_fro(
    gram: &DenseMatrix,
    wv: &DenseMatrix,
    row_sums: &[f64],
    epsilon: f64,
) -> Result<MetricMatrix> {
    let s = fastmu_fro_directions(wv, row_sums, epsilon)?;
    MetricMatrix::new(gram.matmul(&s)?.div_elem(&s)?)
}

/// `W · ((V ⊙ c) ⊘ (WᵀX)²)` with `c = Wᵀ𝟙_R` scaling row `m` of `V`.
pub(crate) fn fastmu_kl_exact(
    w: &DenseMatrix,
    v: &DenseMatrix,
    col_sums: &[f64],
    model: &DenseMatrix,
    data_floor: f64,
) -> Result<MetricMatrix> {
    crate::losses::ensure_positive_model(model)?;
    let mut weights = v.zip_map(model, |x, m| x.max(data_floor) / (m * m));
    for (m, &c) in col_sums.iter().enumerate() {
        for x in weights.row_mut(m) {
            *x *= c;
        }
    }
    MetricMatrix::new(w.matmul(&weights)?)
}

/// KL block gradient and exact-Hessian metric at `x` in one pass over the
/// data, without forming M×K temporaries. Same values as
/// `block_gradient_from_model` and [`fastmu_kl_exact`].
pub(crate) fn kl_gradient_and_exact_metric(
    w: &DenseMatrix,
    v: &DenseMatrix,
    col_sums: &[f64],
    x: &DenseMatrix,
    data_floor: f64,
) -> Result<(DenseMatrix, MetricMatrix)> {
    let (rank, k) = x.shape();
    let mut grad = DenseMatrix::zeros(rank, k);
    let mut z = DenseMatrix::zeros(rank, k);
    let mut model = vec![0.0; k];
    let mut ratio = vec![0.0; k];
    let mut weight = vec![0.0; k];
    for (m, &c) in col_sums.iter().enumerate() {
        model.iter_mut().for_each(|e| *e = 0.0);
        for r in 0..rank {
            let wr = w.get(r, m);
            for (e, &xv) in model.iter_mut().zip(x.row(r)) {
                *e += wr * xv;
            }
        }
        for (j, (&d, &mj)) in v.row(m).iter().zip(&model).enumerate() {
            if !(mj > 0.0) {
                return Err(NmfError::domain(format!(
                    "KL requires a positive model; entry ({m}, {j}) is {mj} (factors not ε-clipped?)"
                )));
            }
            ratio[j] = 1.0 - d / mj;
            weight[j] = d.max(data_floor) / (mj * mj) * c;
        }
        for r in 0..rank {
            let wr = w.get(r, m);
            for (g, &q) in grad.row_mut(r).iter_mut().zip(&ratio) {
                *g += wr * q;
            }
            for (e, &q) in z.row_mut(r).iter_mut().zip(&weight) {
                *e += wr * q;
            }
        }
    }
    Ok((grad, MetricMatrix::new(z)?))
}

/// `W · (c ⊘ max(V, floor))`. Independent of the iterate.
pub(crate) fn fastmu_kl_approx(
    w: &DenseMatrix,
    v: &DenseMatrix,
    col_sums: &[f64],
    data_floor: f64,
) -> Result<MetricMatrix> {
    let mut weights = v.map(|x| 1.0 / x.max(data_floor));
    for (m, &c) in col_sums.iter().enumerate() {
        for x in weights.row_mut(m) {
            *x *= c;
        }
    }
    MetricMatrix::new(w.matmul(&weights)?)
}

/// Hessian of the Frobenius column subproblem, `W Wᵀ`.
pub fn hessian_frobenius(w: &DenseMatrix) -> Result<DenseMatrix> {
    w.matmul_t(w)
}

/// Hessian of the KL column subproblem at `x`: `Σ_m v_m w_m w_mᵀ / (w_mᵀx)²`.
pub fn hessian_kl(w: &DenseMatrix, v_col: &[f64], x_col: &[f64]) -> Result<DenseMatrix> {
    let model = w.t_matmul(&DenseMatrix::column(x_col))?;
    let weights: Vec<f64> = v_col
        .iter()
        .zip(model.as_slice())
        .map(|(&v, &m)| v / (m * m))
        .collect();
    weighted_outer_sum(w, &weights)
}

/// The data-weighted KL Hessian approximation `Σ_m w_m w_mᵀ / v_m`.
pub fn hessian_kl_approx(w: &DenseMatrix, v_col: &[f64]) -> Result<DenseMatrix> {
    let weights: Vec<f64> = v_col.iter().map(|&v| 1.0 / v).collect();
    weighted_outer_sum(w, &weights)
}

fn weighted_outer_sum(w: &DenseMatrix, weights: &[f64]) -> Result<DenseMatrix> {
    if weights.len() != w.cols() {
        return Err(NmfError::Dimension {
            op: "hessian",
            left_rows: w.rows(),
            left_cols: w.cols(),
            right_rows: weights.len(),
            right_cols: 1,
        });
    }
    let r = w.rows();
    let mut out = DenseMatrix::zeros(r, r);
    for i in 0..r {
        for j in 0..=i {
            let s: f64 = (0..w.cols())
                .map(|m| weights[m] * w.get(i, m) * w.get(j, m))
                .sum();
            out.set(i, j, s);
            out.set(j, i, s);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsdReport {
    pub psd: bool,
    pub min_eig: f64,
}

/// Smallest eigenvalue of `Diag((B u) ⊘ u) − B`.
pub fn check_majorant_psd(hessian: &DenseMatrix, u: &[f64]) -> Result<PsdReport> {
    let n = hessian.rows();
    if hessian.cols() != n || u.len() != n {
        return Err(NmfError::Dimension {
            op: "check_majorant_psd",
            left_rows: hessian.rows(),
            left_cols: hessian.cols(),
            right_rows: u.len(),
            right_cols: 1,
        });
    }
    if !hessian.is_symmetric(1e-12) {
        return Err(NmfError::domain("hessian is not symmetric"));
    }
    if u.iter().any(|&x| !(x > 0.0)) {
        return Err(NmfError::domain("u must be strictly positive"));
    }
    let bu = hessian.matvec(u)?;
    let mut gap = hessian.scale(-1.0);
    for i in 0..n {
        gap.set(i, i, gap.get(i, i) + bu[i] / u[i]);
    }
    let min_eig = symmetric_eigenvalues(&gap)?.first().copied().unwrap_or(0.0);
    Ok(PsdReport {
        psd: min_eig >= -PSD_TOLERANCE,
        min_eig,
    })
}
