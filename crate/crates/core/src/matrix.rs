//! Dense row-major `f64` matrices and the handful of kernels the solvers need.
//!
//! Everything is plain `Vec<f64>` storage. The three product kernels
//! (`matmul`, `t_matmul`, `matmul_t`) cover every shape that shows up in the
//! NMF updates without materializing transposes.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{NmfError, Result};

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

fn dim_err(op: &'static str, a: &DenseMatrix, b: &DenseMatrix) -> NmfError {
    NmfError::Dimension {
        op,
        left_rows: a.rows,
        left_cols: a.cols,
        right_rows: b.rows,
        right_cols: b.cols,
    }
}

impl DenseMatrix {
    /// Wraps row-major `data`. Fails if the length is not `rows * cols` or an
    /// entry is not finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(NmfError::domain(format!(
                "buffer of length {} cannot hold a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(NmfError::domain(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input, so this is
    /// meant for literals in tests and examples.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            assert_eq!(r.as_ref().len(), ncols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self::new(nrows, ncols, data).expect("finite literal")
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Self {
        Self::new(values.len(), 1, values.to_vec()).expect("finite column")
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col_vec(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for (j, &x) in self.row(i).iter().enumerate() {
                out.data[j * self.rows + i] = x;
            }
        }
        out
    }

    /// `self · b`
    pub fn matmul(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != b.rows {
            return Err(dim_err("matmul", self, b));
        }
        let mut out = Self::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (k, &aik) in self.row(i).iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                    *o += aik * bkj;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · b`
    pub fn t_matmul(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != b.rows {
            return Err(dim_err("t_matmul", self, b));
        }
        let mut out = Self::zeros(self.cols, b.cols);
        for k in 0..self.rows {
            let b_row = b.row(k);
            for (i, &aki) in self.row(k).iter().enumerate() {
                if aki == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
                for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                    *o += aki * bkj;
                }
            }
        }
        Ok(out)
    }

    /// `self · bᵀ`
    pub fn matmul_t(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != b.cols {
            return Err(dim_err("matmul_t", self, b));
        }
        let mut out = Self::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..b.rows {
                out.data[i * b.rows + j] = dot(a_row, b.row(j));
            }
        }
        Ok(out)
    }

    /// Matrix-vector product `self · x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.cols != x.len() {
            return Err(NmfError::Dimension {
                op: "matvec",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: x.len(),
                right_cols: 1,
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    fn zip_with(
        &self,
        b: &DenseMatrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<DenseMatrix> {
        if self.shape() != b.shape() {
            return Err(dim_err(op, self, b));
        }
        let data = self
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Entrywise combination without shape or finiteness checks; callers
    /// guarantee matching shapes.
    pub(crate) fn zip_map(&self, b: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
        debug_assert_eq!(self.shape(), b.shape());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&b.data)
                .map(|(&x, &y)| f(x, y))
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(b, "add", |x, y| x + y)
    }

    pub fn sub(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(b, "sub", |x, y| x - y)
    }

    /// Hadamard product.
    pub fn hadamard(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(b, "hadamard", |x, y| x * y)
    }

    /// Entrywise division. Any zero entry in `b` is a domain error; callers
    /// clip beforehand.
    pub fn div_elem(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.shape() != b.shape() {
            return Err(dim_err("div_elem", self, b));
        }
        if let Some(pos) = b.data.iter().position(|&y| y == 0.0) {
            return Err(NmfError::domain(format!(
                "division by zero entry at ({}, {})",
                pos / b.cols,
                pos % b.cols
            )));
        }
        self.zip_with(b, "div_elem", |x, y| x / y)
    }

    pub fn sqrt(&self) -> Result<DenseMatrix> {
        if let Some(pos) = self.data.iter().position(|&x| x < 0.0) {
            return Err(NmfError::domain(format!(
                "square root of negative entry {} at ({}, {})",
                self.data[pos],
                pos / self.cols,
                pos % self.cols
            )));
        }
        Ok(self.map(f64::sqrt))
    }

    /// Entrywise `max(x, floor)`; the ε-clipping projection.
    pub fn max_scalar(&self, floor: f64) -> DenseMatrix {
        self.map(|x| x.max(floor))
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        self.map(|x| x * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    /// `‖self − b‖_F²` without allocating.
    pub fn sq_distance(&self, b: &DenseMatrix) -> Result<f64> {
        if self.shape() != b.shape() {
            return Err(dim_err("sq_distance", self, b));
        }
        Ok(self
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y) * (x - y))
            .sum())
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `self · 𝟙`: one sum per row.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    /// `selfᵀ · 𝟙`: one sum per column.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, &x) in out.iter_mut().zip(self.row(i)) {
                *o += x;
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Seeded uniform generator.
///
/// The stream is ChaCha8 (`rand_chacha` 0.3) keyed by the 64-bit seed via
/// `SeedableRng::seed_from_u64`; each uniform is the top 53 bits of one
/// `next_u64` scaled by 2⁻⁵³, so values lie in `[0, 1)`. Changing either
/// choice changes every generated problem and initialization.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// `rows × cols` matrix of i.i.d. uniforms on `[0, 1)`, filled row-major.
pub fn uniform_matrix(rng: &mut Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.next_uniform()).collect();
    DenseMatrix { rows, cols, data }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
///
/// Only the lower/upper symmetric part matters; input asymmetry is the
/// caller's responsibility. Sized for the R×R matrices of the metric checks.
pub fn symmetric_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    if a.rows != a.cols {
        return Err(dim_err("symmetric_eigenvalues", a, a));
    }
    let n = a.rows;
    let mut m = a.clone();
    let scale = m.frobenius_norm();
    if n == 0 {
        return Ok(Vec::new());
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).powi(2))
            .sum();
        if off.sqrt() <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Reads a headerless comma-separated matrix, one row per line.
pub fn load_csv(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(NmfError::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: record.len().min(c) + 1,
                    message: format!("expected {c} fields, found {}", record.len()),
                });
            }
            Some(_) => {}
        }
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| NmfError::Parse {
                path: path.to_path_buf(),
                line,
                column: j + 1,
                message: format!("not a number: {field:?}"),
            })?;
            if !value.is_finite() {
                return Err(NmfError::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: j + 1,
                    message: format!("non-finite value {field:?}"),
                });
            }
            data.push(value);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    DenseMatrix::new(rows, cols, data)
}

fn csv_error(path: &Path, e: csv::Error) -> NmfError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => NmfError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => NmfError::Parse {
            path: path.to_path_buf(),
            line,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Writes the matrix as headerless CSV using shortest round-trip float text.
pub fn save_csv(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| NmfError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for i in 0..m.rows {
        let line: Vec<String> = m.row(i).iter().map(|x| format!("{x:?}")).collect();
        writeln!(out, "{}", line.join(",")).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
