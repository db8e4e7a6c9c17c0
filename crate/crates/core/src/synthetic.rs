//! Seeded synthetic NMF problems with SNR-calibrated uniform noise.
//!
//! A problem is drawn as: `W` (R×M), then `H` (R×N), then the noise `E`
//! (M×N), all i.i.d. uniform on `[0, 1)` from one [`Rng`] stream. Optional
//! sparsification replaces the smallest entries of the factors and/or of the
//! clean data by small floors; noise is added last, with `σ` chosen so the
//! realized SNR on the sparsified signal is exactly the requested one.

use std::fmt;
use std::str::FromStr;

use crate::error::{NmfError, Result};
use crate::matrix::{uniform_matrix, DenseMatrix, Rng};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SparsitySetup {
    #[default]
    Dense,
    DataSparse,
    FacSparse,
    FacDataSparse,
}

impl SparsitySetup {
    pub const ALL: [SparsitySetup; 4] = [
        SparsitySetup::Dense,
        SparsitySetup::DataSparse,
        SparsitySetup::FacSparse,
        SparsitySetup::FacDataSparse,
    ];

    fn sparse_factors(self) -> bool {
        matches!(
            self,
            SparsitySetup::FacSparse | SparsitySetup::FacDataSparse
        )
    }

    fn sparse_data(self) -> bool {
        matches!(
            self,
            SparsitySetup::DataSparse | SparsitySetup::FacDataSparse
        )
    }
}

impl fmt::Display for SparsitySetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SparsitySetup::Dense => "dense",
            SparsitySetup::DataSparse => "data_sparse",
            SparsitySetup::FacSparse => "fac_sparse",
            SparsitySetup::FacDataSparse => "fac_data_sparse",
        })
    }
}

impl FromStr for SparsitySetup {
    type Err = NmfError;

    fn from_str(s: &str) -> Result<Self> {
        SparsitySetup::ALL
            .into_iter()
            .find(|setup| setup.to_string() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| NmfError::config(format!("unknown sparsity setup {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    /// `f64::INFINITY` means noise-free.
    pub snr_db: f64,
    pub setup: SparsitySetup,
    pub seed: u64,
    pub sparsify_fraction: f64,
    /// Value given to sparsified factor entries.
    pub eps_fac: f64,
    /// Value given to sparsified data entries; `rank · eps_fac²` when unset.
    pub eps_data: Option<f64>,
}

impl SyntheticSpec {
    pub fn new(m: usize, n: usize, rank: usize) -> Self {
        Self {
            m,
            n,
            rank,
            snr_db: 100.0,
            setup: SparsitySetup::Dense,
            seed: 0,
            sparsify_fraction: 0.5,
            eps_fac: 1e-8,
            eps_data: None,
        }
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.snr_db = snr_db;
        self
    }

    pub fn with_setup(mut self, setup: SparsitySetup) -> Self {
        self.setup = setup;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn eps_data(&self) -> f64 {
        self.eps_data
            .unwrap_or(self.rank as f64 * self.eps_fac * self.eps_fac)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.rank == 0 {
            return Err(NmfError::config("dimensions and rank must be positive"));
        }
        if self.rank > self.m.min(self.n) {
            return Err(NmfError::config(format!(
                "rank {} exceeds min(M, N) = {}",
                self.rank,
                self.m.min(self.n)
            )));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(NmfError::config("SNR must be a number or +inf"));
        }
        if !(0.0..1.0).contains(&self.sparsify_fraction) {
            return Err(NmfError::config("sparsify fraction must lie in [0, 1)"));
        }
        if !(self.eps_fac >= 0.0) || !(self.eps_data() >= 0.0) {
            return Err(NmfError::config("sparsity floors must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticProblem {
    /// Observed data, M×N.
    pub v: DenseMatrix,
    /// Noise-free (sparsified) data `sparsified(WᵀH)`.
    pub signal: DenseMatrix,
    pub w_true: DenseMatrix,
    pub h_true: DenseMatrix,
    /// Raw noise draw; `v == signal + sigma · noise`.
    pub noise: DenseMatrix,
    pub sigma: f64,
}

impl SyntheticProblem {
    /// `10·log₁₀(‖signal‖² / ‖σE‖²)`
    pub fn realized_snr_db(&self) -> f64 {
        let noise = self.sigma * self.noise.frobenius_norm();
        20.0 * (self.signal.frobenius_norm() / noise).log10()
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticProblem> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let mut w = uniform_matrix(&mut rng, spec.rank, spec.m);
    let mut h = uniform_matrix(&mut rng, spec.rank, spec.n);
    let noise = uniform_matrix(&mut rng, spec.m, spec.n);
    if spec.setup.sparse_factors() {
        w = sparsify(&w, spec.sparsify_fraction, spec.eps_fac);
        h = sparsify(&h, spec.sparsify_fraction, spec.eps_fac);
    }
    let mut signal = w.t_matmul(&h)?;
    if spec.setup.sparse_data() {
        signal = sparsify(&signal, spec.sparsify_fraction, spec.eps_data());
    }
    let sigma = if spec.snr_db.is_infinite() {
        0.0
    } else {
        signal.frobenius_norm() / (noise.frobenius_norm() * 10f64.powf(spec.snr_db / 20.0))
    };
    let v = signal.zip_map(&noise, |s, e| s + sigma * e);
    Ok(SyntheticProblem {
        v,
        signal,
        w_true: w,
        h_true: h,
        noise,
        sigma,
    })
}

/// Number of entries `sparsify` replaces: `⌈fraction · count⌉`, with products
/// that are integral up to rounding not bumped to the next integer.
pub fn sparsified_count(fraction: f64, count: usize) -> usize {
    let raw = fraction * count as f64;
    let nearest = raw.round();
    let k = if (raw - nearest).abs() < 1e-9 {
        nearest
    } else {
        raw.ceil()
    };
    (k as usize).min(count)
}

/// Replaces the `⌈fraction · count⌉` smallest entries by `floor`, ties broken
/// by row-major index.
pub fn sparsify(x: &DenseMatrix, fraction: f64, floor: f64) -> DenseMatrix {
    let data = x.as_slice();
    let k = sparsified_count(fraction, data.len());
    if k == 0 {
        return x.clone();
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data[a].total_cmp(&data[b]));
    let mut out = data.to_vec();
    for &i in &order[..k] {
        out[i] = floor;
    }
    DenseMatrix::new(x.rows(), x.cols(), out).expect("finite floor")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparsify_examples() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(sparsify(&x, 0.0, 0.0), x);
        assert_eq!(
            sparsify(&x, 0.5, 0.0),
            DenseMatrix::from_rows(&[[0.0, 0.0], [3.0, 4.0]])
        );
        // ties go to the lower linear index
        let t = DenseMatrix::from_rows(&[[5.0, 1.0, 1.0, 1.0]]);
        assert_eq!(
            sparsify(&t, 0.5, -1.0),
            DenseMatrix::from_rows(&[[5.0, -1.0, -1.0, 1.0]])
        );
        assert_eq!(sparsified_count(0.3, 10), 3);
        assert_eq!(sparsified_count(0.5, 7), 4);
    }

    #[test]
    fn noise_free_is_exactly_low_rank() {
        let p = generate(&SyntheticSpec::new(8, 6, 2).with_snr_db(f64::INFINITY)).unwrap();
        assert_eq!(p.sigma, 0.0);
        assert_eq!(p.v, p.w_true.t_matmul(&p.h_true).unwrap());
    }

    #[test]
    fn zero_db_balances_energies() {
        let p = generate(&SyntheticSpec::new(10, 7, 3).with_snr_db(0.0)).unwrap();
        let noise = p.sigma * p.noise.frobenius_norm();
        assert!((noise / p.signal.frobenius_norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn data_sparse_counts() {
        let spec = SyntheticSpec::new(9, 7, 3).with_setup(SparsitySetup::DataSparse);
        let p = generate(&spec).unwrap();
        let floor = spec.eps_data();
        assert!((floor - 3e-16).abs() < 1e-30);
        let hits = p.signal.as_slice().iter().filter(|&&x| x == floor).count();
        assert_eq!(hits, (9 * 7usize).div_ceil(2));
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&SyntheticSpec::new(3, 3, 4)).is_err());
        assert!(generate(&SyntheticSpec::new(3, 3, 1).with_snr_db(f64::NAN)).is_err());
        let mut s = SyntheticSpec::new(3, 3, 1);
        s.sparsify_fraction = 1.0;
        assert!(generate(&s).is_err());
        assert!("dense".parse::<SparsitySetup>().is_ok());
        assert!("sparse".parse::<SparsitySetup>().is_err());
    }
}
