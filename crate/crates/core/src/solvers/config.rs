use std::fmt;
use std::str::FromStr;

use crate::error::{NmfError, Result};
use crate::losses::Loss;
use crate::majorants::{MajorantKind, DEFAULT_DATA_FLOOR};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AlgorithmKind {
    FastMu,
    FastMuExtrapolated,
    Mu,
    Hals,
    NeNmf,
    Gd,
}

/// Which Hessian the fastMU KL metric is built from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum HessianMode {
    #[default]
    Exact,
    Approx,
}

/// An algorithm paired with the loss it minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Algorithm {
    pub kind: AlgorithmKind,
    pub loss: Loss,
    /// Only meaningful for `FastMu` with the KL loss.
    pub hessian: HessianMode,
}

impl Algorithm {
    pub const fn new(kind: AlgorithmKind, loss: Loss) -> Self {
        Self {
            kind,
            loss,
            hessian: HessianMode::Exact,
        }
    }

    pub const MU_FRO: Algorithm = Algorithm::new(AlgorithmKind::Mu, Loss::Frobenius);
    pub const MU_KL: Algorithm = Algorithm::new(AlgorithmKind::Mu, Loss::Kl);
    pub const HALS: Algorithm = Algorithm::new(AlgorithmKind::Hals, Loss::Frobenius);
    pub const NENMF: Algorithm = Algorithm::new(AlgorithmKind::NeNmf, Loss::Frobenius);
    pub const GD: Algorithm = Algorithm::new(AlgorithmKind::Gd, Loss::Frobenius);
    pub const FASTMU_FRO: Algorithm = Algorithm::new(AlgorithmKind::FastMu, Loss::Frobenius);
    pub const FASTMU_FRO_EX: Algorithm =
        Algorithm::new(AlgorithmKind::FastMuExtrapolated, Loss::Frobenius);
    pub const FASTMU_KL: Algorithm = Algorithm::new(AlgorithmKind::FastMu, Loss::Kl);
    pub const FASTMU_KL_APPROX: Algorithm = Algorithm {
        kind: AlgorithmKind::FastMu,
        loss: Loss::Kl,
        hessian: HessianMode::Approx,
    };

    /// Every valid algorithm/loss combination.
    pub const ALL: [Algorithm; 9] = [
        Algorithm::MU_FRO,
        Algorithm::HALS,
        Algorithm::NENMF,
        Algorithm::GD,
        Algorithm::FASTMU_FRO,
        Algorithm::FASTMU_FRO_EX,
        Algorithm::MU_KL,
        Algorithm::FASTMU_KL,
        Algorithm::FASTMU_KL_APPROX,
    ];

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.loss) {
            (AlgorithmKind::FastMuExtrapolated, Loss::Kl) => Err(NmfError::config(
                "extrapolated fastMU diverges on the KL loss; use it with Frobenius only",
            )),
            (AlgorithmKind::NeNmf, Loss::Kl) => Err(NmfError::config(
                "NeNMF diverges on the KL loss; use it with Frobenius only",
            )),
            (AlgorithmKind::Hals, Loss::Kl) => {
                Err(NmfError::config("HALS only applies to the Frobenius loss"))
            }
            (AlgorithmKind::Gd, Loss::Kl) => Err(NmfError::config(
                "projected gradient needs a Lipschitz gradient; Frobenius only",
            )),
            _ => Ok(()),
        }
    }

    /// The metric this algorithm builds, if it is a majorant-based method.
    pub fn majorant(&self) -> Option<MajorantKind> {
        match (self.kind, self.loss, self.hessian) {
            (AlgorithmKind::Mu, Loss::Frobenius, _) => Some(MajorantKind::MuFro),
            (AlgorithmKind::Mu, Loss::Kl, _) => Some(MajorantKind::MuKl),
            (AlgorithmKind::FastMu | AlgorithmKind::FastMuExtrapolated, Loss::Frobenius, _) => {
                Some(MajorantKind::FastMuFro)
            }
            (AlgorithmKind::FastMu, Loss::Kl, HessianMode::Exact) => {
                Some(MajorantKind::FastMuKlExact)
            }
            (AlgorithmKind::FastMu, Loss::Kl, HessianMode::Approx) => {
                Some(MajorantKind::FastMuKlApprox)
            }
            _ => None,
        }
    }

    /// Whether successive losses are guaranteed not to increase.
    pub fn is_monotone(&self) -> bool {
        !matches!(
            self.kind,
            AlgorithmKind::FastMuExtrapolated | AlgorithmKind::NeNmf
        ) && self.hessian == HessianMode::Exact
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match (self.kind, self.loss, self.hessian) {
            (AlgorithmKind::Mu, Loss::Frobenius, _) => "mu_fro",
            (AlgorithmKind::Mu, Loss::Kl, _) => "mu_kl",
            (AlgorithmKind::Hals, Loss::Frobenius, _) => "hals",
            (AlgorithmKind::Hals, Loss::Kl, _) => "hals_kl",
            (AlgorithmKind::NeNmf, Loss::Frobenius, _) => "nenmf",
            (AlgorithmKind::NeNmf, Loss::Kl, _) => "nenmf_kl",
            (AlgorithmKind::Gd, Loss::Frobenius, _) => "gd",
            (AlgorithmKind::Gd, Loss::Kl, _) => "gd_kl",
            (AlgorithmKind::FastMu, Loss::Frobenius, _) => "fastmu_fro",
            (AlgorithmKind::FastMuExtrapolated, Loss::Frobenius, _) => "fastmu_fro_ex",
            (AlgorithmKind::FastMuExtrapolated, Loss::Kl, _) => "fastmu_kl_ex",
            (AlgorithmKind::FastMu, Loss::Kl, HessianMode::Exact) => "fastmu_kl",
            (AlgorithmKind::FastMu, Loss::Kl, HessianMode::Approx) => "fastmu_kl_approx",
        };
        f.write_str(name)
    }
}

impl FromStr for Algorithm {
    type Err = NmfError;

    /// Parses the names produced by `Display`, including the invalid
    /// combinations (`hals_kl`, `nenmf_kl`, ...) so that they surface as
    /// configuration errors from [`Algorithm::validate`] rather than as
    /// unknown names.
    fn from_str(s: &str) -> Result<Self> {
        let name = s.trim().to_ascii_lowercase();
        let alg = match name.as_str() {
            "mu_fro" => Algorithm::MU_FRO,
            "mu_kl" => Algorithm::MU_KL,
            "hals" | "hals_fro" => Algorithm::HALS,
            "hals_kl" => Algorithm::new(AlgorithmKind::Hals, Loss::Kl),
            "nenmf" | "nenmf_fro" => Algorithm::NENMF,
            "nenmf_kl" => Algorithm::new(AlgorithmKind::NeNmf, Loss::Kl),
            "gd" | "gd_fro" => Algorithm::GD,
            "gd_kl" => Algorithm::new(AlgorithmKind::Gd, Loss::Kl),
            "fastmu_fro" => Algorithm::FASTMU_FRO,
            "fastmu_fro_ex" => Algorithm::FASTMU_FRO_EX,
            "fastmu_kl_ex" => Algorithm::new(AlgorithmKind::FastMuExtrapolated, Loss::Kl),
            "fastmu_kl" | "fastmu_kl_exact" => Algorithm::FASTMU_KL,
            "fastmu_kl_approx" => Algorithm::FASTMU_KL_APPROX,
            _ => return Err(NmfError::config(format!("unknown algorithm {s:?}"))),
        };
        Ok(alg)
    }
}

/// Order in which the two blocks are visited inside an outer iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum BlockOrder {
    #[default]
    HThenW,
    WThenH,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Lower bound for every factor entry.
    pub epsilon: f64,
    /// Step size on the metric-scaled gradient; also the numerator of the
    /// projected-gradient step `gamma / L`. Ignored by MU, HALS and NeNMF.
    pub gamma: f64,
    /// Inner loops stop once a squared displacement drops below
    /// `delta` times the first one.
    pub delta: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub time_budget_s: Option<f64>,
    pub seed: u64,
    /// Refine the random initialization with one MU sweep under KL.
    pub warm_start_mu_kl: bool,
    pub block_order: BlockOrder,
    /// Floor for data entries inside the fastMU KL metrics.
    pub data_floor: f64,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            epsilon: 1e-16,
            gamma: 1.9,
            delta: 0.1,
            max_inner: 100,
            max_outer: 20000,
            time_budget_s: None,
            seed: 0,
            warm_start_mu_kl: true,
            block_order: BlockOrder::HThenW,
            data_floor: DEFAULT_DATA_FLOOR,
        }
    }

    pub fn with_max_outer(mut self, max_outer: usize) -> Self {
        self.max_outer = max_outer;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_inner(mut self, max_inner: usize) -> Self {
        self.max_inner = max_inner;
        self
    }

    /// Step size actually used: the extrapolated variant always runs at 1.
    pub fn effective_gamma(&self) -> f64 {
        match self.algorithm.kind {
            AlgorithmKind::FastMuExtrapolated => 1.0,
            _ => self.gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.algorithm.validate()?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(NmfError::config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 2.0) {
            return Err(NmfError::config(format!(
                "gamma must lie in (0, 2), got {}",
                self.gamma
            )));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(NmfError::config(format!(
                "delta must lie in [0, 1), got {}",
                self.delta
            )));
        }
        if self.max_inner == 0 {
            return Err(NmfError::config("max_inner must be at least 1"));
        }
        if let Some(t) = self.time_budget_s {
            if !(t > 0.0) {
                return Err(NmfError::config("time budget must be positive"));
            }
        }
        if !(self.data_floor > 0.0) {
            return Err(NmfError::config("data floor must be positive"));
        }
        Ok(())
    }
}
