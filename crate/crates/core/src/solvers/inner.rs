//! Block updates.
//!
//! Every update is written for the H block: the iterate `x` is R×K, the data
//! `v` is M×K and the fixed factor is R×M. The W block reuses the same code on
//! the transposed problem (`Vᵀ`, fixed `H`, iterate `W`).

use crate::error::{NmfError, Result};
use crate::losses::{block_gradient_from_model, lipschitz_from_gram, Loss};
use crate::majorants::{self, MajorantKind, MetricMatrix};
use crate::matrix::DenseMatrix;

use super::config::{AlgorithmKind, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    H,
    W,
}

/// Data for one block visit, with the iterate-independent products
/// precomputed.
#[derive(Debug)]
pub struct BlockProblem<'a> {
    v: &'a DenseMatrix,
    fixed: &'a DenseMatrix,
    loss: Loss,
    /// `fixed · fixedᵀ` (Frobenius only).
    gram: Option<DenseMatrix>,
    /// `fixed · v` (Frobenius only).
    fixed_v: Option<DenseMatrix>,
    /// `fixed · 𝟙`
    row_sums: Vec<f64>,
    /// `fixedᵀ · 𝟙`
    col_sums: Vec<f64>,
}

impl<'a> BlockProblem<'a> {
    pub fn new(v: &'a DenseMatrix, fixed: &'a DenseMatrix, loss: Loss) -> Result<Self> {
        if fixed.cols() != v.rows() {
            return Err(NmfError::Dimension {
                op: "block problem (V: MxK, fixed: RxM)",
                left_rows: v.rows(),
                left_cols: v.cols(),
                right_rows: fixed.rows(),
                right_cols: fixed.cols(),
            });
        }
        let (gram, fixed_v) = match loss {
            Loss::Frobenius => (Some(fixed.matmul_t(fixed)?), Some(fixed.matmul(v)?)),
            Loss::Kl => (None, None),
        };
        Ok(Self {
            v,
            fixed,
            loss,
            gram,
            fixed_v,
            row_sums: fixed.row_sums(),
            col_sums: fixed.col_sums(),
        })
    }

    /// Problem for updating `block` of the factorization `v ≈ wᵀh`.
    /// `v_t` must be `vᵀ`; it is only read for the W block.
    pub fn for_block(
        block: Block,
        v: &'a DenseMatrix,
        v_t: &'a DenseMatrix,
        w: &'a DenseMatrix,
        h: &'a DenseMatrix,
        loss: Loss,
    ) -> Result<Self> {
        match block {
            Block::H => Self::new(v, w, loss),
            Block::W => Self::new(v_t, h, loss),
        }
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    fn check_iterate(&self, x: &DenseMatrix) -> Result<()> {
        if x.rows() != self.fixed.rows() || x.cols() != self.v.cols() {
            return Err(NmfError::Dimension {
                op: "block iterate",
                left_rows: x.rows(),
                left_cols: x.cols(),
                right_rows: self.fixed.rows(),
                right_cols: self.v.cols(),
            });
        }
        Ok(())
    }

    fn gram(&self) -> &DenseMatrix {
        self.gram.as_ref().expect("Frobenius block problem")
    }

    fn fixed_v(&self) -> &DenseMatrix {
        self.fixed_v.as_ref().expect("Frobenius block problem")
    }

    pub fn model(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.fixed.t_matmul(x)
    }

    pub fn gradient(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        match self.loss {
            Loss::Frobenius => self.gram().matmul(x)?.sub(self.fixed_v()),
            Loss::Kl => block_gradient_from_model(self.v, self.fixed, &self.model(x)?, Loss::Kl),
        }
    }

    /// Block objective value (unnormalized).
    pub fn objective(&self, x: &DenseMatrix) -> Result<f64> {
        crate::losses::loss(self.v, self.fixed, x, self.loss)
    }
}

/// Result of one block visit.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerOutcome {
    pub block: DenseMatrix,
    pub inner_count: usize,
    /// Smallest and largest metric entry seen, for majorant-based methods.
    pub metric_range: Option<(f64, f64)>,
}

#[derive(Default)]
struct RangeTracker(Option<(f64, f64)>);

impl RangeTracker {
    fn observe(&mut self, z: &MetricMatrix) {
        let (lo, hi) = z.range();
        self.0 = Some(match self.0 {
            None => (lo, hi),
            Some((a, b)) => (a.min(lo), b.max(hi)),
        });
    }
}

/// `max(x − γ·(grad ⊘ z), ε)`
pub fn inner_step_fastmu(
    x: &DenseMatrix,
    grad: &DenseMatrix,
    z: &MetricMatrix,
    gamma: f64,
    epsilon: f64,
) -> Result<DenseMatrix> {
    let z = z.values();
    if x.shape() != grad.shape() || x.shape() != z.shape() {
        return Err(NmfError::Dimension {
            op: "inner_step_fastmu",
            left_rows: x.rows(),
            left_cols: x.cols(),
            right_rows: z.rows(),
            right_cols: z.cols(),
        });
    }
    let data = x
        .as_slice()
        .iter()
        .zip(grad.as_slice())
        .zip(z.as_slice())
        .map(|((&xi, &gi), &zi)| (xi - gamma * gi / zi).max(epsilon))
        .collect();
    DenseMatrix::new(x.rows(), x.cols(), data)
}

/// Dynamic inner stopping: stop once `‖Δ_j‖² < δ·‖Δ_0‖²`, after `max_inner`
/// steps, or right after a first step that did not move.
struct Stopper {
    delta: f64,
    max_inner: usize,
    first: Option<f64>,
    count: usize,
}

impl Stopper {
    fn new(config: &SolverConfig) -> Self {
        Self {
            delta: config.delta,
            max_inner: config.max_inner,
            first: None,
            count: 0,
        }
    }

    fn record(&mut self, displacement: f64) -> bool {
        self.count += 1;
        let stop_on_tolerance = match self.first {
            None => {
                self.first = Some(displacement);
                displacement == 0.0
            }
            Some(first) => displacement < self.delta * first,
        };
        stop_on_tolerance || self.count >= self.max_inner
    }
}

fn plain_loop(
    x0: DenseMatrix,
    config: &SolverConfig,
    mut step: impl FnMut(&DenseMatrix) -> Result<DenseMatrix>,
) -> Result<(DenseMatrix, usize)> {
    let mut stopper = Stopper::new(config);
    let mut x = x0;
    loop {
        let next = step(&x)?;
        let displacement = next.sq_distance(&x)?;
        x = next;
        if stopper.record(displacement) {
            return Ok((x, stopper.count));
        }
    }
}

/// Fast-gradient pairing: the step is taken from `y_j = x_j + β_j (x_j − x_{j−1})`
/// with `t_0 = 1`, `t_{j+1} = (1 + sqrt(1 + 4 t_j²)) / 2`, `β_j = (t_j − 1) / t_{j+1}`.
/// No restart.
fn extrapolated_loop(
    x0: DenseMatrix,
    config: &SolverConfig,
    mut step_at: impl FnMut(&DenseMatrix) -> Result<DenseMatrix>,
) -> Result<(DenseMatrix, usize)> {
    let mut stopper = Stopper::new(config);
    let mut x_prev = x0.clone();
    let mut x = x0;
    let mut t = 1.0f64;
    loop {
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        let next = if beta == 0.0 {
            step_at(&x)?
        } else {
            let y = x.zip_map(&x_prev, |a, b| a + beta * (a - b));
            step_at(&y)?
        };
        let displacement = next.sq_distance(&x)?;
        x_prev = std::mem::replace(&mut x, next);
        t = t_next;
        if stopper.record(displacement) {
            return Ok((x, stopper.count));
        }
    }
}

/// One multiplicative update of the block.
fn mu_step(problem: &BlockProblem<'_>, x: &DenseMatrix, epsilon: f64) -> Result<DenseMatrix> {
    match problem.loss {
        Loss::Frobenius => {
            let denom = problem.gram().matmul(x)?;
            let ratio = problem.fixed_v().div_elem(&denom)?;
            Ok(x.zip_map(&ratio, |a, r| (a * r).max(epsilon)))
        }
        Loss::Kl => {
            let model = problem.model(x)?;
            crate::losses::ensure_positive_model(&model)?;
            let numer = problem
                .fixed
                .matmul(&problem.v.zip_map(&model, |v, m| v / m))?;
            let mut out = x.clone();
            for (r, &s) in problem.row_sums.iter().enumerate() {
                if s == 0.0 {
                    return Err(NmfError::domain(format!(
                        "row {r} of the fixed factor sums to zero"
                    )));
                }
                for (o, &n) in out.row_mut(r).iter_mut().zip(numer.row(r)) {
                    *o = (*o * n / s).max(epsilon);
                }
            }
            Ok(out)
        }
    }
}

/// One HALS sweep over the rows of the block, in order, each row using the
/// already-updated rows above it.
fn hals_sweep(problem: &BlockProblem<'_>, x: &DenseMatrix, epsilon: f64) -> DenseMatrix {
    let gram = problem.gram();
    let fixed_v = problem.fixed_v();
    let rank = x.rows();
    let mut out = x.clone();
    for r in 0..rank {
        let diag = gram.get(r, r);
        if diag < epsilon * epsilon {
            log::warn!("HALS: component {r} is degenerate (diagonal {diag:e}); skipping");
            continue;
        }
        let mut cross = vec![0.0; out.cols()];
        for k in 0..rank {
            let g = gram.get(r, k);
            for (c, &xk) in cross.iter_mut().zip(out.row(k)) {
                *c += g * xk;
            }
        }
        let target = fixed_v.row(r);
        for ((o, &c), &t) in out.row_mut(r).iter_mut().zip(&cross).zip(target) {
            *o = (*o + (t - c) / diag).max(epsilon);
        }
    }
    out
}

fn projected_gradient_step(
    problem: &BlockProblem<'_>,
    y: &DenseMatrix,
    step: f64,
    epsilon: f64,
) -> Result<DenseMatrix> {
    let grad = problem.gradient(y)?;
    Ok(y.zip_map(&grad, |a, g| (a - step * g).max(epsilon)))
}

fn require_frobenius(problem: &BlockProblem<'_>, what: &str) -> Result<()> {
    if problem.loss != Loss::Frobenius {
        return Err(NmfError::config(format!(
            "{what} only supports the Frobenius loss"
        )));
    }
    Ok(())
}

fn fixed_metric(
    kind: MajorantKind,
    problem: &BlockProblem<'_>,
    config: &SolverConfig,
) -> Result<MetricMatrix> {
    match kind {
        MajorantKind::FastMuFro => majorants::fastmu_fro(
            problem.gram(),
            problem.fixed_v(),
            &problem.row_sums,
            config.epsilon,
        ),
        MajorantKind::FastMuKlApprox => majorants::fastmu_kl_approx(
            problem.fixed,
            problem.v,
            &problem.col_sums,
            config.data_floor,
        ),
        other => unreachable!("{other} depends on the iterate"),
    }
}

/// fastMU inner loop with the metric rebuilt as the majorant kind requires.
pub(crate) fn fastmu_loop(
    problem: &BlockProblem<'_>,
    x0: DenseMatrix,
    config: &SolverConfig,
) -> Result<InnerOutcome> {
    let kind = match (problem.loss, config.algorithm.hessian) {
        (Loss::Frobenius, _) => MajorantKind::FastMuFro,
        (Loss::Kl, super::config::HessianMode::Exact) => MajorantKind::FastMuKlExact,
        (Loss::Kl, super::config::HessianMode::Approx) => MajorantKind::FastMuKlApprox,
    };
    let gamma = config.effective_gamma();
    let eps = config.epsilon;
    let mut range = RangeTracker::default();
    let (block, inner_count) = if kind == MajorantKind::FastMuKlExact {
        plain_loop(x0, config, |x| {
            let (grad, z) = majorants::kl_gradient_and_exact_metric(
                problem.fixed,
                problem.v,
                &problem.col_sums,
                x,
                config.data_floor,
            )?;
            range.observe(&z);
            inner_step_fastmu(x, &grad, &z, gamma, eps)
        })?
    } else {
        let z = fixed_metric(kind, problem, config)?;
        range.observe(&z);
        plain_loop(x0, config, |x| {
            inner_step_fastmu(x, &problem.gradient(x)?, &z, gamma, eps)
        })?
    };
    Ok(InnerOutcome {
        block,
        inner_count,
        metric_range: range.0,
    })
}

/// Extrapolated fastMU (Frobenius only); the step size is forced to 1.
pub(crate) fn fastmu_extrapolated_loop(
    problem: &BlockProblem<'_>,
    x0: DenseMatrix,
    config: &SolverConfig,
) -> Result<InnerOutcome> {
    require_frobenius(problem, "extrapolated fastMU")?;
    let z = fixed_metric(MajorantKind::FastMuFro, problem, config)?;
    let eps = config.epsilon;
    let (block, inner_count) = extrapolated_loop(x0, config, |y| {
        inner_step_fastmu(y, &problem.gradient(y)?, &z, 1.0, eps)
    })?;
    Ok(InnerOutcome {
        block,
        inner_count,
        metric_range: Some(z.range()),
    })
}

/// Runs the configured algorithm's inner loop on one block.
pub fn update_block(
    problem: &BlockProblem<'_>,
    x0: DenseMatrix,
    config: &SolverConfig,
) -> Result<InnerOutcome> {
    problem.check_iterate(&x0)?;
    if problem.loss != config.algorithm.loss {
        return Err(NmfError::config(format!(
            "block problem uses the {} loss but the algorithm is {}",
            problem.loss, config.algorithm
        )));
    }
    config.algorithm.validate()?;
    let eps = config.epsilon;
    let plain = |(block, inner_count): (DenseMatrix, usize)| InnerOutcome {
        block,
        inner_count,
        metric_range: None,
    };
    match config.algorithm.kind {
        AlgorithmKind::FastMu => fastmu_loop(problem, x0, config),
        AlgorithmKind::FastMuExtrapolated => fastmu_extrapolated_loop(problem, x0, config),
        AlgorithmKind::Mu => plain_loop(x0, config, |x| mu_step(problem, x, eps)).map(plain),
        AlgorithmKind::Hals => {
            require_frobenius(problem, "HALS")?;
            plain_loop(x0, config, |x| Ok(hals_sweep(problem, x, eps))).map(plain)
        }
        AlgorithmKind::Gd => {
            require_frobenius(problem, "projected gradient")?;
            let lipschitz = lipschitz_from_gram(problem.gram())?;
            let step = config.gamma / lipschitz;
            plain_loop(x0, config, |x| {
                projected_gradient_step(problem, x, step, eps)
            })
            .map(plain)
        }
        AlgorithmKind::NeNmf => {
            require_frobenius(problem, "NeNMF")?;
            let lipschitz = lipschitz_from_gram(problem.gram())?;
            extrapolated_loop(x0, config, |y| {
                projected_gradient_step(problem, y, 1.0 / lipschitz, eps)
            })
            .map(plain)
        }
    }
}

fn block_parts<'a>(
    block: Block,
    v: &DenseMatrix,
    w: &'a DenseMatrix,
    h: &'a DenseMatrix,
) -> (Option<DenseMatrix>, &'a DenseMatrix, &'a DenseMatrix) {
    match block {
        Block::H => (None, w, h),
        Block::W => (Some(v.transpose()), h, w),
    }
}

/// Runs the configured algorithm's inner loop on `block` of `v ≈ wᵀh` and
/// returns the updated block with the number of inner steps taken.
pub fn run_inner_loop(
    block: Block,
    v: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    config: &SolverConfig,
) -> Result<InnerOutcome> {
    config.validate()?;
    let (v_t, fixed, x) = block_parts(block, v, w, h);
    let problem = BlockProblem::new(v_t.as_ref().unwrap_or(v), fixed, config.algorithm.loss)?;
    update_block(&problem, x.clone(), config)
}

/// Extrapolated fastMU inner loop on `block`, regardless of the configured
/// algorithm kind. Frobenius only; γ = 1.
pub fn run_inner_loop_extrapolated(
    block: Block,
    v: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    config: &SolverConfig,
) -> Result<InnerOutcome> {
    config.validate()?;
    if config.algorithm.loss != Loss::Frobenius {
        return Err(NmfError::config(
            "extrapolated fastMU diverges on the KL loss; use it with Frobenius only",
        ));
    }
    let (v_t, fixed, x) = block_parts(block, v, w, h);
    let problem = BlockProblem::new(v_t.as_ref().unwrap_or(v), fixed, Loss::Frobenius)?;
    problem.check_iterate(x)?;
    fastmu_extrapolated_loop(&problem, x.clone(), config)
}

/// A single multiplicative update of `block`, clipped at `epsilon`.
pub fn mu_inner(
    block: Block,
    v: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    loss: Loss,
    epsilon: f64,
) -> Result<DenseMatrix> {
    let (v_t, fixed, x) = block_parts(block, v, w, h);
    let problem = BlockProblem::new(v_t.as_ref().unwrap_or(v), fixed, loss)?;
    problem.check_iterate(x)?;
    mu_step(&problem, x, epsilon)
}

/// One HALS sweep over the rows of `h`.
pub fn hals_inner(
    v: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    epsilon: f64,
) -> Result<DenseMatrix> {
    let problem = BlockProblem::new(v, w, Loss::Frobenius)?;
    problem.check_iterate(h)?;
    Ok(hals_sweep(&problem, h, epsilon))
}

/// One projected gradient step on `h` with step `gamma / L`.
pub fn gd_inner(
    v: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    gamma: f64,
    epsilon: f64,
) -> Result<DenseMatrix> {
    let problem = BlockProblem::new(v, w, Loss::Frobenius)?;
    problem.check_iterate(h)?;
    let lipschitz = lipschitz_from_gram(problem.gram())?;
    projected_gradient_step(&problem, h, gamma / lipschitz, epsilon)
}

/// NeNMF inner loop on `h`: fast gradient with step `1/L` and the configured
/// dynamic stopping.
pub fn nenmf_inner(
    v: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    config: &SolverConfig,
) -> Result<InnerOutcome> {
    let mut config = config.clone();
    config.algorithm = super::config::Algorithm::NENMF;
    config.validate()?;
    let problem = BlockProblem::new(v, w, Loss::Frobenius)?;
    update_block(&problem, h.clone(), &config)
}
