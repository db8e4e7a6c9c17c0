use std::time::Instant;

use crate::error::{NmfError, Result};
use crate::losses::Loss;
use crate::matrix::{uniform_matrix, DenseMatrix, Rng};

use super::config::{Algorithm, BlockOrder, SolverConfig};
use super::inner::{update_block, Block, BlockProblem, InnerOutcome};

/// Factors of `V ≈ WᵀH`: `w` is R×M and `h` is R×N.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorPair {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
}

impl FactorPair {
    pub fn new(w: DenseMatrix, h: DenseMatrix) -> Result<Self> {
        if w.rows() != h.rows() {
            return Err(NmfError::Dimension {
                op: "factor pair",
                left_rows: w.rows(),
                left_cols: w.cols(),
                right_rows: h.rows(),
                right_cols: h.cols(),
            });
        }
        Ok(Self { w, h })
    }

    /// i.i.d. uniform factors drawn W first, then H, clipped at `epsilon`.
    pub fn random(rank: usize, m: usize, n: usize, seed: u64, epsilon: f64) -> Self {
        let mut rng = Rng::new(seed);
        let w = uniform_matrix(&mut rng, rank, m).max_scalar(epsilon);
        let h = uniform_matrix(&mut rng, rank, n).max_scalar(epsilon);
        Self { w, h }
    }

    pub fn rank(&self) -> usize {
        self.w.rows()
    }

    /// Roles exchanged: the factorization of `Vᵀ ≈ HᵀW`.
    pub fn swapped(&self) -> Self {
        Self {
            w: self.h.clone(),
            h: self.w.clone(),
        }
    }

    pub fn clipped(&self, epsilon: f64) -> Self {
        Self {
            w: self.w.max_scalar(epsilon),
            h: self.h.max_scalar(epsilon),
        }
    }

    pub fn min_entry(&self) -> f64 {
        self.w.min().min(self.h.min())
    }
}

/// One trace point. `outer_iter` 0 is the (possibly warm-started)
/// initialization; point `k` follows the k-th outer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub outer_iter: usize,
    pub loss_normalized: f64,
    /// Wall-clock seconds since the solve started, strictly increasing.
    pub elapsed_s: f64,
    pub inner_count_h: usize,
    pub inner_count_w: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    /// Smallest and largest metric entry over the run, when the algorithm
    /// builds one.
    pub metric_range: Option<(f64, f64)>,
}

impl ConvergenceTrace {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss_normalized).collect()
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.loss_normalized)
    }

    /// Number of outer iterations performed (the initial point excluded).
    pub fn outer_iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    fn merge_range(&mut self, range: Option<(f64, f64)>) {
        if let Some((lo, hi)) = range {
            self.metric_range = Some(match self.metric_range {
                None => (lo, hi),
                Some((a, b)) => (a.min(lo), b.max(hi)),
            });
        }
    }

    fn push(&mut self, clock: &Clock, outer_iter: usize, loss: f64, inner: (usize, usize)) {
        let mut elapsed = clock.elapsed();
        if let Some(last) = self.records.last() {
            if elapsed <= last.elapsed_s {
                elapsed = f64::from_bits(last.elapsed_s.to_bits() + 1);
            }
        }
        self.records.push(TraceRecord {
            outer_iter,
            loss_normalized: loss,
            elapsed_s: elapsed,
            inner_count_h: inner.0,
            inner_count_w: inner.1,
        });
    }
}

struct Clock(Instant);

impl Clock {
    fn elapsed(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

fn validate_data(v: &DenseMatrix, rank: usize) -> Result<()> {
    if v.as_slice().iter().any(|&x| x < 0.0) {
        return Err(NmfError::domain("data matrix has negative entries"));
    }
    if rank == 0 || rank > v.rows().min(v.cols()) {
        return Err(NmfError::config(format!(
            "rank {rank} must lie in 1..={} for a {}x{} matrix",
            v.rows().min(v.cols()),
            v.rows(),
            v.cols()
        )));
    }
    Ok(())
}

fn normalized_loss(v: &DenseMatrix, w: &DenseMatrix, h: &DenseMatrix, kind: Loss) -> Result<f64> {
    crate::losses::loss_normalized(v, w, h, kind)
}

fn warm_start(
    v: &DenseMatrix,
    v_t: &DenseMatrix,
    factors: &mut FactorPair,
    config: &SolverConfig,
) -> Result<()> {
    let mu = SolverConfig {
        algorithm: Algorithm::MU_KL,
        max_inner: 1,
        ..config.clone()
    };
    for block in block_sequence(config.block_order) {
        update(block, v, v_t, factors, &mu)?;
    }
    Ok(())
}

fn block_sequence(order: BlockOrder) -> [Block; 2] {
    match order {
        BlockOrder::HThenW => [Block::H, Block::W],
        BlockOrder::WThenH => [Block::W, Block::H],
    }
}

fn update(
    block: Block,
    v: &DenseMatrix,
    v_t: &DenseMatrix,
    factors: &mut FactorPair,
    config: &SolverConfig,
) -> Result<InnerOutcome> {
    let problem =
        BlockProblem::for_block(block, v, v_t, &factors.w, &factors.h, config.algorithm.loss)?;
    let x0 = match block {
        Block::H => factors.h.clone(),
        Block::W => factors.w.clone(),
    };
    let outcome = update_block(&problem, x0, config)?;
    match block {
        Block::H => factors.h = outcome.block.clone(),
        Block::W => factors.w = outcome.block.clone(),
    }
    Ok(outcome)
}

/// Alternating NMF solve of `v ≈ wᵀh` at rank `rank`.
///
/// Without `init`, factors are drawn from `config.seed` by
/// [`FactorPair::random`]. Under the KL loss with `warm_start_mu_kl`, one MU
/// sweep over both blocks refines the initialization before the first trace
/// point. The loop stops after `max_outer` outer iterations or once the time
/// budget is exceeded (checked between outer iterations).
pub fn solve(
    v: &DenseMatrix,
    rank: usize,
    config: &SolverConfig,
    init: Option<FactorPair>,
) -> Result<(FactorPair, ConvergenceTrace)> {
    config.validate()?;
    validate_data(v, rank)?;
    let (m, n) = v.shape();
    let clock = Clock(Instant::now());
    let mut factors = match init {
        Some(f) => {
            if f.w.shape() != (rank, m) || f.h.shape() != (rank, n) {
                return Err(NmfError::Dimension {
                    op: "initial factors",
                    left_rows: f.w.rows(),
                    left_cols: f.w.cols(),
                    right_rows: f.h.rows(),
                    right_cols: f.h.cols(),
                });
            }
            f.clipped(config.epsilon)
        }
        None => FactorPair::random(rank, m, n, config.seed, config.epsilon),
    };
    let v_t = v.transpose();
    let kind = config.algorithm.loss;
    if kind == Loss::Kl && config.warm_start_mu_kl {
        warm_start(v, &v_t, &mut factors, config)?;
    }

    let mut trace = ConvergenceTrace::default();
    let initial = normalized_loss(v, &factors.w, &factors.h, kind)?;
    trace.push(&clock, 0, initial, (0, 0));

    for k in 1..=config.max_outer {
        if let Some(budget) = config.time_budget_s {
            if clock.elapsed() >= budget {
                break;
            }
        }
        let mut counts = (0, 0);
        for block in block_sequence(config.block_order) {
            let outcome = update(block, v, &v_t, &mut factors, config)?;
            trace.merge_range(outcome.metric_range);
            match block {
                Block::H => counts.0 = outcome.inner_count,
                Block::W => counts.1 = outcome.inner_count,
            }
        }
        let loss = normalized_loss(v, &factors.w, &factors.h, kind)?;
        trace.push(&clock, k, loss, counts);
    }
    if let Some((lo, hi)) = trace.metric_range {
        log::debug!(
            "{}: metric entries ranged over [{lo:e}, {hi:e}] in {} outer iterations",
            config.algorithm,
            trace.outer_iterations()
        );
    }
    Ok((factors, trace))
}

/// Nonnegative least squares (or KL) in `h` with `w_fixed` held constant.
/// Each outer iteration is one inner loop on H; `inner_count_w` stays 0.
pub fn solve_nls(
    v: &DenseMatrix,
    w_fixed: &DenseMatrix,
    config: &SolverConfig,
    init_h: Option<DenseMatrix>,
) -> Result<(DenseMatrix, ConvergenceTrace)> {
    config.validate()?;
    let rank = w_fixed.rows();
    validate_data(v, rank)?;
    if w_fixed.cols() != v.rows() {
        return Err(NmfError::Dimension {
            op: "fixed W (RxM) against V (MxN)",
            left_rows: w_fixed.rows(),
            left_cols: w_fixed.cols(),
            right_rows: v.rows(),
            right_cols: v.cols(),
        });
    }
    let clock = Clock(Instant::now());
    let w = w_fixed.max_scalar(config.epsilon);
    let mut h = match init_h {
        Some(h) => {
            if h.shape() != (rank, v.cols()) {
                return Err(NmfError::Dimension {
                    op: "initial H",
                    left_rows: h.rows(),
                    left_cols: h.cols(),
                    right_rows: rank,
                    right_cols: v.cols(),
                });
            }
            h.max_scalar(config.epsilon)
        }
        None => {
            uniform_matrix(&mut Rng::new(config.seed), rank, v.cols()).max_scalar(config.epsilon)
        }
    };
    let kind = config.algorithm.loss;
    let problem = BlockProblem::new(v, &w, kind)?;
    if kind == Loss::Kl && config.warm_start_mu_kl {
        let mu = SolverConfig {
            algorithm: Algorithm::MU_KL,
            max_inner: 1,
            ..config.clone()
        };
        h = update_block(&problem, h, &mu)?.block;
    }
    let mut trace = ConvergenceTrace::default();
    let norm = (v.rows() * v.cols()) as f64;
    trace.push(&clock, 0, problem.objective(&h)? / norm, (0, 0));
    for k in 1..=config.max_outer {
        if let Some(budget) = config.time_budget_s {
            if clock.elapsed() >= budget {
                break;
            }
        }
        let outcome = update_block(&problem, h, config)?;
        trace.merge_range(outcome.metric_range);
        h = outcome.block;
        trace.push(
            &clock,
            k,
            problem.objective(&h)? / norm,
            (outcome.inner_count, 0),
        );
    }
    Ok((h, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_is_solved_by_every_algorithm() {
        let v = DenseMatrix::from_rows(&[[2.0]]);
        for alg in Algorithm::ALL {
            let cfg = SolverConfig::new(alg).with_max_outer(100);
            let (f, trace) = solve(&v, 1, &cfg, None).unwrap();
            assert!(trace.final_loss() < 1e-12, "{alg}: {}", trace.final_loss());
            assert!(f.min_entry() >= cfg.epsilon);
        }
    }

    #[test]
    fn trace_has_initial_point_plus_one_per_iteration() {
        let v = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let cfg = SolverConfig::new(Algorithm::FASTMU_FRO).with_max_outer(3);
        let (_, trace) = solve(&v, 1, &cfg, None).unwrap();
        assert_eq!(trace.records.len(), 4);
        assert_eq!(trace.outer_iterations(), 3);
        assert!(trace
            .records
            .windows(2)
            .all(|p| p[1].elapsed_s > p[0].elapsed_s));
    }

    #[test]
    fn invalid_combinations_and_ranks_are_config_errors() {
        let v = DenseMatrix::filled(3, 3, 1.0);
        let cfg = SolverConfig::new("hals_kl".parse().unwrap());
        assert!(matches!(solve(&v, 1, &cfg, None), Err(NmfError::Config(_))));
        let cfg = SolverConfig::new(Algorithm::MU_FRO);
        assert!(matches!(solve(&v, 4, &cfg, None), Err(NmfError::Config(_))));
        assert!(matches!(solve(&v, 0, &cfg, None), Err(NmfError::Config(_))));
    }

    #[test]
    fn time_budget_stops_early() {
        let mut rng = Rng::new(1);
        let v = uniform_matrix(&mut rng, 40, 30);
        let mut cfg = SolverConfig::new(Algorithm::MU_FRO).with_max_outer(usize::MAX);
        cfg.time_budget_s = Some(0.05);
        let (_, trace) = solve(&v, 3, &cfg, None).unwrap();
        assert!(trace.outer_iterations() < usize::MAX);
        assert!(trace.records.last().unwrap().elapsed_s < 5.0);
    }
}
