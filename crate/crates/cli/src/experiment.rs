//! Roster execution: every (algorithm, seed) cell of a configuration, in
//! parallel unless timing is requested, assembled in a fixed order.

use std::fs;
use std::path::{Path, PathBuf};

use fastmu::{
    generate, load_csv, solve, solve_nls, Algorithm, DenseMatrix, FactorPair, NmfError,
    SolverConfig,
};
use rayon::prelude::*;

use crate::aggregate::{aggregate_median, median, Axis};
use crate::config::{ExperimentConfig, ProblemSource};
use crate::error::{BenchError, Result};
use crate::plot::emit_plot;
use crate::table::{fmt_f64, Columns, TraceTable};

/// Environment variable capping the number of cells run at once.
pub const THREADS_ENV: &str = "NMF_BENCH_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub threads: usize,
}

impl Schedule {
    pub fn serial() -> Self {
        Self { threads: 1 }
    }

    /// One cell at a time when `timed`, so wall-clock traces are not skewed by
    /// cells competing for cores; otherwise all cores, capped by
    /// `NMF_BENCH_THREADS`.
    pub fn from_env(timed: bool) -> Result<Self> {
        if timed {
            return Ok(Self::serial());
        }
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        let threads = match std::env::var(THREADS_ENV) {
            Ok(raw) => match raw.trim().parse::<usize>() {
                Ok(n) if n > 0 => n.min(cores),
                _ => {
                    return Err(BenchError::config(format!(
                        "{THREADS_ENV} must be a positive integer, got {raw:?}"
                    )))
                }
            },
            Err(_) => cores,
        };
        Ok(Self { threads })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Alternating updates of both factors.
    Factorization,
    /// H only, with W fixed.
    Nls,
}

/// A cell that failed inside the solver.
#[derive(Clone, Debug, PartialEq)]
pub struct CellError {
    pub label: String,
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentReport {
    pub table: TraceTable,
    pub errors: Vec<CellError>,
}

/// Data, optional fixed factor and shared initialization of one realization.
#[derive(Clone, Debug)]
struct Realization {
    v: DenseMatrix,
    fixed_w: Option<DenseMatrix>,
    init: FactorPair,
}

#[derive(Clone, Debug)]
struct Cell {
    label: String,
    seed: usize,
    solver: SolverConfig,
}

fn realizations(config: &ExperimentConfig, mode: Mode) -> Result<Vec<Realization>> {
    let rank = config.problem.rank();
    let loaded = match &config.problem {
        ProblemSource::Csv { data, .. } => Some(load_csv(data)?),
        ProblemSource::Synthetic(_) => None,
    };
    let fixed = match (&config.fixed_w, mode) {
        (Some(path), Mode::Nls) => Some(load_csv(path)?),
        _ => None,
    };
    (0..config.seeds)
        .map(|p| {
            let (v, w_true) = match (&config.problem, &loaded) {
                (ProblemSource::Synthetic(spec), _) => {
                    let mut spec = spec.clone();
                    spec.seed = spec.seed.wrapping_add(p as u64);
                    let problem = generate(&spec)?;
                    (problem.v, Some(problem.w_true))
                }
                (ProblemSource::Csv { .. }, Some(v)) => (v.clone(), None),
                (ProblemSource::Csv { .. }, None) => unreachable!("loaded above"),
            };
            let fixed_w = match mode {
                Mode::Factorization => None,
                Mode::Nls => Some(fixed.clone().or(w_true).ok_or_else(|| {
                    BenchError::config("NLS on CSV data needs `fixed_w` in [problem]")
                })?),
            };
            if let Some(w) = &fixed_w {
                if w.shape() != (rank, v.rows()) {
                    return Err(BenchError::config(format!(
                        "fixed W is {}x{} but rank {rank} and data with {} rows need {rank}x{}",
                        w.rows(),
                        w.cols(),
                        v.rows(),
                        v.rows()
                    )));
                }
            }
            if rank == 0 || rank > v.rows().min(v.cols()) {
                return Err(BenchError::config(format!(
                    "rank {rank} is not in 1..=min({}, {})",
                    v.rows(),
                    v.cols()
                )));
            }
            let seed = config.init_seed.wrapping_add(p as u64);
            let init = FactorPair::random(rank, v.rows(), v.cols(), seed, 0.0);
            Ok(Realization { v, fixed_w, init })
        })
        .collect()
}

fn run_cells(
    cells: &[Cell],
    data: &[Realization],
    mode: Mode,
    schedule: Schedule,
) -> Result<ExperimentReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(schedule.threads.max(1))
        .build()
        .map_err(|e| BenchError::config(format!("cannot start worker threads: {e}")))?;
    let outcomes: Vec<std::result::Result<TraceTable, NmfError>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let r = &data[cell.seed];
                let trace = match mode {
                    Mode::Factorization => {
                        solve(&r.v, r.init.rank(), &cell.solver, Some(r.init.clone()))?.1
                    }
                    Mode::Nls => {
                        let w = r.fixed_w.as_ref().expect("NLS realizations carry W");
                        solve_nls(&r.v, w, &cell.solver, Some(r.init.h.clone()))?.1
                    }
                };
                log::info!(
                    "{} seed {}: {} outer iterations, final loss {:e}",
                    cell.label,
                    cell.seed,
                    trace.outer_iterations(),
                    trace.final_loss()
                );
                Ok(TraceTable::from_trace(
                    &cell.label,
                    cell.seed as u64,
                    &trace,
                ))
            })
            .collect()
    });
    let mut report = ExperimentReport::default();
    for (cell, outcome) in cells.iter().zip(outcomes) {
        match outcome {
            Ok(table) => report.table.extend(table),
            Err(e) => {
                log::error!("{} seed {}: {e}", cell.label, cell.seed);
                report.errors.push(CellError {
                    label: cell.label.clone(),
                    seed: cell.seed as u64,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(report)
}

fn roster_cells(config: &ExperimentConfig) -> Vec<Cell> {
    config
        .algorithms
        .iter()
        .flat_map(|&alg| {
            (0..config.seeds).map(move |seed| Cell {
                label: alg.to_string(),
                seed,
                solver: config.solver_for(alg),
            })
        })
        .collect()
}

/// Runs every (algorithm, seed) cell of a factorization experiment and
/// writes the result files into `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig, schedule: Schedule) -> Result<ExperimentReport> {
    execute(config, Mode::Factorization, schedule)
}

/// Same as [`run_experiment`] for the NLS problem with W fixed.
pub fn run_nls(config: &ExperimentConfig, schedule: Schedule) -> Result<ExperimentReport> {
    execute(config, Mode::Nls, schedule)
}

/// Runs the roster without writing anything.
pub fn execute_in_memory(
    config: &ExperimentConfig,
    mode: Mode,
    schedule: Schedule,
) -> Result<ExperimentReport> {
    config.validate()?;
    let data = realizations(config, mode)?;
    run_cells(&roster_cells(config), &data, mode, schedule)
}

fn execute(config: &ExperimentConfig, mode: Mode, schedule: Schedule) -> Result<ExperimentReport> {
    let report = execute_in_memory(config, mode, schedule)?;
    write_outputs(&config.output_dir, &report)?;
    Ok(report)
}

/// Median inner-iteration statistics for one (delta, algorithm) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerCountRow {
    pub delta: f64,
    pub algorithm: String,
    pub runs: usize,
    /// Median over seeds of each run's median inner count (both blocks).
    pub median_inner: f64,
    pub mean_inner: f64,
    pub median_final_loss: f64,
}

pub fn sweep_label(algorithm: Algorithm, delta: f64) -> String {
    format!("{algorithm}@delta={delta:?}")
}

/// Runs the roster once per delta of the `[sweep]` section.
pub fn sweep_delta(
    config: &ExperimentConfig,
    schedule: Schedule,
) -> Result<(ExperimentReport, Vec<InnerCountRow>)> {
    let (report, counts) = sweep_delta_in_memory(config, schedule)?;
    write_outputs(&config.output_dir, &report)?;
    write_inner_counts(&config.output_dir.join("inner_counts.csv"), &counts)?;
    Ok((report, counts))
}

pub fn sweep_delta_in_memory(
    config: &ExperimentConfig,
    schedule: Schedule,
) -> Result<(ExperimentReport, Vec<InnerCountRow>)> {
    config.validate()?;
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| BenchError::config("sweep-delta needs a [sweep] section with deltas"))?;
    let data = realizations(config, Mode::Factorization)?;
    let mut cells = Vec::new();
    for (i, &delta) in sweep.deltas.iter().enumerate() {
        for &alg in &config.algorithms {
            let mut solver = config.solver_for(alg);
            solver.delta = delta;
            if let Some(budgets) = &sweep.max_outer {
                solver.max_outer = budgets[i];
            }
            for seed in 0..config.seeds {
                cells.push(Cell {
                    label: sweep_label(alg, delta),
                    seed,
                    solver: solver.clone(),
                });
            }
        }
    }
    let report = run_cells(&cells, &data, Mode::Factorization, schedule)?;
    let mut counts = Vec::new();
    for &delta in &sweep.deltas {
        for &alg in &config.algorithms {
            let label = sweep_label(alg, delta);
            if let Some(row) = inner_counts(&report.table, &label, delta) {
                counts.push(row);
            }
        }
    }
    Ok((report, counts))
}

fn inner_counts(table: &TraceTable, label: &str, delta: f64) -> Option<InnerCountRow> {
    let mut seeds: Vec<u64> = table.rows_for(label).map(|r| r.seed).collect();
    seeds.dedup();
    let mut per_run = Vec::new();
    let mut all = Vec::new();
    let mut finals = Vec::new();
    for seed in seeds {
        let rows: Vec<_> = table.rows_for(label).filter(|r| r.seed == seed).collect();
        let counts: Vec<f64> = rows
            .iter()
            .flat_map(|r| [r.inner_h, r.inner_w])
            .filter(|&c| c > 0.0)
            .collect();
        if counts.is_empty() {
            continue;
        }
        per_run.push(median(&counts));
        all.extend(counts);
        finals.push(rows.last().map_or(f64::NAN, |r| r.loss_normalized));
    }
    if per_run.is_empty() {
        return None;
    }
    Some(InnerCountRow {
        delta,
        algorithm: label.split('@').next().unwrap_or(label).to_string(),
        runs: per_run.len(),
        median_inner: median(&per_run),
        mean_inner: all.iter().sum::<f64>() / all.len() as f64,
        median_final_loss: median(&finals),
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> BenchError + '_ {
    move |source| BenchError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_inner_counts(path: &Path, rows: &[InnerCountRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record([
        "delta",
        "algorithm",
        "runs",
        "median_inner",
        "mean_inner",
        "median_final_loss",
    ])
    .map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            format!("{:?}", r.delta),
            r.algorithm.clone(),
            r.runs.to_string(),
            fmt_f64(r.median_inner),
            format!("{:?}", r.mean_inner),
            format!("{:?}", r.median_final_loss),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

fn write_errors(path: &Path, errors: &[CellError]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["algorithm", "seed", "error"])
        .map_err(csv_err(path))?;
    for e in errors {
        w.write_record([e.label.as_str(), &e.seed.to_string(), e.message.as_str()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

/// Output files of one run, relative to the output directory.
pub const TRACES_CSV: &str = "traces.csv";
pub const TRACES_ITER_CSV: &str = "traces_iter.csv";
pub const ERRORS_CSV: &str = "errors.csv";
pub const MEDIAN_ITER_CSV: &str = "median_iter.csv";
pub const MEDIAN_TIME_CSV: &str = "median_time.csv";
pub const PLOT_ITER_SVG: &str = "plot_iter.svg";
pub const PLOT_TIME_SVG: &str = "plot_time.svg";

/// Writes the raw traces (with and without time), errors, medians on both
/// axes and their plots.
pub fn write_outputs(dir: &Path, report: &ExperimentReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let mut written = Vec::new();
    let mut out = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    let table = &report.table;
    table.save_csv(out(TRACES_CSV), Columns::Full)?;
    table.save_csv(out(TRACES_ITER_CSV), Columns::Iteration)?;
    write_errors(&out(ERRORS_CSV), &report.errors)?;
    if !table.is_empty() {
        let by_iter = aggregate_median(table, Axis::Iteration)?;
        by_iter.save_csv(out(MEDIAN_ITER_CSV), Columns::Iteration)?;
        emit_plot(&by_iter, Axis::Iteration, out(PLOT_ITER_SVG))?;
        let by_time = aggregate_median(table, Axis::Time)?;
        by_time.save_csv(out(MEDIAN_TIME_CSV), Columns::Full)?;
        emit_plot(&by_time, Axis::Time, out(PLOT_TIME_SVG))?;
    }
    Ok(written)
}
