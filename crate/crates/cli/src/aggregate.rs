//! Median traces across realizations.

use std::collections::BTreeMap;

use crate::error::{BenchError, Result};
use crate::table::{TraceRow, TraceTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Iteration,
    Time,
}

/// Number of points in the shared time grid.
pub const TIME_GRID_POINTS: usize = 100;

/// Median of a nonempty sample; the mean of the two middle values when the
/// count is even.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Per-algorithm median across seeds.
///
/// On the iteration axis the median is taken entrywise at each outer
/// iteration over the seeds that reached it. On the time axis every trace is
/// first resampled onto one geometric grid shared by all algorithms, holding
/// the most recent value (the initial value before the first sample), and
/// then the median is taken at each grid point.
pub fn aggregate_median(table: &TraceTable, axis: Axis) -> Result<TraceTable> {
    let mut out = TraceTable::default();
    let grid = match axis {
        Axis::Time => Some(time_grid(table)?),
        Axis::Iteration => None,
    };
    for algorithm in table.algorithms() {
        let traces = split_by_seed(table, &algorithm);
        if traces.is_empty() {
            log::warn!("{algorithm}: no traces to aggregate");
            continue;
        }
        match &grid {
            None => out.extend(median_by_iteration(&algorithm, &traces)),
            Some(grid) => out.extend(median_on_grid(&algorithm, &traces, grid)),
        }
    }
    Ok(out)
}

fn split_by_seed<'a>(table: &'a TraceTable, algorithm: &'a str) -> Vec<Vec<&'a TraceRow>> {
    let mut by_seed: BTreeMap<u64, Vec<&TraceRow>> = BTreeMap::new();
    for row in table.rows_for(algorithm) {
        by_seed.entry(row.seed).or_default().push(row);
    }
    by_seed
        .into_values()
        .map(|mut rows| {
            rows.sort_by_key(|r| r.outer_iter);
            rows
        })
        .collect()
}

fn median_opt(values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    (present.len() == values.len() && !present.is_empty()).then(|| median(&present))
}

fn median_by_iteration(algorithm: &str, traces: &[Vec<&TraceRow>]) -> TraceTable {
    let mut by_iter: BTreeMap<usize, Vec<&TraceRow>> = BTreeMap::new();
    for trace in traces {
        for row in trace {
            by_iter.entry(row.outer_iter).or_default().push(row);
        }
    }
    let rows = by_iter
        .into_iter()
        .map(|(outer_iter, rows)| {
            let pick =
                |f: fn(&TraceRow) -> f64| median(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            TraceRow {
                algorithm: algorithm.to_string(),
                seed: rows.len() as u64,
                outer_iter,
                elapsed_s: median_opt(&rows.iter().map(|r| r.elapsed_s).collect::<Vec<_>>()),
                loss_normalized: pick(|r| r.loss_normalized),
                inner_h: pick(|r| r.inner_h),
                inner_w: pick(|r| r.inner_w),
            }
        })
        .collect();
    TraceTable { rows }
}

/// Geometric grid from the earliest positive time stamp to the latest one.
fn time_grid(table: &TraceTable) -> Result<Vec<f64>> {
    if !table.has_time() {
        return Err(BenchError::config(
            "time-axis aggregation needs elapsed_s; use the full traces CSV",
        ));
    }
    let times = table.rows.iter().filter_map(|r| r.elapsed_s);
    let lo = times
        .clone()
        .filter(|&t| t > 0.0)
        .fold(f64::INFINITY, f64::min);
    let hi = times.fold(0.0, f64::max);
    if !lo.is_finite() || hi <= lo {
        return Ok(vec![hi.max(0.0)]);
    }
    let n = TIME_GRID_POINTS;
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|i| lo * (ratio * i as f64).exp()).collect();
    grid[n - 1] = hi;
    Ok(grid)
}

/// The row in effect at time `t`: the last one stamped at or before `t`.
fn sample_at<'a>(trace: &[&'a TraceRow], t: f64) -> &'a TraceRow {
    let k = trace.partition_point(|r| r.elapsed_s.unwrap_or(0.0) <= t);
    trace[k.saturating_sub(1)]
}

fn median_on_grid(algorithm: &str, traces: &[Vec<&TraceRow>], grid: &[f64]) -> TraceTable {
    let rows = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let at: Vec<&TraceRow> = traces.iter().map(|tr| sample_at(tr, t)).collect();
            let pick =
                |f: fn(&TraceRow) -> f64| median(&at.iter().map(|r| f(r)).collect::<Vec<_>>());
            TraceRow {
                algorithm: algorithm.to_string(),
                seed: at.len() as u64,
                outer_iter: i,
                elapsed_s: Some(t),
                loss_normalized: pick(|r| r.loss_normalized),
                inner_h: pick(|r| r.inner_h),
                inner_w: pick(|r| r.inner_w),
            }
        })
        .collect();
    TraceTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(alg: &str, seed: u64, k: usize, t: f64, loss: f64) -> TraceRow {
        TraceRow {
            algorithm: alg.into(),
            seed,
            outer_iter: k,
            elapsed_s: Some(t),
            loss_normalized: loss,
            inner_h: k as f64,
            inner_w: 1.0,
        }
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[9.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0]), 2.5);
        assert_eq!(median(&[7.0]), 7.0);
    }

    #[test]
    fn single_seed_median_is_the_trace() {
        let t = TraceTable {
            rows: (0..5)
                .map(|k| row("a", 0, k, 0.1 * (k + 1) as f64, 1.0 / (k + 1) as f64))
                .collect(),
        };
        let m = aggregate_median(&t, Axis::Iteration).unwrap();
        assert_eq!(m.losses("a", 1), t.losses("a", 0));
    }

    #[test]
    fn constant_traces_take_the_middle_value() {
        let mut rows = Vec::new();
        for (seed, c) in [(0, 1.0), (1, 2.0), (2, 9.0)] {
            for k in 0..4 {
                rows.push(row(
                    "a",
                    seed,
                    k,
                    0.01 * (k + 1) as f64 + 0.001 * seed as f64,
                    c,
                ));
            }
        }
        let t = TraceTable { rows };
        for axis in [Axis::Iteration, Axis::Time] {
            let m = aggregate_median(&t, axis).unwrap();
            assert!(m.rows.iter().all(|r| r.loss_normalized == 2.0), "{axis:?}");
        }
    }

    #[test]
    fn time_axis_needs_time_stamps() {
        let t = TraceTable {
            rows: vec![row("a", 0, 0, 1.0, 1.0)],
        }
        .without_time();
        assert!(aggregate_median(&t, Axis::Time).is_err());
        assert_eq!(aggregate_median(&t, Axis::Iteration).unwrap().rows.len(), 1);
    }
}
