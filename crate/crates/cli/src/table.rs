use std::path::Path;

use fastmu::ConvergenceTrace;

use crate::error::{BenchError, Result};

/// One trace point of one (algorithm, seed) cell.
///
/// In aggregated tables `seed` holds the number of traces that contributed
/// to the row, and the inner counts are medians.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub algorithm: String,
    pub seed: u64,
    pub outer_iter: usize,
    /// Absent when the table was read from an iteration-indexed file.
    pub elapsed_s: Option<f64>,
    pub loss_normalized: f64,
    pub inner_h: f64,
    pub inner_w: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceTable {
    pub rows: Vec<TraceRow>,
}

/// Which columns a CSV carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Columns {
    /// Everything, including wall-clock time.
    Full,
    /// Without `elapsed_s`; byte-stable across runs.
    Iteration,
}

const FULL_HEADER: [&str; 7] = [
    "algorithm",
    "seed",
    "outer_iter",
    "elapsed_s",
    "loss_normalized",
    "inner_h",
    "inner_w",
];

/// Shortest representation that parses back to the same bits; integral
/// values are written without a fractional part.
pub(crate) fn fmt_f64(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:?}")
    }
}

impl TraceTable {
    /// One row per outer iteration; the initialization record of the trace
    /// is not part of the table.
    pub fn from_trace(algorithm: &str, seed: u64, trace: &ConvergenceTrace) -> Self {
        let rows = trace
            .records
            .iter()
            .filter(|r| r.outer_iter > 0)
            .map(|r| TraceRow {
                algorithm: algorithm.to_string(),
                seed,
                outer_iter: r.outer_iter,
                elapsed_s: Some(r.elapsed_s),
                loss_normalized: r.loss_normalized,
                inner_h: r.inner_count_h as f64,
                inner_w: r.inner_count_w as f64,
            })
            .collect();
        Self { rows }
    }

    pub fn extend(&mut self, other: TraceTable) {
        self.rows.extend(other.rows);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has_time(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.elapsed_s.is_some())
    }

    /// Algorithm labels in order of first appearance.
    pub fn algorithms(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for row in &self.rows {
            if !out.contains(&row.algorithm) {
                out.push(row.algorithm.clone());
            }
        }
        out
    }

    pub fn rows_for<'a>(&'a self, algorithm: &'a str) -> impl Iterator<Item = &'a TraceRow> + 'a {
        self.rows.iter().filter(move |r| r.algorithm == algorithm)
    }

    /// Loss sequence of one cell, ordered by outer iteration.
    pub fn losses(&self, algorithm: &str, seed: u64) -> Vec<f64> {
        let mut rows: Vec<&TraceRow> = self
            .rows_for(algorithm)
            .filter(|r| r.seed == seed)
            .collect();
        rows.sort_by_key(|r| r.outer_iter);
        rows.iter().map(|r| r.loss_normalized).collect()
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, columns: Columns) -> Result<()> {
        let path = path.as_ref();
        if columns == Columns::Full && !self.rows.is_empty() && !self.has_time() {
            return Err(BenchError::config(format!(
                "{}: table has no elapsed times to write",
                path.display()
            )));
        }
        let csv_err = |source| BenchError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
        let header: Vec<&str> = FULL_HEADER
            .iter()
            .copied()
            .filter(|h| columns == Columns::Full || *h != "elapsed_s")
            .collect();
        writer.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let mut record = vec![
                row.algorithm.clone(),
                row.seed.to_string(),
                row.outer_iter.to_string(),
            ];
            if columns == Columns::Full {
                record.push(format!("{:?}", row.elapsed_s.unwrap_or(0.0)));
            }
            record.push(format!("{:?}", row.loss_normalized));
            record.push(fmt_f64(row.inner_h));
            record.push(fmt_f64(row.inner_w));
            writer.write_record(&record).map_err(csv_err)?;
        }
        writer.flush().map_err(|e| BenchError::io(path, e))
    }

    /// Reads either CSV layout written by [`TraceTable::save_csv`].
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let csv_err = |source| BenchError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
        let header: Vec<String> = reader
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_string)
            .collect();
        let timed = header.len() == FULL_HEADER.len();
        let expected: Vec<&str> = FULL_HEADER
            .iter()
            .copied()
            .filter(|h| timed || *h != "elapsed_s")
            .collect();
        if header != expected {
            return Err(BenchError::config(format!(
                "{}: unexpected header {header:?}",
                path.display()
            )));
        }
        let mut rows = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let line = idx + 2;
            let field = |i: usize| record.get(i).unwrap_or("");
            let bad = |what: &str, raw: &str| {
                BenchError::config(format!("{}:{line}: bad {what} {raw:?}", path.display()))
            };
            let num = |i: usize, what: &str| -> Result<f64> {
                field(i).parse::<f64>().map_err(|_| bad(what, field(i)))
            };
            let offset = usize::from(timed);
            let loss = num(3 + offset, "loss")?;
            if !loss.is_finite() {
                return Err(bad("loss", field(3 + offset)));
            }
            rows.push(TraceRow {
                algorithm: field(0).to_string(),
                seed: field(1).parse().map_err(|_| bad("seed", field(1)))?,
                outer_iter: field(2).parse().map_err(|_| bad("outer_iter", field(2)))?,
                elapsed_s: if timed {
                    Some(num(3, "elapsed_s")?)
                } else {
                    None
                },
                loss_normalized: loss,
                inner_h: num(4 + offset, "inner_h")?,
                inner_w: num(5 + offset, "inner_w")?,
            });
        }
        Ok(Self { rows })
    }

    /// The same rows without wall-clock times.
    pub fn without_time(&self) -> Self {
        Self {
            rows: self
                .rows
                .iter()
                .map(|r| TraceRow {
                    elapsed_s: None,
                    ..r.clone()
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TraceTable {
        TraceTable {
            rows: vec![
                TraceRow {
                    algorithm: "mu_fro".into(),
                    seed: 0,
                    outer_iter: 0,
                    elapsed_s: Some(1.5e-5),
                    loss_normalized: 0.1 + 0.2,
                    inner_h: 0.0,
                    inner_w: 0.0,
                },
                TraceRow {
                    algorithm: "fastmu_fro".into(),
                    seed: 3,
                    outer_iter: 1,
                    elapsed_s: Some(2.0),
                    loss_normalized: 1e-300,
                    inner_h: 2.5,
                    inner_w: 100.0,
                },
            ],
        }
    }

    #[test]
    fn round_trips_both_layouts() {
        let dir = tempfile::tempdir().unwrap();
        let t = sample();
        let full = dir.path().join("full.csv");
        t.save_csv(&full, Columns::Full).unwrap();
        assert_eq!(TraceTable::load_csv(&full).unwrap(), t);
        let iter = dir.path().join("iter.csv");
        t.save_csv(&iter, Columns::Iteration).unwrap();
        assert_eq!(TraceTable::load_csv(&iter).unwrap(), t.without_time());
        let text = std::fs::read_to_string(&iter).unwrap();
        assert!(text.starts_with("algorithm,seed,outer_iter,loss_normalized,inner_h,inner_w\n"));
        assert!(text.contains("fastmu_fro,3,1,1e-300,2.5,100\n"), "{text}");
    }

    #[test]
    fn rejects_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(TraceTable::load_csv(&p).is_err());
        std::fs::write(
            &p,
            "algorithm,seed,outer_iter,loss_normalized,inner_h,inner_w\nmu,0,0,NaN,0,0\n",
        )
        .unwrap();
        assert!(TraceTable::load_csv(&p).is_err());
        assert!(TraceTable::load_csv(dir.path().join("missing.csv")).is_err());
        let untimed = sample().without_time();
        assert!(untimed
            .save_csv(dir.path().join("x.csv"), Columns::Full)
            .is_err());
    }
}
