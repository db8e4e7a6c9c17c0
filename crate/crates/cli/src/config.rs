//! Experiment configuration files.
//!
//! The format is line oriented. Blank lines and text after `#` are ignored;
//! `[section]` starts a section and every other line is `key = value`. Keys
//! outside the documented set, repeated keys and values that do not parse are
//! errors reported with their line number.
//!
//! ```text
//! [problem]            # synthetic problem, or `data = v.csv` plus `rank`
//! m = 200
//! n = 100
//! rank = 5
//! snr_db = 100         # `inf` for noise-free data
//! setup = dense        # dense | data_sparse | fac_sparse | fac_data_sparse
//! seed = 0             # realization p uses seed + p
//! sparsify_fraction = 0.5
//! eps_fac = 1e-8
//! eps_data = 5e-16     # defaults to rank * eps_fac^2
//! fixed_w = w.csv      # NLS only; synthetic NLS defaults to the true W
//!
//! [experiment]
//! loss = fro           # picks the default roster when `algorithms` is absent
//! algorithms = mu_fro, fastmu_fro
//! seeds = 5
//! init_seed = 1000     # realization p starts from the factors of init_seed + p
//! output_dir = out
//!
//! [solver]             # defaults for every algorithm
//! max_outer = 500
//!
//! [algo.fastmu_fro]    # overrides for one algorithm
//! gamma = 1.9
//!
//! [sweep]              # sweep-delta only
//! deltas = 0, 0.1, 0.9
//! max_outer = 200, 200, 400   # optional, one budget per delta
//! ```
//!
//! Solver keys, valid in `[solver]` and `[algo.*]`: `epsilon`, `gamma`,
//! `delta`, `max_inner`, `max_outer`, `time_budget_s`, `warm_start`,
//! `block_order` (`h_then_w` | `w_then_h`) and `data_floor`. Relative paths
//! are resolved against the directory holding the configuration file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fastmu::{Algorithm, BlockOrder, Loss, SolverConfig, SparsitySetup, SyntheticSpec};

use crate::error::{BenchError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSource {
    Synthetic(SyntheticSpec),
    Csv { data: PathBuf, rank: usize },
}

impl ProblemSource {
    pub fn rank(&self) -> usize {
        match self {
            ProblemSource::Synthetic(spec) => spec.rank,
            ProblemSource::Csv { rank, .. } => *rank,
        }
    }
}

/// Optional solver knobs; unset fields keep the value underneath.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverOverrides {
    pub epsilon: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub max_inner: Option<usize>,
    pub max_outer: Option<usize>,
    pub time_budget_s: Option<f64>,
    pub warm_start: Option<bool>,
    pub block_order: Option<BlockOrder>,
    pub data_floor: Option<f64>,
}

impl SolverOverrides {
    pub fn apply(&self, config: &mut SolverConfig) {
        if let Some(x) = self.epsilon {
            config.epsilon = x;
        }
        if let Some(x) = self.gamma {
            config.gamma = x;
        }
        if let Some(x) = self.delta {
            config.delta = x;
        }
        if let Some(x) = self.max_inner {
            config.max_inner = x;
        }
        if let Some(x) = self.max_outer {
            config.max_outer = x;
        }
        if let Some(x) = self.time_budget_s {
            config.time_budget_s = Some(x);
        }
        if let Some(x) = self.warm_start {
            config.warm_start_mu_kl = x;
        }
        if let Some(x) = self.block_order {
            config.block_order = x;
        }
        if let Some(x) = self.data_floor {
            config.data_floor = x;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub deltas: Vec<f64>,
    /// One outer budget per delta, overriding the solver settings.
    pub max_outer: Option<Vec<usize>>,
}

impl SweepConfig {
    /// Eight deltas from 0 to 0.9 covering no early stop to very early stop.
    pub fn standard_grid() -> Self {
        Self {
            deltas: vec![0.0, 0.001, 0.01, 0.05, 0.1, 0.3, 0.6, 0.9],
            max_outer: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    /// Fixed factor for NLS runs; `None` uses the true W of a synthetic problem.
    pub fixed_w: Option<PathBuf>,
    pub algorithms: Vec<Algorithm>,
    /// Number P of realizations.
    pub seeds: usize,
    pub init_seed: u64,
    pub defaults: SolverOverrides,
    pub overrides: BTreeMap<String, SolverOverrides>,
    pub output_dir: PathBuf,
    pub sweep: Option<SweepConfig>,
}

/// Frobenius roster: MU, HALS, NeNMF, GD, fastMU, extrapolated fastMU.
pub const FROBENIUS_ROSTER: [Algorithm; 6] = [
    Algorithm::MU_FRO,
    Algorithm::HALS,
    Algorithm::NENMF,
    Algorithm::GD,
    Algorithm::FASTMU_FRO,
    Algorithm::FASTMU_FRO_EX,
];

/// KL roster: MU and both fastMU Hessian variants.
pub const KL_ROSTER: [Algorithm; 3] = [
    Algorithm::MU_KL,
    Algorithm::FASTMU_KL,
    Algorithm::FASTMU_KL_APPROX,
];

impl ExperimentConfig {
    /// A synthetic experiment with library defaults, mostly for tests.
    pub fn synthetic(spec: SyntheticSpec, algorithms: Vec<Algorithm>, output_dir: PathBuf) -> Self {
        Self {
            problem: ProblemSource::Synthetic(spec),
            fixed_w: None,
            algorithms,
            seeds: 5,
            init_seed: 1000,
            defaults: SolverOverrides::default(),
            overrides: BTreeMap::new(),
            output_dir,
            sweep: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| BenchError::config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }

    /// Parses configuration text; `origin` only labels error messages and
    /// `base` anchors relative paths.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        Parser::new(origin, base).run(text)
    }

    /// Solver settings for one algorithm: library defaults, then `[solver]`,
    /// then the algorithm's own section.
    pub fn solver_for(&self, algorithm: Algorithm) -> SolverConfig {
        let mut config = SolverConfig::new(algorithm);
        self.defaults.apply(&mut config);
        if let Some(o) = self.overrides.get(&algorithm.to_string()) {
            o.apply(&mut config);
        }
        config
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(BenchError::config("no algorithms listed"));
        }
        if self.seeds == 0 {
            return Err(BenchError::config("seeds must be at least 1"));
        }
        if let ProblemSource::Synthetic(spec) = &self.problem {
            spec.validate()?;
        }
        for name in self.overrides.keys() {
            if !self.algorithms.iter().any(|a| a.to_string() == *name) {
                return Err(BenchError::config(format!(
                    "[algo.{name}] does not match any listed algorithm"
                )));
            }
        }
        for &alg in &self.algorithms {
            self.solver_for(alg).validate()?;
        }
        if let Some(sweep) = &self.sweep {
            if sweep.deltas.is_empty() {
                return Err(BenchError::config("sweep needs at least one delta"));
            }
            if let Some(budgets) = &sweep.max_outer {
                if budgets.len() != sweep.deltas.len() {
                    return Err(BenchError::config(format!(
                        "sweep lists {} deltas but {} max_outer budgets",
                        sweep.deltas.len(),
                        budgets.len()
                    )));
                }
            }
            for &d in &sweep.deltas {
                if !(0.0..1.0).contains(&d) {
                    return Err(BenchError::config(format!(
                        "sweep delta {d} outside [0, 1)"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Section {
    None,
    Problem,
    Experiment,
    Solver,
    Algo,
    Sweep,
}

#[derive(Default)]
struct ProblemKeys {
    m: Option<usize>,
    n: Option<usize>,
    rank: Option<usize>,
    snr_db: Option<f64>,
    setup: Option<SparsitySetup>,
    seed: Option<u64>,
    sparsify_fraction: Option<f64>,
    eps_fac: Option<f64>,
    eps_data: Option<f64>,
    data: Option<PathBuf>,
    fixed_w: Option<PathBuf>,
}

struct Parser<'a> {
    origin: &'a Path,
    base: &'a Path,
    line: usize,
    section: Section,
    algo_name: String,
    seen: BTreeMap<String, usize>,
    problem: ProblemKeys,
    loss: Option<Loss>,
    algorithms: Option<Vec<Algorithm>>,
    seeds: Option<usize>,
    init_seed: Option<u64>,
    output_dir: Option<PathBuf>,
    defaults: SolverOverrides,
    overrides: BTreeMap<String, SolverOverrides>,
    sweep: Option<SweepConfig>,
}

impl<'a> Parser<'a> {
    fn new(origin: &'a Path, base: &'a Path) -> Self {
        Self {
            origin,
            base,
            line: 0,
            section: Section::None,
            algo_name: String::new(),
            seen: BTreeMap::new(),
            problem: ProblemKeys::default(),
            loss: None,
            algorithms: None,
            seeds: None,
            init_seed: None,
            output_dir: None,
            defaults: SolverOverrides::default(),
            overrides: BTreeMap::new(),
            sweep: None,
        }
    }

    fn err(&self, message: impl Into<String>) -> BenchError {
        BenchError::ConfigLine {
            path: self.origin.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    fn value<T: FromStr>(&self, key: &str, raw: &str) -> Result<T> {
        raw.parse()
            .map_err(|_| self.err(format!("cannot parse {key} = {raw:?}")))
    }

    fn real(&self, key: &str, raw: &str) -> Result<f64> {
        match raw.to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
            _ => {
                let x: f64 = self.value(key, raw)?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(self.err(format!("{key} must be finite")))
                }
            }
        }
    }

    fn flag(&self, key: &str, raw: &str) -> Result<bool> {
        match raw.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(self.err(format!("{key} expects true or false, got {raw:?}"))),
        }
    }

    fn path(&self, raw: &str) -> PathBuf {
        let p = PathBuf::from(raw);
        if p.is_absolute() {
            p
        } else {
            self.base.join(p)
        }
    }

    fn list<'v>(&self, raw: &'v str) -> Vec<&'v str> {
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect()
    }

    fn run(mut self, text: &str) -> Result<ExperimentConfig> {
        for (idx, raw_line) in text.lines().enumerate() {
            self.line = idx + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('[') {
                let name = header
                    .strip_suffix(']')
                    .ok_or_else(|| self.err("unterminated section header"))?
                    .trim();
                self.enter(name)?;
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| self.err(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(self.err("empty key or value"));
            }
            let scoped = format!("{:?}/{}/{key}", self.section, self.algo_name);
            if let Some(first) = self.seen.insert(scoped, self.line) {
                return Err(self.err(format!("{key} already set on line {first}")));
            }
            self.assign(key, value)?;
        }
        self.finish()
    }

    fn enter(&mut self, name: &str) -> Result<()> {
        self.algo_name.clear();
        self.section = match name {
            "problem" => Section::Problem,
            "experiment" => Section::Experiment,
            "solver" => Section::Solver,
            "sweep" => Section::Sweep,
            _ => match name.strip_prefix("algo.") {
                Some(alg) => {
                    let parsed: Algorithm = alg.parse().map_err(|e| self.err(format!("{e}")))?;
                    self.algo_name = parsed.to_string();
                    self.overrides.entry(self.algo_name.clone()).or_default();
                    Section::Algo
                }
                None => return Err(self.err(format!("unknown section [{name}]"))),
            },
        };
        if self.section == Section::Sweep && self.sweep.is_none() {
            self.sweep = Some(SweepConfig {
                deltas: Vec::new(),
                max_outer: None,
            });
        }
        Ok(())
    }

    fn assign(&mut self, key: &str, value: &str) -> Result<()> {
        match self.section {
            Section::None => Err(self.err(format!("{key} appears before any section"))),
            Section::Problem => self.assign_problem(key, value),
            Section::Experiment => self.assign_experiment(key, value),
            Section::Solver => {
                let mut o = std::mem::take(&mut self.defaults);
                let r = self.assign_solver(&mut o, key, value);
                self.defaults = o;
                r
            }
            Section::Algo => {
                let name = self.algo_name.clone();
                let mut o = self.overrides.remove(&name).unwrap_or_default();
                let r = self.assign_solver(&mut o, key, value);
                self.overrides.insert(name, o);
                r
            }
            Section::Sweep => self.assign_sweep(key, value),
        }
    }

    fn assign_problem(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "m" => self.problem.m = Some(self.value(key, value)?),
            "n" => self.problem.n = Some(self.value(key, value)?),
            "rank" => self.problem.rank = Some(self.value(key, value)?),
            "snr_db" => self.problem.snr_db = Some(self.real(key, value)?),
            "setup" => {
                self.problem.setup = Some(value.parse().map_err(|e| self.err(format!("{e}")))?)
            }
            "seed" => self.problem.seed = Some(self.value(key, value)?),
            "sparsify_fraction" => self.problem.sparsify_fraction = Some(self.real(key, value)?),
            "eps_fac" => self.problem.eps_fac = Some(self.real(key, value)?),
            "eps_data" => self.problem.eps_data = Some(self.real(key, value)?),
            "data" => self.problem.data = Some(self.path(value)),
            "fixed_w" => self.problem.fixed_w = Some(self.path(value)),
            _ => return Err(self.err(format!("unknown key {key:?} in [problem]"))),
        }
        Ok(())
    }

    fn assign_experiment(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "loss" => self.loss = Some(value.parse().map_err(|e| self.err(format!("{e}")))?),
            "algorithms" => {
                let algs = self
                    .list(value)
                    .into_iter()
                    .map(|name| {
                        name.parse::<Algorithm>()
                            .map_err(|e| self.err(format!("{e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                for alg in &algs {
                    alg.validate().map_err(|e| self.err(format!("{e}")))?;
                }
                self.algorithms = Some(algs);
            }
            "seeds" => self.seeds = Some(self.value(key, value)?),
            "init_seed" => self.init_seed = Some(self.value(key, value)?),
            "output_dir" => self.output_dir = Some(self.path(value)),
            _ => return Err(self.err(format!("unknown key {key:?} in [experiment]"))),
        }
        Ok(())
    }

    fn assign_solver(&self, o: &mut SolverOverrides, key: &str, value: &str) -> Result<()> {
        match key {
            "epsilon" => o.epsilon = Some(self.real(key, value)?),
            "gamma" => o.gamma = Some(self.real(key, value)?),
            "delta" => o.delta = Some(self.real(key, value)?),
            "max_inner" => o.max_inner = Some(self.value(key, value)?),
            "max_outer" => o.max_outer = Some(self.value(key, value)?),
            "time_budget_s" => o.time_budget_s = Some(self.real(key, value)?),
            "warm_start" => o.warm_start = Some(self.flag(key, value)?),
            "block_order" => {
                o.block_order = Some(match value {
                    "h_then_w" => BlockOrder::HThenW,
                    "w_then_h" => BlockOrder::WThenH,
                    _ => return Err(self.err(format!("unknown block order {value:?}"))),
                })
            }
            "data_floor" => o.data_floor = Some(self.real(key, value)?),
            _ => return Err(self.err(format!("unknown solver key {key:?}"))),
        }
        Ok(())
    }

    fn assign_sweep(&mut self, key: &str, value: &str) -> Result<()> {
        let items = self.list(value);
        match key {
            "deltas" => {
                let deltas = items
                    .iter()
                    .map(|d| self.real(key, d))
                    .collect::<Result<Vec<_>>>()?;
                self.sweep.as_mut().expect("sweep section").deltas = deltas;
            }
            "max_outer" => {
                let budgets = items
                    .iter()
                    .map(|b| self.value(key, b))
                    .collect::<Result<Vec<usize>>>()?;
                self.sweep.as_mut().expect("sweep section").max_outer = Some(budgets);
            }
            _ => return Err(self.err(format!("unknown key {key:?} in [sweep]"))),
        }
        Ok(())
    }

    fn finish(self) -> Result<ExperimentConfig> {
        let p = self.problem;
        let rank = p
            .rank
            .ok_or_else(|| BenchError::config("[problem] needs rank"))?;
        let problem = match p.data {
            Some(data) => {
                let synthetic_keys = [
                    p.m.is_some(),
                    p.n.is_some(),
                    p.snr_db.is_some(),
                    p.setup.is_some(),
                    p.seed.is_some(),
                    p.sparsify_fraction.is_some(),
                    p.eps_fac.is_some(),
                    p.eps_data.is_some(),
                ];
                if synthetic_keys.iter().any(|&k| k) {
                    return Err(BenchError::config(
                        "[problem] mixes `data` with synthetic generator keys",
                    ));
                }
                ProblemSource::Csv { data, rank }
            }
            None => {
                let (m, n) = match (p.m, p.n) {
                    (Some(m), Some(n)) => (m, n),
                    _ => {
                        return Err(BenchError::config(
                            "[problem] needs either `data` or both `m` and `n`",
                        ))
                    }
                };
                let mut spec = SyntheticSpec::new(m, n, rank);
                if let Some(x) = p.snr_db {
                    spec.snr_db = x;
                }
                if let Some(x) = p.setup {
                    spec.setup = x;
                }
                if let Some(x) = p.seed {
                    spec.seed = x;
                }
                if let Some(x) = p.sparsify_fraction {
                    spec.sparsify_fraction = x;
                }
                if let Some(x) = p.eps_fac {
                    spec.eps_fac = x;
                }
                spec.eps_data = p.eps_data;
                ProblemSource::Synthetic(spec)
            }
        };
        let algorithms = match (self.algorithms, self.loss) {
            (Some(algs), Some(loss)) => {
                if let Some(bad) = algs.iter().find(|a| a.loss != loss) {
                    return Err(BenchError::config(format!(
                        "{bad} does not use the {loss} loss set in [experiment]"
                    )));
                }
                algs
            }
            (Some(algs), None) => algs,
            (None, Some(Loss::Kl)) => KL_ROSTER.to_vec(),
            (None, _) => FROBENIUS_ROSTER.to_vec(),
        };
        let config = ExperimentConfig {
            problem,
            fixed_w: p.fixed_w,
            algorithms,
            seeds: self.seeds.unwrap_or(5),
            init_seed: self.init_seed.unwrap_or(1000),
            defaults: self.defaults,
            overrides: self.overrides,
            output_dir: self.output_dir.unwrap_or_else(|| self.base.join("out")),
            sweep: self.sweep,
        };
        config.validate()?;
        Ok(config)
    }
}
