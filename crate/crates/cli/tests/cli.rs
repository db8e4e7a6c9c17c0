use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fastmu::{
    generate, solve, uniform_matrix, Algorithm, FactorPair, Rng, SolverConfig, SyntheticSpec,
};
use nmf_bench::{aggregate_median, render_svg, Axis, TraceRow, TraceTable};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nmf-bench"));
    cmd.env_remove("NMF_BENCH_THREADS");
    cmd
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("experiment.cfg");
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

const SMALL: &str = "\
[problem]
m = 12
n = 9
rank = 2
snr_db = 60

[experiment]
algorithms = mu_fro
seeds = 1
output_dir = out

[solver]
max_outer = 3
";

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write_config(dir.path(), &SMALL.replace("snr_db", "snr"));
    let out = run(&["run", "--config", bad_key.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":5:"));

    let missing = dir.path().join("absent.cfg");
    assert_eq!(
        code(&run(&["run", "--config", missing.to_str().unwrap()])),
        2
    );

    let unknown_alg = write_config(dir.path(), &SMALL.replace("mu_fro", "mu_foo"));
    assert_eq!(
        code(&run(&["run", "--config", unknown_alg.to_str().unwrap()])),
        2
    );

    let good = write_config(dir.path(), SMALL);
    let out = bin()
        .env("NMF_BENCH_THREADS", "zero")
        .args(["run", "--config", good.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);

    assert_eq!(code(&run(&["frobnicate"])), 2);
    let no_sweep = write_config(dir.path(), SMALL);
    assert_eq!(
        code(&run(&[
            "sweep-delta",
            "--config",
            no_sweep.to_str().unwrap()
        ])),
        2
    );
}

#[test]
fn single_cell_run_writes_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--timed"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let outdir = dir.path().join("out");
    for name in [
        "traces.csv",
        "traces_iter.csv",
        "errors.csv",
        "median_iter.csv",
        "median_time.csv",
        "plot_iter.svg",
        "plot_time.svg",
    ] {
        assert!(outdir.join(name).is_file(), "{name} missing");
    }
    let table = TraceTable::load_csv(outdir.join("traces.csv")).unwrap();
    let iters: Vec<usize> = table.rows.iter().map(|r| r.outer_iter).collect();
    assert_eq!(iters, vec![1, 2, 3]);
    assert!(table
        .rows
        .iter()
        .all(|r| r.algorithm == "mu_fro" && r.seed == 0));
    assert!(table
        .rows
        .windows(2)
        .all(|w| w[1].elapsed_s >= w[0].elapsed_s));
    let errors = fs::read_to_string(outdir.join("errors.csv")).unwrap();
    assert_eq!(errors.trim(), "algorithm,seed,error");
}

#[test]
fn cells_use_offset_seeds_and_a_shared_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL
        .replace(
            "algorithms = mu_fro",
            "algorithms = mu_fro, hals, fastmu_fro",
        )
        .replace("seeds = 1", "seeds = 3\ninit_seed = 50")
        .replace("snr_db = 60", "snr_db = 60\nseed = 7");
    let cfg = write_config(dir.path(), &body);
    let out = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = TraceTable::load_csv(dir.path().join("out/traces_iter.csv")).unwrap();
    assert_eq!(table.algorithms(), ["mu_fro", "hals", "fastmu_fro"]);
    for p in 0..3u64 {
        let spec = SyntheticSpec::new(12, 9, 2)
            .with_snr_db(60.0)
            .with_seed(7 + p);
        let v = generate(&spec).unwrap().v;
        let init = FactorPair::random(2, 12, 9, 50 + p, 0.0);
        for alg in [Algorithm::MU_FRO, Algorithm::HALS, Algorithm::FASTMU_FRO] {
            let config = SolverConfig::new(alg).with_max_outer(3);
            let (_, trace) = solve(&v, 2, &config, Some(init.clone())).unwrap();
            assert_eq!(
                table.losses(&alg.to_string(), p),
                trace.losses()[1..],
                "{alg} seed {p}"
            );
        }
    }
}

#[test]
fn gen_writes_problem_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "gen",
        "--m",
        "7",
        "--n",
        "5",
        "--rank",
        "2",
        "--setup",
        "fac_sparse",
        "--seed",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = fastmu::load_csv(dir.path().join("V.csv")).unwrap();
    let w = fastmu::load_csv(dir.path().join("W.csv")).unwrap();
    let h = fastmu::load_csv(dir.path().join("H.csv")).unwrap();
    assert_eq!((v.shape(), w.shape(), h.shape()), ((7, 5), (2, 7), (2, 5)));
    let problem = fastmu::generate(
        &fastmu::SyntheticSpec::new(7, 5, 2)
            .with_setup(fastmu::SparsitySetup::FacSparse)
            .with_seed(3),
    )
    .unwrap();
    assert_eq!(v, problem.v);

    let bad = run(&["gen", "--m", "3", "--n", "3", "--rank", "4", "--out", "."]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn csv_problems_and_nls_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "gen",
        "--m",
        "10",
        "--n",
        "8",
        "--rank",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let body = "\
[problem]
data = V.csv
rank = 2
fixed_w = W.csv

[experiment]
algorithms = fastmu_fro, hals
seeds = 2

[solver]
max_outer = 5
";
    let cfg = write_config(dir.path(), body);
    let out = run(&["nls", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = TraceTable::load_csv(dir.path().join("out/traces_iter.csv")).unwrap();
    assert_eq!(table.rows.len(), 2 * 2 * 5);
    assert!(table.rows.iter().all(|r| r.inner_w == 0.0));

    let cfg = write_config(dir.path(), &body.replace("fixed_w = W.csv\n", ""));
    assert_eq!(code(&run(&["nls", "--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(code(&run(&["run", "--config", cfg.to_str().unwrap()])), 0);
}

#[test]
fn sweep_reports_inner_counts() {
    let dir = tempfile::tempdir().unwrap();
    let body =
        SMALL.replace("mu_fro", "fastmu_fro") + "\n[sweep]\ndeltas = 0, 0.5\nmax_outer = 4, 2\n";
    let cfg = write_config(dir.path(), &body);
    let out = run(&["sweep-delta", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("0.0,fastmu_fro,1,"), "{stdout}");
    assert!(stdout.contains("0.5,fastmu_fro,1,"), "{stdout}");
    let table = TraceTable::load_csv(dir.path().join("out/traces_iter.csv")).unwrap();
    assert_eq!(table.rows_for("fastmu_fro@delta=0.0").count(), 4);
    assert_eq!(table.rows_for("fastmu_fro@delta=0.5").count(), 2);
    let counts = fs::read_to_string(dir.path().join("out/inner_counts.csv")).unwrap();
    assert_eq!(counts.lines().count(), 3);
    // With delta = 0 the inner loop only stops at its cap.
    assert!(counts
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("0.0,fastmu_fro,1,100,"));
}

#[test]
fn plot_subcommand_reads_both_layouts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(code(&run(&["run", "--config", cfg.to_str().unwrap()])), 0);
    let traces = dir.path().join("out/traces.csv");
    let svg = dir.path().join("t.svg");
    let out = run(&[
        "plot",
        "--csv",
        traces.to_str().unwrap(),
        "--x",
        "time",
        "--out",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    roxmltree::Document::parse(&fs::read_to_string(&svg).unwrap()).unwrap();

    let iter = dir.path().join("out/traces_iter.csv");
    assert_eq!(
        code(&run(&[
            "plot",
            "--csv",
            iter.to_str().unwrap(),
            "--x",
            "iter"
        ])),
        0
    );
    assert!(dir.path().join("out/traces_iter.svg").is_file());
    assert_eq!(
        code(&run(&[
            "plot",
            "--csv",
            iter.to_str().unwrap(),
            "--x",
            "time"
        ])),
        2
    );
    assert_eq!(
        code(&run(&[
            "plot",
            "--csv",
            iter.to_str().unwrap(),
            "--x",
            "log"
        ])),
        2
    );
}

fn row(alg: &str, seed: u64, k: usize, t: f64, loss: f64) -> TraceRow {
    TraceRow {
        algorithm: alg.into(),
        seed,
        outer_iter: k,
        elapsed_s: Some(t),
        loss_normalized: loss,
        inner_h: 1.0,
        inner_w: 1.0,
    }
}

fn polylines(svg: &str) -> Vec<(String, Vec<(f64, f64)>)> {
    let doc = roxmltree::Document::parse(svg).expect("well-formed SVG");
    doc.descendants()
        .filter(|n| n.has_tag_name("polyline"))
        .map(|n| {
            let points = n
                .attribute("points")
                .unwrap()
                .split_whitespace()
                .map(|p| {
                    let (x, y) = p.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect();
            (n.attribute("class").unwrap().to_string(), points)
        })
        .collect()
}

#[test]
fn svg_has_one_distinct_series_per_algorithm() {
    let mut rows = Vec::new();
    for k in 0..20 {
        rows.push(row("a<&>", 0, k, 0.01 * k as f64, 1.0 / (1 + k) as f64));
        rows.push(row("b", 0, k, 0.02 * k as f64, 0.5));
    }
    let table = TraceTable { rows };
    for axis in [Axis::Iteration, Axis::Time] {
        let svg = render_svg(&aggregate_median(&table, axis).unwrap(), axis).unwrap();
        let lines = polylines(&svg);
        assert_eq!(lines.len(), 2);
        assert_ne!(lines[0].0, lines[1].0);
        assert!(svg.contains("data-algorithm=\"a&lt;&amp;&gt;\""));
        // The constant series is horizontal.
        let ys: Vec<f64> = lines[1].1.iter().map(|p| p.1).collect();
        assert!(ys.iter().all(|&y| y == ys[0]), "{ys:?}");
        // The decreasing series descends on screen (larger y is lower).
        assert!(lines[0].1.windows(2).all(|w| w[1].1 >= w[0].1));
    }
}

#[test]
fn a_single_constant_trace_is_a_horizontal_line() {
    let table = TraceTable {
        rows: (0..5).map(|k| row("c", 0, k, k as f64, 3e-4)).collect(),
    };
    let svg = render_svg(&table, Axis::Iteration).unwrap();
    let lines = polylines(&svg);
    assert_eq!(lines.len(), 1);
    let ys: Vec<f64> = lines[0].1.iter().map(|p| p.1).collect();
    assert!(ys.iter().all(|&y| y == ys[0] && y.is_finite()));
}

#[test]
fn resampled_medians_of_monotone_traces_stay_monotone() {
    let mut rng = Rng::new(9);
    for case in 0..50 {
        let mut rows = Vec::new();
        let seeds = 1 + case % 5;
        for seed in 0..seeds as u64 {
            let len = 3 + (case * 7 + seed as usize) % 40;
            let steps = uniform_matrix(&mut rng, 2, len);
            let (mut t, mut loss) = (0.0, 1.0);
            for k in 0..len {
                t += 1e-3 + steps.get(0, k);
                loss *= 1.0 - 0.9 * steps.get(1, k);
                rows.push(row("m", seed, k, t, loss));
            }
        }
        let table = TraceTable { rows };
        for axis in [Axis::Iteration, Axis::Time] {
            let med = aggregate_median(&table, axis).unwrap();
            let losses = med.losses("m", med.rows[0].seed);
            let all: Vec<f64> = med.rows.iter().map(|r| r.loss_normalized).collect();
            if axis == Axis::Time {
                assert_eq!(losses, all);
                assert!(med.rows.windows(2).all(|w| w[1].elapsed_s > w[0].elapsed_s));
            }
            assert!(
                all.windows(2).all(|w| w[1] <= w[0]) || axis == Axis::Iteration,
                "case {case}: {all:?}"
            );
        }
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL
        .replace(
            "algorithms = mu_fro",
            "algorithms = mu_fro, fastmu_fro, hals",
        )
        .replace("seeds = 1", "seeds = 2");
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "4"].into_iter().enumerate() {
        let sub = dir.path().join(format!("r{i}"));
        fs::create_dir(&sub).unwrap();
        let cfg = write_config(&sub, &body);
        let out = bin()
            .env("NMF_BENCH_THREADS", threads)
            .args(["run", "--config", cfg.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        outputs.push((
            fs::read(sub.join("out/traces_iter.csv")).unwrap(),
            fs::read(sub.join("out/median_iter.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}
