use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use fastmu::solvers::{run_inner_loop, run_inner_loop_extrapolated};
use fastmu::{
    generate, metric, solve, uniform_matrix, Algorithm, Block, MajorantKind, Rng, SolverConfig,
    SyntheticSpec,
};

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for &(m, n, r) in &[(200, 100, 5), (1000, 400, 20)] {
        let mut rng = Rng::new(0);
        let w = uniform_matrix(&mut rng, r, m);
        let h = uniform_matrix(&mut rng, r, n);
        let v = uniform_matrix(&mut rng, m, n);
        let id = format!("{m}x{n}x{r}");
        group.bench_with_input(BenchmarkId::new("wt_h", &id), &(), |b, _| {
            b.iter(|| black_box(w.t_matmul(&h).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("w_v", &id), &(), |b, _| {
            b.iter(|| black_box(w.matmul(&v).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("w_wt", &id), &(), |b, _| {
            b.iter(|| black_box(w.matmul_t(&w).unwrap()))
        });
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let problem = generate(&SyntheticSpec::new(200, 100, 5)).unwrap();
    let x = uniform_matrix(&mut Rng::new(1), 5, 100);
    let mut group = c.benchmark_group("metric");
    for kind in MajorantKind::ALL {
        group.bench_function(format!("{kind:?}"), |b| {
            b.iter(|| black_box(metric(kind, &problem.v, &problem.w_true, &x).unwrap()))
        });
    }
    group.finish();
}

fn inner_loops(c: &mut Criterion) {
    let problem = generate(&SyntheticSpec::new(200, 100, 5)).unwrap();
    let h = uniform_matrix(&mut Rng::new(2), 5, 100);
    let mut group = c.benchmark_group("inner_h");
    for alg in Algorithm::ALL {
        let config = SolverConfig::new(alg).with_max_inner(20).with_delta(0.0);
        group.bench_function(alg.to_string(), |b| {
            b.iter(|| {
                black_box(
                    run_inner_loop(Block::H, &problem.v, &problem.w_true, &h, &config).unwrap(),
                )
            })
        });
    }
    let config = SolverConfig::new(Algorithm::FASTMU_FRO)
        .with_max_inner(20)
        .with_delta(0.0);
    group.bench_function("fastmu_fro_extrapolated", |b| {
        b.iter(|| {
            black_box(
                run_inner_loop_extrapolated(Block::H, &problem.v, &problem.w_true, &h, &config)
                    .unwrap(),
            )
        })
    });
    group.finish();
}

fn outer(c: &mut Criterion) {
    let problem = generate(&SyntheticSpec::new(200, 100, 5)).unwrap();
    let mut group = c.benchmark_group("solve_20_outer");
    group.sample_size(10);
    for alg in [
        Algorithm::MU_FRO,
        Algorithm::FASTMU_FRO,
        Algorithm::HALS,
        Algorithm::MU_KL,
    ] {
        let config = SolverConfig::new(alg).with_max_outer(20);
        group.bench_function(alg.to_string(), |b| {
            b.iter(|| black_box(solve(&problem.v, 5, &config, None).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, matmul, metrics, inner_loops, outer);
criterion_main!(benches);
