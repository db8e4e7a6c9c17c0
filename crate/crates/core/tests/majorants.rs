mod common;

use common::{column_of, max_abs_diff, max_rel_diff, min_eigenvalue, shifted_uniform};
use fastmu::majorants::{hessian_frobenius, hessian_kl, hessian_kl_approx, DEFAULT_DATA_FLOOR};
use fastmu::{check_majorant_psd, metric, solve_u, uniform_matrix, DenseMatrix, MajorantKind, Rng};

/// `Diag(z) − B`
fn gap(z: &[f64], b: &DenseMatrix) -> DenseMatrix {
    let mut out = b.scale(-1.0);
    for (i, &zi) in z.iter().enumerate() {
        out.set(i, i, out.get(i, i) + zi);
    }
    out
}

struct Instance {
    v: DenseMatrix,
    w: DenseMatrix,
    x: DenseMatrix,
}

fn instance(rng: &mut Rng) -> Instance {
    let r = 1 + (rng.next_uniform() * 6.0) as usize;
    let m = r + (rng.next_uniform() * 7.0) as usize;
    Instance {
        v: shifted_uniform(rng, m, 1, 0.05),
        w: shifted_uniform(rng, r, m, 0.05),
        x: shifted_uniform(rng, r, 1, 0.05),
    }
}

/// The Hessian each metric majorizes and the direction `u` it was built from.
fn hessian_and_direction(kind: MajorantKind, inst: &Instance) -> (DenseMatrix, Vec<f64>) {
    let Instance { v, w, x } = inst;
    let r = w.rows();
    match kind {
        MajorantKind::MuFro => (hessian_frobenius(w).unwrap(), x.col_vec(0)),
        MajorantKind::MuKl => {
            let model = w.t_matmul(x).unwrap();
            (
                hessian_kl_approx(w, model.as_slice()).unwrap(),
                x.col_vec(0),
            )
        }
        MajorantKind::FastMuFro => {
            let s: Vec<f64> = w
                .matvec(v.as_slice())
                .unwrap()
                .iter()
                .zip(w.row_sums())
                .map(|(a, b)| (a / b).sqrt())
                .collect();
            (hessian_frobenius(w).unwrap(), s)
        }
        MajorantKind::FastMuKlExact => (
            hessian_kl(w, v.as_slice(), x.as_slice()).unwrap(),
            vec![1.0; r],
        ),
        MajorantKind::FastMuKlApprox => {
            let floored: Vec<f64> = v
                .as_slice()
                .iter()
                .map(|&d| d.max(DEFAULT_DATA_FLOOR))
                .collect();
            (hessian_kl_approx(w, &floored).unwrap(), vec![1.0; r])
        }
    }
}

#[test]
fn every_metric_majorizes_its_hessian() {
    let mut rng = Rng::new(3);
    for case in 0..200 {
        let inst = instance(&mut rng);
        for kind in MajorantKind::ALL {
            let z = metric(kind, &inst.v, &inst.w, &inst.x).unwrap();
            let (hess, _) = hessian_and_direction(kind, &inst);
            let scale = hess.max().max(1.0);
            let lo = min_eigenvalue(&gap(z.values().as_slice(), &hess));
            assert!(
                lo >= -1e-9 * scale,
                "case {case} {kind}: min eigenvalue {lo:e}"
            );
        }
    }
}

#[test]
fn kernel_identity_for_every_kind() {
    let mut rng = Rng::new(4);
    for case in 0..100 {
        let inst = instance(&mut rng);
        for kind in MajorantKind::ALL {
            let z = metric(kind, &inst.v, &inst.w, &inst.x).unwrap();
            let (hess, u) = hessian_and_direction(kind, &inst);
            let residual = gap(z.values().as_slice(), &hess).matvec(&u).unwrap();
            let scale = hess
                .matvec(&u)
                .unwrap()
                .iter()
                .fold(1.0f64, |a, b| a.max(b.abs()));
            let worst = residual.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            assert!(
                worst <= 1e-9 * scale,
                "case {case} {kind}: residual {worst:e}"
            );
        }
    }
}

#[test]
fn psd_check_agrees_with_eigensolver() {
    let mut rng = Rng::new(9);
    for _ in 0..100 {
        let a = uniform_matrix(&mut rng, 5, 5);
        let b = a.add(&a.transpose()).unwrap();
        let u: Vec<f64> = (0..5).map(|_| rng.next_uniform() + 1e-3).collect();
        let bu = b.matvec(&u).unwrap();
        let z: Vec<f64> = bu.iter().zip(&u).map(|(p, q)| p / q).collect();
        let oracle = min_eigenvalue(&gap(&z, &b));
        let report = check_majorant_psd(&b, &u).unwrap();
        assert!(report.psd);
        assert!(
            (report.min_eig - oracle).abs() < 1e-9,
            "{} vs {oracle}",
            report.min_eig
        );
    }
}

#[test]
fn metric_is_invariant_to_direction_scale() {
    let mut rng = Rng::new(12);
    for _ in 0..50 {
        let v = shifted_uniform(&mut rng, 7, 3, 0.1);
        let w = shifted_uniform(&mut rng, 3, 7, 0.1);
        let x = shifted_uniform(&mut rng, 3, 3, 0.1);
        let base_mu = metric(MajorantKind::MuFro, &v, &w, &x).unwrap();
        let base_fast = metric(MajorantKind::FastMuFro, &v, &w, &x).unwrap();
        for alpha in [1e-6, 1.0, 1e6] {
            // MU takes u = x; fastMU's u scales with the square root of the data.
            let mu = metric(MajorantKind::MuFro, &v, &w, &x.scale(alpha)).unwrap();
            assert!(max_rel_diff(mu.values(), base_mu.values()) <= 1e-12);
            let fast = metric(MajorantKind::FastMuFro, &v.scale(alpha * alpha), &w, &x).unwrap();
            assert!(max_rel_diff(fast.values(), base_fast.values()) <= 1e-12);
        }
    }
}

fn objective(b: &[f64], u: &[f64]) -> f64 {
    b.iter().zip(u).map(|(p, q)| p / q).sum()
}

#[test]
fn solve_u_beats_random_feasible_points() {
    let mut rng = Rng::new(31);
    for case in 0..100 {
        let r = 1 + (rng.next_uniform() * 5.0) as usize;
        let m = 2 + (rng.next_uniform() * 8.0) as usize;
        let w = shifted_uniform(&mut rng, r, m, 0.01);
        let b: Vec<f64> = (0..r).map(|_| rng.next_uniform() + 0.01).collect();
        let target = 1.0 + 3.0 * rng.next_uniform();
        let u = solve_u(&b, &w, target, 1e-16).unwrap();
        let row_sums = w.row_sums();
        let l1 = |u: &[f64]| -> f64 { u.iter().zip(&row_sums).map(|(p, q)| p * q).sum() };
        assert!((l1(&u) - target).abs() <= 1e-12 * target);

        let best = objective(&b, &u);
        for _ in 0..1000 {
            let raw: Vec<f64> = (0..r).map(|_| rng.next_uniform() + 1e-9).collect();
            let s = target / l1(&raw);
            let feasible: Vec<f64> = raw.iter().map(|x| x * s).collect();
            assert!(
                best <= objective(&b, &feasible) * (1.0 + 1e-12),
                "case {case}"
            );
        }

        // Stationarity: b ⊘ u² = λ W𝟙 for a single λ > 0.
        let lambda = b[0] / (u[0] * u[0] * row_sums[0]);
        let residual = b
            .iter()
            .zip(&u)
            .zip(&row_sums)
            .map(|((bi, ui), si)| (bi / (ui * ui) - lambda * si).abs() / (bi / (ui * ui)))
            .fold(0.0, f64::max);
        assert!(
            lambda > 0.0 && residual < 1e-8,
            "case {case}: KKT residual {residual:e}"
        );
    }
}

#[test]
fn metric_columns_are_independent() {
    let mut rng = Rng::new(14);
    let v = shifted_uniform(&mut rng, 6, 4, 0.1);
    let w = shifted_uniform(&mut rng, 3, 6, 0.1);
    let x = shifted_uniform(&mut rng, 3, 4, 0.1);
    for kind in MajorantKind::ALL {
        let full = metric(kind, &v, &w, &x).unwrap();
        for j in 0..4 {
            let single = metric(kind, &column_of(&v, j), &w, &column_of(&x, j)).unwrap();
            let col = DenseMatrix::column(&full.values().col_vec(j));
            assert!(max_abs_diff(single.values(), &col) <= 1e-12 * col.max());
        }
    }
}
