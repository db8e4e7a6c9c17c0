mod common;

use common::{column_of, max_eigenvalue, shifted_uniform};
use fastmu::{grad_h, grad_w, lipschitz_constant, loss, DenseMatrix, Loss, Rng};

const STEP: f64 = 1e-6;

/// Central differences of `loss` with respect to every entry of `x`, where
/// `eval` rebuilds the loss from a perturbed copy.
fn finite_difference(x: &DenseMatrix, eval: impl Fn(&DenseMatrix) -> f64) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let mut plus = x.clone();
            plus.set(i, j, x.get(i, j) + STEP);
            let mut minus = x.clone();
            minus.set(i, j, x.get(i, j) - STEP);
            out.set(i, j, (eval(&plus) - eval(&minus)) / (2.0 * STEP));
        }
    }
    out
}

fn relative_error(analytic: &DenseMatrix, numeric: &DenseMatrix) -> f64 {
    let scale = analytic.frobenius_norm().max(1e-12);
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(a, n)| (a - n).abs() / a.abs().max(1e-3 * scale))
        .fold(0.0, f64::max)
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = Rng::new(11);
    for case in 0..20 {
        let (m, n, r) = (4, 3, 2);
        let v = shifted_uniform(&mut rng, m, n, 0.1);
        let w = shifted_uniform(&mut rng, r, m, 0.1);
        let h = shifted_uniform(&mut rng, r, n, 0.1);
        for kind in [Loss::Frobenius, Loss::Kl] {
            let gh = grad_h(&v, &w, &h, kind).unwrap();
            let fd_h = finite_difference(&h, |hp| loss(&v, &w, hp, kind).unwrap());
            let err_h = relative_error(&gh, &fd_h);
            assert!(err_h < 1e-5, "case {case} {kind}: grad_h error {err_h:e}");

            let gw = grad_w(&v, &w, &h, kind).unwrap();
            let fd_w = finite_difference(&w, |wp| loss(&v, wp, &h, kind).unwrap());
            let err_w = relative_error(&gw, &fd_w);
            assert!(err_w < 1e-5, "case {case} {kind}: grad_w error {err_w:e}");
        }
    }
}

#[test]
fn gradient_separates_over_columns() {
    let mut rng = Rng::new(5);
    let v = shifted_uniform(&mut rng, 6, 5, 0.2);
    let w = shifted_uniform(&mut rng, 3, 6, 0.2);
    let h = shifted_uniform(&mut rng, 3, 5, 0.2);
    for kind in [Loss::Frobenius, Loss::Kl] {
        let full = grad_h(&v, &w, &h, kind).unwrap();
        for j in 0..5 {
            let single = grad_h(&column_of(&v, j), &w, &column_of(&h, j), kind).unwrap();
            assert_eq!(single.col_vec(0), full.col_vec(j), "{kind} column {j}");
        }
    }
}

#[test]
fn grad_w_is_grad_h_of_the_transpose() {
    let mut rng = Rng::new(8);
    let v = shifted_uniform(&mut rng, 5, 4, 0.1);
    let w = shifted_uniform(&mut rng, 2, 5, 0.1);
    let h = shifted_uniform(&mut rng, 2, 4, 0.1);
    for kind in [Loss::Frobenius, Loss::Kl] {
        assert_eq!(
            grad_w(&v, &w, &h, kind).unwrap(),
            grad_h(&v.transpose(), &h, &w, kind).unwrap()
        );
    }
}

#[test]
fn lipschitz_matches_dense_eigensolver() {
    let mut rng = Rng::new(21);
    for _ in 0..50 {
        let w = shifted_uniform(&mut rng, 4, 9, 0.0);
        let expected = max_eigenvalue(&w.matmul_t(&w).unwrap());
        let got = lipschitz_constant(&w).unwrap();
        assert!(
            (got - expected).abs() <= 1e-8 * expected,
            "power iteration {got} vs eigensolver {expected}"
        );
    }
}
