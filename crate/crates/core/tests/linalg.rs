use mpjet_core::linalg::{eig_dense, lstsq, truncated_svd};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

/// One-sided Jacobi SVD: orthogonalizes the columns of `a` by plane
/// rotations; the singular values are the final column norms.
fn jacobi_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut u = if a.nrows() >= a.ncols() { a.clone() } else { a.transpose() };
    let n = u.ncols();
    for _ in 0..60 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dot(&u.column(q));
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..u.nrows() {
                    let (x, y) = (u[(r, p)], u[(r, q)]);
                    u[(r, p)] = c * x - s * y;
                    u[(r, q)] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut s: Vec<f64> = (0..n).map(|c| u.column(c).norm()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn real_matrix(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> impl Strategy<Value = DMatrix<f64>> {
    (rows, cols).prop_flat_map(|(m, n)| {
        prop::collection::vec(-1.0..1.0f64, m * n).prop_map(move |d| DMatrix::from_vec(m, n, d))
    })
}

fn complex_matrix(n: usize, data: &[f64]) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |r, c| Complex64::new(data[2 * (r * n + c)], data[2 * (r * n + c) + 1]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn singular_values_match_jacobi(a in real_matrix(1..9, 1..9)) {
        let svd = truncated_svd(&a, 1e-14).unwrap();
        let oracle = jacobi_singular_values(&a);
        let smax = oracle[0];
        prop_assume!(smax > 0.0);
        for (i, &s) in svd.s.iter().enumerate() {
            prop_assert!((s - oracle[i]).abs() <= 1e-12 * smax, "{s} vs {}", oracle[i]);
        }
        for &s in &oracle[svd.rank..] {
            prop_assert!(s <= 1e-14 * smax * (1.0 + 1e-9));
        }
        let utu = svd.u.transpose() * &svd.u;
        prop_assert!((utu - DMatrix::identity(svd.rank, svd.rank)).amax() < 1e-12);
        prop_assert!((svd.recompose() - &a).amax() < 1e-12 * smax.max(1.0));
    }

    #[test]
    fn real_eigenpairs_have_small_residuals(a in real_matrix(5..6, 5..6)) {
        let eig = eig_dense(&a).unwrap();
        let ac = a.map(|x| Complex64::new(x, 0.0));
        let scale = a.norm().max(1e-300);
        prop_assert_eq!(eig.values.len(), 5);
        for (m, &lambda) in eig.values.iter().enumerate() {
            let v = eig.vectors.column(m);
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
            let resid = (&ac * v - v * lambda).norm();
            prop_assert!(resid <= 1e-10 * scale, "residual {resid}");
        }
        // Trace equals the eigenvalue sum.
        let sum: Complex64 = eig.values.iter().sum();
        prop_assert!((sum - Complex64::new(a.trace(), 0.0)).norm() < 1e-10 * scale);
    }

    #[test]
    fn complex_eigenpairs_have_small_residuals(data in prop::collection::vec(-1.0..1.0f64, 2 * 36)) {
        let a = complex_matrix(6, &data);
        let eig = eig_dense(&a).unwrap();
        let scale = a.norm();
        for (m, &lambda) in eig.values.iter().enumerate() {
            let v = eig.vectors.column(m);
            prop_assert!((&a * v - v * lambda).norm() <= 1e-10 * scale);
        }
    }

    #[test]
    fn overdetermined_solution_satisfies_normal_equations(a in real_matrix(8..12, 1..6), seed in prop::collection::vec(-1.0..1.0f64, 12)) {
        let b = DMatrix::from_column_slice(a.nrows(), 1, &seed[..a.nrows()]);
        let x = lstsq(&a, &b).unwrap();
        let grad = a.transpose() * (&a * &x - &b);
        prop_assert!(grad.amax() <= 1e-10 * a.norm().powi(2) * b.norm().max(1.0));
    }

    #[test]
    fn underdetermined_solution_is_minimum_norm(a in real_matrix(2..5, 6..9), seed in prop::collection::vec(-1.0..1.0f64, 5)) {
        let b = DMatrix::from_column_slice(a.nrows(), 1, &seed[..a.nrows()]);
        let gram = &a * a.transpose();
        prop_assume!(gram.clone().lu().determinant().abs() > 1e-6);
        let oracle = a.transpose() * gram.lu().solve(&b).unwrap();
        let x = lstsq(&a, &b).unwrap();
        prop_assert!((x - oracle).amax() < 1e-9);
    }
}

#[test]
fn complex_least_squares_recovers_exact_solution() {
    let a = DMatrix::from_fn(6, 3, |r, c| Complex64::new((r + 2 * c) as f64 * 0.3 - 1.0, ((r * c) % 3) as f64 - 0.5));
    let x = DMatrix::from_column_slice(
        3,
        1,
        &[Complex64::new(1.0, -2.0), Complex64::new(0.5, 0.25), Complex64::new(-3.0, 0.0)],
    );
    let got = lstsq(&a, &(&a * &x)).unwrap();
    assert!((got - x).norm() < 1e-12);
}

#[test]
fn truncation_is_relative_to_largest_value() {
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![10.0, 1.0, 0.05, 0.01]));
    assert_eq!(truncated_svd(&a, 1e-4).unwrap().s, vec![10.0, 1.0, 0.05, 0.01]);
    // Ratios exactly at the tolerance are dropped.
    assert_eq!(truncated_svd(&a, 1e-3).unwrap().rank, 3);
    assert_eq!(truncated_svd(&a, 0.005).unwrap().rank, 2);
    assert_eq!(truncated_svd(&a, 0.01).unwrap().rank, 2);
    assert_eq!(truncated_svd(&a, 0.1).unwrap().rank, 1);
}
