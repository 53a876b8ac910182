use nalgebra::DMatrix;
use proptest::prelude::*;
use setobs_core::linalg::{inverse, pinv, rank, singular_values, spectral_norm, svd, symmetric_eigen, Mat};

fn to_na(m: &Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn max_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).max_abs()
}

fn matrix(max_dim: usize) -> impl Strategy<Value = Mat<f64>> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
        prop::collection::vec(-5.0f64..5.0, r * c).prop_map(move |v| Mat::from_vec(r, c, v).unwrap())
    })
}

fn square(max_dim: usize) -> impl Strategy<Value = Mat<f64>> {
    (1..=max_dim).prop_flat_map(|n| {
        prop::collection::vec(-5.0f64..5.0, n * n).prop_map(move |v| Mat::from_vec(n, n, v).unwrap())
    })
}

/// Random matrix of prescribed rank, built as a product of thin factors.
fn low_rank(max_dim: usize) -> impl Strategy<Value = Mat<f64>> {
    (1..=max_dim, 1..=max_dim, 0..=max_dim).prop_flat_map(|(r, c, k)| {
        let k = k.min(r).min(c);
        (
            prop::collection::vec(-2.0f64..2.0, r * k),
            prop::collection::vec(-2.0f64..2.0, k * c),
        )
            .prop_map(move |(a, b)| {
                let a = Mat::from_vec(r, k, a).unwrap();
                let b = Mat::from_vec(k, c, b).unwrap();
                &a * &b
            })
    })
}

fn orthonormal_columns(m: &Mat<f64>) -> f64 {
    max_diff(&(&m.transpose() * m), &Mat::identity(m.cols()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn svd_matches_reference(a in matrix(8)) {
        let s = svd(&a).unwrap();
        let mut want: Vec<f64> = to_na(&a).singular_values().iter().copied().collect();
        want.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let scale = 1.0 + want[0];
        for (g, w) in s.singular_values.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-9 * scale, "{g} vs {w}");
        }
        prop_assert!(max_diff(&s.reconstruct(), &a) <= 1e-9 * scale);
        prop_assert!(orthonormal_columns(&s.u) <= 1e-10);
        prop_assert!(orthonormal_columns(&s.v) <= 1e-10);
        prop_assert_eq!(s.u.shape(), (a.rows(), a.rows()));
        prop_assert_eq!(s.v.shape(), (a.cols(), a.cols()));
    }

    #[test]
    fn svd_sign_rule_is_deterministic(a in matrix(6)) {
        let s1 = svd(&a).unwrap();
        let s2 = svd(&a.clone()).unwrap();
        prop_assert_eq!(&s1.u, &s2.u);
        for j in 0..s1.u.cols() {
            let col = s1.u.col(j);
            let m = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let lead = col.iter().find(|x| x.abs() >= m - 1e-9).copied().unwrap();
            prop_assert!(lead > 0.0 || m == 0.0);
        }
    }

    #[test]
    fn singular_values_agree_with_full_svd(a in low_rank(9)) {
        let s = svd(&a).unwrap();
        let (values, tol) = singular_values(&a).unwrap();
        prop_assert_eq!(values.len(), s.singular_values.len());
        for (x, y) in values.iter().zip(&s.singular_values) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + s.singular_values[0]));
        }
        prop_assert_eq!(tol, s.tolerance());
        prop_assert_eq!(rank(&a).unwrap(), s.rank());
    }

    #[test]
    fn pinv_penrose_identities(a in low_rank(7)) {
        let x = pinv(&a).unwrap();
        let scale = 1.0 + a.max_abs() * a.max_abs();
        prop_assert!(max_diff(&(&(&a * &x) * &a), &a) <= 1e-8 * scale);
        prop_assert!(max_diff(&(&(&x * &a) * &x), &x) <= 1e-8 * (1.0 + x.max_abs() * scale));
        let ax = &a * &x;
        let xa = &x * &a;
        prop_assert!(max_diff(&ax, &ax.transpose()) <= 1e-8);
        prop_assert!(max_diff(&xa, &xa.transpose()) <= 1e-8);
    }

    #[test]
    fn pinv_matches_reference_on_full_rank(a in matrix(6)) {
        let na = to_na(&a);
        let sv = na.singular_values();
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assume!(smin > 1e-3);
        let want = na.pseudo_inverse(1e-12).unwrap();
        let got = pinv(&a).unwrap();
        let diff = (&to_na(&got) - &want).abs().max();
        prop_assert!(diff <= 1e-8 / smin.powi(2));
    }

    #[test]
    fn spectral_norm_matches_reference(a in matrix(8)) {
        let want = to_na(&a).singular_values().max();
        prop_assert!((spectral_norm(&a).unwrap() - want).abs() <= 1e-10 * (1.0 + want));
    }

    #[test]
    fn symmetric_eigen_matches_reference(a in square(6)) {
        let s = &a + &a.transpose();
        let (vals, vecs) = symmetric_eigen(&s).unwrap();
        let mut want: Vec<f64> = to_na(&s).symmetric_eigenvalues().iter().copied().collect();
        want.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (g, w) in vals.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-9 * (1.0 + s.max_abs()));
        }
        let recon = &(&vecs * &Mat::diag(&vals)) * &vecs.transpose();
        prop_assert!(max_diff(&recon, &s) <= 1e-9 * (1.0 + s.max_abs()));
    }

    #[test]
    fn inverse_round_trip(a in square(6)) {
        let n = a.rows();
        let sq = &a + &Mat::identity(n).scale(12.0);
        let inv = inverse(&sq).unwrap();
        prop_assert!(max_diff(&(&sq * &inv), &Mat::identity(n)) <= 1e-10);
    }
}
