use proptest::prelude::*;
use setobs_core::decomposition::decompose;
use setobs_core::linalg::{vec_ops, Mat};
use setobs_core::system::{simulate_plant, FieldDescriptor, ModeModel};

fn mat(r: usize, c: usize, lo: f64, hi: f64) -> impl Strategy<Value = Mat<f64>> {
    prop::collection::vec(lo..hi, r * c).prop_map(move |v| Mat::from_vec(r, c, v).unwrap())
}

/// Random mode with `n` states, `l` outputs and an `l x p` feedthrough of
/// rank at most `k`.
fn mode(n: usize, l: usize, p: usize, k: usize) -> impl Strategy<Value = ModeModel<f64>> {
    let k = k.min(l).min(p);
    (
        mat(n, n, -1.0, 1.0),
        mat(n, n, -1.0, 1.0),
        mat(n, p, -1.0, 1.0),
        mat(l, n, -1.0, 1.0),
        mat(l, k, -1.0, 1.0),
        mat(k, p, -1.0, 1.0),
    )
        .prop_map(move |(a_hat, a_tilde, g, c, hl, hr)| {
            let h = &hl * &hr;
            ModeModel::new(
                FieldDescriptor::LinearSinusoidal { a_hat, a_tilde },
                Mat::zeros(n, 0),
                g,
                c,
                Mat::zeros(l, 0),
                h,
                None,
                None,
            )
            .unwrap()
        })
}

fn any_mode() -> impl Strategy<Value = ModeModel<f64>> {
    (1usize..=4, 1usize..=5, 1usize..=3, 0usize..=3).prop_flat_map(|(n, l, p, k)| mode(n, l, p, k))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn field_respects_lipschitz_constant(
        m in mode(3, 2, 1, 1),
        x in prop::collection::vec(-10.0f64..10.0, 3),
        y in prop::collection::vec(-10.0f64..10.0, 3),
    ) {
        let lf = m.lipschitz;
        let fx = m.field.eval(&x);
        let fy = m.field.eval(&y);
        let lhs = vec_ops::norm2(&vec_ops::sub(&fx, &fy));
        prop_assert!(lhs <= lf * vec_ops::norm2(&vec_ops::sub(&x, &y)) + 1e-12);
    }

    #[test]
    fn decomposition_invariants(m in any_mode()) {
        let d = decompose(&m).unwrap();
        let (l, p) = m.h.shape();
        let tol = 1e-10;
        // T2 annihilates H.
        prop_assert!((&d.t2 * &m.h).max_abs() <= tol * (1.0 + m.h.max_abs()));
        // [T1; T2] and [V1 V2] are orthogonal.
        let t = Mat::vstack(&[&d.t1, &d.t2]);
        prop_assert!((&(&t * &t.transpose()) - &Mat::identity(l)).max_abs() <= tol);
        let v = Mat::hstack(&[&d.v1, &d.v2]);
        prop_assert!((&(&v.transpose() * &v) - &Mat::identity(p)).max_abs() <= tol);
        // H = U1 S V1^T and the split preserves the output norm.
        prop_assert!((&d.h_reconstructed() - &m.h).max_abs() <= tol * (1.0 + m.h.max_abs()));
        let y: Vec<f64> = (0..l).map(|i| (i as f64 + 1.0).sin()).collect();
        let (z1, z2) = d.split_output(&y);
        let n2 = vec_ops::norm2(&z1).hypot(vec_ops::norm2(&z2));
        prop_assert!((n2 - vec_ops::norm2(&y)).abs() <= tol);
        // Blocks are consistent with the splits.
        prop_assert!((&d.c2 - &(&d.t2 * &m.c)).max_abs() <= tol);
        prop_assert!((&d.g1 - &(&m.g * &d.v1)).max_abs() <= tol);
        prop_assert_eq!(d.t2.rows(), l - d.rank_h);
    }
}

#[test]
fn zero_plant_stays_at_rest() {
    let m = ModeModel::new(
        FieldDescriptor::Linear { a: Mat::<f64>::identity(2) },
        Mat::zeros(2, 1),
        Mat::zeros(2, 1),
        Mat::zeros(2, 2),
        Mat::zeros(2, 1),
        Mat::zeros(2, 1),
        None,
        None,
    )
    .unwrap();
    let (x, y) = simulate_plant(&m, &[0.0, 0.0], &[0.0], &[0.0], &[0.0, 0.0], &[0.0, 0.0]);
    assert_eq!(x, vec![0.0, 0.0]);
    assert_eq!(y, vec![0.0, 0.0]);
}

#[test]
fn unknown_input_reaches_output_through_h() {
    let m = ModeModel::new(
        FieldDescriptor::Linear { a: Mat::<f64>::zeros(2, 2) },
        Mat::zeros(2, 0),
        Mat::zeros(2, 2),
        Mat::zeros(2, 2),
        Mat::zeros(2, 0),
        Mat::identity(2),
        None,
        None,
    )
    .unwrap();
    let (_, y) = simulate_plant(&m, &[0.0, 0.0], &[], &[1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]);
    assert_eq!(y, vec![1.0, 0.0]);
}
