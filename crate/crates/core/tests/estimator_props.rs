use proptest::prelude::*;
use setobs_core::decomposition::decompose;
use setobs_core::detectability::separation_matrix;
use setobs_core::linalg::{sigma_min, vec_ops, Mat};
use setobs_core::mode_estimator::{bounding_ball, eliminate, Ball, ModeSet, ResidualTest};
use setobs_core::residual::vertex_bound;
use setobs_core::system::{FieldDescriptor, ModeModel};
use setobs_core::Error;

fn mat(r: usize, c: usize) -> impl Strategy<Value = Mat<f64>> {
    prop::collection::vec(-1.0f64..1.0, r * c).prop_map(move |v| Mat::from_vec(r, c, v).unwrap())
}

/// `max |A t|` over all `2^d` vertices, without any reduction.
fn naive_vertex_max(a: &Mat<f64>, radii: &[f64]) -> f64 {
    let d = radii.len();
    let mut best = 0.0f64;
    for mask in 0u64..(1 << d) {
        let t: Vec<f64> = (0..d).map(|i| if mask >> i & 1 == 1 { -radii[i] } else { radii[i] }).collect();
        best = best.max(vec_ops::norm2(&a.mul_vec(&t)));
    }
    best
}

fn linear_mode(c: Mat<f64>, h: Mat<f64>, d: Mat<f64>) -> ModeModel<f64> {
    let n = c.cols();
    let (l, p) = h.shape();
    ModeModel::new(
        FieldDescriptor::Linear { a: Mat::identity(n).scale(0.5) },
        Mat::zeros(n, d.cols()),
        Mat::zeros(n, p),
        c,
        d,
        h,
        None,
        None,
    )
    .map(|m| {
        assert_eq!(m.dims().l, l);
        m
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn vertex_bound_equals_naive_enumeration(
        (a, radii) in (1usize..=3, 1usize..=10).prop_flat_map(|(r, d)| {
            (mat(r, d), prop::collection::vec(0.0f64..2.0, d))
        })
    ) {
        let got = vertex_bound(&a, &radii, 1 << 20).value.unwrap();
        let want = naive_vertex_max(&a, &radii);
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want));
    }

    #[test]
    fn vertex_bound_covers_box_points(
        (a, radii, u) in (2usize..=3, 1usize..=8).prop_flat_map(|(r, d)| {
            (mat(r, d), prop::collection::vec(0.0f64..2.0, d), prop::collection::vec(-1.0f64..1.0, d))
        })
    ) {
        let t: Vec<f64> = u.iter().zip(&radii).map(|(s, r)| s * r).collect();
        let b = vertex_bound(&a, &radii, 1 << 20).value.unwrap();
        prop_assert!(vec_ops::norm2(&a.mul_vec(&t)) <= b + 1e-12);
    }

    #[test]
    fn elimination_is_monotone(rounds in prop::collection::vec(prop::collection::vec((0.0f64..2.0, 0.5f64..1.5), 4), 1..10)) {
        let mut set = ModeSet::all(4);
        for (k, round) in rounds.iter().enumerate() {
            let tests: Vec<ResidualTest<f64>> = round
                .iter()
                .enumerate()
                .map(|(q, &(r, th))| ResidualTest { mode: q, residual_norm: r, threshold: th })
                .collect();
            match eliminate(&set, &tests, k + 1) {
                Ok(next) => {
                    prop_assert!(next.surviving.is_subset(&set.surviving));
                    for t in &tests {
                        if set.contains(t.mode) {
                            prop_assert_eq!(next.contains(t.mode), t.residual_norm <= t.threshold);
                        }
                    }
                    for (q, _) in &set.eliminated_at {
                        prop_assert!(!next.contains(*q));
                    }
                    set = next;
                }
                Err(Error::ModelMismatch { step }) => {
                    prop_assert_eq!(step, k + 1);
                    break;
                }
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }

    #[test]
    fn bounding_ball_contains_members(
        balls in prop::collection::vec((prop::collection::vec(-5.0f64..5.0, 2), 0.0f64..2.0), 1..6),
        dir in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let balls: Vec<Ball<f64>> = balls.into_iter().map(|(c, r)| Ball { center: c, radius: r }).collect();
        let bb = bounding_ball(&balls).unwrap();
        let nd = vec_ops::norm2(&dir).max(1e-9);
        for b in &balls {
            let edge = vec_ops::add(&b.center, &vec_ops::scale(&dir, b.radius / nd));
            prop_assert!(vec_ops::norm2(&vec_ops::sub(&edge, &bb.center)) <= bb.radius + 1e-12);
        }
    }

    #[test]
    fn condition_i_margin_is_symmetric(
        c1 in mat(3, 2), c2 in mat(3, 2), h1 in mat(3, 1), h2 in mat(3, 1), d1 in mat(3, 1), d2 in mat(3, 1),
    ) {
        let a = decompose(&linear_mode(c1, h1, d1)).unwrap();
        let b = decompose(&linear_mode(c2, h2, d2)).unwrap();
        let wab = separation_matrix(&a, &b).unwrap();
        let wba = separation_matrix(&b, &a).unwrap();
        let (sab, sba) = (sigma_min(&wab).unwrap(), sigma_min(&wba).unwrap());
        prop_assert!((sab - sba).abs() <= 1e-10 * (1.0 + sab));
    }
}
