use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use setobs_core::decomposition::{decompose, ModeDecomposition};
use setobs_core::gains::{synthesize_gains, ObserverGains};
use setobs_core::linalg::Mat;
use setobs_core::scenario::load_config;
use setobs_core::sdp::{assemble_sdp, parse_sdpa, Branch, SdpParameters, SdpProblem};
use setobs_core::system::{FieldDescriptor, ModeModel};

fn fixture_mode(name: &str, q: usize) -> (ModeModel<f64>, ModeDecomposition<f64>, ObserverGains<f64>) {
    let sys = load_config(name).unwrap().build_system().unwrap();
    let m = sys.modes[q].clone();
    let d = decompose(&m).unwrap();
    let g = synthesize_gains(q, &m, &d, sys.noise[q], None).unwrap();
    (m, d, g)
}

/// Reads the symmetric or full matrix variable `name` out of `x`.
fn var(p: &SdpProblem<f64>, x: &[f64], name: &str, rows: usize, cols: usize, sym: bool) -> Mat<f64> {
    let idx: HashMap<&str, usize> = p.variable_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    Mat::from_fn(rows, cols, |i, j| {
        let (a, b) = if sym && i > j { (j, i) } else { (i, j) };
        x[idx[format!("{name}[{},{}]", a + 1, b + 1).as_str()]]
    })
}

fn scalar(p: &SdpProblem<f64>, x: &[f64], name: &str) -> f64 {
    x[p.variable_names.iter().position(|n| n == name).unwrap()]
}

fn close(a: &Mat<f64>, b: &Mat<f64>) -> bool {
    a.shape() == b.shape() && (a - b).max_abs() <= 1e-10 * (1.0 + b.max_abs())
}

#[test]
fn sdpa_round_trip_and_symmetry() {
    for (name, q) in [("test_system_a", 0), ("test_system_a", 1), ("scenario1", 0), ("scenario1", 3)] {
        let (m, d, g) = fixture_mode(name, q);
        for branch in [Branch::A, Branch::B] {
            let p = assemble_sdp(&m, &d, &g, &SdpParameters::default(), branch).unwrap();
            let text = p.write_sdpa();
            assert_eq!(parse_sdpa(&text).unwrap(), p.to_sdpa(), "{name} mode {q}");
            for b in &p.blocks {
                assert!(b.f0.is_symmetric(0.0), "{}", b.label);
                assert!(b.coefficients.values().all(|c| c.is_symmetric(0.0)), "{}", b.label);
            }
            assert_eq!(p.lmi_groups, 8);
            assert_eq!(p.blocks.len(), 14);
            assert_eq!(p.objective.iter().filter(|&&c| c != 0.0).count(), 1);
            assert_eq!(scalar(&p, &p.objective, "rho2"), 1.0);
        }
    }
}

#[test]
fn blocks_match_direct_construction() {
    let (m, d, g) = fixture_mode("scenario1", 2);
    let params = SdpParameters::default();
    let p = assemble_sdp(&m, &d, &g, &params, Branch::A).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f64> = (0..p.variable_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let vals = p.evaluate(&x);

    let n = 2;
    let r = d.t2.rows();
    let l = d.t2.cols();
    let pm = var(&p, &x, "P", n, n, true);
    let gamma = var(&p, &x, "Gamma", r, r, true);
    let gamma_t = var(&p, &x, "GammaTilde", n, n, true);
    let qm = var(&p, &x, "Q", n, n, true);
    let y = var(&p, &x, "Y", n, r, false);
    let (rho2, kappa) = (scalar(&p, &x, "rho2"), scalar(&p, &x, "kappa"));
    let id = Mat::<f64>::identity(n);

    let y1 = &(&pm - &(&y * &d.c2)) * &g.phi;
    let m1 = &id.scale(-kappa) - &qm;
    let block1 = Mat::vstack(&[&Mat::hstack(&[&pm, &y1]), &Mat::hstack(&[&y1.transpose(), &m1])]);
    assert!(close(&vals[0], &block1));

    let y2 = -&(&y1 * &g.psi);
    let m2 = &(&id.scale(-kappa * m.lipschitz * m.lipschitz) + &pm.scale(1.0 - params.alpha)) - &gamma_t;
    let block2 = Mat::vstack(&[&Mat::hstack(&[&pm, &y2]), &Mat::hstack(&[&y2.transpose(), &m2])]);
    assert!(close(&vals[1], &block2));

    // Lower-right corner of the last LMI: I - eps2 Phi' C2' C2 Phi.
    let c2phi = &d.c2 * &g.phi;
    let n33 = &id - &(&c2phi.transpose() * &c2phi).scale(params.eps2);
    let k7 = vals[6].rows();
    assert!(close(&vals[6].block(k7 - n, n, k7 - n, n), &n33));

    // Upper-left corner N11.
    let s2 = 2f64.sqrt();
    let rm = Mat::hstack(&[
        &(&(&(&g.phi * &d.g1) * &g.m1) * &d.t1).scale(-s2),
        &(&g.phi * &m.w),
        &(&(&d.g2 * &g.m2) * &d.t2).scale(-s2),
    ]);
    let qq = Mat::hstack(&[&Mat::zeros(r, l), &Mat::zeros(r, m.noise_dim()), &d.t2.scale(-s2)]);
    let om = &(&d.c2 * &rm) - &qq;
    let ryo = &(&rm.transpose() * &y) * &om;
    let inv_eps = 1.0 / params.eps1 + 1.0 / params.eps2;
    let nn = rm.cols();
    let n11 = &(&(&(&Mat::identity(nn).scale(rho2) + &ryo) + &ryo.transpose()) - &(&(&rm.transpose() * &pm) * &rm))
        - &(&(&om.transpose() * &(&gamma + &Mat::identity(r).scale(inv_eps))) * &om);
    assert!(close(&vals[6].block(0, nn, 0, nn), &n11));

    // Branch A linear constraints at this point.
    let lp = vals.last().unwrap();
    let (k1, k2) = (scalar(&p, &x, "kappa1"), scalar(&p, &x, "kappa2"));
    assert!((lp[(4, 4)] - (k1 - 1.0)).abs() < 1e-15);
    assert!((lp[(5, 5)] - (1.0 - params.margin - (k2 - k1))).abs() < 1e-15);
}

#[test]
fn branch_constraints_separate_kappa_regions() {
    let (m, d, g) = fixture_mode("test_system_a", 0);
    let a = assemble_sdp(&m, &d, &g, &SdpParameters::default(), Branch::A).unwrap();
    let b = assemble_sdp(&m, &d, &g, &SdpParameters::default(), Branch::B).unwrap();
    let point = |p: &SdpProblem<f64>, k1: f64, k2: f64| {
        let mut x = vec![0.0; p.variable_count()];
        for (name, v) in [("rho2", 1.0), ("kappa", 1.0), ("kappa1", k1), ("kappa2", k2)] {
            x[p.variable_names.iter().position(|n| n == name).unwrap()] = v;
        }
        let lp = p.evaluate(&x).pop().unwrap();
        (0..lp.rows()).all(|i| lp[(i, i)] >= 0.0)
    };
    assert!(point(&a, 1.2, 1.5));
    assert!(!point(&b, 1.2, 1.5));
    assert!(point(&b, 0.7, 0.9));
    assert!(!point(&a, 0.7, 0.9));
}

#[test]
fn full_rank_feedthrough_annotates_empty_blocks() {
    let m = ModeModel::new(
        FieldDescriptor::Linear { a: Mat::<f64>::identity(2).scale(0.5) },
        Mat::zeros(2, 0),
        Mat::identity(2),
        Mat::identity(2),
        Mat::zeros(2, 0),
        Mat::identity(2),
        None,
        None,
    )
    .unwrap();
    let d = decompose(&m).unwrap();
    let g = synthesize_gains(0, &m, &d, setobs_core::system::NoiseBounds { eta_w: 0.1, eta_v: 0.1 }, None).unwrap();
    let p = assemble_sdp(&m, &d, &g, &SdpParameters::default(), Branch::A).unwrap();
    assert!(!p.omitted.is_empty());
    let text = p.write_sdpa();
    assert!(text.contains("* empty block omitted"));
    assert_eq!(parse_sdpa(&text).unwrap(), p.to_sdpa());
}

#[test]
fn parser_rejects_truncated_input() {
    assert!(parse_sdpa("* only a comment\n").is_err());
    assert!(parse_sdpa("2\n1\n2\n1.0\n").is_err());
    assert!(parse_sdpa("1\n1\n2\n1.0\n1 1 1\n").is_err());
}
