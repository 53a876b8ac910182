//! Search over the output gain `L` and a lower-triangular metric factor `S`
//! minimising the steady-state state radius `|S^{-1}| eta_bar / (1 - theta)`.
//!
//! The search starts from the pseudoinverse gain with `S = I` and from
//! seeded random points, each refined by Nelder-Mead. Runs are independent
//! and combined in start order, so the result is deterministic.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::decomposition::ModeDecomposition;
use crate::error::{Error, Result};
use crate::gains::{heuristic_gain, synthesize_gains_with_metric, ObserverGains};
use crate::linalg::Mat;
use crate::scalar::Scalar;
use crate::system::{ModeModel, NoiseBounds};

/// Objective value assigned to gains whose recursion does not contract.
const DIVERGENT_PENALTY: f64 = 1e6;
const CONTRACTION_LIMIT: f64 = 0.999;

#[derive(Clone, Debug, PartialEq)]
pub struct TuneOptions {
    pub random_starts: usize,
    pub max_iters: u64,
    pub seed: u64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions { random_starts: 20, max_iters: 4000, seed: 0 }
    }
}

#[derive(Clone)]
struct Problem<'a> {
    q: usize,
    mode: &'a ModeModel<f64>,
    dec: &'a ModeDecomposition<f64>,
    noise: NoiseBounds<f64>,
    n: usize,
    r: usize,
}

impl Problem<'_> {
    fn unpack(&self, x: &[f64]) -> (Mat<f64>, Mat<f64>) {
        let (n, r) = (self.n, self.r);
        let l = Mat::from_vec(n, r, x[..n * r].to_vec()).expect("gain length");
        let mut s = Mat::zeros(n, n);
        let mut idx = n * r;
        for i in 0..n {
            for j in 0..=i {
                s[(i, j)] = if i == j { x[idx].exp() } else { x[idx] };
                idx += 1;
            }
        }
        (l, s)
    }

    fn gains(&self, x: &[f64]) -> Result<ObserverGains<f64>> {
        let (l, s) = self.unpack(x);
        synthesize_gains_with_metric(self.q, self.mode, self.dec, self.noise, Some(&l), Some(&s))
    }

    fn objective(&self, x: &[f64]) -> f64 {
        match self.gains(x) {
            Ok(g) if g.theta.is_finite() && g.theta < CONTRACTION_LIMIT => {
                let v = g.metric_inv_norm() * g.eta_bar / (1.0 - g.theta);
                if v.is_finite() {
                    v
                } else {
                    DIVERGENT_PENALTY
                }
            }
            Ok(g) if g.theta.is_finite() => DIVERGENT_PENALTY + g.theta.min(DIVERGENT_PENALTY),
            _ => 2.0 * DIVERGENT_PENALTY,
        }
    }
}

impl CostFunction for Problem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> Result<f64, argmin::core::Error> {
        Ok(self.objective(x))
    }
}

/// Initial simplex: each coordinate perturbed by 5% of its value, or by
/// 0.00025 when it is zero.
fn simplex(x0: &[f64]) -> Vec<Vec<f64>> {
    let mut pts = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut p = x0.to_vec();
        p[i] = if p[i] != 0.0 { p[i] * 1.05 } else { 0.00025 };
        pts.push(p);
    }
    pts
}

fn refine(problem: &Problem<'_>, x0: Vec<f64>, max_iters: u64) -> (f64, Vec<f64>) {
    let start_cost = problem.objective(&x0);
    let solver = NelderMead::new(simplex(&x0));
    let run = solver
        .with_sd_tolerance(1e-12)
        .map_err(|e| e.to_string())
        .and_then(|s| {
            Executor::new(problem.clone(), s)
                .configure(|st| st.max_iters(max_iters))
                .run()
                .map_err(|e| e.to_string())
        });
    match run {
        Ok(res) => {
            let st = res.state();
            match st.get_best_param() {
                Some(p) if st.get_best_cost() <= start_cost => (st.get_best_cost(), p.clone()),
                _ => (start_cost, x0),
            }
        }
        Err(_) => (start_cost, x0),
    }
}

/// Tunes `(L, S)` for mode `q`. The returned gains are certified whenever any
/// start reached a contracting recursion.
pub fn tune_gains<T: Scalar>(
    q: usize,
    mode: &ModeModel<T>,
    dec: &ModeDecomposition<T>,
    noise: NoiseBounds<T>,
    opts: &TuneOptions,
) -> Result<ObserverGains<T>> {
    let mode64 = mode.cast::<f64>();
    let dec64 = crate::decomposition::decompose(&mode64)?;
    let noise64 = NoiseBounds { eta_w: noise.eta_w.as_f64(), eta_v: noise.eta_v.as_f64() };
    let n = mode64.dims().n;
    let r = dec64.z2_dim();
    let problem = Problem { q, mode: &mode64, dec: &dec64, noise: noise64, n, r };

    let dim = n * r + n * (n + 1) / 2;
    let mut seeded = heuristic_gain(&dec64)?.as_slice().to_vec();
    seeded.resize(dim, 0.0);
    let mut starts = vec![seeded];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (q as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    for _ in 0..opts.random_starts {
        starts.push((0..dim).map(|_| StandardNormal.sample(&mut rng)).collect());
    }
    let results: Vec<(f64, Vec<f64>)> =
        starts.into_par_iter().map(|x0| refine(&problem, x0, opts.max_iters)).collect();
    let (_, best) = results
        .into_iter()
        .fold(None::<(f64, Vec<f64>)>, |acc, cur| match acc {
            Some(a) if a.0 <= cur.0 => Some(a),
            _ => Some(cur),
        })
        .ok_or_else(|| Error::Synthesis { mode: q, reason: "no tuning start".into() })?;
    let (l, s) = problem.unpack(&best);
    synthesize_gains_with_metric(q, mode, dec, noise, Some(&l.cast()), Some(&s.cast()))
}
