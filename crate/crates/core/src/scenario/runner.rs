//! Plant simulation and the estimation loop over a horizon.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{matrix, GainsConfig, InputSignal, ScenarioConfig};
use crate::decomposition::{decompose, ModeDecomposition};
use crate::error::{Error, Result};
use crate::gains::{heuristic_gain, metric_factor_from_p, synthesize_gains_with_metric, GainSummary, ObserverGains};
use crate::linalg::vec_ops;
use crate::mode_estimator::{eliminate, fuse, Ball, EstimateSnapshot, ModeEstimate, ModeSet, ResidualTest};
use crate::observer::{init, step, ObserverState};
use crate::residual::{compute_residual, threshold_table, ThresholdPolicy, ThresholdTable};
use crate::system::{simulate_plant, SwitchedSystem};
use crate::tuning::{tune_gains, TuneOptions};

/// Relative slack used when counting radius violations, to absorb rounding.
const CONTAINMENT_SLACK: f64 = 1e-9;

/// Everything that does not depend on the random draws: the system, the
/// decompositions, the gains and the threshold tables.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: ScenarioConfig,
    pub system: SwitchedSystem<f64>,
    pub decompositions: Vec<ModeDecomposition<f64>>,
    pub gains: Vec<ObserverGains<f64>>,
    pub thresholds: Vec<ThresholdTable<f64>>,
}

impl Prepared {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        let system = config.build_system()?;
        let decompositions = system.modes.iter().map(decompose).collect::<Result<Vec<_>>>()?;
        let gains = build_gains(&config, &system, &decompositions)?;
        if !config.allow_uncertified {
            if let Some((q, g)) = gains.iter().enumerate().find(|(_, g)| !g.certified()) {
                return Err(Error::Uncertified { mode: q, theta: g.theta });
            }
        }
        let policy = ThresholdPolicy { max_vertices: config.inf_bound_max_vertices, use_vertex_bound: true };
        let thresholds = gains
            .par_iter()
            .zip(&decompositions)
            .map(|(g, d)| threshold_table(g, d, system.delta_x0, config.horizon, &policy))
            .collect::<Result<Vec<_>>>()?;
        Ok(Prepared { config, system, decompositions, gains, thresholds })
    }

    /// True when every mode's radii are guaranteed.
    pub fn guaranteed(&self) -> bool {
        self.gains.iter().all(ObserverGains::certified)
    }
}

/// Gains for every mode as configured.
pub fn build_gains(
    config: &ScenarioConfig,
    system: &SwitchedSystem<f64>,
    decs: &[ModeDecomposition<f64>],
) -> Result<Vec<ObserverGains<f64>>> {
    if let Some(user) = config.user_gains()? {
        return user
            .iter()
            .enumerate()
            .map(|(q, ug)| {
                let l = matrix(&format!("gain {} l_tilde", q + 1), &ug.l_tilde)?;
                let s = match &ug.metric_p {
                    Some(p) => Some(metric_factor_from_p(&matrix(&format!("gain {} metric_p", q + 1), p)?)?),
                    None => None,
                };
                synthesize_gains_with_metric(q, &system.modes[q], &decs[q], system.noise[q], Some(&l), s.as_ref())
            })
            .collect();
    }
    let GainsConfig::Heuristic { refine, tune_seed } = config.gains else {
        unreachable!("user gains handled above")
    };
    (0..system.mode_count())
        .map(|q| {
            let (mode, dec, noise) = (&system.modes[q], &decs[q], system.noise[q]);
            if refine {
                let opts = TuneOptions { seed: tune_seed, ..TuneOptions::default() };
                tune_gains(q, mode, dec, noise, &opts)
            } else {
                let l = heuristic_gain(dec)?;
                synthesize_gains_with_metric(q, mode, dec, noise, Some(&l), None)
            }
        })
        .collect()
}

/// Uniform sample from the Euclidean ball of radius `r` in `dim` dimensions.
pub fn sample_ball<R: Rng>(rng: &mut R, r: f64, dim: usize) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    let dir = unit_vector(rng, dim);
    let u: f64 = rng.random();
    vec_ops::scale(&dir, r * u.powf(1.0 / dim as f64))
}

fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let nrm = vec_ops::norm2(&g);
        if nrm > 1e-12 {
            return vec_ops::scale(&g, 1.0 / nrm);
        }
    }
}

fn mix_seed(base: u64, seed: u64) -> u64 {
    base ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17)
}

/// Generator of the unknown input `d_k`.
struct InputGenerator {
    signal: InputSignal,
    rng: ChaCha8Rng,
    direction: Vec<f64>,
    p: usize,
}

impl InputGenerator {
    fn new(signal: &InputSignal, p: usize, seed_override: Option<u64>) -> Result<Self> {
        let base = match signal {
            InputSignal::BoundedRandom { seed, .. } | InputSignal::GrowingRamp { seed, .. } => *seed,
            InputSignal::Sequence { values } => {
                if let Some(v) = values.iter().find(|v| v.len() != p) {
                    return Err(Error::Config(format!(
                        "input sequence entry has length {}, expected {p}",
                        v.len()
                    )));
                }
                0
            }
        };
        let seed = seed_override.map_or(base, |s| mix_seed(base, s));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let direction = match signal {
            InputSignal::GrowingRamp { .. } if p > 0 => unit_vector(&mut rng, p),
            _ => vec![0.0; p],
        };
        Ok(InputGenerator { signal: signal.clone(), rng, direction, p })
    }

    fn at(&mut self, k: usize) -> Vec<f64> {
        match &self.signal {
            InputSignal::BoundedRandom { bound, .. } => sample_ball(&mut self.rng, *bound, self.p),
            InputSignal::GrowingRamp { rate, .. } => vec_ops::scale(&self.direction, rate * k as f64),
            InputSignal::Sequence { values } => values[k % values.len()].clone(),
        }
    }
}

fn known_input(config: &ScenarioConfig, k: usize) -> Vec<f64> {
    match &config.known_input {
        Some(ki) if !ki.values.is_empty() => ki.values[k % ki.values.len()].clone(),
        _ => vec![0.0; config.inputs],
    }
}

/// Per-mode record of one step. Fields other than `eliminated` are `None`
/// once the mode is out.
#[derive(Clone, Debug, Serialize)]
pub struct ModeStep {
    pub residual: Option<f64>,
    pub delta_tri: Option<f64>,
    pub delta_inf: Option<f64>,
    pub delta_hat: Option<f64>,
    pub eliminated: bool,
    pub x_hat: Option<Vec<f64>>,
    pub x_star: Option<Vec<f64>>,
    pub delta_x: Option<f64>,
    /// Estimate of `d_{k-1}`.
    pub d_hat: Option<Vec<f64>>,
    pub delta_d: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub k: usize,
    pub x: Vec<f64>,
    /// `d_{k-1}`, aligned with the input estimates; absent at `k = 0`.
    pub d_prev: Option<Vec<f64>>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub surviving: usize,
    pub modes: Vec<ModeStep>,
    pub fused: EstimateSnapshot<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Completed,
    ModelMismatch { step: usize },
}

/// Counts of broken guarantees for the true mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Violations {
    pub true_mode_eliminated: usize,
    pub state_radius: usize,
    pub input_radius: usize,
    pub threshold: usize,
}

impl Violations {
    pub fn total(&self) -> usize {
        self.true_mode_eliminated + self.state_radius + self.input_radius + self.threshold
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunArtifacts {
    pub name: String,
    pub noise_seed: u64,
    /// Zero-based.
    pub true_mode: usize,
    pub horizon: usize,
    pub outcome: Outcome,
    pub guaranteed: bool,
    pub modes: ModeSet,
    pub steps: Vec<StepRecord>,
    pub gains: Vec<GainSummary>,
}

impl RunArtifacts {
    pub fn violations(&self) -> Violations {
        let q = self.true_mode;
        let mut v = Violations::default();
        let over = |err: f64, r: f64| err > r + CONTAINMENT_SLACK * (1.0 + r);
        for s in &self.steps {
            let m = &s.modes[q];
            if m.eliminated {
                v.true_mode_eliminated += 1;
                continue;
            }
            if let (Some(xh), Some(dx)) = (&m.x_hat, m.delta_x) {
                if over(vec_ops::norm2(&vec_ops::sub(&s.x, xh)), dx) {
                    v.state_radius += 1;
                }
            }
            if let (Some(dh), Some(dd), Some(d)) = (&m.d_hat, m.delta_d, &s.d_prev) {
                if over(vec_ops::norm2(&vec_ops::sub(d, dh)), dd) {
                    v.input_radius += 1;
                }
            }
            if let (Some(r), Some(t)) = (m.residual, m.delta_hat) {
                if r > t {
                    v.threshold += 1;
                }
            }
        }
        v
    }

    pub fn surviving_counts(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.surviving).collect()
    }
}

fn mode_step(st: &ObserverState<f64>) -> ModeStep {
    ModeStep {
        residual: None,
        delta_tri: None,
        delta_inf: None,
        delta_hat: None,
        eliminated: false,
        x_hat: Some(st.x_hat.clone()),
        x_star: Some(st.x_star.clone()),
        delta_x: Some(st.delta_x),
        d_hat: st.d_hat_prev.clone(),
        delta_d: st.delta_d_prev,
    }
}

fn estimates(states: &BTreeMap<usize, ObserverState<f64>>) -> BTreeMap<usize, ModeEstimate<f64>> {
    states
        .iter()
        .map(|(&q, s)| {
            let input = match (&s.d_hat_prev, s.delta_d_prev) {
                (Some(c), Some(r)) => Some(Ball { center: c.clone(), radius: r }),
                _ => None,
            };
            (q, ModeEstimate { state: Ball { center: s.x_hat.clone(), radius: s.delta_x }, input })
        })
        .collect()
}

/// Runs the estimator on one simulated trajectory. `seed` overrides the
/// configured noise seed and is mixed into the input seed.
pub fn simulate(prepared: &Prepared, seed: Option<u64>) -> Result<RunArtifacts> {
    let cfg = &prepared.config;
    let sys = &prepared.system;
    let qs = cfg.true_mode_index();
    let plant = &sys.modes[qs];
    let dims = plant.dims();
    let noise_bound = sys.noise[qs];
    let noise_seed = seed.unwrap_or(cfg.noise.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut input = InputGenerator::new(&cfg.input, dims.p, seed)?;
    let allow = cfg.allow_uncertified;

    let mut x = match &cfg.initial.x0 {
        Some(x0) if x0.len() == dims.n => x0.clone(),
        Some(x0) => {
            return Err(Error::Config(format!("initial.x0 has length {}, expected {}", x0.len(), dims.n)))
        }
        None => vec_ops::add(&sys.x_hat0, &sample_ball(&mut rng, sys.delta_x0, dims.n)),
    };
    let mut d = input.at(0);
    let mut u = known_input(cfg, 0);
    if u.len() != dims.m {
        return Err(Error::Config(format!("known input has length {}, expected {}", u.len(), dims.m)));
    }
    let v = sample_ball(&mut rng, noise_bound.eta_v, dims.l);
    let (_, y) = simulate_plant(plant, &x, &u, &d, &vec![0.0; plant.noise_dim()], &v);

    let mut states = BTreeMap::new();
    for q in 0..sys.mode_count() {
        let st = init(sys, q, &prepared.decompositions[q], &prepared.gains[q], &u, &y, allow)?;
        states.insert(q, st);
    }
    let mut modes = ModeSet::all(sys.mode_count());
    let mut steps = Vec::with_capacity(cfg.horizon + 1);
    steps.push(StepRecord {
        k: 0,
        x: x.clone(),
        d_prev: None,
        u: u.clone(),
        y: y.clone(),
        surviving: modes.len(),
        modes: (0..sys.mode_count()).map(|q| mode_step(&states[&q])).collect(),
        fused: fuse(0, &modes, &estimates(&states)),
    });

    let mut outcome = Outcome::Completed;
    for k in 1..=cfg.horizon {
        let w = sample_ball(&mut rng, noise_bound.eta_w, plant.noise_dim());
        let (x_next, _) = simulate_plant(plant, &x, &u, &d, &w, &vec![0.0; dims.l]);
        x = x_next;
        let u_prev = std::mem::replace(&mut u, known_input(cfg, k));
        let d_prev = std::mem::replace(&mut d, input.at(k));
        let v = sample_ball(&mut rng, noise_bound.eta_v, dims.l);
        let (_, y) = simulate_plant(plant, &x, &u, &d, &vec![0.0; plant.noise_dim()], &v);

        let active: Vec<usize> = modes.surviving.iter().copied().collect();
        let updated = active
            .par_iter()
            .map(|&q| {
                let dec = &prepared.decompositions[q];
                let gains = &prepared.gains[q];
                let st = step(&states[&q], &sys.modes[q], dec, gains, &u_prev, &u, &y)?;
                let r = vec_ops::norm2(&compute_residual(dec, &st.x_star, &u, &y));
                let th = *prepared.thresholds[q].get(k)?;
                Ok((q, st, r, th))
            })
            .collect::<Result<Vec<_>>>()?;

        let tests: Vec<ResidualTest<f64>> = updated
            .iter()
            .map(|(q, _, r, th)| ResidualTest { mode: *q, residual_norm: *r, threshold: th.delta_hat })
            .collect();
        let mut records: Vec<ModeStep> = (0..sys.mode_count())
            .map(|_| ModeStep {
                residual: None,
                delta_tri: None,
                delta_inf: None,
                delta_hat: None,
                eliminated: true,
                x_hat: None,
                x_star: None,
                delta_x: None,
                d_hat: None,
                delta_d: None,
            })
            .collect();
        for (q, st, r, th) in updated {
            let mut rec = mode_step(&st);
            rec.residual = Some(r);
            rec.delta_tri = Some(th.delta_tri);
            rec.delta_inf = th.delta_inf;
            rec.delta_hat = Some(th.delta_hat);
            records[q] = rec;
            states.insert(q, st);
        }
        let next = match eliminate(&modes, &tests, k) {
            Ok(m) => m,
            Err(Error::ModelMismatch { step }) => {
                outcome = Outcome::ModelMismatch { step };
                let mut m = modes.clone();
                for t in &tests {
                    m.surviving.remove(&t.mode);
                    m.eliminated_at.insert(t.mode, k);
                }
                m
            }
            Err(e) => return Err(e),
        };
        for (q, rec) in records.iter_mut().enumerate() {
            rec.eliminated = !next.contains(q);
        }
        states.retain(|q, _| next.contains(*q));
        modes = next;
        steps.push(StepRecord {
            k,
            x: x.clone(),
            d_prev: Some(d_prev),
            u: u.clone(),
            y,
            surviving: modes.len(),
            modes: records,
            fused: fuse(k, &modes, &estimates(&states)),
        });
        if outcome != Outcome::Completed {
            break;
        }
    }

    Ok(RunArtifacts {
        name: cfg.name.clone().unwrap_or_else(|| "scenario".into()),
        noise_seed,
        true_mode: qs,
        horizon: cfg.horizon,
        outcome,
        guaranteed: prepared.guaranteed(),
        modes,
        steps,
        gains: prepared.gains.iter().map(ObserverGains::summary).collect(),
    })
}
