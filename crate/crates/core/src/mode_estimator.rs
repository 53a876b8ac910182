//! Mode elimination and fusion of per-mode set estimates.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::vec_ops;
use crate::scalar::Scalar;

/// Euclidean ball.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ball<T> {
    pub center: Vec<T>,
    pub radius: T,
}

impl<T: Scalar> Ball<T> {
    pub fn contains(&self, x: &[T]) -> bool {
        vec_ops::norm2(&vec_ops::sub(x, &self.center)) <= self.radius
    }
}

/// Smallest ball centred at the centroid of the centres that contains every
/// ball of the family; `None` for an empty family.
pub fn bounding_ball<T: Scalar>(balls: &[Ball<T>]) -> Option<Ball<T>> {
    let first = balls.first()?;
    let mut c = vec![T::zero(); first.center.len()];
    for b in balls {
        c = vec_ops::add(&c, &b.center);
    }
    let c = vec_ops::scale(&c, T::one() / T::from_usize_lossy(balls.len()));
    let radius = balls
        .iter()
        .map(|b| vec_ops::norm2(&vec_ops::sub(&b.center, &c)) + b.radius)
        .fold(T::zero(), T::max);
    Some(Ball { center: c, radius })
}

/// Surviving modes (zero-based) and the step at which each other mode was
/// eliminated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModeSet {
    pub surviving: BTreeSet<usize>,
    pub eliminated_at: BTreeMap<usize, usize>,
}

impl ModeSet {
    pub fn all(count: usize) -> Self {
        ModeSet { surviving: (0..count).collect(), eliminated_at: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.surviving.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surviving.is_empty()
    }

    pub fn contains(&self, q: usize) -> bool {
        self.surviving.contains(&q)
    }
}

/// Residual norm and threshold of one surviving mode at step `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualTest<T> {
    pub mode: usize,
    pub residual_norm: T,
    pub threshold: T,
}

impl<T: Scalar> ResidualTest<T> {
    /// Strict comparison: equality keeps the mode.
    pub fn rejects(&self) -> bool {
        self.residual_norm > self.threshold
    }
}

/// Removes every tested mode whose residual exceeds its threshold. Modes not
/// in `prev.surviving` are ignored, so eliminated modes never return. An
/// empty result is a model mismatch.
pub fn eliminate<T: Scalar>(prev: &ModeSet, tests: &[ResidualTest<T>], k: usize) -> Result<ModeSet> {
    let mut next = prev.clone();
    for t in tests {
        if prev.contains(t.mode) && t.rejects() {
            next.surviving.remove(&t.mode);
            next.eliminated_at.insert(t.mode, k);
        }
    }
    if next.is_empty() {
        return Err(Error::ModelMismatch { step: k });
    }
    Ok(next)
}

/// Set estimates of one mode at step `k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeEstimate<T> {
    pub state: Ball<T>,
    /// Estimate of `d_{k-1}`; absent at `k = 0`.
    pub input: Option<Ball<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateSnapshot<T> {
    pub k: usize,
    pub modes: ModeSet,
    pub states: Vec<Ball<T>>,
    pub inputs: Vec<Ball<T>>,
    pub state_bound: Option<Ball<T>>,
    pub input_bound: Option<Ball<T>>,
}

/// Union of the surviving modes' balls, kept as a list, plus its bounding ball.
pub fn fuse<T: Scalar>(k: usize, modes: &ModeSet, estimates: &BTreeMap<usize, ModeEstimate<T>>) -> EstimateSnapshot<T> {
    let states: Vec<Ball<T>> =
        modes.surviving.iter().filter_map(|q| estimates.get(q)).map(|e| e.state.clone()).collect();
    let inputs: Vec<Ball<T>> =
        modes.surviving.iter().filter_map(|q| estimates.get(q)).filter_map(|e| e.input.clone()).collect();
    EstimateSnapshot {
        k,
        modes: modes.clone(),
        state_bound: bounding_ball(&states),
        input_bound: bounding_ball(&inputs),
        states,
        inputs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(mode: usize, r: f64, th: f64) -> ResidualTest<f64> {
        ResidualTest { mode, residual_norm: r, threshold: th }
    }

    #[test]
    fn equality_keeps_mode() {
        let s = eliminate(&ModeSet::all(2), &[t(0, 1.0, 1.0), t(1, 1.1, 1.0)], 3).unwrap();
        assert!(s.contains(0) && !s.contains(1));
        assert_eq!(s.eliminated_at.get(&1), Some(&3));
    }

    #[test]
    fn eliminated_modes_stay_out() {
        let s = eliminate(&ModeSet::all(2), &[t(1, 2.0, 1.0)], 1).unwrap();
        let s = eliminate(&s, &[t(1, 0.0, 1.0)], 2).unwrap();
        assert!(!s.contains(1));
    }

    #[test]
    fn empty_set_is_mismatch() {
        let r = eliminate(&ModeSet::all(1), &[t(0, 2.0, 1.0)], 5);
        assert!(matches!(r, Err(Error::ModelMismatch { step: 5 })));
    }

    #[test]
    fn bounding_ball_covers_members() {
        let balls = vec![
            Ball { center: vec![0.0, 0.0], radius: 1.0 },
            Ball { center: vec![4.0, 0.0], radius: 0.5 },
        ];
        let b = bounding_ball(&balls).unwrap();
        assert_eq!(b.center, vec![2.0, 0.0]);
        assert_eq!(b.radius, 3.0);
    }
}
