use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::problem::State;

/// One time-sample of a driving trajectory. `u` is the setting applied from
/// `t` until the next sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub u: f64,
}

impl Sample {
    pub fn state(&self) -> State {
        State {
            x: self.x,
            v: self.v,
            t: self.t,
        }
    }
}

/// Time-sampled path with the instants at which the applied setting changes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    samples: Vec<Sample>,
    switching_times: Vec<f64>,
}

impl Trajectory {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| !(s.v >= 0.0)) {
            return Err(Error::domain(format!("negative speed {} at t = {}", s.v, s.t)));
        }
        Self::candidate(samples)
    }

    /// Like [`Trajectory::new`] but accepts negative speeds, so that a
    /// candidate violating `x2 >= 0` can still be handed to the checkers.
    pub fn candidate(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::argument("trajectory needs at least one sample"));
        }
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::argument(format!(
                    "sample times must be strictly increasing ({} then {})",
                    w[0].t, w[1].t
                )));
            }
        }
        if let Some(s) = samples.iter().find(|s| !s.x.is_finite() || !s.v.is_finite()) {
            return Err(Error::domain(format!("non-finite state at t = {}", s.t)));
        }
        if let Some(s) = samples.iter().find(|s| s.u.abs() > 1.0 + 1e-12) {
            return Err(Error::Admissibility(s.u));
        }
        let switching_times = samples
            .windows(2)
            .filter(|w| w[1].u != w[0].u)
            .map(|w| w[1].t)
            .collect();
        Ok(Self {
            samples,
            switching_times,
        })
    }

    /// Builds a trajectory without validation; the caller guarantees the invariants.
    pub(crate) fn from_valid(samples: Vec<Sample>) -> Self {
        debug_assert!(!samples.is_empty());
        let switching_times = samples
            .windows(2)
            .filter(|w| w[1].u != w[0].u)
            .map(|w| w[1].t)
            .collect();
        Self {
            samples,
            switching_times,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn switching_times(&self) -> &[f64] {
        &self.switching_times
    }

    /// Positions at the switching instants, `x^0 < x^1 < ...` of a piecewise-constant plan.
    pub fn switching_positions(&self) -> Vec<f64> {
        self.samples
            .windows(2)
            .filter(|w| w[1].u != w[0].u)
            .map(|w| w[1].x)
            .collect()
    }

    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        &self.samples[self.samples.len() - 1]
    }

    pub fn final_state(&self) -> State {
        self.last().state()
    }

    /// Indices of samples within `radius` samples of a control switch.
    pub fn near_switch_mask(&self, radius: usize) -> Vec<bool> {
        let n = self.samples.len();
        let mut mask = vec![false; n];
        for i in 1..n {
            if self.samples[i].u != self.samples[i - 1].u {
                let lo = i.saturating_sub(radius + 1);
                let hi = (i + radius).min(n - 1);
                mask[lo..=hi].iter_mut().for_each(|m| *m = true);
            }
        }
        mask
    }

    /// Replaces the controls on `[from, to)` sample indices, keeping states.
    /// Used to construct corrupted candidates for verification tests.
    pub fn with_controls_replaced(&self, from: usize, to: usize, u: f64) -> Result<Self> {
        if from > to || to > self.samples.len() {
            return Err(Error::argument("replacement span out of range"));
        }
        let mut samples = self.samples.clone();
        samples[from..to].iter_mut().for_each(|s| s.u = u);
        Self::new(samples)
    }
}
