//! Trip constraints, control settings and the assembled problem instance.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::vehicle::VehicleParams;

/// Tolerance used when checking `|u| <= 1`.
pub(crate) const ADMISSIBILITY_EPS: f64 = 1e-12;

/// Finite, ordered set of admissible control settings `-1 = u1 < ... < un = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ControlSet {
    settings: Vec<f64>,
}

impl ControlSet {
    pub fn new(settings: Vec<f64>) -> Result<Self> {
        if settings.len() < 2 {
            return Err(Error::argument("control set needs at least two settings"));
        }
        if settings.first() != Some(&-1.0) || settings.last() != Some(&1.0) {
            return Err(Error::argument("control set must start at -1 and end at +1"));
        }
        for w in settings.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::argument(format!(
                    "control settings must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if !settings.contains(&0.0) {
            return Err(Error::argument("control set must contain the coast setting 0"));
        }
        Ok(Self { settings })
    }

    /// Power, coast and brake only.
    pub fn three_level() -> Self {
        Self {
            settings: vec![-1.0, 0.0, 1.0],
        }
    }

    pub fn settings(&self) -> &[f64] {
        &self.settings
    }

    pub fn len(&self) -> usize {
        self.settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.settings.get(index).copied()
    }

    pub fn index_of(&self, u: f64) -> Option<usize> {
        self.settings.iter().position(|&s| s == u)
    }

    /// Setting indices in argmin tie-break order: smallest `|u|` first, then smaller `u`.
    pub fn tie_break_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.settings.len()).collect();
        order.sort_by(|&i, &j| {
            let (a, b) = (self.settings[i], self.settings[j]);
            a.abs().total_cmp(&b.abs()).then(a.total_cmp(&b))
        });
        order
    }
}

impl Default for ControlSet {
    fn default() -> Self {
        Self::three_level()
    }
}

/// Piecewise-constant speed limits `M_j` on `(X_{j-1}, X_j)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedLimitProfile {
    boundaries: Vec<f64>,
    limits: Vec<f64>,
}

impl SpeedLimitProfile {
    pub fn new(boundaries: Vec<f64>, limits: Vec<f64>) -> Result<Self> {
        if limits.is_empty() || boundaries.len() != limits.len() + 1 {
            return Err(Error::argument(format!(
                "speed-limit profile needs p + 1 boundaries for p limits (got {} and {})",
                boundaries.len(),
                limits.len()
            )));
        }
        if boundaries[0] != 0.0 {
            return Err(Error::argument("first speed-limit boundary must be 0"));
        }
        for w in boundaries.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::argument(format!(
                    "speed-limit boundaries must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if let Some(bad) = limits.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
            return Err(Error::argument(format!("speed limits must be positive, got {bad}")));
        }
        Ok(Self { boundaries, limits })
    }

    pub fn uniform(length: f64, limit: f64) -> Result<Self> {
        Self::new(vec![0.0, length], vec![limit])
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn limits(&self) -> &[f64] {
        &self.limits
    }

    pub fn segment_count(&self) -> usize {
        self.limits.len()
    }

    /// Limit in force at `x`; positions outside `[0, L]` take the nearest segment.
    #[inline]
    pub fn limit_at(&self, x: f64) -> f64 {
        if self.limits.len() == 1 {
            return self.limits[0];
        }
        let interior = &self.boundaries[1..self.boundaries.len() - 1];
        let idx = interior.partition_point(|&b| b <= x);
        self.limits[idx]
    }

    pub fn max_limit(&self) -> f64 {
        self.limits.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn min_limit(&self) -> f64 {
        self.limits.iter().copied().fold(f64::MAX, f64::min)
    }

    pub fn with_limit(&self, segment: usize, limit: f64) -> Result<Self> {
        if segment >= self.limits.len() {
            return Err(Error::argument(format!(
                "speed-limit segment {segment} out of range (profile has {})",
                self.limits.len()
            )));
        }
        let mut limits = self.limits.clone();
        limits[segment] = limit;
        Self::new(self.boundaries.clone(), limits)
    }
}

/// Trip length, horizon, boundary speeds and speed limits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripSpec {
    /// Trip length `L` (m).
    pub length: f64,
    /// Horizon `T` (s).
    pub horizon: f64,
    /// Initial speed `v1` (m/s).
    pub v_start: f64,
    /// Required terminal speed `v2` (m/s).
    pub v_end: f64,
    pub speed_limits: SpeedLimitProfile,
}

impl TripSpec {
    pub fn new(length: f64, horizon: f64, v_start: f64, v_end: f64, speed_limits: SpeedLimitProfile) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::argument(format!("trip length must be positive, got {length}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::argument(format!("horizon must be positive, got {horizon}")));
        }
        if !(v_start >= 0.0) || !(v_end >= 0.0) {
            return Err(Error::argument("boundary speeds must be >= 0"));
        }
        let last = *speed_limits.boundaries().last().unwrap_or(&0.0);
        if (last - length).abs() > 1e-9 * length.max(1.0) {
            return Err(Error::argument(format!(
                "last speed-limit boundary ({last}) must equal the trip length ({length})"
            )));
        }
        Ok(Self {
            length,
            horizon,
            v_start,
            v_end,
            speed_limits,
        })
    }

    /// Rest-to-rest trip under a single speed limit.
    pub fn rest_to_rest(length: f64, horizon: f64, limit: f64) -> Result<Self> {
        Self::new(length, horizon, 0.0, 0.0, SpeedLimitProfile::uniform(length, limit)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Running cost `[u]_+ v`.
    #[default]
    Fuel,
}

/// Soft-constraint weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenaltyWeights {
    /// Terminal weight `kappa` on `|x1 - L|/L + |x2 - v2|/V_max`.
    pub terminal: f64,
    /// Running weight `rho` on `max(0, v - M(x))^2`.
    pub speed_limit: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self {
            terminal: 0.0,
            speed_limit: 1.0,
        }
    }
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemSpec {
    pub vehicle: VehicleParams,
    pub trip: TripSpec,
    pub controls: ControlSet,
    pub objective: Objective,
    pub penalty: PenaltyWeights,
}

/// Upper end of the velocity axis as a multiple of the highest speed limit.
pub const V_MAX_FACTOR: f64 = 1.2;

impl ProblemSpec {
    pub fn new(vehicle: VehicleParams, trip: TripSpec, controls: ControlSet) -> Self {
        Self {
            vehicle,
            trip,
            controls,
            objective: Objective::Fuel,
            penalty: PenaltyWeights::default(),
        }
    }

    /// The reference scenario: 1 km rest-to-rest in 120 s under a 20 m/s limit.
    pub fn default_scenario() -> Self {
        let trip = TripSpec::rest_to_rest(1000.0, 120.0, 20.0).expect("valid default trip");
        Self::new(VehicleParams::default(), trip, ControlSet::default())
    }

    pub fn with_terminal_weight(mut self, kappa: f64) -> Self {
        self.penalty.terminal = kappa;
        self
    }

    /// `V_max = 1.2 * max speed limit`.
    pub fn v_max(&self) -> f64 {
        V_MAX_FACTOR * self.trip.speed_limits.max_limit()
    }

    /// Terminal penalty `phi(x) = kappa (|x1 - L|/L + |x2 - v2|/V_max)`.
    #[inline]
    pub fn terminal_penalty(&self, x: f64, v: f64) -> f64 {
        self.penalty.terminal
            * ((x - self.trip.length).abs() / self.trip.length + (v - self.trip.v_end).abs() / self.v_max())
    }

    /// Speed-limit excess `max(0, v - M(x))`.
    #[inline]
    pub fn limit_excess(&self, x: f64, v: f64) -> f64 {
        (v - self.trip.speed_limits.limit_at(x)).max(0.0)
    }

    /// Running cost: fuel rate plus the soft speed-limit penalty.
    #[inline]
    pub fn running_cost(&self, x: f64, v: f64, u: f64) -> f64 {
        let excess = self.limit_excess(x, v);
        crate::model::fuel_rate(u, v) + self.penalty.speed_limit * excess * excess
    }
}

/// Vehicle state `(x1, x2)` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct State {
    /// Position (m).
    pub x: f64,
    /// Velocity (m/s).
    pub v: f64,
    /// Time (s).
    pub t: f64,
}

impl State {
    pub fn new(x: f64, v: f64, t: f64) -> Result<Self> {
        if !(v >= 0.0) {
            return Err(Error::domain(format!("velocity must be >= 0, got {v}")));
        }
        if !x.is_finite() || !t.is_finite() {
            return Err(Error::domain("state components must be finite"));
        }
        Ok(Self { x, v, t })
    }

    /// Trip start `(0, v1, 0)`.
    pub fn start_of(problem: &ProblemSpec) -> Self {
        Self {
            x: 0.0,
            v: problem.trip.v_start,
            t: 0.0,
        }
    }
}
