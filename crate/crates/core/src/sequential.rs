//! Receding-horizon control under a stream of environment events.
//!
//! At each update instant the controller applies every event it has been
//! told about, freezes the resulting problem as its estimate, re-solves the
//! value function over the remaining horizon and follows that policy until the
//! next update. The vehicle itself always moves in the true environment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::{self, build_grid, optimal_control, Grid};
use crate::model::{trip_fuel, DavisCoefficients, ProblemSpec, Sample, State, Trajectory};

/// Default re-planning interval (s).
pub const DEFAULT_UPDATE_INTERVAL: f64 = 10.0;

/// A change of the driving environment, known from `timestamp` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub timestamp: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// New limit (m/s) on one speed-limit segment.
    SpeedLimit { segment: usize, limit: f64 },
    /// New grade acceleration (m/s^2) on one grade segment.
    Grade { segment: usize, accel: f64 },
    /// New resistance coefficients.
    Davis { a: f64, b: f64, c: f64 },
    /// New arrival speed (m/s).
    TargetSpeed { speed: f64 },
}

/// Returns `env` with one event applied; every other field is left as is.
pub fn apply_event(env: &ProblemSpec, ev: &ScenarioEvent) -> Result<ProblemSpec> {
    if !(0.0..=env.trip.horizon).contains(&ev.timestamp) {
        return Err(Error::argument(format!(
            "event time {} s lies outside [0, {}]",
            ev.timestamp, env.trip.horizon
        )));
    }
    let mut out = env.clone();
    match ev.kind {
        EventKind::SpeedLimit { segment, limit } => {
            out.trip.speed_limits = env.trip.speed_limits.with_limit(segment, limit)?;
        }
        EventKind::Grade { segment, accel } => {
            out.vehicle.grade = env.vehicle.grade.with_segment(segment, accel)?;
        }
        EventKind::Davis { a, b, c } => {
            out.vehicle.davis = DavisCoefficients::new(a, b, c).map_err(|e| Error::argument(e.to_string()))?;
        }
        EventKind::TargetSpeed { speed } => {
            if !(speed >= 0.0) || !speed.is_finite() {
                return Err(Error::argument(format!(
                    "target speed must be non-negative, got {speed}"
                )));
            }
            out.trip.v_end = speed;
        }
    }
    Ok(out)
}

fn check_sorted(events: &[ScenarioEvent]) -> Result<()> {
    if events.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        return Err(Error::argument("events must be sorted by timestamp"));
    }
    Ok(())
}

/// The environment as known at `now`: every event with `timestamp <= now` applied in order.
pub fn environment_at(initial: &ProblemSpec, events: &[ScenarioEvent], now: f64) -> Result<ProblemSpec> {
    check_sorted(events)?;
    events
        .iter()
        .take_while(|ev| ev.timestamp <= now)
        .try_fold(initial.clone(), |env, ev| apply_event(&env, ev))
}

/// Problem frozen over a validity window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HamiltonianEstimate {
    pub snapshot: ProblemSpec,
    pub start: f64,
    pub end: f64,
}

/// Freezes `env` over `[now, min(now + window, T)]`.
pub fn estimate_hamiltonian(env: &ProblemSpec, now: f64, window: f64) -> HamiltonianEstimate {
    let horizon = env.trip.horizon;
    HamiltonianEstimate {
        snapshot: env.clone(),
        start: now.min(horizon),
        end: (now + window).min(horizon),
    }
}

/// Seeded Gaussian noise on the state the controller observes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub seed: u64,
    /// Standard deviation of the observed position (m).
    pub position_sd: f64,
    /// Standard deviation of the observed speed (m/s).
    pub speed_sd: f64,
}

struct Observer {
    rng: ChaCha8Rng,
    position: Normal<f64>,
    speed: Normal<f64>,
}

impl Observer {
    fn new(cfg: &NoiseConfig) -> Result<Self> {
        let normal = |sd: f64| {
            let bad = || Error::argument(format!("noise deviation must be non-negative, got {sd}"));
            if !(sd >= 0.0) {
                return Err(bad());
            }
            Normal::new(0.0, sd).map_err(|_| bad())
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            position: normal(cfg.position_sd)?,
            speed: normal(cfg.speed_sd)?,
        })
    }

    /// Noisy reading clamped to the grid extent.
    fn observe(&mut self, state: &State, grid: &Grid) -> State {
        let x = state.x + self.position.sample(&mut self.rng);
        let v = state.v + self.speed.sample(&mut self.rng);
        State {
            x: x.clamp(grid.position.start, grid.position.end()),
            v: v.clamp(grid.velocity.start, grid.velocity.end()),
            t: state.t,
        }
    }
}

/// Controller settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecedingConfig {
    /// Time between re-plans (s).
    pub update_interval: f64,
    /// Grid nodes `(position, velocity, time)` over the full trip.
    pub resolution: (usize, usize, usize),
    pub noise: Option<NoiseConfig>,
}

impl RecedingConfig {
    pub fn new(update_interval: f64, resolution: (usize, usize, usize)) -> Result<Self> {
        if !(update_interval > 0.0) {
            return Err(Error::argument(format!(
                "update interval must be positive, got {update_interval}"
            )));
        }
        Ok(Self {
            update_interval,
            resolution,
            noise: None,
        })
    }

    pub fn with_noise(mut self, noise: NoiseConfig) -> Self {
        self.noise = Some(noise);
        self
    }
}

/// Output of the receding-horizon controller.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecedingRun {
    pub trajectory: Trajectory,
    pub estimates: Vec<HamiltonianEstimate>,
}

/// Runs the controller from the trip start to the horizon.
///
/// Re-plans happen at the grid levels nearest to `k * update_interval`; each
/// re-solve uses the trip grid restricted to the remaining levels, so time
/// levels are shared across windows. Between grid steps the plant uses the
/// environment in force at the start of the step.
pub fn run_receding_horizon(
    initial: &ProblemSpec,
    events: &[ScenarioEvent],
    config: &RecedingConfig,
) -> Result<RecedingRun> {
    check_sorted(events)?;
    if !(config.update_interval > 0.0) {
        return Err(Error::argument("update interval must be positive"));
    }
    let grid = build_grid(initial, config.resolution)?;
    let last_level = grid.levels() - 1;
    let mut observer = config.noise.as_ref().map(Observer::new).transpose()?;

    // Window boundaries as grid levels.
    let mut boundaries = vec![0usize];
    for k in 1.. {
        let t = k as f64 * config.update_interval;
        if !(t < initial.trip.horizon) {
            break;
        }
        let level = grid.level_of(t).unwrap_or(last_level);
        if level > boundaries[boundaries.len() - 1] && level < last_level {
            boundaries.push(level);
        }
    }
    boundaries.push(last_level);

    let mut state = State::start_of(initial);
    let mut samples: Vec<Sample> = Vec::with_capacity(grid.levels());
    let mut estimates = Vec::with_capacity(boundaries.len() - 1);
    let mut planner: Option<(ProblemSpec, hjb::ValueField)> = None;
    for window in boundaries.windows(2) {
        let (from, until) = (window[0], window[1]);
        let now = grid.time(from);
        let env = environment_at(initial, events, now)?;
        estimates.push(estimate_hamiltonian(&env, now, grid.time(until) - now));
        let field = hjb::solve(&env, &grid.window(from)?)?;
        for step in from..until {
            let t = grid.time(step);
            let seen = match observer.as_mut() {
                Some(obs) => obs.observe(&state, field.grid()),
                None => state,
            };
            let (u, _) = optimal_control(&seen, &field, &env)?;
            samples.push(Sample {
                t,
                x: state.x,
                v: state.v,
                u,
            });
            let plant = environment_at(initial, events, t)?;
            let next = hjb::advance(&state, u, grid.time(step + 1) - t, &plant);
            state = State {
                t: grid.time(step + 1),
                ..next
            };
        }
        planner = Some((env, field));
    }
    let (env, field) = planner.expect("at least one window is planned");
    let seen = match observer.as_mut() {
        Some(obs) => obs.observe(&state, field.grid()),
        None => state,
    };
    let (u, _) = optimal_control(&seen, &field, &env)?;
    samples.push(Sample {
        t: state.t,
        x: state.x,
        v: state.v,
        u,
    });
    Ok(RecedingRun {
        trajectory: Trajectory::new(samples)?,
        estimates,
    })
}

/// Outcome of one controller arm, measured in the true environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArmSummary {
    pub fuel: f64,
    /// Largest `v - M(x)` over the run, against the limits in force at each sample (m/s).
    pub worst_limit_violation: f64,
    /// `|x(T) - L|` (m).
    pub position_miss: f64,
    /// `|v(T) - v2|` with the arrival speed in force at the horizon (m/s).
    pub speed_miss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub a_priori: ArmSummary,
    pub sequential: ArmSummary,
    #[serde(skip)]
    pub a_priori_run: RecedingRun,
    #[serde(skip)]
    pub sequential_run: RecedingRun,
}

/// Scores a run against the true, event-updated environment.
pub fn summarize(traj: &Trajectory, initial: &ProblemSpec, events: &[ScenarioEvent]) -> Result<ArmSummary> {
    let mut worst: f64 = 0.0;
    for s in traj.samples() {
        let env = environment_at(initial, events, s.t)?;
        worst = worst.max(s.v - env.trip.speed_limits.limit_at(s.x));
    }
    let last = traj.last();
    let env = environment_at(initial, events, last.t)?;
    Ok(ArmSummary {
        fuel: trip_fuel(traj),
        worst_limit_violation: worst,
        position_miss: (last.x - env.trip.length).abs(),
        speed_miss: (last.v - env.trip.v_end).abs(),
    })
}

/// Runs the plan made once at `t = 0` and the receding-horizon controller on
/// the same event stream and scores both in the true environment.
pub fn compare(initial: &ProblemSpec, events: &[ScenarioEvent], config: &RecedingConfig) -> Result<ComparisonReport> {
    let frozen = RecedingConfig {
        update_interval: f64::INFINITY,
        ..*config
    };
    let a_priori_run = run_receding_horizon(initial, events, &frozen)?;
    let sequential_run = run_receding_horizon(initial, events, config)?;
    Ok(ComparisonReport {
        a_priori: summarize(&a_priori_run.trajectory, initial, events)?,
        sequential: summarize(&sequential_run.trajectory, initial, events)?,
        a_priori_run,
        sequential_run,
    })
}
