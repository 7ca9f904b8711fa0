use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{self, trip_fuel, ProblemSpec, Sample, State, Trajectory, DEFAULT_DT};

/// Number of hold speeds tried by the tuner.
const SPEED_CANDIDATES: usize = 41;
const BISECTION_STEPS: usize = 40;
/// Position tolerance of the nested bisections (m).
const POSITION_TOL: f64 = 1e-3;

/// Power to `hold_speed`, hold until `coast_start`, coast until `brake_start`,
/// then brake to rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourPhasePlan {
    pub hold_speed: f64,
    pub coast_start: f64,
    pub brake_start: f64,
}

impl FourPhasePlan {
    pub fn new(hold_speed: f64, coast_start: f64, brake_start: f64, problem: &ProblemSpec) -> Result<Self> {
        let plan = Self {
            hold_speed,
            coast_start,
            brake_start,
        };
        plan.validate(problem)?;
        Ok(plan)
    }

    fn validate(&self, problem: &ProblemSpec) -> Result<()> {
        let limit = problem.trip.speed_limits.min_limit();
        if !(self.hold_speed > 0.0 && self.hold_speed <= limit * (1.0 + 1e-12)) {
            return Err(Error::argument(format!(
                "hold speed {} must lie in (0, {limit}]",
                self.hold_speed
            )));
        }
        if !(0.0 <= self.coast_start && self.coast_start <= self.brake_start && self.brake_start <= problem.trip.length)
        {
            return Err(Error::argument(format!(
                "need 0 <= coast start ({}) <= brake start ({}) <= L ({})",
                self.coast_start, self.brake_start, problem.trip.length
            )));
        }
        Ok(())
    }
}

/// Simulated four-phase run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FourPhaseRun {
    pub trajectory: Trajectory,
    /// Final position within 1% of `L` with speed at most 0.1 m/s.
    pub reaches_target: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Power,
    Hold,
    Coast,
    Brake,
}

/// Setting that keeps speed `v` constant at position `x`.
fn hold_control(problem: &ProblemSpec, x: f64, v: f64) -> Result<f64> {
    let vehicle = &problem.vehicle;
    let u = vehicle.resistance_at(x, v) / vehicle.max_traction;
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::infeasible(format!(
            "holding {v} m/s at x = {x} m needs u = {u:.4}, outside [0, 1]"
        )));
    }
    Ok(u)
}

/// Control for the step that crosses the hold speed so that it ends exactly on it.
fn landing_control(problem: &ProblemSpec, state: &State, target: f64, dt: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if model::rk4(state, mid, dt, &problem.vehicle).v > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn simulate(plan: &FourPhasePlan, problem: &ProblemSpec, start: &State) -> Result<Vec<Sample>> {
    let dt = DEFAULT_DT;
    let horizon = problem.trip.horizon;
    let v_hold = plan.hold_speed;
    let mut state = *start;
    let mut phase = Phase::Power;
    let mut samples = Vec::with_capacity((horizon / dt) as usize + 2);
    loop {
        if phase == Phase::Power && state.v >= v_hold {
            phase = Phase::Hold;
        }
        if matches!(phase, Phase::Power | Phase::Hold) && state.x >= plan.coast_start {
            phase = Phase::Coast;
        }
        if phase == Phase::Coast && state.x >= plan.brake_start {
            phase = Phase::Brake;
        }
        let u = match phase {
            Phase::Power => {
                let next = model::rk4(&state, 1.0, dt, &problem.vehicle);
                if next.v > v_hold {
                    landing_control(problem, &state, v_hold, dt)
                } else {
                    1.0
                }
            }
            Phase::Hold => hold_control(problem, state.x, v_hold)?,
            Phase::Coast => 0.0,
            Phase::Brake => -1.0,
        };
        samples.push(Sample {
            t: state.t,
            x: state.x,
            v: state.v,
            u,
        });
        if state.t >= horizon - 1e-9 || (phase == Phase::Brake && state.v == 0.0) {
            return Ok(samples);
        }
        state = model::rk4(&state, u, dt.min(horizon - state.t), &problem.vehicle);
    }
}

/// Simulates a four-phase plan from the trip start.
///
/// The run ends at the horizon or when the vehicle comes to rest in the
/// braking phase, whichever is first.
pub fn four_phase_rollout(plan: &FourPhasePlan, problem: &ProblemSpec) -> Result<FourPhaseRun> {
    plan.validate(problem)?;
    let samples = simulate(plan, problem, &State::start_of(problem))?;
    let last = samples[samples.len() - 1];
    let length = problem.trip.length;
    let reaches_target = (last.x - length).abs() <= 0.01 * length && last.v <= 0.1;
    Ok(FourPhaseRun {
        trajectory: Trajectory::from_valid(samples),
        reaches_target,
    })
}

/// Smallest `z` in `[lo, hi]` with `pred(z)` for a monotone predicate.
fn bisect(mut lo: f64, mut hi: f64, mut pred: impl FnMut(f64) -> Result<bool>) -> Result<f64> {
    for _ in 0..BISECTION_STEPS {
        if hi - lo <= POSITION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Final sample of a plan's run: where the vehicle comes to rest, or stands at the horizon.
fn finish(plan: &FourPhasePlan, problem: &ProblemSpec, start: &State) -> Result<Sample> {
    let samples = simulate(plan, problem, start)?;
    Ok(samples[samples.len() - 1])
}

/// Brake start in `[coast_start, L]` that stops the vehicle at `L`.
fn brake_point(v_hold: f64, coast_start: f64, problem: &ProblemSpec, start: &State) -> Result<f64> {
    let length = problem.trip.length;
    let plan = |b: f64| FourPhasePlan {
        hold_speed: v_hold,
        coast_start,
        brake_start: b,
    };
    bisect(coast_start, length, |b| {
        Ok(finish(&plan(b), problem, start)?.x >= length)
    })
}

fn tune_for_speed(v_hold: f64, problem: &ProblemSpec, start: &State) -> Result<Option<FourPhasePlan>> {
    let length = problem.trip.length;
    let horizon = problem.trip.horizon;
    let plan = |c: f64, b: f64| FourPhasePlan {
        hold_speed: v_hold,
        coast_start: c,
        brake_start: b,
    };
    // Latest coast start: braking straight from the cruise stops at L.
    let latest = bisect(0.0, length, |c| Ok(finish(&plan(c, c), problem, start)?.x >= length))?;
    // Earliest coast start from which coasting alone still reaches L.
    let earliest = bisect(0.0, latest, |c| {
        Ok(finish(&plan(c, f64::INFINITY), problem, start)?.x >= length)
    })?;
    let arrival = |c: f64| -> Result<(FourPhasePlan, Sample)> {
        let p = plan(c, brake_point(v_hold, c, problem, start)?);
        Ok((p, finish(&p, problem, start)?))
    };
    let arrives = |s: &Sample| s.v == 0.0 && (s.x - length).abs() <= 0.01 * length && s.t <= horizon;
    if !arrives(&arrival(latest)?.1) {
        return Ok(None);
    }
    // Coasting earlier saves fuel but arrives later: take the earliest coast start in time.
    let c = bisect(earliest, latest, |c| Ok(arrives(&arrival(c)?.1)))?;
    let (p, last) = arrival(c)?;
    Ok(arrives(&last).then_some(p))
}

/// Searches hold speeds `V_k = k M_min / 41` and, for each, the coast and
/// brake positions that bring the vehicle to rest at `L` by the horizon.
/// Returns the feasible plan with the least fuel.
pub fn tune_four_phase(problem: &ProblemSpec) -> Result<(FourPhasePlan, f64)> {
    let start = State::start_of(problem);
    let full_power = FourPhasePlan {
        hold_speed: f64::INFINITY,
        coast_start: f64::INFINITY,
        brake_start: f64::INFINITY,
    };
    if finish(&full_power, problem, &start)?.x < problem.trip.length {
        return Err(Error::infeasible(format!(
            "the trip of {} m cannot be covered in {} s even at full power",
            problem.trip.length, problem.trip.horizon
        )));
    }
    let limit = problem.trip.speed_limits.min_limit();
    let mut best: Option<(FourPhasePlan, f64)> = None;
    for k in 1..=SPEED_CANDIDATES {
        let v_hold = limit * k as f64 / SPEED_CANDIDATES as f64;
        let plan = match tune_for_speed(v_hold, problem, &start) {
            Ok(Some(plan)) => plan,
            Ok(None) | Err(Error::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        };
        let fuel = trip_fuel(&four_phase_rollout(&plan, problem)?.trajectory);
        if best.map_or(true, |(_, f)| fuel < f) {
            best = Some((plan, fuel));
        }
    }
    best.ok_or_else(|| Error::infeasible("no four-phase plan reaches the target within the horizon"))
}
