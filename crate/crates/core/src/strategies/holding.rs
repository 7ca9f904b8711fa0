use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{self, ProblemSpec, Sample, State, Trajectory};

/// Integrator step of the holding analysis (s); threshold crossings are
/// resolved exactly by shortening the crossing step.
const HOLD_DT: f64 = 0.05;
const BISECTION_STEPS: usize = 60;

/// Coast-power holding around a target speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HoldingConfig {
    /// Speed to hold (m/s).
    pub hold_speed: f64,
    /// Number of power/coast pairs over the interval.
    pub pairs: u32,
    /// Widest admissible oscillation half-width (m/s).
    pub band_half_width: f64,
}

impl HoldingConfig {
    pub fn new(hold_speed: f64, pairs: u32, band_half_width: f64) -> Result<Self> {
        if pairs < 1 {
            return Err(Error::argument("at least one control pair is required"));
        }
        if !(band_half_width > 0.0) {
            return Err(Error::argument(format!(
                "band half-width must be positive, got {band_half_width}"
            )));
        }
        if !(hold_speed > band_half_width) {
            return Err(Error::argument(format!(
                "hold speed {hold_speed} must exceed the band half-width {band_half_width}"
            )));
        }
        Ok(Self {
            hold_speed,
            pairs,
            band_half_width,
        })
    }
}

fn check_sustainable(problem: &ProblemSpec, speed: f64) -> Result<()> {
    let needed = problem.vehicle.davis.resistance(speed);
    if needed > problem.vehicle.max_traction {
        return Err(Error::infeasible(format!(
            "holding {speed} m/s needs {needed:.4} m/s^2, more than the available traction"
        )));
    }
    Ok(())
}

/// Runs `u` from `state` until speed reaches `target` (exactly), recording samples.
fn run_until_speed(
    problem: &ProblemSpec,
    state: &mut State,
    u: f64,
    target: f64,
    limit_x: f64,
    samples: &mut Vec<Sample>,
) {
    let rising = u > 0.0;
    let crossed = |v: f64| if rising { v >= target } else { v <= target };
    while !crossed(state.v) && state.x < limit_x {
        samples.push(Sample {
            t: state.t,
            x: state.x,
            v: state.v,
            u,
        });
        let next = model::rk4(state, u, HOLD_DT, &problem.vehicle);
        if !crossed(next.v) {
            *state = next;
            continue;
        }
        // Shorten the step so it ends on the threshold.
        let (mut lo, mut hi) = (0.0, HOLD_DT);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if crossed(model::rk4(state, u, mid, &problem.vehicle).v) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        *state = model::rk4(state, u, hi, &problem.vehicle);
        state.v = target;
    }
}

/// Distance covered by one periodic pair: power from `V - d` to `V + d`, coast back.
fn pair_length(problem: &ProblemSpec, speed: f64, half: f64) -> f64 {
    let mut state = State {
        x: 0.0,
        v: speed - half,
        t: 0.0,
    };
    let mut scratch = Vec::new();
    run_until_speed(problem, &mut state, 1.0, speed + half, f64::INFINITY, &mut scratch);
    run_until_speed(problem, &mut state, 0.0, speed - half, f64::INFINITY, &mut scratch);
    state.x
}

/// Approximates holding `cfg.hold_speed` over `interval` metres by alternating
/// full power and coasting between the thresholds `V + d` and `V - d`, with `d`
/// chosen so that one pair spans `interval / pairs`.
///
/// Returns the trajectory and the oscillation amplitude `max |v - V|` after the
/// first pair.
pub fn coast_power_holding(cfg: &HoldingConfig, interval: f64, problem: &ProblemSpec) -> Result<(Trajectory, f64)> {
    let speed = cfg.hold_speed;
    check_sustainable(problem, speed + cfg.band_half_width)?;
    if !(interval > 0.0) {
        return Err(Error::argument(format!(
            "interval length must be positive, got {interval}"
        )));
    }
    let target = interval / cfg.pairs as f64;
    if pair_length(problem, speed, cfg.band_half_width) < target {
        return Err(Error::argument(format!(
            "pairs of {target:.2} m need a wider band than +/-{} m/s",
            cfg.band_half_width
        )));
    }
    let (mut lo, mut hi) = (0.0, cfg.band_half_width);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if pair_length(problem, speed, mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let half = hi;

    let mut state = State {
        x: 0.0,
        v: speed,
        t: 0.0,
    };
    let mut samples = Vec::new();
    let mut first_pair_end = None;
    while state.x < interval {
        run_until_speed(problem, &mut state, 1.0, speed + half, interval, &mut samples);
        run_until_speed(problem, &mut state, 0.0, speed - half, interval, &mut samples);
        first_pair_end.get_or_insert(samples.len());
    }
    samples.push(Sample {
        t: state.t,
        x: state.x,
        v: state.v,
        u: 0.0,
    });
    let from = first_pair_end.unwrap_or(0).min(samples.len() - 1);
    let amplitude = samples[from..].iter().map(|s| (s.v - speed).abs()).fold(0.0, f64::max);
    Ok((Trajectory::new(samples)?, amplitude))
}

/// Holds `speed` with the exact equilibrium setting `u = r(x, V) / A`.
pub fn equilibrium_hold(speed: f64, interval: f64, problem: &ProblemSpec) -> Result<(Trajectory, f64)> {
    if !(speed > 0.0) || !(interval > 0.0) {
        return Err(Error::argument("hold speed and interval must be positive"));
    }
    check_sustainable(problem, speed)?;
    let mut state = State {
        x: 0.0,
        v: speed,
        t: 0.0,
    };
    let mut samples = Vec::new();
    while state.x < interval {
        let u = problem.vehicle.resistance_at(state.x, speed) / problem.vehicle.max_traction;
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::infeasible(format!(
                "holding {speed} m/s at x = {} needs u = {u}",
                state.x
            )));
        }
        samples.push(Sample {
            t: state.t,
            x: state.x,
            v: state.v,
            u,
        });
        state = model::rk4(&state, u, model::DEFAULT_DT, &problem.vehicle);
    }
    samples.push(Sample {
        t: state.t,
        x: state.x,
        v: state.v,
        u: samples.last().map_or(0.0, |s| s.u),
    });
    let amplitude = samples.iter().map(|s| (s.v - speed).abs()).fold(0.0, f64::max);
    Ok((Trajectory::new(samples)?, amplitude))
}
