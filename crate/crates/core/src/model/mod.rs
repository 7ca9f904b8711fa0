//! Longitudinal vehicle dynamics, resistance, fuel, and the problem instance.
//!
//! The vehicle obeys `x1' = x2`, `x2' = s(x1, x2, u) - r(x1, x2)` with
//! `r = r0(v) - g(x)`, `r0` the Davis law and `s = u A` under the affine
//! traction model. A vehicle at rest never accelerates backwards.

mod problem;
mod trajectory;
mod vehicle;

pub use problem::{
    ControlSet, Objective, PenaltyWeights, ProblemSpec, SpeedLimitProfile, State, TripSpec, V_MAX_FACTOR,
};
pub use trajectory::{Sample, Trajectory};
pub use vehicle::{DavisCoefficients, GradeBreakpoint, GradeProfile, TractionModel, VehicleParams};

use crate::error::{Error, Result};
use problem::ADMISSIBILITY_EPS;

/// Default fixed integrator step (s).
pub const DEFAULT_DT: f64 = 0.1;

pub fn davis_resistance(v: f64, coeffs: &DavisCoefficients) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(Error::domain(format!("resistance needs v >= 0, got {v}")));
    }
    Ok(coeffs.resistance(v))
}

/// `r0(v) - g(x)`; positions outside the grade profile clamp to its end segments.
pub fn net_deceleration(x: f64, v: f64, params: &VehicleParams) -> f64 {
    params.resistance_at(x, v)
}

pub(crate) fn check_control(u: f64) -> Result<()> {
    if u.abs() > 1.0 + ADMISSIBILITY_EPS || u.is_nan() {
        Err(Error::Admissibility(u))
    } else {
        Ok(())
    }
}

/// Tractive acceleration `s(x, v, u)`.
pub fn traction(_x: f64, _v: f64, u: f64, params: &VehicleParams) -> Result<f64> {
    check_control(u)?;
    Ok(params.traction_unchecked(u))
}

/// Right-hand side `(x2, s - r)`, with negative acceleration suppressed at rest.
pub fn dynamics(state: &State, u: f64, params: &VehicleParams) -> Result<(f64, f64)> {
    check_control(u)?;
    if !(state.v >= 0.0) {
        return Err(Error::domain(format!("velocity must be >= 0, got {}", state.v)));
    }
    Ok((state.v, params.acceleration(state.x, state.v, u)))
}

/// One classical RK4 step under a constant setting.
///
/// Each stage sees `max(v, 0)` and the rest clamp, so the result never has `v < 0`.
pub fn step(state: &State, u: f64, dt: f64, params: &VehicleParams) -> Result<State> {
    check_control(u)?;
    if !(dt > 0.0) {
        return Err(Error::argument(format!("integrator step must be positive, got {dt}")));
    }
    if !(state.v >= 0.0) {
        return Err(Error::domain(format!("velocity must be >= 0, got {}", state.v)));
    }
    Ok(rk4(state, u, dt, params))
}

#[inline]
pub(crate) fn rk4(state: &State, u: f64, dt: f64, params: &VehicleParams) -> State {
    let f = |x: f64, v: f64| {
        let v = v.max(0.0);
        (v, params.acceleration(x, v, u))
    };
    let (x0, v0) = (state.x, state.v);
    let (k1x, k1v) = f(x0, v0);
    let (k2x, k2v) = f(x0 + 0.5 * dt * k1x, v0 + 0.5 * dt * k1v);
    let (k3x, k3v) = f(x0 + 0.5 * dt * k2x, v0 + 0.5 * dt * k2v);
    let (k4x, k4v) = f(x0 + dt * k3x, v0 + dt * k3v);
    let x = x0 + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    let v = v0 + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    State {
        x,
        v: v.max(0.0),
        t: state.t + dt,
    }
}

/// Instantaneous fuel rate `[u]_+ v`.
#[inline]
pub fn fuel_rate(u: f64, v: f64) -> f64 {
    0.5 * (u + u.abs()) * v
}

/// Trapezoidal quadrature of the fuel rate over a trajectory's samples.
pub fn trip_fuel(traj: &Trajectory) -> f64 {
    cumulative_fuel(traj).last().copied().unwrap_or(0.0)
}

/// Running trapezoidal fuel total at every sample.
pub fn cumulative_fuel(traj: &Trajectory) -> Vec<f64> {
    let s = traj.samples();
    let mut out = Vec::with_capacity(s.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in s.windows(2) {
        acc += 0.5 * (w[1].t - w[0].t) * (fuel_rate(w[0].u, w[0].v) + fuel_rate(w[1].u, w[1].v));
        out.push(acc);
    }
    out
}

/// `sum c_i dt_i` for a plan with constant consumption rate per segment.
pub fn discrete_trip_fuel(rates: &[f64], durations: &[f64]) -> Result<f64> {
    if rates.len() != durations.len() {
        return Err(Error::argument(format!(
            "{} rates but {} durations",
            rates.len(),
            durations.len()
        )));
    }
    if let Some(d) = durations.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::argument(format!("segment durations must be positive, got {d}")));
    }
    if let Some(c) = rates.iter().find(|c| !(**c >= 0.0)) {
        return Err(Error::argument(format!("consumption rates must be >= 0, got {c}")));
    }
    Ok(rates.iter().zip(durations).map(|(c, d)| c * d).sum())
}
