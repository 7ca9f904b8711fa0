//! Grid solution of the Hamilton-Jacobi-Bellman equation.
//!
//! The minimum-cost function is computed backward in time by a
//! semi-Lagrangian scheme: at each node, every control setting is tried for
//! one time step, the value at the foot of the characteristic is read by
//! interpolation, and the cheapest setting is kept. Interpolation is a
//! monotone cubic Hermite along both axes: plain linear interpolation smears
//! the kinks of the terminal penalty backward through the whole sweep and
//! converges only like the square root of the cell width. The terminal
//! end-point conditions enter as the penalty
//! `kappa (|x1 - L|/L + |x2 - v2|/V_max)`; speed limits as the running penalty
//! `rho max(0, v - M(x))^2`.

mod grid;
mod solver;

pub use grid::{build_grid, check_foot_bound, Axis, Grid, POSITION_MARGIN};
pub use solver::{bellman_residuals, solve, solve_value_at, BellmanResidualReport, ValueField};

use crate::error::Result;
use crate::model::{self, fuel_rate, ProblemSpec, Sample, State, Trajectory, DEFAULT_DT};
use solver::{foot_point, interpolate, pick};

/// `f0 + grad J . f` in the minimization convention.
pub fn hamiltonian(state: &State, u: f64, grad: (f64, f64), problem: &ProblemSpec) -> Result<f64> {
    let (dx, dv) = model::dynamics(state, u, &problem.vehicle)?;
    Ok(fuel_rate(u, state.v) + grad.0 * dx + grad.1 * dv)
}

/// Interpolated `J*` at the nearest time level. The interpolant reproduces
/// nodal values, is exact for fields bilinear in `(x, v)`, and preserves
/// monotonicity along each axis.
pub fn value_at(field: &ValueField, state: &State) -> Result<f64> {
    let grid = field.grid();
    let k = grid.check_contains(state)?;
    Ok(interpolate(grid, field.level(k), state.x, state.v))
}

/// Central-difference gradient `(dJ/dx1, dJ/dx2)` at the nearest time level,
/// one-sided where a stencil point would leave the grid.
pub fn gradient_at(field: &ValueField, state: &State) -> Result<(f64, f64)> {
    let grid = field.grid();
    let k = grid.check_contains(state)?;
    let level = field.level(k);
    let (hx, hv) = (grid.position.step, grid.velocity.step);
    let at = |x: f64, v: f64| interpolate(grid, level, x, v);
    let (xl, xr) = (
        (state.x - hx).max(grid.position.start),
        (state.x + hx).min(grid.position.end()),
    );
    let (vl, vr) = (
        (state.v - hv).max(grid.velocity.start),
        (state.v + hv).min(grid.velocity.end()),
    );
    let jx = (at(xr, state.v) - at(xl, state.v)) / (xr - xl);
    let jv = (at(state.x, vr) - at(state.x, vl)) / (vr - vl);
    Ok((jx, jv))
}

/// Cheapest setting for one grid step from `state`, with ties resolved toward
/// the smallest `|u|` and then the smaller `u`.
///
/// Returns `(u*, H*)` with `H* = min_u { l(x, u) + (J(foot) - J(x)) / dt }`,
/// the discrete counterpart of `min_u H(x, u, grad J)`. On the terminal level
/// the terminal penalty stands in for the next value.
pub fn optimal_control(state: &State, field: &ValueField, problem: &ProblemSpec) -> Result<(f64, f64)> {
    let grid = field.grid();
    let k = grid.check_contains(state)?;
    let dt = grid.dt();
    let settings = problem.controls.settings();
    let terminal = k + 1 == grid.levels();
    let next = |x: f64, v: f64| {
        if terminal {
            problem.terminal_penalty(x, v)
        } else {
            interpolate(grid, field.level(k + 1), x, v)
        }
    };
    let mut costs = [0.0f64; 16];
    let mut best = f64::INFINITY;
    for (c, &u) in settings.iter().enumerate() {
        let cost = if terminal {
            let a = problem.vehicle.acceleration(state.x, state.v, u);
            let (xf, vf) = (state.x + state.v * dt, (state.v + a * dt).max(0.0));
            problem.running_cost(state.x, state.v, u) * dt + next(xf, vf)
        } else {
            let (xf, vf, boundary) = foot_point(problem, grid, state.x, state.v, u);
            problem.running_cost(state.x, state.v, u) * dt + boundary + next(xf, vf)
        };
        costs[c] = cost;
        best = best.min(cost);
    }
    let (cost, index) = pick(&costs[..settings.len()], &problem.controls.tie_break_order(), best);
    let here = next(state.x, state.v);
    Ok((settings[index as usize], (cost - here) / dt))
}

/// Advances `state` by `duration` under constant `u` with RK4 substeps no
/// longer than the default integrator step.
pub(crate) fn advance(state: &State, u: f64, duration: f64, plant: &ProblemSpec) -> State {
    let n = (duration / DEFAULT_DT - 1e-9).ceil().max(1.0) as usize;
    let h = duration / n as f64;
    let mut s = *state;
    for _ in 0..n {
        s = model::rk4(&s, u, h, &plant.vehicle);
    }
    s
}

/// Closed-loop rollout on the grid's time levels from local level `first`
/// for `steps` steps. The policy is computed from `planner`'s cost model and
/// the state advanced with `plant`'s dynamics.
pub(crate) fn rollout_steps(
    field: &ValueField,
    start: &State,
    planner: &ProblemSpec,
    plant: &ProblemSpec,
    steps: usize,
) -> Result<Vec<Sample>> {
    let grid = field.grid();
    let first = grid.check_contains(start)?;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut state = State {
        t: grid.time(first),
        ..*start
    };
    for k in first..first + steps {
        let (u, _) = optimal_control(&state, field, planner)?;
        samples.push(Sample {
            t: state.t,
            x: state.x,
            v: state.v,
            u,
        });
        let next = advance(&state, u, grid.time(k + 1) - grid.time(k), plant);
        state = State {
            t: grid.time(k + 1),
            ..next
        };
    }
    let (u, _) = optimal_control(&state, field, planner)?;
    samples.push(Sample {
        t: state.t,
        x: state.x,
        v: state.v,
        u,
    });
    Ok(samples)
}

/// Applies the optimal feedback policy from `start` until the horizon.
pub fn rollout(field: &ValueField, start: &State, problem: &ProblemSpec) -> Result<Trajectory> {
    let grid = field.grid();
    let first = grid.check_contains(start)?;
    let steps = grid.levels() - 1 - first;
    let samples = rollout_steps(field, start, problem, problem, steps)?;
    Ok(Trajectory::from_valid(samples))
}
