use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hjb::grid::{check_foot_bound, Grid};
use crate::model::{ProblemSpec, State};

/// Relative tolerance under which two one-step costs count as tied.
const TIE_RTOL: f64 = 1e-10;

/// Interpolation stencil plus the time-independent part of a one-step cost.
///
/// Values are interpolated by a monotone cubic Hermite (Fritsch-Butland
/// slopes) along position and then along velocity.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Foot {
    base: u32,
    wx: f64,
    wv: f64,
    cost: f64,
}

/// Fritsch-Butland slope at a node from its two neighbouring differences,
/// in units of one cell.
#[inline]
fn slope(left: f64, right: f64) -> f64 {
    if left * right <= 0.0 {
        0.0
    } else {
        2.0 * left * right / (left + right)
    }
}

/// Slopes along position for every node of a level.
pub(crate) fn position_slopes(level: &[f64], nx: usize, nv: usize) -> Vec<f64> {
    let mut d = vec![0.0; level.len()];
    let y = |i: usize, j: usize| level[i * nv + j];
    for j in 0..nv {
        d[j] = y(1, j) - y(0, j);
        d[(nx - 1) * nv + j] = y(nx - 1, j) - y(nx - 2, j);
    }
    for i in 1..nx - 1 {
        for j in 0..nv {
            d[i * nv + j] = slope(y(i, j) - y(i - 1, j), y(i + 1, j) - y(i, j));
        }
    }
    d
}

/// Slope at one node, identical to the corresponding `position_slopes` entry.
#[inline]
fn slope_at(level: &[f64], nx: usize, nv: usize, i: usize, j: usize) -> f64 {
    let y = |i: usize| level[i * nv + j];
    if i == 0 {
        y(1) - y(0)
    } else if i == nx - 1 {
        y(nx - 1) - y(nx - 2)
    } else {
        slope(y(i) - y(i - 1), y(i + 1) - y(i))
    }
}

#[inline]
fn hermite(t: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * d0 + (3.0 * t2 - 2.0 * t3) * y1 + (t3 - t2) * d1
}

impl Foot {
    #[inline]
    fn read(&self, level: &[f64], slopes: &[f64], nv: usize) -> f64 {
        let b = self.base as usize;
        let j = b % nv;
        let row = |k: usize| hermite(self.wx, level[k], slopes[k], level[k + nv], slopes[k + nv]);
        let mid = (row(b), row(b + 1));
        if self.wv == 0.0 {
            return mid.0;
        }
        let below = (j > 0).then(|| row(b - 1));
        let above = (j + 2 < nv).then(|| row(b + 2));
        along_velocity(self.wv, below, mid, above)
    }
}

/// Monotone Hermite between two row values given their outer neighbours.
#[inline]
fn along_velocity(w: f64, below: Option<f64>, (y0, y1): (f64, f64), above: Option<f64>) -> f64 {
    let delta = y1 - y0;
    let d0 = below.map_or(delta, |y| slope(y0 - y, delta));
    let d1 = above.map_or(delta, |y| slope(delta, y - y1));
    hermite(w, y0, d0, y1, d1)
}

/// Semi-Lagrangian foot of `(x, v)` under setting `u`: an explicit Euler step
/// of length `dt` with the rest clamp. Returns the clamped foot and the
/// boundary penalty for any part that left the grid.
pub(crate) fn foot_point(problem: &ProblemSpec, grid: &Grid, x: f64, v: f64, u: f64) -> (f64, f64, f64) {
    let dt = grid.dt();
    let a = problem.vehicle.acceleration(x, v, u);
    let xf = x + v * dt;
    let vf = (v + a * dt).max(0.0);
    let (x_end, v_end) = (grid.position.end(), grid.velocity.end());
    let kappa = problem.penalty.terminal;
    let mut boundary = 0.0;
    if xf > x_end {
        boundary += kappa / problem.trip.length * (xf - x_end);
    }
    if vf > v_end {
        boundary += kappa / problem.v_max() * (vf - v_end);
    }
    (xf.clamp(0.0, x_end), vf.min(v_end), boundary)
}

/// Interpolated value of a level at an arbitrary point, clamped to the grid.
pub(crate) fn interpolate(grid: &Grid, level: &[f64], x: f64, v: f64) -> f64 {
    let (nx, nv) = (grid.position.len, grid.velocity.len);
    let (i, wx) = grid.position.locate(x);
    let (j, wv) = grid.velocity.locate(v);
    let row = |j: usize| {
        let (y0, y1) = (level[i * nv + j], level[(i + 1) * nv + j]);
        if wx == 0.0 {
            return y0;
        }
        let d0 = slope_at(level, nx, nv, i, j);
        let d1 = slope_at(level, nx, nv, i + 1, j);
        hermite(wx, y0, d0, y1, d1)
    };
    if wv == 0.0 {
        return row(j);
    }
    let below = (j > 0).then(|| row(j - 1));
    let above = (j + 2 < nv).then(|| row(j + 2));
    along_velocity(wv, below, (row(j), row(j + 1)), above)
}

/// Per-node, per-control feet; the problem is autonomous so one table serves
/// every time level.
pub(crate) struct FootTable {
    feet: Vec<Foot>,
    controls: usize,
    order: Vec<usize>,
}

impl FootTable {
    pub(crate) fn new(problem: &ProblemSpec, grid: &Grid) -> Self {
        let settings = problem.controls.settings();
        let nv = grid.velocity.len;
        let dt = grid.dt();
        let mut feet = Vec::with_capacity(grid.nodes_per_level() * settings.len());
        for i in 0..grid.position.len {
            let x = grid.position.node(i);
            for j in 0..nv {
                let v = grid.velocity.node(j);
                for &u in settings {
                    let (xf, vf, boundary) = foot_point(problem, grid, x, v, u);
                    let (fi, wx) = grid.position.locate(xf);
                    let (fj, wv) = grid.velocity.locate(vf);
                    feet.push(Foot {
                        base: (fi * nv + fj) as u32,
                        wx,
                        wv,
                        cost: problem.running_cost(x, v, u) * dt + boundary,
                    });
                }
            }
        }
        Self {
            feet,
            controls: settings.len(),
            order: problem.controls.tie_break_order(),
        }
    }

    /// Backward update of one node: `(value, control index)`.
    #[inline]
    fn update(&self, node: usize, next: &[f64], slopes: &[f64], nv: usize) -> (f64, u8) {
        let feet = &self.feet[node * self.controls..(node + 1) * self.controls];
        let mut costs = [0.0f64; 16];
        let mut best = f64::INFINITY;
        for (c, foot) in feet.iter().enumerate() {
            let cost = foot.cost + foot.read(next, slopes, nv);
            costs[c] = cost;
            best = best.min(cost);
        }
        pick(&costs[..self.controls], &self.order, best)
    }

    fn sweep(&self, next: &[f64], out: &mut [f64], policy: &mut [u8], nv: usize) {
        let slopes = position_slopes(next, next.len() / nv, nv);
        let slopes = &slopes;
        out.par_chunks_mut(nv)
            .zip(policy.par_chunks_mut(nv))
            .enumerate()
            .for_each(|(i, (row, prow))| {
                for j in 0..nv {
                    let (value, index) = self.update(i * nv + j, next, slopes, nv);
                    row[j] = value;
                    prow[j] = index;
                }
            });
    }
}

/// First control in tie-break order whose cost is within tolerance of the minimum.
#[inline]
pub(crate) fn pick(costs: &[f64], order: &[usize], best: f64) -> (f64, u8) {
    let tol = TIE_RTOL * best.abs().max(1.0);
    for &c in order {
        if costs[c] <= best + tol {
            return (costs[c], c as u8);
        }
    }
    unreachable!("the minimum is attained by some control")
}

/// The minimum-cost function `J*` on the grid with its argmin policy.
///
/// Values are stored level-major; within a level nodes run position-major.
/// `policy` covers every level except the terminal one.
#[derive(Debug, Clone)]
pub struct ValueField {
    grid: Grid,
    values: Vec<f64>,
    policy: Vec<u8>,
    controls: Vec<f64>,
}

impl ValueField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn controls(&self) -> &[f64] {
        &self.controls
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let n = self.grid.nodes_per_level();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn policy_level(&self, k: usize) -> &[u8] {
        let n = self.grid.nodes_per_level();
        &self.policy[k * n..(k + 1) * n]
    }

    pub fn node_value(&self, k: usize, i: usize, j: usize) -> f64 {
        self.level(k)[i * self.grid.velocity.len + j]
    }

    /// Stored argmin setting at node `(k, i, j)`; `None` on the terminal level.
    pub fn node_control(&self, k: usize, i: usize, j: usize) -> Option<f64> {
        if k + 1 >= self.grid.levels() {
            return None;
        }
        let index = self.policy_level(k)[i * self.grid.velocity.len + j];
        Some(self.controls[index as usize])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn terminal_level(problem: &ProblemSpec, grid: &Grid) -> Vec<f64> {
    let mut level = Vec::with_capacity(grid.nodes_per_level());
    for i in 0..grid.position.len {
        let x = grid.position.node(i);
        for j in 0..grid.velocity.len {
            level.push(problem.terminal_penalty(x, grid.velocity.node(j)));
        }
    }
    level
}

fn check_consistent(problem: &ProblemSpec, grid: &Grid) -> Result<()> {
    if problem.controls.len() > 16 {
        return Err(Error::argument("at most 16 control settings are supported"));
    }
    if grid.position.end() < problem.trip.length {
        return Err(Error::argument("grid position axis does not cover the trip"));
    }
    if (grid.horizon() - problem.trip.horizon).abs() > 1e-9 * problem.trip.horizon {
        return Err(Error::argument("grid horizon differs from the trip horizon"));
    }
    check_foot_bound(problem, grid)
}

/// Backward semi-Lagrangian sweep from the terminal penalty.
pub fn solve(problem: &ProblemSpec, grid: &Grid) -> Result<ValueField> {
    check_consistent(problem, grid)?;
    let n = grid.nodes_per_level();
    let nt = grid.levels();
    let nv = grid.velocity.len;
    let mut values = vec![0.0; n * nt];
    let mut policy = vec![0u8; n * (nt - 1)];
    values[(nt - 1) * n..].copy_from_slice(&terminal_level(problem, grid));
    let table = FootTable::new(problem, grid);
    for k in (0..nt - 1).rev() {
        let (head, tail) = values.split_at_mut((k + 1) * n);
        table.sweep(&tail[..n], &mut head[k * n..], &mut policy[k * n..(k + 1) * n], nv);
    }
    Ok(ValueField {
        grid: grid.clone(),
        values,
        policy,
        controls: problem.controls.settings().to_vec(),
    })
}

/// `J*` at one state, sweeping with two level buffers instead of storing the field.
pub fn solve_value_at(problem: &ProblemSpec, grid: &Grid, state: &State) -> Result<f64> {
    check_consistent(problem, grid)?;
    let k_target = grid.check_contains(state)?;
    let n = grid.nodes_per_level();
    let nv = grid.velocity.len;
    let mut next = terminal_level(problem, grid);
    let mut current = vec![0.0; n];
    let mut scratch = vec![0u8; n];
    let table = FootTable::new(problem, grid);
    for _ in (k_target..grid.levels() - 1).rev() {
        table.sweep(&next, &mut current, &mut scratch, nv);
        std::mem::swap(&mut next, &mut current);
    }
    Ok(interpolate(grid, &next, state.x, state.v))
}

/// Statistics of the Bellman residual `J_t + min_u H(x, u, grad J)`
/// over interior nodes, relative to the local running-cost scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BellmanResidualReport {
    pub nodes: usize,
    pub median_relative: f64,
    pub p90_relative: f64,
    pub max_abs: f64,
}

/// Forward difference in time, central differences in space.
///
/// Only nodes where the local scale `max_u f0 = v` is at least one velocity
/// cell are counted; at rest the running cost vanishes and no scale exists.
pub fn bellman_residuals(field: &ValueField, problem: &ProblemSpec) -> BellmanResidualReport {
    let grid = field.grid();
    let (nx, nv) = (grid.position.len, grid.velocity.len);
    let (hx, hv, dt) = (grid.position.step, grid.velocity.step, grid.dt());
    let mut rel = Vec::new();
    let mut max_abs = 0.0f64;
    for k in 0..grid.levels().saturating_sub(1) {
        let now = field.level(k);
        let next = field.level(k + 1);
        for i in 1..nx - 1 {
            let x = grid.position.node(i);
            for j in 1..nv - 1 {
                let v = grid.velocity.node(j);
                let at = |ii: usize, jj: usize| now[ii * nv + jj];
                let jx = (at(i + 1, j) - at(i - 1, j)) / (2.0 * hx);
                let jv = (at(i, j + 1) - at(i, j - 1)) / (2.0 * hv);
                let jt = (next[i * nv + j] - now[i * nv + j]) / dt;
                let h = problem
                    .controls
                    .settings()
                    .iter()
                    .map(|&u| problem.running_cost(x, v, u) + jx * v + jv * problem.vehicle.acceleration(x, v, u))
                    .fold(f64::INFINITY, f64::min);
                let r = (jt + h).abs();
                max_abs = max_abs.max(r);
                rel.push(r / v.max(hv));
            }
        }
    }
    let nodes = rel.len();
    let mut quantile = |q: f64| {
        if rel.is_empty() {
            0.0
        } else {
            let idx = ((rel.len() - 1) as f64 * q).round() as usize;
            *rel.select_nth_unstable_by(idx, f64::total_cmp).1
        }
    };
    let median_relative = quantile(0.5);
    let p90_relative = quantile(0.9);
    BellmanResidualReport {
        nodes,
        median_relative,
        p90_relative,
        max_abs,
    }
}
