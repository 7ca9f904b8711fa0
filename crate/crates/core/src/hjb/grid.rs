use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ProblemSpec, State};

/// Position-axis span as a multiple of the trip length.
pub const POSITION_MARGIN: f64 = 1.05;

/// Uniform axis `start + i * step`, `i = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl Axis {
    fn spanning(start: f64, end: f64, len: usize) -> Self {
        Self {
            start,
            step: (end - start) / (len - 1) as f64,
            len,
        }
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    #[inline]
    pub fn end(&self) -> f64 {
        self.node(self.len - 1)
    }

    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-9 * self.step;
        x >= self.start - slack && x <= self.end() + slack
    }

    /// Cell index and fractional offset of `x`, clamped to the axis.
    #[inline]
    pub(crate) fn locate(&self, x: f64) -> (usize, f64) {
        let s = ((x - self.start) / self.step).clamp(0.0, (self.len - 1) as f64);
        let i = (s.floor() as usize).min(self.len - 2);
        (i, s - i as f64)
    }
}

/// Space-velocity-time grid. Time levels are `offset + k` multiples of `dt`,
/// with the final level pinned to the horizon; a window of a larger grid keeps
/// its parent's level numbering so sample times agree bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub position: Axis,
    pub velocity: Axis,
    dt: f64,
    offset: usize,
    levels: usize,
    horizon: f64,
}

impl Grid {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn v_max(&self) -> f64 {
        self.velocity.end()
    }

    pub fn nodes_per_level(&self) -> usize {
        self.position.len * self.velocity.len
    }

    /// Time of local level `k`.
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        if k + 1 == self.levels {
            self.horizon
        } else {
            (self.offset + k) as f64 * self.dt
        }
    }

    pub fn start_time(&self) -> f64 {
        self.time(0)
    }

    /// Nearest local level to `t`.
    pub fn level_of(&self, t: f64) -> Option<usize> {
        let rel = (t - self.start_time()) / self.dt;
        if rel < -0.5 || t > self.horizon + 0.5 * self.dt {
            return None;
        }
        Some((rel.round().max(0.0) as usize).min(self.levels - 1))
    }

    pub fn contains(&self, state: &State) -> bool {
        self.position.contains(state.x) && self.velocity.contains(state.v) && self.level_of(state.t).is_some()
    }

    pub(crate) fn check_contains(&self, state: &State) -> Result<usize> {
        match self.level_of(state.t) {
            Some(k) if self.position.contains(state.x) && self.velocity.contains(state.v) => Ok(k),
            _ => Err(Error::Extrapolation {
                x: state.x,
                v: state.v,
                t: state.t,
            }),
        }
    }

    /// The sub-grid starting at local level `first` and running to the horizon.
    pub fn window(&self, first: usize) -> Result<Grid> {
        if first >= self.levels {
            return Err(Error::argument(format!(
                "window start level {first} beyond the last level {}",
                self.levels - 1
            )));
        }
        Ok(Grid {
            offset: self.offset + first,
            levels: self.levels - first,
            ..self.clone()
        })
    }

    /// Window whose first level is nearest to `t`.
    pub fn window_at(&self, t: f64) -> Result<Grid> {
        let k = self
            .level_of(t)
            .ok_or_else(|| Error::argument(format!("time {t} s lies outside the grid's time axis")))?;
        self.window(k)
    }
}

/// Uniform grid over `[0, 1.05 L] x [0, V_max] x [0, T]`.
pub fn build_grid(problem: &ProblemSpec, resolution: (usize, usize, usize)) -> Result<Grid> {
    let (nx, nv, nt) = resolution;
    if nx < 3 || nv < 3 || nt < 3 {
        return Err(Error::argument(format!(
            "grid resolution components must be >= 3, got ({nx}, {nv}, {nt})"
        )));
    }
    let length = problem.trip.length;
    let horizon = problem.trip.horizon;
    let v_max = problem.v_max();
    if !(length > 0.0 && horizon > 0.0 && v_max > 0.0) {
        return Err(Error::argument(
            "degenerate trip: length, horizon and limits must be positive",
        ));
    }
    Ok(Grid {
        position: Axis::spanning(0.0, POSITION_MARGIN * length, nx),
        velocity: Axis::spanning(0.0, v_max, nv),
        dt: horizon / (nt - 1) as f64,
        offset: 0,
        levels: nt,
        horizon,
    })
}

/// Largest `|dv/dt|` reachable on the grid.
fn max_acceleration(problem: &ProblemSpec, grid: &Grid) -> f64 {
    let vehicle = &problem.vehicle;
    let grades = vehicle.grade.breakpoints().iter().map(|b| b.accel);
    let (g_lo, g_hi) = grades.fold((0.0f64, 0.0f64), |(lo, hi), g| (lo.min(g), hi.max(g)));
    let r_hi = vehicle.davis.resistance(grid.v_max());
    let forward = vehicle.traction_unchecked(1.0) - vehicle.davis.a + g_hi;
    let backward = -vehicle.traction_unchecked(-1.0) + r_hi - g_lo;
    forward.abs().max(backward.abs())
}

/// Enforces that each characteristic foot stays within one cell of its node.
pub fn check_foot_bound(problem: &ProblemSpec, grid: &Grid) -> Result<()> {
    let dt = grid.dt();
    let dx = grid.v_max() * dt;
    if dx > grid.position.step * (1.0 + 1e-12) {
        return Err(Error::Configuration {
            dt,
            detail: format!(
                "position drift {dx:.4} m per step exceeds the cell width {:.4} m",
                grid.position.step
            ),
        });
    }
    let dv = max_acceleration(problem, grid) * dt;
    if dv > grid.velocity.step * (1.0 + 1e-12) {
        return Err(Error::Configuration {
            dt,
            detail: format!(
                "velocity drift {dv:.4} m/s per step exceeds the cell width {:.4} m/s",
                grid.velocity.step
            ),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_spacing() {
        let p = ProblemSpec::default_scenario();
        let g = build_grid(&p, (201, 101, 1201)).unwrap();
        assert!((g.position.step - 1050.0 / 200.0).abs() < 1e-12);
        assert!((g.velocity.step - 24.0 / 100.0).abs() < 1e-12);
        assert!((g.dt() - 0.1).abs() < 1e-12);
        assert_eq!(g.position.end(), 1050.0);
        assert_eq!(g.time(1200), 120.0);
        assert!(check_foot_bound(&p, &g).is_ok());
    }

    #[test]
    fn too_few_nodes_is_rejected() {
        let p = ProblemSpec::default_scenario();
        assert!(matches!(build_grid(&p, (2, 101, 1201)), Err(Error::Argument(_))));
        assert!(matches!(build_grid(&p, (201, 2, 1201)), Err(Error::Argument(_))));
    }

    #[test]
    fn coarse_time_step_violates_foot_bound() {
        let p = ProblemSpec::default_scenario();
        let g = build_grid(&p, (201, 101, 121)).unwrap();
        match check_foot_bound(&p, &g) {
            Err(Error::Configuration { dt, .. }) => assert!((dt - 1.0).abs() < 1e-12),
            other => panic!("expected configuration error, got {other:?}"),
        }
    }

    #[test]
    fn windows_share_level_times() {
        let p = ProblemSpec::default_scenario();
        let g = build_grid(&p, (11, 11, 1201)).unwrap();
        let w = g.window(300).unwrap();
        assert_eq!(w.levels(), 901);
        for k in 0..w.levels() {
            assert_eq!(w.time(k).to_bits(), g.time(k + 300).to_bits());
        }
        let last = g.window(1200).unwrap();
        assert_eq!(last.levels(), 1);
        assert_eq!(last.start_time(), 120.0);
        assert!(g.window(1201).is_err());
    }

    #[test]
    fn locate_clamps() {
        let a = Axis::spanning(0.0, 10.0, 11);
        assert_eq!(a.locate(-1.0), (0, 0.0));
        assert_eq!(a.locate(10.0), (9, 1.0));
        let (i, w) = a.locate(3.25);
        assert_eq!(i, 3);
        assert!((w - 0.25).abs() < 1e-12);
    }
}
