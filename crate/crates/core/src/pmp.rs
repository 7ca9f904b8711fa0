//! Pontryagin maximum-principle checks on candidate trajectories.
//!
//! The local Hamiltonian is taken in the maximization convention
//! `H = -a0 [u]_+ x2 + psi1 x2 + psi2 (s - r)`, with the adjoint system
//! `dpsi/dt = a0 df0/dx - (df/dx)^T psi` integrated backward along the
//! trajectory. Relative to the minimum-cost function the adjoint is
//! `psi = -a0 grad J*` (the grid solver works in the minimization convention).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hjb::{gradient_at, ValueField};
use crate::model::{self, fuel_rate, ProblemSpec, Sample, State, Trajectory};

/// Adjoint value at one trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdjointSample {
    pub t: f64,
    pub psi1: f64,
    pub psi2: f64,
}

/// Adjoint path aligned with a trajectory's samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjointPath {
    samples: Vec<AdjointSample>,
    a0: f64,
}

impl AdjointPath {
    pub fn samples(&self) -> &[AdjointSample] {
        &self.samples
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn terminal(&self) -> (f64, f64) {
        let last = self.samples[self.samples.len() - 1];
        (last.psi1, last.psi2)
    }
}

/// One of the five control regimes of the affine Hamiltonian (`s = u`, `a0 = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ControlCase {
    /// `psi2 > x2`: `u = 1`.
    FullPower,
    /// `psi2 = x2`: `u` in `(0, 1)`.
    HoldSingular,
    /// `0 < psi2 < x2`: `u = 0`.
    Coast,
    /// `psi2 = 0`: `u` in `(-1, 0)`.
    PartialBrakeSingular,
    /// `psi2 < 0`: `u = -1`.
    FullBrake,
}

impl ControlCase {
    /// The setting the case prescribes; `None` on singular arcs.
    pub fn setting(self) -> Option<f64> {
        match self {
            ControlCase::FullPower => Some(1.0),
            ControlCase::Coast => Some(0.0),
            ControlCase::FullBrake => Some(-1.0),
            ControlCase::HoldSingular | ControlCase::PartialBrakeSingular => None,
        }
    }

    pub fn is_singular(self) -> bool {
        self.setting().is_none()
    }
}

/// Equality band for the singular cases: `1e-6 max(1, x2)`.
pub fn singular_band(x2: f64) -> f64 {
    1e-6 * x2.max(1.0)
}

/// Five-case classification of the maximizing control for `s = u`, `a0 = 1`.
pub fn classify_control(psi2: f64, x2: f64) -> ControlCase {
    let eps = singular_band(x2);
    if (psi2 - x2).abs() <= eps {
        ControlCase::HoldSingular
    } else if psi2.abs() <= eps {
        ControlCase::PartialBrakeSingular
    } else if psi2 > x2 {
        ControlCase::FullPower
    } else if psi2 > 0.0 {
        ControlCase::Coast
    } else {
        ControlCase::FullBrake
    }
}

/// `-a0 [u]_+ x2 + psi1 x2 + psi2 (s - r)`, with the rest clamp on `s - r`.
pub fn local_hamiltonian(state: &State, u: f64, psi: (f64, f64), a0: f64, problem: &ProblemSpec) -> Result<f64> {
    model::check_control(u)?;
    let accel = problem.vehicle.acceleration(state.x, state.v, u);
    Ok(-a0 * fuel_rate(u, state.v) + psi.0 * state.v + psi.1 * accel)
}

/// `(dpsi1/dt, dpsi2/dt)` inside a grade segment.
#[inline]
fn adjoint_rhs(problem: &ProblemSpec, a0: f64, forced: bool, x: f64, v: f64, u: f64, psi: (f64, f64)) -> (f64, f64) {
    let vehicle = &problem.vehicle;
    let clamped = v <= 0.0 && vehicle.traction_unchecked(u) - vehicle.resistance_at(x, v) < 0.0;
    // df2/dx2 = -(b + 2 c v), zero where the rest clamp freezes the speed.
    let df2_dv = if clamped { 0.0 } else { -vehicle.davis.slope(v) };
    let forcing = if forced { a0 * 0.5 * (u + u.abs()) } else { 0.0 };
    (0.0, forcing - psi.0 - psi.1 * df2_dv)
}

/// Backward RK4 over the sample intervals. Speed and position inside an
/// interval are interpolated linearly between its end samples; grade jumps
/// crossed inside an interval kick `psi1` by `psi2 dg / v`.
fn integrate(
    samples: &[Sample],
    problem: &ProblemSpec,
    a0: f64,
    terminal: (f64, f64),
    forced: bool,
) -> Vec<AdjointSample> {
    let n = samples.len();
    let mut out = vec![
        AdjointSample {
            t: 0.0,
            psi1: 0.0,
            psi2: 0.0
        };
        n
    ];
    let mut psi = terminal;
    out[n - 1] = AdjointSample {
        t: samples[n - 1].t,
        psi1: psi.0,
        psi2: psi.1,
    };
    let jumps: Vec<(f64, f64)> = problem.vehicle.grade.jumps().collect();
    for k in (0..n - 1).rev() {
        let (a, b) = (samples[k], samples[k + 1]);
        let h = b.t - a.t;
        let at = |frac: f64| (a.x + frac * (b.x - a.x), a.v + frac * (b.v - a.v));
        let f = |frac: f64, p: (f64, f64)| {
            let (x, v) = at(frac);
            adjoint_rhs(problem, a0, forced, x, v, a.u, p)
        };
        // Integrate in reversed time s = t_{k+1} - t.
        let neg = |d: (f64, f64)| (-d.0, -d.1);
        let k1 = neg(f(1.0, psi));
        let k2 = neg(f(0.5, (psi.0 + 0.5 * h * k1.0, psi.1 + 0.5 * h * k1.1)));
        let k3 = neg(f(0.5, (psi.0 + 0.5 * h * k2.0, psi.1 + 0.5 * h * k2.1)));
        let k4 = neg(f(0.0, (psi.0 + h * k3.0, psi.1 + h * k3.1)));
        psi = (
            psi.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            psi.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        );
        for &(position, dg) in &jumps {
            if a.x < position && position <= b.x {
                let frac = (position - a.x) / (b.x - a.x);
                let v = (a.v + frac * (b.v - a.v)).max(1e-9);
                psi.0 += psi.1 * dg / v;
            }
        }
        out[k] = AdjointSample {
            t: a.t,
            psi1: psi.0,
            psi2: psi.1,
        };
    }
    out
}

fn check_a0(a0: f64) -> Result<()> {
    if !(a0 > 0.0) || !a0.is_finite() {
        return Err(Error::argument(format!("normalisation a0 must be positive, got {a0}")));
    }
    Ok(())
}

/// Integrates the adjoint system backward from `psi(T) = 0`.
pub fn integrate_adjoint(traj: &Trajectory, problem: &ProblemSpec, a0: f64) -> Result<AdjointPath> {
    integrate_adjoint_from(traj, problem, a0, (0.0, 0.0))
}

/// Integrates the adjoint system backward from a given terminal costate.
///
/// With the end-point conditions imposed, transversality leaves `psi(T)` free
/// (it equals the end-point multipliers); `(0, 0)` is the free-end value.
pub fn integrate_adjoint_from(
    traj: &Trajectory,
    problem: &ProblemSpec,
    a0: f64,
    terminal: (f64, f64),
) -> Result<AdjointPath> {
    check_a0(a0)?;
    let last = traj.last();
    if (last.t - problem.trip.horizon).abs() > 1e-6 {
        return Err(Error::argument(format!(
            "trajectory ends at t = {} but the horizon is {}",
            last.t, problem.trip.horizon
        )));
    }
    Ok(AdjointPath {
        samples: integrate(traj.samples(), problem, a0, terminal, true),
        a0,
    })
}

/// Sample filter for comparisons against the value grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkOptions {
    /// Samples within this many samples of a control switch are skipped.
    pub switch_radius: usize,
    /// Samples within this many cells of a grid edge are skipped.
    pub boundary_cells: f64,
    /// Samples within this distance (m) of a grade breakpoint are skipped.
    pub grade_margin: f64,
    /// Fraction of the horizon trimmed at each end of the trip.
    pub trim_fraction: f64,
}

impl Default for LinkOptions {
    fn default() -> Self {
        Self {
            switch_radius: 3,
            boundary_cells: 2.0,
            grade_margin: 10.0,
            trim_fraction: 0.1,
        }
    }
}

/// Indices of samples that are away from switches, grid edges and grade breakpoints,
/// with the value-gradient estimate at each.
fn smooth_samples(
    field: &ValueField,
    traj: &Trajectory,
    problem: &ProblemSpec,
    opts: &LinkOptions,
) -> Result<Vec<(usize, (f64, f64))>> {
    let grid = field.grid();
    let near_switch = traj.near_switch_mask(opts.switch_radius);
    let (hx, hv) = (grid.position.step, grid.velocity.step);
    let mx = opts.boundary_cells * hx;
    let mv = opts.boundary_cells * hv;
    let breakpoints: Vec<f64> = problem.vehicle.grade.jumps().map(|(p, _)| p).collect();
    let mut out = Vec::new();
    let (t0, t1) = (traj.first().t, traj.last().t);
    let trim = opts.trim_fraction * (t1 - t0);
    for (i, s) in traj.samples().iter().enumerate() {
        if near_switch[i] || s.t < t0 + trim || s.t > t1 - trim {
            continue;
        }
        let interior = s.x >= grid.position.start + mx
            && s.x <= grid.position.end() - mx
            && s.v >= grid.velocity.start + mv
            && s.v <= grid.velocity.end() - mv;
        if !interior || breakpoints.iter().any(|p| (s.x - p).abs() < opts.grade_margin) {
            continue;
        }
        out.push((i, gradient_at(field, &s.state())?));
    }
    Ok(out)
}

/// Terminal costate whose adjoint path best matches `-a0 J_x2` in the
/// least-squares sense on smooth samples.
///
/// With a nonsmooth terminal penalty the transversality condition only confines
/// `psi(T)` to a set; this picks the member consistent with the value grid.
/// `psi2` alone identifies both components because `dpsi2/dt` contains `-psi1`.
pub fn fit_terminal_costate(
    field: &ValueField,
    traj: &Trajectory,
    problem: &ProblemSpec,
    a0: f64,
    opts: &LinkOptions,
) -> Result<(f64, f64)> {
    check_a0(a0)?;
    let samples = traj.samples();
    let forced = integrate(samples, problem, a0, (0.0, 0.0), true);
    let unit1 = integrate(samples, problem, a0, (1.0, 0.0), false);
    let unit2 = integrate(samples, problem, a0, (0.0, 1.0), false);
    let points = smooth_samples(field, traj, problem, opts)?;
    if points.len() < 2 {
        return Err(Error::argument("too few smooth samples to fit the terminal costate"));
    }
    let (mut a11, mut a12, mut a22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(i, (_, jv)) in &points {
        let (c1, c2) = (unit1[i].psi2, unit2[i].psi2);
        let d = -a0 * jv - forced[i].psi2;
        a11 += c1 * c1;
        a12 += c1 * c2;
        a22 += c2 * c2;
        r1 += c1 * d;
        r2 += c2 * d;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() <= 1e-12 * (a11 * a22).max(1e-300) {
        return Err(Error::argument("terminal-costate fit is degenerate"));
    }
    Ok(((a22 * r1 - a12 * r2) / det, (a11 * r2 - a12 * r1) / det))
}

/// Per-sample outcome of the maximum-principle check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PmpSample {
    pub t: f64,
    pub applied: f64,
    pub maximizer: f64,
    /// `max_u H - H(applied) >= 0`.
    pub gap: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmpReport {
    pub samples: Vec<PmpSample>,
    pub pass_fraction: f64,
    pub worst_gap: f64,
    /// Maximal runs of consecutive failing samples, as `(t_first, t_last)`.
    pub failing_spans: Vec<(f64, f64)>,
}

/// Size of the Hamiltonian's terms at a sample: `a0 v + |psi1| v + |psi2| (A + |r|)`.
pub fn hamiltonian_scale(state: &State, psi: (f64, f64), a0: f64, problem: &ProblemSpec) -> f64 {
    let r = problem.vehicle.resistance_at(state.x, state.v).abs();
    a0 * state.v + psi.0.abs() * state.v + psi.1.abs() * (problem.vehicle.max_traction + r)
}

fn check_aligned(traj: &Trajectory, adj: &AdjointPath) -> Result<()> {
    if traj.len() != adj.samples.len()
        || traj
            .samples()
            .iter()
            .zip(&adj.samples)
            .any(|(s, a)| (s.t - a.t).abs() > 1e-9)
    {
        return Err(Error::argument("trajectory and adjoint path are not aligned"));
    }
    Ok(())
}

/// Checks at every sample whether the applied setting maximizes the local
/// Hamiltonian over the control set, within `rel_tol` times the local scale.
pub fn check_maximum_principle(
    traj: &Trajectory,
    adj: &AdjointPath,
    problem: &ProblemSpec,
    rel_tol: f64,
) -> Result<PmpReport> {
    check_aligned(traj, adj)?;
    let a0 = adj.a0;
    let order = problem.controls.tie_break_order();
    let settings = problem.controls.settings();
    let mut samples = Vec::with_capacity(traj.len());
    for (s, p) in traj.samples().iter().zip(&adj.samples) {
        let state = s.state();
        let psi = (p.psi1, p.psi2);
        let mut best = (f64::NEG_INFINITY, 0.0);
        for &c in &order {
            let h = local_hamiltonian(&state, settings[c], psi, a0, problem)?;
            if h > best.0 {
                best = (h, settings[c]);
            }
        }
        let applied = local_hamiltonian(&state, s.u, psi, a0, problem)?;
        let gap = (best.0 - applied).max(0.0);
        let tolerance = rel_tol * hamiltonian_scale(&state, psi, a0, problem);
        samples.push(PmpSample {
            t: s.t,
            applied: s.u,
            maximizer: best.1,
            gap,
            tolerance,
            passed: gap <= tolerance,
        });
    }
    let passed = samples.iter().filter(|s| s.passed).count();
    let worst_gap = samples.iter().map(|s| s.gap).fold(0.0, f64::max);
    let mut failing_spans = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    for s in &samples {
        match (s.passed, open.as_mut()) {
            (false, Some(span)) => span.1 = s.t,
            (false, None) => open = Some((s.t, s.t)),
            (true, Some(_)) => failing_spans.extend(open.take()),
            (true, None) => {}
        }
    }
    failing_spans.extend(open);
    Ok(PmpReport {
        pass_fraction: passed as f64 / samples.len() as f64,
        worst_gap,
        failing_spans,
        samples,
    })
}

/// `H0 + integral of H` along the pair, by the trapezoidal rule.
pub fn global_hamiltonian(
    traj: &Trajectory,
    adj: &AdjointPath,
    h0: f64,
    a0: f64,
    problem: &ProblemSpec,
) -> Result<f64> {
    check_aligned(traj, adj)?;
    let mut values = Vec::with_capacity(traj.len());
    for (s, p) in traj.samples().iter().zip(&adj.samples) {
        values.push(local_hamiltonian(&s.state(), s.u, (p.psi1, p.psi2), a0, problem)?);
    }
    let integral: f64 = traj
        .samples()
        .windows(2)
        .zip(values.windows(2))
        .map(|(s, h)| 0.5 * (s[1].t - s[0].t) * (h[0] + h[1]))
        .sum();
    Ok(h0 + integral)
}

/// Discrepancy between the adjoint path and `-a0 grad J*`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkReport {
    pub samples_used: usize,
    /// Median of `|psi2 + a0 J_x2| / max(|a0 J_x2|, floor)`.
    pub median_relative_psi2: f64,
    pub max_relative_psi2: f64,
    pub median_relative_psi1: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Compares `psi` with central differences of the value grid on samples away
/// from control switches, grid edges and grade breakpoints.
///
/// Relative errors use `max(|a0 dJ|, floor)` as denominator so that samples
/// where the gradient vanishes do not dominate.
pub fn verify_adjoint_value_link(
    field: &ValueField,
    adj: &AdjointPath,
    traj: &Trajectory,
    problem: &ProblemSpec,
    opts: &LinkOptions,
    floor: f64,
) -> Result<LinkReport> {
    check_aligned(traj, adj)?;
    for s in traj.samples() {
        if !field.grid().contains(&s.state()) {
            return Err(Error::Extrapolation { x: s.x, v: s.v, t: s.t });
        }
    }
    let a0 = adj.a0;
    let points = smooth_samples(field, traj, problem, opts)?;
    let rel = |psi: f64, d: f64| (psi + a0 * d).abs() / (a0 * d).abs().max(floor);
    let rel2: Vec<f64> = points
        .iter()
        .map(|&(i, (_, jv))| rel(adj.samples[i].psi2, jv))
        .collect();
    let rel1: Vec<f64> = points
        .iter()
        .map(|&(i, (jx, _))| rel(adj.samples[i].psi1, jx))
        .collect();
    Ok(LinkReport {
        samples_used: points.len(),
        max_relative_psi2: rel2.iter().copied().fold(0.0, f64::max),
        median_relative_psi2: median(rel2),
        median_relative_psi1: median(rel1),
    })
}
