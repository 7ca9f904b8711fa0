//! Constrained formulation of the trip and Kuhn-Tucker checks.
//!
//! Constraints: `g1 = u - 1`, `g2 = -u - 1`, `g3 = -x2` (sampled, `<= 0`) and
//! the terminal equalities `g4 = x1(T) - L`, `g5 = x2(T) - v2`. Stationarity
//! in `u` is checked on the relaxation `u in [-1, 1]` with the one-sided
//! derivatives of the minimization-convention Hamiltonian
//!
//! ```text
//! D+ = x2 + A J_x2 + lambda1 - lambda2   (u > 0 branch)
//! D- =      A J_x2 + lambda1 - lambda2   (u < 0 branch)
//! ```
//!
//! with `J_x2` taken from the value grid by central differences.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hjb::{gradient_at, ValueField};
use crate::model::{fuel_rate, ProblemSpec, Trajectory};
use crate::pmp::AdjointPath;

/// Constraint values along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintValues {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub g3: Vec<f64>,
    pub g4: f64,
    pub g5: f64,
}

impl ConstraintValues {
    fn sampled(&self) -> [&[f64]; 3] {
        [&self.g1, &self.g2, &self.g3]
    }
}

pub fn constraint_values(traj: &Trajectory, problem: &ProblemSpec) -> ConstraintValues {
    let samples = traj.samples();
    let last = traj.last();
    ConstraintValues {
        g1: samples.iter().map(|s| s.u - 1.0).collect(),
        g2: samples.iter().map(|s| -s.u - 1.0).collect(),
        g3: samples.iter().map(|s| -s.v).collect(),
        g4: last.x - problem.trip.length,
        g5: last.v - problem.trip.v_end,
    }
}

/// Multipliers and relaxing variables of the generalized Lagrangian.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Multipliers {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub lambda3: Vec<f64>,
    pub lambda4: f64,
    pub lambda5: f64,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub gamma3: Vec<f64>,
    /// Set when some samples had no value-gradient estimate and got zero multipliers.
    pub degenerate: bool,
}

impl Multipliers {
    /// All multipliers zero, relaxing variables reconstructed from `g`.
    pub fn zero(constraints: &ConstraintValues) -> Self {
        let n = constraints.g1.len();
        Self {
            lambda1: vec![0.0; n],
            lambda2: vec![0.0; n],
            lambda3: vec![0.0; n],
            lambda4: 0.0,
            lambda5: 0.0,
            gamma1: relaxing(&constraints.g1),
            gamma2: relaxing(&constraints.g2),
            gamma3: relaxing(&constraints.g3),
            degenerate: false,
        }
    }

    fn len(&self) -> usize {
        self.lambda1.len()
    }

    fn sampled(&self) -> [(&[f64], &[f64]); 3] {
        [
            (&self.lambda1, &self.gamma1),
            (&self.lambda2, &self.gamma2),
            (&self.lambda3, &self.gamma3),
        ]
    }
}

/// `gamma = sqrt(-g)` where `g <= 0`, zero where the constraint is violated.
fn relaxing(g: &[f64]) -> Vec<f64> {
    g.iter().map(|&g| (-g).max(0.0).sqrt()).collect()
}

/// Value-grid gradient at every sample; `None` off the grid.
fn value_gradients(traj: &Trajectory, field: &ValueField) -> Vec<Option<(f64, f64)>> {
    traj.samples()
        .iter()
        .map(|s| {
            let state = s.state();
            field
                .grid()
                .contains(&state)
                .then(|| gradient_at(field, &state).ok())
                .flatten()
        })
        .collect()
}

/// Estimates multipliers along a trajectory.
///
/// `lambda1` and `lambda2` solve the stationarity relation of the active
/// branch, clipped at zero (the one-dimensional nonnegative least-squares
/// solution): at `u = 1`, `lambda1 = max(0, -(x2 + A J_x2))`; at `u = -1`,
/// `lambda2 = max(0, A J_x2)`. They are zero wherever their constraint is
/// inactive, and so is `lambda3`, which the `u`-stationarity relation does not
/// involve. The terminal multipliers are the slopes of the terminal penalty,
/// `kappa / L` and `kappa / V_max`.
pub fn fit_multipliers(traj: &Trajectory, field: &ValueField, problem: &ProblemSpec) -> Multipliers {
    let constraints = constraint_values(traj, problem);
    let mut mult = Multipliers::zero(&constraints);
    let traction = problem.vehicle.max_traction;
    for (i, (s, grad)) in traj.samples().iter().zip(value_gradients(traj, field)).enumerate() {
        let Some((_, jv)) = grad else {
            mult.degenerate = true;
            continue;
        };
        if constraints.g1[i] == 0.0 {
            mult.lambda1[i] = (-(s.v + traction * jv)).max(0.0);
        }
        if constraints.g2[i] == 0.0 {
            mult.lambda2[i] = (traction * jv).max(0.0);
        }
    }
    mult.lambda4 = problem.penalty.terminal / problem.trip.length;
    mult.lambda5 = problem.penalty.terminal / problem.v_max();
    mult
}

/// Source of the costate entering the Lagrangian.
#[derive(Debug, Clone, Copy)]
pub enum Costate<'a> {
    /// Value-grid gradient `grad J*`.
    Value(&'a ValueField),
    /// Adjoint path, mapped to the minimization convention by `-psi / a0`.
    Adjoint(&'a AdjointPath),
}

fn costates(traj: &Trajectory, source: Costate<'_>) -> Result<Vec<(f64, f64)>> {
    match source {
        Costate::Value(field) => traj.samples().iter().map(|s| gradient_at(field, &s.state())).collect(),
        Costate::Adjoint(adj) => {
            if adj.samples().len() != traj.len() {
                return Err(Error::argument("trajectory and adjoint path are not aligned"));
            }
            let a0 = adj.a0();
            Ok(adj.samples().iter().map(|p| (-p.psi1 / a0, -p.psi2 / a0)).collect())
        }
    }
}

/// `H(t) + sum_i lambda_i (g_i + gamma_i^2) + lambda4 g4 + lambda5 g5` at every sample,
/// with `H = [u]_+ x2 + p1 x2 + p2 (s - r)`.
pub fn generalized_lagrangian(
    traj: &Trajectory,
    costate: Costate<'_>,
    mult: &Multipliers,
    problem: &ProblemSpec,
) -> Result<Vec<f64>> {
    if mult.len() != traj.len() {
        return Err(Error::argument("multipliers and trajectory are not aligned"));
    }
    let grads = costates(traj, costate)?;
    let constraints = constraint_values(traj, problem);
    let terminal = mult.lambda4 * constraints.g4 + mult.lambda5 * constraints.g5;
    Ok(traj
        .samples()
        .iter()
        .zip(&grads)
        .enumerate()
        .map(|(i, (s, &(p1, p2)))| {
            let accel = problem.vehicle.acceleration(s.x, s.v, s.u);
            let h = fuel_rate(s.u, s.v) + p1 * s.v + p2 * accel;
            let relaxed: f64 = constraints
                .sampled()
                .iter()
                .zip(mult.sampled())
                .map(|(g, (lambda, gamma))| lambda[i] * (g[i] + gamma[i] * gamma[i]))
                .sum();
            h + relaxed + terminal
        })
        .collect())
}

/// Residuals of the Kuhn-Tucker conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktResiduals {
    /// Generalized stationarity residual in `u` per sample; `None` off the grid.
    pub stationarity: Vec<Option<f64>>,
    /// `x2 + A |J_x2|` per sample, the size of the branch derivatives.
    pub scale: Vec<f64>,
    /// Worst `max(0, g_i)` over the sampled inequalities.
    pub primal_violation: f64,
    /// Largest sampled violation per inequality, `[g1, g2, g3]`.
    pub inequality_violation: [f64; 3],
    /// `|g4| > tol L`.
    pub g4_violated: bool,
    /// `|g5| > tol V_max`.
    pub g5_violated: bool,
    /// Worst `|lambda_i g_i|`, `i = 1..3`.
    pub complementarity: f64,
    /// Worst `max(0, -lambda_i)`.
    pub dual: f64,
    /// Worst `|gamma_i^2 + g_i|` where `g_i <= 0`.
    pub relaxing_mismatch: f64,
    /// Median `|dL/dt|` along the trajectory; reported only, `None` when
    /// some sample lies off the grid.
    pub lagrangian_rate_median: Option<f64>,
}

impl KktResiduals {
    /// Fraction of samples with `stationarity <= rel_tol * scale`.
    pub fn stationarity_pass_fraction(&self, rel_tol: f64) -> f64 {
        let passed = self
            .stationarity
            .iter()
            .zip(&self.scale)
            .filter(|(r, &scale)| r.is_some_and(|r| r <= rel_tol * scale))
            .count();
        passed as f64 / self.stationarity.len().max(1) as f64
    }
}

/// Generalized stationarity residual at a sample for the applied setting.
fn stationarity(u: f64, v: f64, jv: f64, traction: f64, lambda1: f64, lambda2: f64) -> f64 {
    let lower = traction * jv + lambda1 - lambda2;
    let upper = v + lower;
    if u >= 1.0 {
        upper.max(0.0)
    } else if u <= -1.0 {
        (-lower).max(0.0)
    } else if u == 0.0 {
        // A minimum at the kink needs D- <= 0 <= D+.
        lower.max(0.0) + (-upper).max(0.0)
    } else if u > 0.0 {
        upper.abs()
    } else {
        lower.abs()
    }
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Evaluates stationarity, feasibility, complementarity and sign conditions.
/// `tol` is the relative tolerance of the terminal equalities.
pub fn kkt_residuals(
    traj: &Trajectory,
    field: &ValueField,
    mult: &Multipliers,
    problem: &ProblemSpec,
    tol: f64,
) -> Result<KktResiduals> {
    if mult.len() != traj.len() {
        return Err(Error::argument("multipliers and trajectory are not aligned"));
    }
    let constraints = constraint_values(traj, problem);
    let traction = problem.vehicle.max_traction;
    let grads = value_gradients(traj, field);

    let mut stationarity_res = Vec::with_capacity(traj.len());
    let mut scale = Vec::with_capacity(traj.len());
    for (i, (s, grad)) in traj.samples().iter().zip(&grads).enumerate() {
        let jv = grad.map_or(0.0, |g| g.1);
        scale.push(s.v.abs() + traction * jv.abs());
        stationarity_res.push(grad.map(|_| stationarity(s.u, s.v, jv, traction, mult.lambda1[i], mult.lambda2[i])));
    }

    let mut inequality_violation = [0.0f64; 3];
    let mut complementarity = 0.0f64;
    let mut relaxing_mismatch = 0.0f64;
    for (k, (g, (lambda, gamma))) in constraints.sampled().iter().zip(mult.sampled()).enumerate() {
        for i in 0..g.len() {
            inequality_violation[k] = inequality_violation[k].max(g[i]);
            complementarity = complementarity.max((lambda[i] * g[i]).abs());
            if g[i] <= 0.0 {
                relaxing_mismatch = relaxing_mismatch.max((gamma[i] * gamma[i] + g[i]).abs());
            }
        }
    }
    let dual = mult
        .sampled()
        .iter()
        .flat_map(|(lambda, _)| lambda.iter())
        .chain([&mult.lambda4, &mult.lambda5])
        .fold(0.0f64, |worst, &l| if l < 0.0 { worst.max(-l) } else { worst });

    let lagrangian_rate_median = if grads.iter().all(Option::is_some) {
        let lagrangian = generalized_lagrangian(traj, Costate::Value(field), mult, problem)?;
        Some(median(
            traj.samples()
                .windows(2)
                .zip(lagrangian.windows(2))
                .map(|(s, l)| ((l[1] - l[0]) / (s[1].t - s[0].t)).abs())
                .collect(),
        ))
    } else {
        None
    };

    Ok(KktResiduals {
        stationarity: stationarity_res,
        scale,
        primal_violation: inequality_violation.iter().copied().fold(0.0, f64::max),
        inequality_violation,
        g4_violated: constraints.g4.abs() > tol * problem.trip.length,
        g5_violated: constraints.g5.abs() > tol * problem.v_max(),
        complementarity,
        dual,
        relaxing_mismatch,
        lagrangian_rate_median,
    })
}
