use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{self, ProblemSpec, Sample, State, Trajectory, DEFAULT_DT};

/// Largest stage count the oracle will enumerate (`3^14` sequences).
pub const MAX_STAGES: usize = 14;

/// Settings in enumeration order; earlier entries win ties.
const ORDER: [f64; 3] = [0.0, -1.0, 1.0];

/// Best piecewise-constant control sequence found by exhaustive enumeration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSolution {
    pub sequence: Vec<f64>,
    pub value: f64,
    pub final_state: State,
}

#[derive(Clone, Copy)]
struct StagePlan {
    substeps: usize,
    h: f64,
}

impl StagePlan {
    fn new(duration: f64) -> Self {
        let substeps = (duration / DEFAULT_DT - 1e-9).ceil().max(1.0) as usize;
        Self {
            substeps,
            h: duration / substeps as f64,
        }
    }

    /// One stage under constant `u`; returns the end state and its running cost
    /// (fuel plus speed-limit penalty) by the trapezoidal rule.
    #[inline]
    fn run(&self, problem: &ProblemSpec, state: &State, u: f64) -> (State, f64) {
        let mut s = *state;
        let mut cost = 0.0;
        let mut here = problem.running_cost(s.x, s.v, u);
        for _ in 0..self.substeps {
            let next = model::rk4(&s, u, self.h, &problem.vehicle);
            let there = problem.running_cost(next.x, next.v, u);
            cost += 0.5 * self.h * (here + there);
            here = there;
            s = next;
        }
        (s, cost)
    }
}

struct Best {
    value: f64,
    sequence: Vec<f64>,
    final_state: State,
}

fn search(
    problem: &ProblemSpec,
    plan: StagePlan,
    stages: usize,
    state: &State,
    cost: f64,
    prefix: &mut Vec<f64>,
    best: &mut Option<Best>,
) {
    if prefix.len() == stages {
        let value = cost + problem.terminal_penalty(state.x, state.v);
        if best.as_ref().map_or(true, |b| value < b.value) {
            *best = Some(Best {
                value,
                sequence: prefix.clone(),
                final_state: *state,
            });
        }
        return;
    }
    for u in ORDER {
        let (next, stage_cost) = plan.run(problem, state, u);
        prefix.push(u);
        search(problem, plan, stages, &next, cost + stage_cost, prefix, best);
        prefix.pop();
    }
}

/// Total cost of a stage-wise constant control sequence from `start`:
/// running cost over `[start.t, T]` plus the terminal penalty.
pub fn score_sequence(problem: &ProblemSpec, start: &State, sequence: &[f64]) -> Result<f64> {
    if sequence.is_empty() || sequence.len() > MAX_STAGES {
        return Err(Error::argument(format!(
            "sequence must have 1..={MAX_STAGES} stages, got {}",
            sequence.len()
        )));
    }
    for &u in sequence {
        model::check_control(u)?;
    }
    let plan = StagePlan::new((problem.trip.horizon - start.t) / sequence.len() as f64);
    let mut state = *start;
    let mut cost = 0.0;
    for &u in sequence {
        let (next, c) = plan.run(problem, &state, u);
        state = next;
        cost += c;
    }
    Ok(cost + problem.terminal_penalty(state.x, state.v))
}

/// Samples a stage-wise constant sequence at every integrator substep, from
/// `start` to the horizon. The last sample repeats the final setting.
pub fn sequence_trajectory(problem: &ProblemSpec, start: &State, sequence: &[f64]) -> Result<Trajectory> {
    if sequence.is_empty() {
        return Err(Error::argument("sequence must have at least one stage"));
    }
    for &u in sequence {
        model::check_control(u)?;
    }
    let plan = StagePlan::new((problem.trip.horizon - start.t) / sequence.len() as f64);
    let mut samples = Vec::with_capacity(sequence.len() * plan.substeps + 1);
    let mut state = *start;
    for (k, &u) in sequence.iter().enumerate() {
        for m in 0..plan.substeps {
            samples.push(Sample {
                t: state.t,
                x: state.x,
                v: state.v,
                u,
            });
            state = model::rk4(&state, u, plan.h, &problem.vehicle);
            state.t = start.t + ((k * plan.substeps + m + 1) as f64) * plan.h;
        }
    }
    let u = sequence[sequence.len() - 1];
    samples.push(Sample {
        t: state.t,
        x: state.x,
        v: state.v,
        u,
    });
    Trajectory::new(samples)
}

/// Exhaustive search over `{-1, 0, +1}^stages` from `start` to the horizon.
///
/// Each stage lasts `(T - start.t) / stages` and is integrated with RK4 steps of
/// at most the default integrator step. The score is fuel plus the speed-limit
/// penalty plus the terminal penalty, the same cost the grid solver minimizes.
/// Ties go to the lexicographically first sequence under the order `0 < -1 < +1`.
pub fn brute_force_from(problem: &ProblemSpec, start: &State, stages: usize) -> Result<OracleSolution> {
    if stages == 0 || stages > MAX_STAGES {
        return Err(Error::argument(format!(
            "oracle stage count must be in 1..={MAX_STAGES}, got {stages}"
        )));
    }
    let duration = (problem.trip.horizon - start.t) / stages as f64;
    if !(duration > 0.0) {
        return Err(Error::argument("start time must precede the horizon"));
    }
    let plan = StagePlan::new(duration);
    // Fan out over the first two stages; reduce in enumeration order.
    let depth = stages.min(2);
    let mut prefixes: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..depth {
        prefixes = prefixes
            .into_iter()
            .flat_map(|p| ORDER.iter().map(move |&u| [p.as_slice(), &[u]].concat()))
            .collect();
    }
    let results: Vec<Option<Best>> = prefixes
        .into_par_iter()
        .map(|mut prefix| {
            let mut state = *start;
            let mut cost = 0.0;
            for &u in &prefix {
                let (next, c) = plan.run(problem, &state, u);
                state = next;
                cost += c;
            }
            let mut best = None;
            search(problem, plan, stages, &state, cost, &mut prefix, &mut best);
            best
        })
        .collect();
    let mut overall: Option<Best> = None;
    for best in results.into_iter().flatten() {
        if overall.as_ref().map_or(true, |b| best.value < b.value) {
            overall = Some(best);
        }
    }
    let best = overall.expect("at least one sequence is enumerated");
    Ok(OracleSolution {
        sequence: best.sequence,
        value: best.value,
        final_state: best.final_state,
    })
}

/// Exhaustive search from the trip start.
pub fn brute_force_optimal(problem: &ProblemSpec, stages: usize) -> Result<OracleSolution> {
    brute_force_from(problem, &State::start_of(problem), stages)
}
