//! Baseline driving strategies and the exhaustive oracle.

mod brute_force;
mod four_phase;
mod holding;

pub use brute_force::{
    brute_force_from, brute_force_optimal, score_sequence, sequence_trajectory, OracleSolution, MAX_STAGES,
};
pub use four_phase::{four_phase_rollout, tune_four_phase, FourPhasePlan, FourPhaseRun};
pub use holding::{coast_power_holding, equilibrium_hold, HoldingConfig};

use crate::error::Result;
use crate::model::ProblemSpec;

/// Multiple of the tuned baseline fuel used as the terminal weight.
pub const TERMINAL_WEIGHT_FACTOR: f64 = 10.0;

/// Fills in the terminal weight `kappa = 10 x` tuned four-phase fuel when the
/// problem leaves it unset (zero).
pub fn calibrate_terminal_weight(problem: &ProblemSpec) -> Result<ProblemSpec> {
    if problem.penalty.terminal > 0.0 {
        return Ok(problem.clone());
    }
    let (_, fuel) = tune_four_phase(problem)?;
    Ok(problem.clone().with_terminal_weight(TERMINAL_WEIGHT_FACTOR * fuel))
}
