//! Shared fixtures for the benchmarks.

use ecoplan::strategies::calibrate_terminal_weight;
use ecoplan::ProblemSpec;

/// Default scenario with the terminal weight calibrated.
pub fn default_problem() -> ProblemSpec {
    calibrate_terminal_weight(&ProblemSpec::default_scenario()).expect("default scenario is feasible")
}
