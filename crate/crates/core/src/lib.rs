//! Minimum-fuel speed planning for a single vehicle.
//!
//! The crate solves the trip problem on a position-velocity-time grid with a
//! semi-Lagrangian Hamilton-Jacobi-Bellman sweep, checks candidate
//! trajectories against Pontryagin and Kuhn-Tucker optimality conditions,
//! provides classical baseline strategies and a brute-force oracle, and runs a
//! receding-horizon controller against a stream of environment events.

pub mod error;
pub mod hjb;
pub mod kkt;
pub mod model;
pub mod pmp;
pub mod sequential;
pub mod strategies;

pub use error::{Error, Result};
pub use model::{
    ControlSet, DavisCoefficients, GradeBreakpoint, GradeProfile, Objective, PenaltyWeights, ProblemSpec, Sample,
    SpeedLimitProfile, State, Trajectory, TripSpec, VehicleParams,
};
