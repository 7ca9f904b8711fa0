//! CSV and JSON emission.

use std::path::{Path, PathBuf};

use ecoplan::hjb::ValueField;
use ecoplan::model::{cumulative_fuel, fuel_rate};
use ecoplan::sequential::{environment_at, ScenarioEvent};
use ecoplan::{ProblemSpec, Sample, Trajectory};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_error, CliError};

/// Column order of every trajectory CSV.
pub const TRAJECTORY_HEADER: [&str; 8] = [
    "t_s",
    "x_m",
    "v_mps",
    "u",
    "fuel_rate",
    "cum_fuel",
    "speed_limit_mps",
    "grade_mps2",
];

#[derive(Debug, Serialize)]
struct Row {
    t_s: f64,
    x_m: f64,
    v_mps: f64,
    u: f64,
    fuel_rate: f64,
    cum_fuel: f64,
    speed_limit_mps: f64,
    grade_mps2: f64,
}

/// The columns `verify` reads back; the rest are ignored.
#[derive(Debug, Deserialize)]
struct InputRow {
    t_s: f64,
    x_m: f64,
    v_mps: f64,
    u: f64,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    let file = std::fs::File::create(path).map_err(|e| io_error(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn csv_failure(path: &Path, err: impl std::fmt::Display) -> CliError {
    CliError::Internal(format!("{}: {err}", path.display()))
}

/// Writes one row per sample. Speed limit and grade are those in force at the
/// sample time once `events` are applied.
pub fn write_trajectory(
    path: &Path,
    traj: &Trajectory,
    problem: &ProblemSpec,
    events: &[ScenarioEvent],
) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let cum = cumulative_fuel(traj);
    for (s, cum_fuel) in traj.samples().iter().zip(cum) {
        let env = environment_at(problem, events, s.t)?;
        w.serialize(Row {
            t_s: s.t,
            x_m: s.x,
            v_mps: s.v,
            u: s.u,
            fuel_rate: fuel_rate(s.u, s.v),
            cum_fuel,
            speed_limit_mps: env.trip.speed_limits.limit_at(s.x),
            grade_mps2: env.vehicle.grade.at(s.x),
        })
        .map_err(|e| csv_failure(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// Reads a trajectory CSV. Negative speeds are kept so that verification can
/// report them.
pub fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let file = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut samples = Vec::new();
    for (i, row) in reader.deserialize::<InputRow>().enumerate() {
        let row = row.map_err(|e| CliError::Parse {
            path: path.to_owned(),
            detail: format!("row {}: {e}", i + 1),
        })?;
        samples.push(Sample {
            t: row.t_s,
            x: row.x_m,
            v: row.v_mps,
            u: row.u,
        });
    }
    Trajectory::candidate(samples).map_err(|e| CliError::invariant("trajectory", e))
}

/// Writes the value function at grid level `level` as a matrix: one row per
/// velocity node, one column per position node.
pub fn write_value_slice(path: &Path, field: &ValueField, level: usize) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let grid = field.grid();
    let mut header = vec!["v_mps".to_owned()];
    header.extend((0..grid.position.len).map(|i| grid.position.node(i).to_string()));
    w.write_record(&header).map_err(|e| csv_failure(path, e))?;
    for j in 0..grid.velocity.len {
        let mut row = vec![grid.velocity.node(j).to_string()];
        row.extend((0..grid.position.len).map(|i| field.node_value(level, i, j).to_string()));
        w.write_record(&row).map_err(|e| csv_failure(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// SHA-256 of the effective inputs of a run.
pub fn digest(command: &str, scenario: &impl Serialize) -> String {
    let canonical = serde_json::to_vec(scenario).expect("scenario serializes");
    let mut hasher = Sha256::new();
    hasher.update(command.as_bytes());
    hasher.update([0]);
    hasher.update(&canonical);
    hex::encode(hasher.finalize())
}

/// One JSON document per run.
#[derive(Debug, Serialize)]
pub struct RunReport<R: Serialize> {
    pub command: String,
    pub input_digest: String,
    pub outputs: Vec<String>,
    pub results: R,
    /// Wall-clock seconds; the only non-reproducible field.
    pub elapsed_s: f64,
}

pub fn write_report<R: Serialize>(dir: &Path, report: &RunReport<R>) -> Result<PathBuf, CliError> {
    let path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(report).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    Ok(path)
}
