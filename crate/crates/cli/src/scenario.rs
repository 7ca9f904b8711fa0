//! Scenario files: a JSON document describing the vehicle, the trip, solver
//! settings and the event stream. Unknown keys are rejected and every omitted
//! section is filled with its default on load.

use std::path::{Path, PathBuf};

use ecoplan::sequential::{environment_at, EventKind, NoiseConfig, ScenarioEvent, DEFAULT_UPDATE_INTERVAL};
use ecoplan::{
    ControlSet, DavisCoefficients, GradeBreakpoint, GradeProfile, ProblemSpec, SpeedLimitProfile, TripSpec,
    VehicleParams,
};
use serde::{Deserialize, Serialize};

use crate::error::{io_error, CliError};

/// Speed limit applied over the whole trip when the scenario gives none (m/s).
pub const DEFAULT_SPEED_LIMIT: f64 = 20.0;
/// Grid nodes `(position, velocity, time)` when the scenario gives none.
pub const DEFAULT_GRID: [usize; 3] = [211, 81, 601];
/// Stage count of the brute-force oracle when the scenario gives none.
pub const DEFAULT_ORACLE_STAGES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub vehicle: VehicleSection,
    pub trip: TripSection,
    #[serde(default = "default_controls")]
    pub controls: Vec<f64>,
    #[serde(default)]
    pub penalty: PenaltySection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub events: Vec<EventEntry>,
    #[serde(default)]
    pub noise: Option<NoiseSection>,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSection {
    #[serde(default)]
    pub davis: DavisSection,
    #[serde(default = "one")]
    pub max_traction: f64,
    #[serde(default = "flat_grade")]
    pub grade: Vec<GradeEntry>,
}

impl Default for VehicleSection {
    fn default() -> Self {
        Self {
            davis: DavisSection::default(),
            max_traction: 1.0,
            grade: flat_grade(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DavisSection {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for DavisSection {
    fn default() -> Self {
        let d = DavisCoefficients::default();
        Self { a: d.a, b: d.b, c: d.c }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradeEntry {
    /// Segment start (m).
    pub position: f64,
    /// Grade acceleration (m/s^2); positive values push the vehicle forward.
    pub accel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripSection {
    pub length: f64,
    pub horizon: f64,
    #[serde(default)]
    pub v_start: f64,
    #[serde(default)]
    pub v_end: f64,
    #[serde(default)]
    pub speed_limits: Option<LimitSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitSection {
    /// `0 = X_0 < X_1 < ... < X_m = L` (m).
    pub boundaries: Vec<f64>,
    /// One limit per segment (m/s).
    pub limits: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySection {
    /// Terminal weight; `None` calibrates it from the tuned four-phase baseline.
    #[serde(default)]
    pub terminal: Option<f64>,
    #[serde(default = "one")]
    pub speed_limit: f64,
}

impl Default for PenaltySection {
    fn default() -> Self {
        Self {
            terminal: None,
            speed_limit: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_grid")]
    pub grid: [usize; 3],
    #[serde(default = "default_update_interval")]
    pub update_interval: f64,
    /// Times (s) at which `solve` writes a value-function slice.
    #[serde(default = "default_slices")]
    pub value_slices: Vec<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            grid: DEFAULT_GRID,
            update_interval: DEFAULT_UPDATE_INTERVAL,
            value_slices: default_slices(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub seed: u64,
    pub position_sd: f64,
    pub speed_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_stages")]
    pub stages: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            stages: DEFAULT_ORACLE_STAGES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Trajectory CSV to check, relative to the scenario file.
    #[serde(default)]
    pub trajectory: Option<PathBuf>,
    #[serde(default = "default_pmp_tolerance")]
    pub pmp_tolerance: f64,
    #[serde(default = "default_kkt_tolerance")]
    pub kkt_tolerance: f64,
    #[serde(default = "default_link_tolerance")]
    pub link_tolerance: f64,
    /// Fraction of samples the pointwise checks must pass.
    #[serde(default = "default_pass_fraction")]
    pub pass_fraction: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            trajectory: None,
            pmp_tolerance: default_pmp_tolerance(),
            kkt_tolerance: default_kkt_tolerance(),
            link_tolerance: default_link_tolerance(),
            pass_fraction: default_pass_fraction(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventEntry {
    SpeedLimit { timestamp: f64, segment: usize, limit: f64 },
    Grade { timestamp: f64, segment: usize, accel: f64 },
    Davis { timestamp: f64, a: f64, b: f64, c: f64 },
    TargetSpeed { timestamp: f64, speed: f64 },
}

impl EventEntry {
    pub fn to_event(self) -> ScenarioEvent {
        let (timestamp, kind) = match self {
            EventEntry::SpeedLimit {
                timestamp,
                segment,
                limit,
            } => (timestamp, EventKind::SpeedLimit { segment, limit }),
            EventEntry::Grade {
                timestamp,
                segment,
                accel,
            } => (timestamp, EventKind::Grade { segment, accel }),
            EventEntry::Davis { timestamp, a, b, c } => (timestamp, EventKind::Davis { a, b, c }),
            EventEntry::TargetSpeed { timestamp, speed } => (timestamp, EventKind::TargetSpeed { speed }),
        };
        ScenarioEvent { timestamp, kind }
    }
}

fn one() -> f64 {
    1.0
}
fn default_controls() -> Vec<f64> {
    ControlSet::default().settings().to_vec()
}
fn flat_grade() -> Vec<GradeEntry> {
    vec![GradeEntry {
        position: 0.0,
        accel: 0.0,
    }]
}
fn default_grid() -> [usize; 3] {
    DEFAULT_GRID
}
fn default_update_interval() -> f64 {
    DEFAULT_UPDATE_INTERVAL
}
fn default_slices() -> Vec<f64> {
    vec![0.0]
}
fn default_stages() -> usize {
    DEFAULT_ORACLE_STAGES
}
fn default_pmp_tolerance() -> f64 {
    1e-3
}
fn default_kkt_tolerance() -> f64 {
    1e-2
}
fn default_link_tolerance() -> f64 {
    0.10
}
fn default_pass_fraction() -> f64 {
    0.95
}

/// A loaded scenario together with its validated domain objects.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    /// Directory the scenario was read from; relative paths resolve against it.
    pub base_dir: PathBuf,
    pub problem: ProblemSpec,
    pub events: Vec<ScenarioEvent>,
}

/// Reads, parses and validates a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let file = parse_str(&text, path)?;
    let base_dir = path.parent().map(Path::to_owned).unwrap_or_default();
    Scenario::from_file(file, base_dir)
}

/// Parses scenario JSON with defaults filled in; `origin` only labels errors.
pub fn parse_str(text: &str, origin: &Path) -> Result<ScenarioFile, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let mut file: ScenarioFile = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let at = err.path().to_string();
        let inner = err.into_inner();
        let detail = inner.to_string();
        if let Some(key) = unknown_key(&detail) {
            return CliError::UnknownKey {
                path: origin.to_owned(),
                key,
                at,
            };
        }
        CliError::Parse {
            path: origin.to_owned(),
            detail: format!("at `{at}`: {detail}"),
        }
    })?;
    de.end().map_err(|e| CliError::Parse {
        path: origin.to_owned(),
        detail: e.to_string(),
    })?;
    if file.trip.speed_limits.is_none() {
        file.trip.speed_limits = Some(LimitSection {
            boundaries: vec![0.0, file.trip.length],
            limits: vec![DEFAULT_SPEED_LIMIT],
        });
    }
    Ok(file)
}

fn unknown_key(detail: &str) -> Option<String> {
    let rest = detail.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_owned())
}

impl Scenario {
    pub fn from_file(file: ScenarioFile, base_dir: PathBuf) -> Result<Self, CliError> {
        let problem = build_problem(&file)?;
        let events: Vec<ScenarioEvent> = file.events.iter().map(|e| e.to_event()).collect();
        for (i, ev) in events.iter().enumerate() {
            if !(0.0..=problem.trip.horizon).contains(&ev.timestamp) {
                return Err(CliError::invariant(
                    &format!("events[{i}].timestamp"),
                    format!("{} lies outside [0, {}]", ev.timestamp, problem.trip.horizon),
                ));
            }
        }
        if events.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
            return Err(CliError::invariant("events", "events must be sorted by timestamp"));
        }
        environment_at(&problem, &events, problem.trip.horizon).map_err(|e| CliError::invariant("events", e))?;
        let solver = &file.solver;
        if !(solver.update_interval > 0.0) {
            return Err(CliError::invariant("solver.update_interval", "must be positive"));
        }
        if let Some(bad) = solver
            .value_slices
            .iter()
            .find(|t| !(0.0..=problem.trip.horizon).contains(*t))
        {
            return Err(CliError::invariant(
                "solver.value_slices",
                format!("time {bad} lies outside the horizon"),
            ));
        }
        if let Some(noise) = &file.noise {
            if !(noise.position_sd >= 0.0) || !(noise.speed_sd >= 0.0) {
                return Err(CliError::invariant("noise", "standard deviations must be non-negative"));
            }
        }
        let v = &file.verify;
        for (name, value) in [
            ("verify.pmp_tolerance", v.pmp_tolerance),
            ("verify.kkt_tolerance", v.kkt_tolerance),
            ("verify.link_tolerance", v.link_tolerance),
        ] {
            if !(value > 0.0) {
                return Err(CliError::invariant(name, format!("must be positive, got {value}")));
            }
        }
        if !(0.0..=1.0).contains(&v.pass_fraction) {
            return Err(CliError::invariant("verify.pass_fraction", "must lie in [0, 1]"));
        }
        Ok(Self {
            file,
            base_dir,
            problem,
            events,
        })
    }

    pub fn grid(&self) -> (usize, usize, usize) {
        let [nx, nv, nt] = self.file.solver.grid;
        (nx, nv, nt)
    }

    pub fn noise(&self) -> Option<NoiseConfig> {
        self.file.noise.map(|n| NoiseConfig {
            seed: n.seed,
            position_sd: n.position_sd,
            speed_sd: n.speed_sd,
        })
    }
}

fn build_problem(file: &ScenarioFile) -> Result<ProblemSpec, CliError> {
    let v = &file.vehicle;
    let davis =
        DavisCoefficients::new(v.davis.a, v.davis.b, v.davis.c).map_err(|e| CliError::invariant("vehicle.davis", e))?;
    let grade = GradeProfile::new(
        v.grade
            .iter()
            .map(|g| GradeBreakpoint {
                position: g.position,
                accel: g.accel,
            })
            .collect(),
    )
    .map_err(|e| CliError::invariant("vehicle.grade", e))?;
    let vehicle =
        VehicleParams::new(davis, grade, v.max_traction).map_err(|e| CliError::invariant("vehicle.max_traction", e))?;

    let t = &file.trip;
    for (name, value) in [("trip.length", t.length), ("trip.horizon", t.horizon)] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(CliError::invariant(name, format!("must be positive, got {value}")));
        }
    }
    let limits = match &t.speed_limits {
        Some(s) => SpeedLimitProfile::new(s.boundaries.clone(), s.limits.clone()),
        None => SpeedLimitProfile::uniform(t.length, DEFAULT_SPEED_LIMIT),
    }
    .map_err(|e| CliError::invariant("trip.speed_limits", e))?;
    let trip =
        TripSpec::new(t.length, t.horizon, t.v_start, t.v_end, limits).map_err(|e| CliError::invariant("trip", e))?;

    let controls = ControlSet::new(file.controls.clone()).map_err(|e| CliError::invariant("controls", e))?;
    let mut problem = ProblemSpec::new(vehicle, trip, controls);
    let penalty = &file.penalty;
    if !(penalty.speed_limit >= 0.0) || !penalty.speed_limit.is_finite() {
        return Err(CliError::invariant("penalty.speed_limit", "must be finite and >= 0"));
    }
    problem.penalty.speed_limit = penalty.speed_limit;
    if let Some(kappa) = penalty.terminal {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(CliError::invariant(
                "penalty.terminal",
                format!("must be positive, got {kappa}"),
            ));
        }
        problem.penalty.terminal = kappa;
    }
    Ok(problem)
}
