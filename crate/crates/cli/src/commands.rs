use std::path::Path;
use std::time::Instant;

use ecoplan::hjb::{self, build_grid, rollout, value_at, ValueField};
use ecoplan::kkt::{fit_multipliers, kkt_residuals};
use ecoplan::model::trip_fuel;
use ecoplan::pmp::{
    check_maximum_principle, fit_terminal_costate, integrate_adjoint, integrate_adjoint_from,
    verify_adjoint_value_link, AdjointPath, LinkOptions,
};
use ecoplan::sequential::{self, run_receding_horizon, summarize, RecedingConfig};
use ecoplan::strategies::{
    brute_force_optimal, calibrate_terminal_weight, four_phase_rollout, sequence_trajectory, tune_four_phase,
};
use ecoplan::{ProblemSpec, State, Trajectory};
use serde_json::{json, Value};

use crate::error::{io_error, CliError};
use crate::output::{digest, read_trajectory, write_report, write_trajectory, write_value_slice, RunReport};
use crate::scenario::{parse_scenario, Scenario};
use crate::CommonArgs;

/// Relative floor of the adjoint-value comparison.
const LINK_FLOOR: f64 = 1e-6;

/// A loaded scenario with command-line overrides applied.
struct Session {
    scenario: Scenario,
    out: std::path::PathBuf,
    started: Instant,
    outputs: Vec<String>,
}

impl Session {
    fn open(args: &CommonArgs) -> Result<Self, CliError> {
        let started = Instant::now();
        let mut scenario = parse_scenario(&args.scenario)?;
        let file = &mut scenario.file;
        if let Some(grid) = args.grid {
            file.solver.grid = grid;
        }
        if let Some(interval) = args.update_interval {
            if !(interval > 0.0) {
                return Err(CliError::Argument(format!(
                    "--update-interval must be positive, got {interval}"
                )));
            }
            file.solver.update_interval = interval;
        }
        if let Some(stages) = args.stages {
            file.oracle.stages = stages;
        }
        if let Some(seed) = args.seed {
            match file.noise.as_mut() {
                Some(noise) => noise.seed = seed,
                None => {
                    return Err(CliError::Argument(
                        "--seed needs a `noise` section in the scenario".into(),
                    ))
                }
            }
        }
        std::fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
        Ok(Self {
            scenario,
            out: args.out.clone(),
            started,
            outputs: Vec::new(),
        })
    }

    /// The scenario's problem with the terminal weight filled in.
    fn calibrated(&self) -> Result<ProblemSpec, CliError> {
        Ok(calibrate_terminal_weight(&self.scenario.problem)?)
    }

    fn trajectory(
        &mut self,
        name: &str,
        traj: &Trajectory,
        events: &[sequential::ScenarioEvent],
    ) -> Result<(), CliError> {
        write_trajectory(&self.out.join(name), traj, &self.scenario.problem, events)?;
        self.outputs.push(name.to_owned());
        Ok(())
    }

    fn finish(self, command: &str, results: Value) -> Result<(), CliError> {
        let mut outputs = self.outputs;
        outputs.push("report.json".to_owned());
        let report = RunReport {
            command: command.to_owned(),
            input_digest: digest(command, &self.scenario.file),
            outputs,
            results,
            elapsed_s: self.started.elapsed().as_secs_f64(),
        };
        write_report(&self.out, &report)?;
        Ok(())
    }
}

fn arrival(traj: &Trajectory, problem: &ProblemSpec) -> Value {
    let end = traj.final_state();
    let worst = traj
        .samples()
        .iter()
        .map(|s| s.v - problem.trip.speed_limits.limit_at(s.x))
        .fold(0.0, f64::max);
    json!({
        "final_position_m": end.x,
        "final_speed_mps": end.v,
        "position_miss_m": (end.x - problem.trip.length).abs(),
        "speed_miss_mps": (end.v - problem.trip.v_end).abs(),
        "worst_limit_violation_mps": worst,
    })
}

fn solve_field(problem: &ProblemSpec, scenario: &Scenario) -> Result<ValueField, CliError> {
    let grid = build_grid(problem, scenario.grid())?;
    Ok(hjb::solve(problem, &grid)?)
}

pub fn solve(args: &CommonArgs) -> Result<(), CliError> {
    let mut session = Session::open(args)?;
    let problem = session.calibrated()?;
    let field = solve_field(&problem, &session.scenario)?;
    let start = State::start_of(&problem);
    let traj = rollout(&field, &start, &problem)?;
    session.trajectory("trajectory.csv", &traj, &[])?;
    let mut slices = Vec::new();
    for &t in &session.scenario.file.solver.value_slices {
        let level = field
            .grid()
            .level_of(t)
            .ok_or_else(|| CliError::Argument(format!("value slice time {t} s is off the grid")))?;
        let name = format!("value_t{}.csv", field.grid().time(level));
        write_value_slice(&session.out.join(&name), &field, level)?;
        slices.push(json!({ "t_s": field.grid().time(level), "file": name }));
        session.outputs.push(name);
    }
    let results = json!({
        "terminal_weight": problem.penalty.terminal,
        "grid": session.scenario.file.solver.grid,
        "value_at_start": value_at(&field, &start)?,
        "fuel": trip_fuel(&traj),
        "switching_times_s": traj.switching_times(),
        "arrival": arrival(&traj, &problem),
        "value_slices": slices,
    });
    session.finish("solve", results)
}

pub fn baseline(args: &CommonArgs) -> Result<(), CliError> {
    let mut session = Session::open(args)?;
    let problem = session.scenario.problem.clone();
    let (plan, fuel) = tune_four_phase(&problem)?;
    let run = four_phase_rollout(&plan, &problem)?;
    session.trajectory("trajectory.csv", &run.trajectory, &[])?;
    let results = json!({
        "hold_speed_mps": plan.hold_speed,
        "coast_start_m": plan.coast_start,
        "brake_start_m": plan.brake_start,
        "fuel": fuel,
        "reaches_target": run.reaches_target,
        "arrival": arrival(&run.trajectory, &problem),
    });
    session.finish("baseline", results)
}

/// Runs one verification step; a failure becomes part of the report.
fn checked(result: Result<Value, ecoplan::Error>) -> Value {
    result.unwrap_or_else(|e| json!({ "passed": false, "error": e.to_string() }))
}

fn pmp_check(
    traj: &Trajectory,
    adj: &AdjointPath,
    problem: &ProblemSpec,
    tol: f64,
    need: f64,
) -> Result<Value, ecoplan::Error> {
    let report = check_maximum_principle(traj, adj, problem, tol)?;
    Ok(json!({
        "passed": report.pass_fraction >= need,
        "terminal_costate": adj.terminal(),
        "pass_fraction": report.pass_fraction,
        "worst_gap": report.worst_gap,
        "failing_spans_s": report.failing_spans,
    }))
}

pub fn verify(args: &CommonArgs, trajectory: Option<&Path>) -> Result<(), CliError> {
    let session = Session::open(args)?;
    let path = match (trajectory, &session.scenario.file.verify.trajectory) {
        (Some(p), _) => p.to_owned(),
        (None, Some(p)) => session.scenario.base_dir.join(p),
        (None, None) => {
            return Err(CliError::Argument(
                "no trajectory: pass --trajectory or set verify.trajectory".into(),
            ));
        }
    };
    let traj = read_trajectory(&path)?;
    let problem = session.calibrated()?;
    let field = solve_field(&problem, &session.scenario)?;
    let opts = session.scenario.file.verify.clone();
    let need = opts.pass_fraction;
    let link = LinkOptions::default();

    let pmp = checked(
        integrate_adjoint(&traj, &problem, 1.0)
            .and_then(|adj| pmp_check(&traj, &adj, &problem, opts.pmp_tolerance, need)),
    );
    let fitted = fit_terminal_costate(&field, &traj, &problem, 1.0, &link)
        .and_then(|terminal| integrate_adjoint_from(&traj, &problem, 1.0, terminal));
    let (pmp_fitted, link_report) = match fitted {
        Ok(adj) => (
            checked(pmp_check(&traj, &adj, &problem, opts.pmp_tolerance, need)),
            checked(
                verify_adjoint_value_link(&field, &adj, &traj, &problem, &link, LINK_FLOOR).map(|r| {
                    json!({
                        "passed": r.samples_used > 0 && r.median_relative_psi2 <= opts.link_tolerance,
                        "samples_used": r.samples_used,
                        "median_relative_psi2": r.median_relative_psi2,
                        "max_relative_psi2": r.max_relative_psi2,
                        "median_relative_psi1": r.median_relative_psi1,
                    })
                }),
            ),
        ),
        Err(e) => {
            let failed = json!({ "passed": false, "error": e.to_string() });
            (failed.clone(), failed)
        }
    };
    let multipliers = fit_multipliers(&traj, &field, &problem);
    let kkt = checked(
        kkt_residuals(&traj, &field, &multipliers, &problem, opts.kkt_tolerance).map(|r| {
            let fraction = r.stationarity_pass_fraction(opts.kkt_tolerance);
            json!({
                "passed": fraction >= need && r.primal_violation == 0.0 && !r.g4_violated && !r.g5_violated,
                "stationarity_pass_fraction": fraction,
                "complementarity": r.complementarity,
                "dual": r.dual,
                "primal_violation": r.primal_violation,
                "inequality_violation": r.inequality_violation,
                "g4_violated": r.g4_violated,
                "g5_violated": r.g5_violated,
                "degenerate_multipliers": multipliers.degenerate,
            })
        }),
    );
    let results = json!({
        "trajectory": path.display().to_string(),
        "samples": traj.len(),
        "terminal_weight": problem.penalty.terminal,
        "fuel": trip_fuel(&traj),
        "pmp": pmp,
        "pmp_fitted_costate": pmp_fitted,
        "adjoint_value_link": link_report,
        "kkt": kkt,
    });
    session.finish("verify", results)
}

fn receding_config(session: &Session) -> Result<RecedingConfig, CliError> {
    let mut config = RecedingConfig::new(session.scenario.file.solver.update_interval, session.scenario.grid())?;
    if let Some(noise) = session.scenario.noise() {
        config = config.with_noise(noise);
    }
    Ok(config)
}

pub fn simulate(args: &CommonArgs) -> Result<(), CliError> {
    let mut session = Session::open(args)?;
    let problem = session.calibrated()?;
    let events = session.scenario.events.clone();
    let config = receding_config(&session)?;
    let run = run_receding_horizon(&problem, &events, &config)?;
    session.trajectory("trajectory.csv", &run.trajectory, &events)?;
    let windows: Vec<Value> = run
        .estimates
        .iter()
        .map(|e| json!({ "start_s": e.start, "end_s": e.end }))
        .collect();
    let results = json!({
        "terminal_weight": problem.penalty.terminal,
        "update_interval_s": config.update_interval,
        "summary": summarize(&run.trajectory, &problem, &events)?,
        "estimate_windows": windows,
        "switching_times_s": run.trajectory.switching_times(),
    });
    session.finish("simulate", results)
}

pub fn compare(args: &CommonArgs) -> Result<(), CliError> {
    let mut session = Session::open(args)?;
    let problem = session.calibrated()?;
    let events = session.scenario.events.clone();
    let config = receding_config(&session)?;
    let report = sequential::compare(&problem, &events, &config)?;
    session.trajectory("a_priori.csv", &report.a_priori_run.trajectory, &events)?;
    session.trajectory("sequential.csv", &report.sequential_run.trajectory, &events)?;
    let results = json!({
        "terminal_weight": problem.penalty.terminal,
        "update_interval_s": config.update_interval,
        "a_priori": report.a_priori,
        "sequential": report.sequential,
    });
    session.finish("compare", results)
}

pub fn oracle(args: &CommonArgs) -> Result<(), CliError> {
    let mut session = Session::open(args)?;
    let stages = session.scenario.file.oracle.stages;
    // Check the cap before the calibration run.
    if stages == 0 || stages > ecoplan::strategies::MAX_STAGES {
        return Err(CliError::Argument(format!(
            "oracle stage count must be in 1..={}, got {stages}",
            ecoplan::strategies::MAX_STAGES
        )));
    }
    let problem = session.calibrated()?;
    let best = brute_force_optimal(&problem, stages)?;
    let start = State::start_of(&problem);
    let traj = sequence_trajectory(&problem, &start, &best.sequence)?;
    session.trajectory("trajectory.csv", &traj, &[])?;
    let results = json!({
        "terminal_weight": problem.penalty.terminal,
        "stages": stages,
        "stage_length_s": problem.trip.horizon / stages as f64,
        "sequence": best.sequence,
        "value": best.value,
        "fuel": trip_fuel(&traj),
        "arrival": arrival(&traj, &problem),
    });
    session.finish("oracle", results)
}
