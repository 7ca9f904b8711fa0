use std::sync::OnceLock;

use ecoplan::model::trip_fuel;
use ecoplan::strategies::{
    brute_force_from, brute_force_optimal, coast_power_holding, equilibrium_hold, four_phase_rollout, score_sequence,
    sequence_trajectory, tune_four_phase, FourPhasePlan, HoldingConfig, MAX_STAGES,
};
use ecoplan::{model, ControlSet, Error, ProblemSpec, State, TripSpec, VehicleParams};
use proptest::prelude::*;

fn tuned_default() -> &'static (FourPhasePlan, f64) {
    static T: OnceLock<(FourPhasePlan, f64)> = OnceLock::new();
    T.get_or_init(|| tune_four_phase(&ProblemSpec::default_scenario()).unwrap())
}

/// Trip ending where seven stages of power and five of braking (2 s each) end:
/// no other sequence covers that distance and still slows to that speed.
fn power_then_brake() -> ProblemSpec {
    let vehicle = VehicleParams::default();
    let mut s = State::new(0.0, 0.0, 0.0).unwrap();
    for u in [1.0; 7].into_iter().chain([-1.0; 5]) {
        for _ in 0..20 {
            s = model::step(&s, u, 0.1, &vehicle).unwrap();
        }
    }
    let limits = ecoplan::SpeedLimitProfile::uniform(s.x, 25.0).unwrap();
    let trip = TripSpec::new(s.x, 24.0, 0.0, s.v, limits).unwrap();
    ProblemSpec::new(vehicle, trip, ControlSet::default()).with_terminal_weight(1e4)
}

#[test]
fn tuned_default_plan_reaches_the_target() {
    let p = ProblemSpec::default_scenario();
    let (plan, fuel) = *tuned_default();
    let run = four_phase_rollout(&plan, &p).unwrap();
    let end = run.trajectory.final_state();
    assert!(run.reaches_target);
    assert!((end.x - p.trip.length).abs() <= 0.01 * p.trip.length);
    assert!(end.v <= 0.1);
    assert!(end.t <= p.trip.horizon + 1e-9);
    assert_eq!(trip_fuel(&run.trajectory), fuel);
    assert!(plan.hold_speed <= 20.0);
}

#[test]
fn tuning_is_deterministic() {
    let again = tune_four_phase(&ProblemSpec::default_scenario()).unwrap();
    assert_eq!(again.0, tuned_default().0);
    assert_eq!(again.1.to_bits(), tuned_default().1.to_bits());
}

#[test]
fn hold_phase_uses_the_equilibrium_setting() {
    let p = ProblemSpec::default_scenario();
    let (plan, _) = *tuned_default();
    let run = four_phase_rollout(&plan, &p).unwrap();
    let expected = p.vehicle.davis.resistance(plan.hold_speed) / p.vehicle.max_traction;
    let partial: Vec<f64> = run
        .trajectory
        .samples()
        .iter()
        .map(|s| s.u)
        .filter(|u| *u > 0.0 && *u < 1.0)
        .collect();
    // One partial setting is the landing step onto the hold speed.
    let off = partial.iter().filter(|&&u| (u - expected).abs() > 1e-12).count();
    assert!(partial.len() > 10);
    assert!(off <= 1, "{off} samples off the equilibrium setting");
}

#[test]
fn plan_that_never_leaves_misses_the_target() {
    let p = ProblemSpec::default_scenario();
    let plan = FourPhasePlan::new(15.0, 0.0, 0.0, &p).unwrap();
    let run = four_phase_rollout(&plan, &p).unwrap();
    assert_eq!(run.trajectory.final_state().x, 0.0);
    assert!(!run.reaches_target);
}

#[test]
fn invalid_plans_are_rejected() {
    let p = ProblemSpec::default_scenario();
    assert!(FourPhasePlan::new(25.0, 100.0, 200.0, &p).is_err());
    assert!(FourPhasePlan::new(15.0, 300.0, 200.0, &p).is_err());
    assert!(FourPhasePlan::new(15.0, 100.0, 2000.0, &p).is_err());
}

#[test]
fn too_short_horizon_is_infeasible() {
    let trip = TripSpec::rest_to_rest(1000.0, 20.0, 20.0).unwrap();
    let p = ProblemSpec::new(VehicleParams::default(), trip, ControlSet::default());
    assert!(matches!(tune_four_phase(&p), Err(Error::Infeasible(_))));
}

#[test]
fn holding_amplitude_shrinks_with_more_pairs() {
    let p = ProblemSpec::default_scenario();
    let mut amplitudes = Vec::new();
    for pairs in [1, 2, 4, 8, 16] {
        let cfg = HoldingConfig::new(15.0, pairs, 5.0).unwrap();
        let (traj, amplitude) = coast_power_holding(&cfg, 500.0, &p).unwrap();
        assert!(traj.final_state().x >= 500.0);
        amplitudes.push(amplitude);
    }
    for w in amplitudes.windows(2) {
        assert!(w[0] / w[1] >= 1.5, "{amplitudes:?}");
    }
}

#[test]
fn equilibrium_hold_has_no_oscillation() {
    let p = ProblemSpec::default_scenario();
    let (traj, amplitude) = equilibrium_hold(15.0, 500.0, &p).unwrap();
    assert!(amplitude < 1e-9);
    assert!(traj.final_state().x >= 500.0);
}

#[test]
fn unsustainable_hold_is_infeasible() {
    let p = ProblemSpec::default_scenario();
    // r(50) = 0.05 + 0.25 + 1.25 > A = 1.
    assert!(matches!(equilibrium_hold(50.0, 500.0, &p), Err(Error::Infeasible(_))));
    let cfg = HoldingConfig::new(50.0, 4, 2.0).unwrap();
    assert!(matches!(
        coast_power_holding(&cfg, 1000.0, &p),
        Err(Error::Infeasible(_))
    ));
    assert!(HoldingConfig::new(15.0, 0, 2.0).is_err());
    assert!(HoldingConfig::new(15.0, 2, 0.0).is_err());
}

#[test]
fn oracle_at_the_target_does_nothing() {
    let p = ProblemSpec::default_scenario().with_terminal_weight(100.0);
    let at_target = State::new(p.trip.length, 0.0, 0.0).unwrap();
    let best = brute_force_from(&p, &at_target, 1).unwrap();
    assert_eq!(best.sequence, vec![0.0]);
    assert_eq!(best.value, 0.0);
}

#[test]
fn oracle_stage_cap() {
    let p = ProblemSpec::default_scenario().with_terminal_weight(100.0);
    assert!(matches!(
        brute_force_optimal(&p, MAX_STAGES + 1),
        Err(Error::Argument(_))
    ));
    assert!(matches!(brute_force_optimal(&p, 0), Err(Error::Argument(_))));
}

#[test]
fn oracle_finds_power_then_brake() {
    let p = power_then_brake();
    let best = brute_force_optimal(&p, 12).unwrap();
    assert_eq!(best.sequence, [[1.0; 7].as_slice(), &[-1.0; 5]].concat());
    assert_eq!(
        best.value,
        score_sequence(&p, &State::start_of(&p), &best.sequence).unwrap()
    );
    assert!((best.final_state.x - p.trip.length).abs() < 1e-9);
    assert!((best.final_state.v - p.trip.v_end).abs() < 1e-9);
}

#[test]
fn sampled_sequence_ends_where_the_oracle_ends() {
    let p = power_then_brake();
    let best = brute_force_optimal(&p, 12).unwrap();
    let traj = sequence_trajectory(&p, &State::start_of(&p), &best.sequence).unwrap();
    let end = traj.final_state();
    assert_eq!((end.x, end.v), (best.final_state.x, best.final_state.v));
    assert!((end.t - p.trip.horizon).abs() < 1e-9);
    assert_eq!(traj.len(), 12 * 20 + 1);
    assert!(sequence_trajectory(&p, &State::start_of(&p), &[]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn no_random_sequence_beats_the_oracle(seq in prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 1.0]), 8)) {
        static BEST: OnceLock<(ProblemSpec, f64)> = OnceLock::new();
        let (p, best) = BEST.get_or_init(|| {
            let p = power_then_brake();
            let best = brute_force_optimal(&p, 8).unwrap().value;
            (p, best)
        });
        let score = score_sequence(p, &State::start_of(p), &seq).unwrap();
        prop_assert!(score >= *best);
    }
}
