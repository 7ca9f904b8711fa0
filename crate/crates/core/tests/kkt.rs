use std::sync::OnceLock;

use ecoplan::hjb::{build_grid, rollout, solve, ValueField};
use ecoplan::kkt::{constraint_values, fit_multipliers, generalized_lagrangian, kkt_residuals, Costate, Multipliers};
use ecoplan::pmp::integrate_adjoint;
use ecoplan::strategies::calibrate_terminal_weight;
use ecoplan::{Error, ProblemSpec, Sample, State, Trajectory};

struct Run {
    problem: ProblemSpec,
    field: ValueField,
    traj: Trajectory,
}

fn default_run() -> &'static Run {
    static R: OnceLock<Run> = OnceLock::new();
    R.get_or_init(|| {
        let problem = calibrate_terminal_weight(&ProblemSpec::default_scenario()).unwrap();
        let field = solve(&problem, &build_grid(&problem, (211, 81, 601)).unwrap()).unwrap();
        let traj = rollout(&field, &State::start_of(&problem), &problem).unwrap();
        Run { problem, field, traj }
    })
}

fn hand_made(u: f64, v_end: f64) -> Trajectory {
    Trajectory::candidate(vec![
        Sample {
            t: 0.0,
            x: 0.0,
            v: 0.0,
            u,
        },
        Sample {
            t: 60.0,
            x: 500.0,
            v: 12.0,
            u,
        },
        Sample {
            t: 120.0,
            x: 1000.0,
            v: v_end,
            u,
        },
    ])
    .unwrap()
}

#[test]
fn constraint_values_examples() {
    let p = ProblemSpec::default_scenario();
    let c = constraint_values(&hand_made(1.0, 0.0), &p);
    assert!(c.g1.iter().all(|&g| g == 0.0));
    assert!(c.g2.iter().all(|&g| g == -2.0));
    assert_eq!(c.g3[0], 0.0);
    assert_eq!(c.g3[1], -12.0);
    assert_eq!((c.g4, c.g5), (0.0, 0.0));
}

#[test]
fn zero_multipliers_leave_the_hamiltonian() {
    let d = default_run();
    let c = constraint_values(&d.traj, &d.problem);
    let zero = Multipliers::zero(&c);
    let lag = generalized_lagrangian(&d.traj, Costate::Value(&d.field), &zero, &d.problem).unwrap();
    for (s, l) in d.traj.samples().iter().zip(&lag) {
        let grad = ecoplan::hjb::gradient_at(&d.field, &s.state()).unwrap();
        let h = ecoplan::hjb::hamiltonian(&s.state(), s.u, grad, &d.problem).unwrap();
        assert!((l - h).abs() < 1e-9 * h.abs().max(1.0));
    }
    let r = kkt_residuals(&d.traj, &d.field, &zero, &d.problem, 1e-2).unwrap();
    assert_eq!(r.complementarity, 0.0);
    assert_eq!(r.dual, 0.0);
}

#[test]
fn terminal_multiplier_shifts_uniformly() {
    let d = default_run();
    let c = constraint_values(&d.traj, &d.problem);
    let base = Multipliers::zero(&c);
    let shifted = Multipliers {
        lambda4: 3.0,
        ..base.clone()
    };
    let a = generalized_lagrangian(&d.traj, Costate::Value(&d.field), &base, &d.problem).unwrap();
    let b = generalized_lagrangian(&d.traj, Costate::Value(&d.field), &shifted, &d.problem).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((y - x - 3.0 * c.g4).abs() < 1e-9);
    }
}

#[test]
fn adjoint_costate_is_accepted() {
    let d = default_run();
    let adj = integrate_adjoint(&d.traj, &d.problem, 1.0).unwrap();
    let zero = Multipliers::zero(&constraint_values(&d.traj, &d.problem));
    let lag = generalized_lagrangian(&d.traj, Costate::Adjoint(&adj), &zero, &d.problem).unwrap();
    assert_eq!(lag.len(), d.traj.len());
    let short = Trajectory::new(d.traj.samples()[1..].to_vec()).unwrap();
    assert!(matches!(
        generalized_lagrangian(&short, Costate::Adjoint(&adj), &zero, &d.problem),
        Err(Error::Argument(_))
    ));
}

#[test]
fn fitted_multipliers_on_the_default_rollout() {
    let d = default_run();
    let mult = fit_multipliers(&d.traj, &d.field, &d.problem);
    assert!(!mult.degenerate);
    let c = constraint_values(&d.traj, &d.problem);
    for i in 0..d.traj.len() {
        assert!(mult.lambda1[i] >= 0.0 && mult.lambda2[i] >= 0.0 && mult.lambda3[i] >= 0.0);
        assert_eq!(mult.lambda1[i] * c.g1[i], 0.0);
        assert_eq!(mult.lambda2[i] * c.g2[i], 0.0);
        assert_eq!(mult.lambda3[i] * c.g3[i], 0.0);
    }
    assert!(mult.lambda1.iter().any(|&l| l > 0.0));
    let r = kkt_residuals(&d.traj, &d.field, &mult, &d.problem, 1e-2).unwrap();
    assert_eq!(r.complementarity, 0.0);
    assert_eq!(r.dual, 0.0);
    assert!(r.relaxing_mismatch < 1e-12);
    assert!(
        r.stationarity_pass_fraction(1e-2) >= 0.90,
        "{}",
        r.stationarity_pass_fraction(1e-2)
    );
    assert!(r.lagrangian_rate_median.is_some());
}

#[test]
fn full_power_span_gets_the_upper_multiplier() {
    let d = default_run();
    let mult = fit_multipliers(&d.traj, &d.field, &d.problem);
    for (i, s) in d.traj.samples().iter().enumerate() {
        let (_, jv) = ecoplan::hjb::gradient_at(&d.field, &s.state()).unwrap();
        let upper = s.v + d.problem.vehicle.max_traction * jv;
        if s.u == 1.0 && upper < 0.0 {
            assert_eq!(mult.lambda1[i], -upper);
        }
        if s.u != 1.0 {
            assert_eq!(mult.lambda1[i], 0.0);
        }
    }
}

#[test]
fn inactive_constraints_get_zero_multipliers() {
    let d = default_run();
    let coasting: Vec<Sample> = d.traj.samples().iter().map(|s| Sample { u: 0.0, ..*s }).collect();
    let traj = Trajectory::new(coasting).unwrap();
    let mult = fit_multipliers(&traj, &d.field, &d.problem);
    assert!(mult
        .lambda1
        .iter()
        .chain(&mult.lambda2)
        .chain(&mult.lambda3)
        .all(|&l| l == 0.0));
}

#[test]
fn missed_arrival_speed_flags_g5() {
    let d = default_run();
    let traj = hand_made(0.0, 5.0);
    let mult = Multipliers::zero(&constraint_values(&traj, &d.problem));
    let r = kkt_residuals(&traj, &d.field, &mult, &d.problem, 1e-2).unwrap();
    assert!(r.g5_violated);
    assert!(!r.g4_violated);
    assert_eq!(r.complementarity, 0.0);
    assert_eq!(r.dual, 0.0);
}

#[test]
fn injected_negative_speed_is_measured_exactly() {
    let d = default_run();
    for &depth in &[0.37, 1e-3, 2.5] {
        let mut samples = d.traj.samples().to_vec();
        samples[200].v = -depth;
        let traj = Trajectory::candidate(samples).unwrap();
        assert!(Trajectory::new(traj.samples().to_vec()).is_err());
        let mult = Multipliers::zero(&constraint_values(&traj, &d.problem));
        let r = kkt_residuals(&traj, &d.field, &mult, &d.problem, 1e-2).unwrap();
        assert_eq!(r.inequality_violation[2], depth);
        assert_eq!(r.primal_violation, depth);
    }
}

#[test]
fn misaligned_multipliers_are_rejected() {
    let d = default_run();
    let mult = Multipliers::zero(&constraint_values(&hand_made(0.0, 0.0), &d.problem));
    assert!(matches!(
        kkt_residuals(&d.traj, &d.field, &mult, &d.problem, 1e-2),
        Err(Error::Argument(_))
    ));
}
