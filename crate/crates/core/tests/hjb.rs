use std::sync::OnceLock;

use ecoplan::hjb::{
    bellman_residuals, build_grid, gradient_at, hamiltonian, optimal_control, rollout, solve, solve_value_at, value_at,
    ValueField,
};
use ecoplan::model::trip_fuel;
use ecoplan::strategies::{brute_force_from, calibrate_terminal_weight};
use ecoplan::{Error, ProblemSpec, State};

const DEFAULT_GRID: (usize, usize, usize) = (211, 81, 601);

fn default_problem() -> &'static ProblemSpec {
    static P: OnceLock<ProblemSpec> = OnceLock::new();
    P.get_or_init(|| calibrate_terminal_weight(&ProblemSpec::default_scenario()).unwrap())
}

fn default_field() -> &'static ValueField {
    static F: OnceLock<ValueField> = OnceLock::new();
    F.get_or_init(|| {
        let p = default_problem();
        solve(p, &build_grid(p, DEFAULT_GRID).unwrap()).unwrap()
    })
}

#[test]
fn hamiltonian_examples() {
    let p = ProblemSpec::default_scenario();
    let s = State::new(0.0, 10.0, 0.0).unwrap();
    assert!((hamiltonian(&s, 0.5, (1.0, 2.0), &p).unwrap() - 15.7).abs() < 1e-12);
    assert!((hamiltonian(&s, 0.5, (0.0, 0.0), &p).unwrap() - 5.0).abs() < 1e-12);
    assert_eq!(hamiltonian(&s, -1.0, (0.0, 0.0), &p).unwrap(), 0.0);
    assert_eq!(hamiltonian(&s, 0.0, (0.0, 0.0), &p).unwrap(), 0.0);
    assert!(matches!(
        hamiltonian(&s, 1.5, (0.0, 0.0), &p),
        Err(Error::Admissibility(_))
    ));
}

#[test]
fn terminal_level_is_the_penalty_exactly() {
    let p = default_problem();
    let f = default_field();
    let g = f.grid();
    let last = g.levels() - 1;
    for i in 0..g.position.len {
        for j in 0..g.velocity.len {
            let expected = p.terminal_penalty(g.position.node(i), g.velocity.node(j));
            assert_eq!(f.node_value(last, i, j), expected);
        }
    }
}

#[test]
fn values_are_finite_nonnegative_and_policies_admissible() {
    let f = default_field();
    assert!(f.values().iter().all(|v| v.is_finite() && *v >= 0.0));
    let g = f.grid();
    for k in 0..g.levels() - 1 {
        assert!(f.policy_level(k).iter().all(|&c| (c as usize) < f.controls().len()));
    }
}

#[test]
fn value_never_exceeds_the_coasting_step() {
    let p = default_problem();
    let f = default_field();
    let g = f.grid();
    for k in (0..g.levels() - 1).step_by(37) {
        for i in (0..g.position.len).step_by(5) {
            for j in (0..g.velocity.len).step_by(3) {
                let x = g.position.node(i);
                let v = g.velocity.node(j);
                let a = p.vehicle.acceleration(x, v, 0.0);
                let foot = State {
                    x: (x + v * g.dt()).min(g.position.end()),
                    v: (v + a * g.dt()).max(0.0),
                    t: g.time(k + 1),
                };
                let boundary = if x + v * g.dt() > g.position.end() {
                    p.penalty.terminal / p.trip.length * (x + v * g.dt() - g.position.end())
                } else {
                    0.0
                };
                let bound = p.running_cost(x, v, 0.0) * g.dt() + boundary + value_at(f, &foot).unwrap();
                assert!(f.node_value(k, i, j) <= bound + 1e-9 * bound.max(1.0));
            }
        }
    }
}

#[test]
fn value_at_nodes_and_out_of_extent() {
    let f = default_field();
    let g = f.grid();
    let s = State {
        x: g.position.node(17),
        v: g.velocity.node(5),
        t: g.time(40),
    };
    assert_eq!(value_at(f, &s).unwrap(), f.node_value(40, 17, 5));
    let outside = State {
        x: 2000.0,
        v: 5.0,
        t: 10.0,
    };
    assert!(matches!(value_at(f, &outside), Err(Error::Extrapolation { .. })));
    assert!(matches!(
        optimal_control(&outside, f, default_problem()),
        Err(Error::Extrapolation { .. })
    ));
}

#[test]
fn at_target_on_final_level_the_policy_coasts() {
    let p = default_problem();
    let f = default_field();
    let s = State {
        x: p.trip.length,
        v: 0.0,
        t: p.trip.horizon,
    };
    let (u, h) = optimal_control(&s, f, p).unwrap();
    assert_eq!(u, 0.0);
    assert_eq!(h, 0.0);
}

#[test]
fn far_behind_schedule_calls_for_full_power() {
    let p = default_problem();
    let f = default_field();
    let s = State {
        x: 850.0,
        v: 0.0,
        t: 100.0,
    };
    let (u, _) = optimal_control(&s, f, p).unwrap();
    assert_eq!(u, 1.0);
    let oracle = brute_force_from(p, &s, 12).unwrap();
    assert_eq!(oracle.sequence[0], 1.0);
}

#[test]
fn over_the_limit_calls_for_braking() {
    let p = default_problem();
    let f = default_field();
    let s = State {
        x: 500.0,
        v: 22.0,
        t: 60.0,
    };
    let (u, _) = optimal_control(&s, f, p).unwrap();
    assert!(u < 0.0);
    let oracle = brute_force_from(p, &s, 12).unwrap();
    assert!(oracle.sequence[0] < 0.0);
}

#[test]
fn default_rollout_lands_near_the_target() {
    let p = default_problem();
    let f = default_field();
    let g = f.grid();
    let traj = rollout(f, &State::start_of(p), p).unwrap();
    let end = traj.final_state();
    assert!((end.x - p.trip.length).abs() <= 2.0 * g.position.step);
    assert!((end.v - p.trip.v_end).abs() <= 2.0 * g.velocity.step);
    assert_eq!(traj.last().t, p.trip.horizon);
}

#[test]
fn rollout_cost_to_go_stays_consistent() {
    let p = default_problem();
    let f = default_field();
    let traj = rollout(f, &State::start_of(p), p).unwrap();
    let j0 = value_at(f, &State::start_of(p)).unwrap();
    let mut burned = 0.0;
    for w in traj.samples().windows(2) {
        let j = value_at(f, &w[0].state()).unwrap();
        assert!(((j + burned) - j0).abs() <= 0.05 * j0, "at t = {}", w[0].t);
        burned += w[0].u.max(0.0) * 0.5 * (w[0].v + w[1].v) * (w[1].t - w[0].t);
    }
}

#[test]
fn solve_value_at_matches_the_stored_field() {
    let p = default_problem();
    let g = build_grid(p, DEFAULT_GRID).unwrap();
    let s = State::start_of(p);
    assert_eq!(
        solve_value_at(p, &g, &s).unwrap(),
        value_at(default_field(), &s).unwrap()
    );
    let mid = State {
        x: 512.5,
        v: 13.3,
        t: 60.0,
    };
    assert_eq!(
        solve_value_at(p, &g, &mid).unwrap(),
        value_at(default_field(), &mid).unwrap()
    );
}

#[test]
fn start_at_target_never_burns_fuel() {
    let trip = ecoplan::TripSpec::rest_to_rest(100.0, 20.0, 10.0).unwrap();
    let p = ProblemSpec::new(Default::default(), trip, Default::default()).with_terminal_weight(50.0);
    let g = build_grid(&p, (43, 31, 201)).unwrap();
    let f = solve(&p, &g).unwrap();
    let start = State {
        x: 100.0,
        v: 0.0,
        t: 0.0,
    };
    let traj = rollout(&f, &start, &p).unwrap();
    assert!(traj.samples().iter().all(|s| s.u <= 0.0));
    assert_eq!(trip_fuel(&traj), 0.0);
    assert_eq!(value_at(&f, &start).unwrap(), 0.0);
}

#[test]
fn foot_bound_violation_is_a_configuration_error() {
    let p = default_problem();
    let g = build_grid(p, (211, 81, 61)).unwrap();
    match solve(p, &g) {
        Err(Error::Configuration { dt, .. }) => assert!((dt - 2.0).abs() < 1e-12),
        other => panic!("expected a configuration error, got {other:?}"),
    }
}

#[test]
fn gradient_points_toward_the_target() {
    let f = default_field();
    let late = State {
        x: 900.0,
        v: 5.0,
        t: 110.0,
    };
    let (jx, _) = gradient_at(f, &late).unwrap();
    assert!(jx < 0.0);
}

#[test]
fn bellman_residual_is_small_at_interior_nodes() {
    let report = bellman_residuals(default_field(), default_problem());
    assert!(report.nodes > 0);
    assert!(report.median_relative <= 0.05, "{report:?}");
}
