mod common;

use common::{cell_variation, grid_search, melt_disc_drop, rbd_problem};
use meltsim::rbd::{feasibility, minimize_state, potential_energy, BodyGeometry, MinimizeStatus, RigidState};

fn check_against_grid(p: &meltsim::rbd::RbdProblem, s0: RigidState) {
    let out = minimize_state(p, s0);
    assert_eq!(out.status, MinimizeStatus::Converged);
    let (sg, eg) = grid_search(p, s0, 0.01).expect("feasible grid point");
    let tol = cell_variation(p, sg, 0.01);
    let e = potential_energy(p, out.state);
    assert!((e - eg).abs() <= tol, "minimizer {} vs grid {} (cell variation {})", e, eg, tol);
    assert!(feasibility(p, out.state).iter().all(|&g| g >= -p.tolerances.feasibility));
}

#[test]
fn melt_disc_drop_lands_on_the_rim() {
    let p = melt_disc_drop();
    let out = minimize_state(&p, RigidState::default());
    assert!((out.state.r0).abs() < 1e-3 && (out.state.r1 + 1.0).abs() < 1e-3, "{:?}", out.state);
    check_against_grid(&p, RigidState::default());
}

#[test]
fn synthetic_fields_match_grid_search() {
    let circle = || BodyGeometry::circle(1.0, 32).unwrap();
    let bounds = RigidState::new(0.05, 1.0, 1.0);
    check_against_grid(
        &rbd_problem(circle(), bounds, |x| 2.25 - (x[0] - 0.3).powi(2) - (x[1] + 0.5).powi(2)),
        RigidState::new(0.0, 0.3, -0.3),
    );
    check_against_grid(
        &rbd_problem(circle(), bounds, |x| 1.0 - x[0] * x[0] / 4.0 - x[1] * x[1] / 2.56),
        RigidState::default(),
    );
    check_against_grid(
        &rbd_problem(circle(), bounds, |x| x[1] + 1.5 - 0.5 * x[0] * x[0]),
        RigidState::default(),
    );
    check_against_grid(
        &rbd_problem(circle(), bounds, |x| (1.5 - (x[0] - 0.3 * x[1]).abs()).min(x[1] + 2.0)),
        RigidState::default(),
    );
    let sc = BodyGeometry::sphere_cylinder(0.2, 0.6, 32).unwrap();
    check_against_grid(
        &rbd_problem(sc, RigidState::new(0.1, 0.3, 0.3), |x| 0.36 - x[0] * x[0] - 0.1 * (x[1] - 0.3).powi(2)),
        RigidState::default(),
    );
}

#[test]
fn frozen_start_is_returned_unchanged() {
    let p = rbd_problem(BodyGeometry::circle(1.0, 32).unwrap(), RigidState::new(0.0, 0.5, 0.5), |_| -1.0);
    let s0 = RigidState::new(0.3, -1.25, 7.0);
    let out = minimize_state(&p, s0);
    assert_eq!(out.state, s0);
    assert_eq!(out.status, MinimizeStatus::InfeasibleStart);
}

#[test]
fn argmin_ignores_gravity_scale() {
    let mut p = melt_disc_drop();
    let a = minimize_state(&p, RigidState::default()).state;
    p.gravity = [0.0, -9.81];
    let b = minimize_state(&p, RigidState::default()).state;
    assert!((a.r0 - b.r0).abs() < 1e-6 && (a.r1 - b.r1).abs() < 1e-6, "{:?} vs {:?}", a, b);
}
