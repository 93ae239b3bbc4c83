//! Simulation against closed-form responses and the boundary behavior of
//! the minimal ellipsoid.

mod common;

use approx::assert_abs_diff_eq;
use common::*;
use inescapable::ellipsoid::{optimize_alpha_analysis, AlphaOptions};
use inescapable::ode::OdeSettings;
use inescapable::signal::{AlphaProfile, GridTrajectory, PeriodicMatrixSignal};
use inescapable::simulate::{
    ellipsoid_boundary_2d, inescapability_check, monte_carlo_inescapability, simulate_closed_loop,
    DisturbancePolicy,
};
use nalgebra::{DMatrix, DVector};

fn scalar_loop() -> (
    PeriodicMatrixSignal,
    PeriodicMatrixSignal,
    PeriodicMatrixSignal,
) {
    let s = |v: f64| const_signal(&scalar(v), 1.0);
    (s(-1.0), s(1.0), s(1.0))
}

#[test]
fn worst_case_rides_the_scalar_boundary() {
    let (a, b, c) = scalar_loop();
    let ode = OdeSettings::new(64, 4).unwrap();
    let p = GridTrajectory::constant(scalar(1.0), 1.0, 64);
    let run = simulate_closed_loop(
        &a,
        &b,
        &c,
        &DisturbancePolicy::WorstCase,
        &DVector::from_element(1, 1.0),
        10.0,
        &ode,
        Some(&p),
    )
    .unwrap();
    for v in &run.levels {
        assert_abs_diff_eq!(*v, 1.0, epsilon = 5e-3);
    }
    let max = inescapability_check(&p, &run).unwrap();
    assert!((1.0 - 1e-2..=1.0 + 5e-3).contains(&max));
}

#[test]
fn adversary_beats_random_policy() {
    let (a, b, c) = scalar_loop();
    let ode = OdeSettings::new(64, 4).unwrap();
    let p = GridTrajectory::constant(scalar(1.0), 1.0, 64);
    let x0 = DVector::from_element(1, 0.2);
    let level = |policy| {
        simulate_closed_loop(&a, &b, &c, &policy, &x0, 5.0, &ode, Some(&p))
            .unwrap()
            .max_level()
            .unwrap()
    };
    let worst = level(DisturbancePolicy::WorstCase);
    for seed in 0..5 {
        assert!(worst > level(DisturbancePolicy::RandomExtreme { seed }));
    }
    assert!(worst > level(DisturbancePolicy::Harmonic));
}

#[test]
fn rest_and_inflation() {
    let (a, b, c) = scalar_loop();
    let ode = OdeSettings::new(64, 4).unwrap();
    let p = GridTrajectory::constant(scalar(1.0), 1.0, 64);
    let rest = simulate_closed_loop(
        &a,
        &b,
        &c,
        &DisturbancePolicy::Zero,
        &DVector::zeros(1),
        3.0,
        &ode,
        None,
    )
    .unwrap();
    assert_eq!(inescapability_check(&p, &rest).unwrap(), 0.0);

    let mut run = simulate_closed_loop(
        &a,
        &b,
        &c,
        &DisturbancePolicy::WorstCase,
        &DVector::from_element(1, 1.0),
        3.0,
        &ode,
        Some(&p),
    )
    .unwrap();
    for x in &mut run.states {
        *x *= 2.0;
    }
    assert!(inescapability_check(&p, &run).unwrap() > 1.0);
}

#[test]
fn boundary_slack_shrinks_with_the_grid() {
    let period = 2.0 * std::f64::consts::PI;
    let a = PeriodicMatrixSignal::new(
        1,
        1,
        period,
        vec![inescapable::signal::FourierEntry::constant(-1.0).with_sin(1, 0.5)],
    )
    .unwrap();
    let b = const_signal(&scalar(1.0), period);
    let c = b.clone();
    let slack = |nodes: usize| {
        let ode = OdeSettings::new(nodes, 4).unwrap();
        let opt = optimize_alpha_analysis(
            &a,
            &b,
            &c,
            &AlphaProfile::constant(1.0, period, nodes).unwrap(),
            &AlphaOptions {
                ode,
                ..Default::default()
            },
        )
        .unwrap();
        let p = &opt.p.trajectory;
        let x0 = DVector::from_element(1, p.value(0)[(0, 0)].sqrt());
        let run = simulate_closed_loop(
            &a,
            &b,
            &c,
            &DisturbancePolicy::WorstCase,
            &x0,
            2.0 * period,
            &ode,
            Some(p),
        )
        .unwrap();
        run.levels
            .iter()
            .map(|v| (v - 1.0).abs())
            .fold(0.0, f64::max)
    };
    let (s1, s2) = (slack(64), slack(128));
    assert!(s1 <= 5e-3 && s2 <= 0.5 * s1, "{s1} {s2}");
}

#[test]
fn sections_of_known_shapes() {
    let c = PeriodicMatrixSignal::identity(2, 1.0);
    let p = GridTrajectory::constant(
        DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])),
        1.0,
        8,
    );
    let s = ellipsoid_boundary_2d(&p, &c, 0.0, 4).unwrap();
    assert_abs_diff_eq!(s.boundary[0][0], 2.0, epsilon = 1e-14);
    assert_abs_diff_eq!(s.boundary[1][1], 1.0, epsilon = 1e-14);
    let singular = GridTrajectory::constant(
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
        1.0,
        8,
    );
    assert!(ellipsoid_boundary_2d(&singular, &c, 0.0, 4).is_err());
}

#[test]
fn monte_carlo_is_reproducible() {
    let (a, b, c) = scalar_loop();
    let ode = OdeSettings::new(64, 4).unwrap();
    let p = GridTrajectory::constant(scalar(1.0), 1.0, 64);
    let m1 = monte_carlo_inescapability(&a, &b, &c, &p, 12, 2.0, 3, &ode).unwrap();
    let m2 = monte_carlo_inescapability(&a, &b, &c, &p, 12, 2.0, 3, &ode).unwrap();
    assert_eq!(m1, m2);
    assert!(m1.max_level <= 1.0 + 5e-3);
}

#[test]
fn dimension_errors() {
    let (a, b, _) = scalar_loop();
    let c2 = PeriodicMatrixSignal::identity(2, 1.0);
    let ode = OdeSettings::new(64, 4).unwrap();
    let err = simulate_closed_loop(
        &a,
        &b,
        &c2,
        &DisturbancePolicy::Zero,
        &DVector::zeros(1),
        1.0,
        &ode,
        None,
    );
    assert!(matches!(err, Err(inescapable::Error::Dimension(_))));
    let err = simulate_closed_loop(
        &a,
        &b,
        &b,
        &DisturbancePolicy::WorstCase,
        &DVector::zeros(1),
        1.0,
        &ode,
        None,
    );
    assert!(matches!(err, Err(inescapable::Error::InvalidInput(_))));
    let err = simulate_closed_loop(
        &a,
        &b,
        &b,
        &DisturbancePolicy::Constant(vec![2.0]),
        &DVector::zeros(1),
        1.0,
        &ode,
        None,
    );
    assert!(err.is_err());
}
