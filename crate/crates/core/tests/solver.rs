use std::f64::consts::PI;

use cycleperturb::cycle::{find_cycle, CycleConfig, LimitCycle};
use cycleperturb::ode::IntegratorConfig;
use cycleperturb::solver::{
    continuation, default_guesses, find_periodic, irrational_scan, least_period_check,
    phi_depends_on_time, PeriodVerdict, Side, SolveConfig,
};
use cycleperturb::{example_system, example_system_rate, Error, SystemDef, Vec2};

fn cycle_of(sys: &SystemDef) -> LimitCycle {
    find_cycle(
        sys,
        &Vec2::new(0.0, 1.0),
        None,
        &CycleConfig::default(),
        &IntegratorConfig::default(),
    )
    .unwrap()
}

#[test]
fn unperturbed_cycle_is_a_curve_of_fixed_points() {
    let sys = example_system(0.1);
    let lc = cycle_of(&sys);
    let icfg = IntegratorConfig::default();
    let guesses = vec![lc.x0(0.3), lc.x0(2.0)];
    let rep = find_periodic(
        &sys,
        &lc,
        0.0,
        lc.t0,
        &guesses,
        &SolveConfig::default(),
        &icfg,
    )
    .unwrap();
    assert!(rep.curve_detected && rep.orbits.is_empty());
    assert_eq!(rep.curve_points.len(), 2);
    assert!(rep.curve_points.iter().all(|p| p.1 <= 1e-9));
}

#[test]
fn time_independent_zero_perturbation_claims_no_isolated_orbit() {
    let sys = example_system(0.1).with_phi_scale(0.0);
    let lc = cycle_of(&sys);
    let guesses = default_guesses(&lc, 0.2, 4).unwrap();
    let rep = find_periodic(
        &sys,
        &lc,
        1e-3,
        4.0 * PI,
        &guesses,
        &SolveConfig::default(),
        &IntegratorConfig::default(),
    )
    .unwrap();
    assert!(rep.curve_detected);
    assert!(rep.orbits.is_empty());
}

#[test]
fn least_period_of_known_solutions() {
    let sys = example_system(0.1);
    let lc = cycle_of(&sys);
    let cfg = SolveConfig::default();
    let icfg = IntegratorConfig::default();
    let lp = least_period_check(&sys, 0.0, 2.0 * lc.t0, &lc.xi0, &cfg, &icfg).unwrap();
    assert_eq!((lp.m, lp.verdict), (2, PeriodVerdict::Reduced));
    let lp = least_period_check(&sys, 0.0, lc.t0, &Vec2::zeros(), &cfg, &icfg).unwrap();
    assert_eq!((lp.m, lp.verdict), (10, PeriodVerdict::Degenerate));
}

#[test]
fn bad_inputs_are_rejected() {
    let sys = example_system(0.1);
    let lc = cycle_of(&sys);
    let cfg = SolveConfig::default();
    let icfg = IntegratorConfig::default();
    assert!(matches!(
        find_periodic(&sys, &lc, -1.0, 4.0 * PI, &[lc.xi0], &cfg, &icfg),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        find_periodic(&sys, &lc, 1e-3, 4.0 * PI, &[], &cfg, &icfg),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        continuation(&sys, &lc, 4.0 * PI, &[], &[lc.xi0], None, &cfg, &icfg),
        Err(Error::Config(_))
    ));
}

#[test]
fn single_rung_continuation_matches_find_periodic_and_tags_uncertified() {
    let sys = example_system(0.1);
    let lc = cycle_of(&sys);
    let cfg = SolveConfig::default();
    let icfg = IntegratorConfig::default();
    let guesses = vec![Vec2::new(0.0, 1.05), Vec2::new(0.0, -0.95)];
    let direct = find_periodic(&sys, &lc, 2e-3, 4.0 * PI, &guesses, &cfg, &icfg).unwrap();
    let cont = continuation(
        &sys,
        &lc,
        4.0 * PI,
        &[2e-3],
        &guesses,
        Some(1e-3),
        &cfg,
        &icfg,
    )
    .unwrap();
    assert_eq!(cont.rungs.len(), 1);
    assert!(cont.rungs[0].uncertified);
    let got: Vec<[f64; 2]> = cont.rungs[0]
        .orbits
        .iter()
        .map(|o| o.as_ref().unwrap().xi)
        .collect();
    let want: Vec<[f64; 2]> = direct.orbits.iter().map(|o| o.xi).collect();
    assert_eq!(got, want);
    let sides: Vec<Side> = direct.orbits.iter().map(|o| o.side).collect();
    assert!(sides.contains(&Side::Inside) && sides.contains(&Side::Outside));
    for o in &direct.orbits {
        assert!(o.residual <= 1e-8 && o.residual_tight <= 1e-7);
    }
}

#[test]
fn scan_rows_without_perturbation_strength_vanish() {
    let sys = example_system_rate(0.1, 2f64.sqrt());
    let lc = cycle_of(&sys);
    assert!(phi_depends_on_time(&sys, &lc));
    let cfg = SolveConfig::default();
    let rows = irrational_scan(
        &sys,
        &lc,
        &[lc.t0, 2.0 * lc.t0],
        &[0.0],
        &[lc.x0(1.0)],
        0.2,
        &cfg,
        &IntegratorConfig::default(),
    )
    .unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r.min_residual < 1e-9, "{r:?}");
    }
}
