use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use cycleperturb::bounds::{
    default_gamma_grid, estimate_constants, find_gamma0, k_gamma, BoundsConfig,
};
use cycleperturb::conditions::{check_a2_a3, ConditionsConfig};
use cycleperturb::cycle::{find_cycle, CycleConfig, LimitCycle};
use cycleperturb::geom::{build_tubes, Polyline};
use cycleperturb::ode::IntegratorConfig;
use cycleperturb::{example_system, Error, SystemDef, Vec2};
use proptest::prelude::*;

fn loose() -> IntegratorConfig {
    IntegratorConfig {
        rel_tol: 1e-8,
        abs_tol: 1e-10,
        ..Default::default()
    }
}

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

/// Radius after time `t` under `r' = -r (r^2 - 1)`.
fn radial_flow(r0: f64, t: f64) -> f64 {
    (1.0 / (1.0 + (1.0 / (r0 * r0) - 1.0) * (-2.0 * t).exp())).sqrt()
}

#[test]
fn constants_without_autonomous_flow() {
    let sys = SystemDef::new(["0", "0"], ["sin(t)", "cos(t)"], BTreeMap::new(), TAU).unwrap();
    let ts = build_tubes(&Polyline::circle(Vec2::zeros(), 1.0, 256), 0.2, Some(0.1)).unwrap();
    let rep = estimate_constants(&sys, &ts, TAU, 1.0, &BoundsConfig::default(), &loose()).unwrap();
    assert!((rep.m - 1.0).abs() < 1e-9);
    assert_eq!(rep.mp, 0.0);
    assert!((rep.lp - 1.0).abs() < 1e-12);
    assert_eq!(rep.lpp, 0.0);
}

#[test]
fn k_gamma_matches_radial_dynamics() {
    let sys = example_system(0.05);
    let lc = cycle_of(&sys);
    let curve = Polyline::from_cycle(&lc);
    let t = 4.0 * PI;
    for g in [0.2, -0.2] {
        let ts = build_tubes(&curve, g, None).unwrap();
        let pts = ts.boundary_w.resample(256);
        let got = k_gamma(&sys, &pts, t, &IntegratorConfig::default()).unwrap();
        let want = pts
            .iter()
            .map(|p| (p.norm() - radial_flow(p.norm(), t)).abs())
            .fold(f64::INFINITY, f64::min);
        assert!((got - want).abs() < 1e-6, "gamma {g}: {got} vs {want}");
    }
}

#[test]
fn example_constants_are_positive_and_grid_stable() {
    let sys = example_system(0.05);
    let lc = cycle_of(&sys);
    let t = 4.0 * PI;
    let cfg = ConditionsConfig {
        n_s: 16,
        n_xi: 32,
        monitor: false,
        ..Default::default()
    };
    let k0 = check_a2_a3(&sys, &lc, t, &cfg, &loose()).unwrap().k0;
    let curve = Polyline::from_cycle(&lc);
    let coarse_ts = build_tubes(&curve, 0.2, Some(0.05)).unwrap();
    let fine_ts = build_tubes(&curve, 0.2, Some(0.025)).unwrap();
    let coarse =
        estimate_constants(&sys, &coarse_ts, t, k0, &BoundsConfig::default(), &loose()).unwrap();
    let fine_cfg = BoundsConfig {
        time_samples: 128,
        ..Default::default()
    };
    let fine = estimate_constants(&sys, &fine_ts, t, k0, &fine_cfg, &loose()).unwrap();
    for (c, f) in [
        (coarse.m, fine.m),
        (coarse.mp, fine.mp),
        (coarse.lp, fine.lp),
        (coarse.lpp, fine.lpp),
    ] {
        assert!(c.is_finite() && c > 0.0);
        assert!(c <= 1.05 * f, "coarse {c} exceeds refined {f}");
        assert!((c - f).abs() < 0.05 * f);
    }
    assert!(coarse.k_gamma > 0.0 && coarse.eps_gamma > 0.0);
    assert!((coarse.eps_gamma - fine.eps_gamma).abs() < 0.05 * fine.eps_gamma);
}

#[test]
fn gamma0_for_the_example() {
    let sys = example_system(0.05);
    let lc = cycle_of(&sys);
    let g = find_gamma0(&sys, &lc, &default_gamma_grid(&lc), 1e-3, &loose()).unwrap();
    assert!(g.gamma0 >= 0.5, "{g:?}");
    assert!(matches!(
        find_gamma0(&sys, &lc, &[], 1e-3, &loose()),
        Err(Error::Config(_))
    ));
}

#[test]
fn gamma0_stops_before_a_second_cycle() {
    let g = "(x1^2 + x2^2 - 1)*(x1^2 + x2^2 - 1.69)";
    let psi = [format!("x2 - x1*{g}"), format!("-x1 - x2*{g}")];
    let sys = SystemDef::new([&psi[0], &psi[1]], ["0", "0"], BTreeMap::new(), TAU).unwrap();
    let lc = cycle_of(&sys);
    let grid: Vec<f64> = (1..20).map(|k| 0.05 * k as f64).collect();
    let r = find_gamma0(&sys, &lc, &grid, 1e-3, &loose()).unwrap();
    assert!(r.gamma0 < 0.3, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 3, ..ProptestConfig::default() })]

    #[test]
    fn constants_scale_linearly_with_the_perturbation(c in 0.1f64..10.0) {
        let sys = example_system(0.05);
        let lc = cycle_of(&sys);
        let scaled = sys.with_phi_scale(c);
        let t = 4.0 * PI;
        let ts = build_tubes(&Polyline::from_cycle(&lc), 0.2, Some(0.1)).unwrap();
        let bcfg = BoundsConfig { time_samples: 16, polish: false, ..Default::default() };
        let a = estimate_constants(&sys, &ts, t, 1.0, &bcfg, &loose()).unwrap();
        let b = estimate_constants(&scaled, &ts, t, 1.0, &bcfg, &loose()).unwrap();
        prop_assert!((b.m - c * a.m).abs() <= 1e-9 * b.m);
        prop_assert!((b.mp - c * a.mp).abs() <= 1e-9 * b.mp);
        let ccfg = ConditionsConfig { n_s: 8, n_xi: 16, monitor: false, ..Default::default() };
        let k_a = check_a2_a3(&sys, &lc, t, &ccfg, &loose()).unwrap().k0;
        let k_b = check_a2_a3(&scaled, &lc, t, &ccfg, &loose()).unwrap().k0;
        prop_assert!((k_b - c * k_a).abs() <= 1e-9 * k_b);
    }
}
