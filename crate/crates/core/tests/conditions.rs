use std::f64::consts::PI;

use cycleperturb::conditions::{
    check_conditions, lemma3_f, n_field, theorem3_check, ConditionsConfig, EtaProfile, FChoice, Via,
};
use cycleperturb::cycle::{find_cycle, CycleConfig, LimitCycle};
use cycleperturb::ode::IntegratorConfig;
use cycleperturb::{example_system, SystemDef, Vec2};

fn unit_cycle(sys: &SystemDef) -> LimitCycle {
    find_cycle(
        sys,
        &Vec2::new(0.0, 1.0),
        None,
        &CycleConfig::default(),
        &IntegratorConfig::default(),
    )
    .unwrap()
}

fn sin_cos_f(lc: &LimitCycle, sys: &SystemDef) -> FChoice {
    FChoice::for_cycle(lc, Some(&["sin(t)".to_string(), "cos(t)".to_string()]), sys).unwrap()
}

/// `4 pi sin^2 theta + cos^2 theta * int_{s-4pi+theta}^{s+theta} e^{2 tau} dtau`
fn closed_form(s: f64, th: f64) -> f64 {
    let hi = s + th;
    let lo = hi - 4.0 * PI;
    4.0 * PI * th.sin().powi(2) + th.cos().powi(2) * 0.5 * ((2.0 * hi).exp() - (2.0 * lo).exp())
}

#[test]
fn floquet_reformulation_matches_closed_form() {
    let sys = example_system(0.0);
    let lc = unit_cycle(&sys);
    let f = sin_cos_f(&lc, &sys);
    let rep = theorem3_check(&sys, &lc, 4.0 * PI, &f, 32, 32, 1.0).unwrap();
    for &(s, th, v) in &rep.grid {
        let want = closed_form(s, th);
        assert!(
            (v - want).abs() <= 1e-3 * want.abs(),
            "s={s} th={th} got {v} want {want}"
        );
    }
    assert!(rep.b2_pass && rep.b2_min > 0.0);
    assert_eq!(rep.deg_b3, 2);
    assert_eq!(rep.deg_b3_sign_change, Some(2));
}

#[test]
fn verdicts_do_not_depend_on_the_scale_of_y() {
    let sys = example_system(0.0);
    let lc = unit_cycle(&sys);
    let f = sin_cos_f(&lc, &sys);
    let a = theorem3_check(&sys, &lc, 4.0 * PI, &f, 16, 16, 1.0).unwrap();
    let b = theorem3_check(&sys, &lc, 4.0 * PI, &f, 16, 16, 7.5).unwrap();
    assert_eq!((a.b2_pass, a.deg_b3), (b.b2_pass, b.deg_b3));
}

#[test]
fn direct_and_floquet_forms_agree() {
    let sys = example_system(0.05);
    let lc = unit_cycle(&sys);
    let f = FChoice::for_cycle(&lc, None, &sys).unwrap();
    let period = 4.0 * PI;
    let icfg = IntegratorConfig::default();
    for i in 0..6 {
        let th = lc.t0 * (i as f64 + 0.5) / 6.0;
        let prof = EtaProfile::new(&sys, &lc.x0(th), period, &icfg).unwrap();
        let n = n_field(&sys, &lc, &f, th, 0.0);
        let fv = f.eval(&lc, th);
        let (yh, ell) = lc.floquet().eval(th);
        let dx = sys.psi(&lc.x0(th));
        let w = ell.exp() * (dx[0] * yh[1] - dx[1] * yh[0]);
        for j in 0..6 {
            let s = period * (j as f64 + 0.5) / 6.0;
            let direct = prof.a2_field(s).dot(&n);
            let via = w * lemma3_f(&sys, &lc, period, s, th).dot(&fv);
            assert!(
                (direct - via).abs() <= 1e-5 * direct.abs().max(1e-8),
                "{direct} vs {via}"
            );
        }
    }
}

#[test]
fn example_satisfies_all_conditions() {
    let sys = example_system(0.1);
    let lc = unit_cycle(&sys);
    let cfg = ConditionsConfig {
        n_s: 16,
        n_xi: 32,
        n_theta: 32,
        monitor: false,
        ..Default::default()
    };
    let rep = check_conditions(&sys, &lc, 4.0 * PI, &cfg, &IntegratorConfig::default()).unwrap();
    let d = rep.direct.as_ref().unwrap();
    assert!(d.a2_pass && d.k0 > 0.0);
    assert_eq!(d.deg_a3, Some(2));
    assert_eq!(rep.implication_holds, Some(true));
    assert!(rep.all_pass());
}

#[test]
fn zero_perturbation_fails_a2() {
    let sys = example_system(0.0).with_phi_scale(0.0);
    let lc = unit_cycle(&sys);
    let cfg = ConditionsConfig {
        n_s: 8,
        n_xi: 16,
        monitor: false,
        via: Via::Direct,
        ..Default::default()
    };
    let rep = check_conditions(&sys, &lc, 4.0 * PI, &cfg, &IntegratorConfig::default()).unwrap();
    let d = rep.direct.unwrap();
    assert!(!d.a2_pass);
    assert_eq!(d.k0, 0.0);
    assert!(!rep.theorem3.is_some());
}
