use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cycleperturb::config::{self, Config};
use serde_json::Value;
use tempfile::TempDir;

fn analyze(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_analyze"))
        .args(args)
        .env_remove("CYCLEPERTURB_JOBS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &Config) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

fn bundled(name: &str) -> Config {
    Config::from_toml(config::example(name).unwrap()).unwrap()
}

fn report(out: &Output) -> Value {
    let v: Value = serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)));
    assert!(v["manifest"]["command"].is_string());
    v
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn cycle_reports_the_unit_circle() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &bundled("unit-circle"));
    let out_dir = dir.path().join("out");
    let out = analyze(&[
        "cycle",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = report(&out);
    let t0 = v["report"]["cycle"]["t0"].as_f64().unwrap();
    assert!((t0 - std::f64::consts::TAU).abs() < 1e-8, "{t0}");
    assert_eq!(v["report"]["a1"]["lk"], serde_json::json!([1, 2]));
    let csv = std::fs::read_to_string(out_dir.join("cycle.csv")).unwrap();
    assert!(csv.starts_with("theta,x1,x2,dx1,dx2\n"));
    assert!(out_dir.join("cycle.json").exists());
}

#[test]
fn usage_and_configuration_errors_exit_1() {
    assert_eq!(analyze(&["cycle"]).status.code(), Some(1));
    assert_eq!(
        analyze(&["cycle", "--config", "/nonexistent/x.toml"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(analyze(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(analyze(&["example", "nope"]).status.code(), Some(1));
    assert_eq!(analyze(&["--help"]).status.code(), Some(0));

    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.toml");
    let src = config::example("unit-circle")
        .unwrap()
        .replace("[tubes]", "[tubes]\nwidth = 1");
    std::fs::write(&bad, src).unwrap();
    let out = analyze(&["cycle", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("width"));

    let cfg = write_config(dir.path(), "c.toml", &bundled("unit-circle"));
    let out = analyze(&["cycle", "--config", cfg.to_str().unwrap(), "--jobs", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unit_multiplier_violates_a0() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "r.toml", &bundled("rotation"));
    let out = analyze(&["cycle", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("(A0) violated"));
}

#[test]
fn incommensurable_periods_violate_a1_for_conditions() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "i.toml", &bundled("irrational"));
    let out = analyze(&["conditions", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("(A1) violated"));
}

#[test]
fn conditions_pass_for_the_example_by_both_routes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &bundled("unit-circle"));
    let out_dir = dir.path().join("out");
    let out = analyze(&[
        "conditions",
        "--config",
        cfg.to_str().unwrap(),
        "--via",
        "theorem3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let t3 = &report(&out)["report"]["theorem3"];
    assert_eq!(t3["b2_pass"], true);
    assert_eq!(t3["deg_b3"], 2);
    let csv = std::fs::read_to_string(out_dir.join("theorem3_grid.csv")).unwrap();
    assert!(csv.starts_with("s,theta,value\n"));

    let mut small = bundled("unit-circle");
    small.conditions.n_s = 16;
    small.conditions.n_xi = 64;
    small.conditions.n_theta = 64;
    let cfg = write_config(dir.path(), "small.toml", &small);
    let out = analyze(&[
        "conditions",
        "--config",
        cfg.to_str().unwrap(),
        "--via",
        "both",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = report(&out);
    assert_eq!(v["report"]["implication_holds"], true);
    assert_eq!(v["report"]["direct"]["a2_pass"], true);
    assert_eq!(v["report"]["direct"]["deg_a3"], 2);
}

#[test]
fn vanishing_perturbation_fails_conditions() {
    let dir = TempDir::new().unwrap();
    let mut zero = bundled("zero-phi");
    zero.conditions.n_s = 8;
    zero.conditions.n_xi = 32;
    let cfg = write_config(dir.path(), "z.toml", &zero);
    let out = analyze(&[
        "conditions",
        "--config",
        cfg.to_str().unwrap(),
        "--via",
        "direct",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let d = &report(&out)["report"]["direct"];
    assert_eq!(d["a2_pass"], false);
    assert_eq!(d["k0"], 0.0);
}

#[test]
fn tubes_and_bounds_for_the_example() {
    let dir = TempDir::new().unwrap();
    let mut c = bundled("unit-circle");
    c.conditions.n_s = 16;
    c.conditions.n_xi = 64;
    let cfg = write_config(dir.path(), "c.toml", &c);
    let out_dir = dir.path().join("out");
    let out = analyze(&[
        "tubes",
        "--config",
        cfg.to_str().unwrap(),
        "--gamma",
        "-0.2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = report(&out);
    assert_eq!(v["report"]["gamma"], -0.2);
    assert_eq!(v["manifest"]["resolved"]["tubes"]["gamma"], -0.2);
    assert!(std::fs::read_to_string(out_dir.join("tube_boundary.csv"))
        .unwrap()
        .starts_with("x1,x2\n"));

    let out = analyze(&[
        "bounds",
        "--config",
        cfg.to_str().unwrap(),
        "--pitch",
        "0.05",
        "--grid",
        "32",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = report(&out);
    let b = &v["report"];
    assert!(b["eps_gamma"].as_f64().unwrap() > 0.0);
    assert!(b["gamma0"].as_f64().unwrap() >= 0.2);
    assert_eq!(b["time_samples"], 32);
    let stages: Vec<&str> = v["manifest"]["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s[0].as_str().unwrap())
        .collect();
    assert_eq!(
        stages,
        ["parse", "cycle", "conditions", "tubes", "gamma0", "bounds"]
    );
}

#[test]
fn solve_refuses_uncertified_eps_unless_forced() {
    let dir = TempDir::new().unwrap();
    let mut c = bundled("unit-circle");
    c.conditions.n_s = 16;
    c.conditions.n_xi = 64;
    c.bounds.time_samples = 16;
    c.tubes.pitch = Some(0.1);
    c.solve.ladder = vec![2e-3, 1e-3];
    let cfg = write_config(dir.path(), "c.toml", &c);
    let out = analyze(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--force"));

    let out_dir = dir.path().join("out");
    let out = analyze(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--force",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = &report(&out)["report"];
    assert_eq!(r["uncertified"], true);
    let orbits = r["solve"]["orbits"].as_array().unwrap();
    let mut sides: Vec<&str> = orbits.iter().map(|o| o["side"].as_str().unwrap()).collect();
    sides.sort();
    assert_eq!(sides, ["inside", "outside"]);
    for o in orbits {
        assert!(o["residual"].as_f64().unwrap() <= 1e-8);
    }
    assert!(r["continuation"]["rungs"]
        .as_array()
        .unwrap()
        .iter()
        .all(|g| g["uncertified"] == true));
    let csv = std::fs::read_to_string(out_dir.join("orbit_0.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2\n"));
}

#[test]
fn scan_reports_a_residual_floor() {
    let dir = TempDir::new().unwrap();
    let mut c = bundled("irrational");
    c.scan.multiples = vec![2];
    c.scan.eps = vec![1e-3];
    c.solve.guesses_per_curve = 4;
    let cfg = write_config(dir.path(), "i.toml", &c);
    let out_dir = dir.path().join("out");
    let out = analyze(&[
        "scan",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = &report(&out)["report"];
    assert_eq!(r["a1"]["lk"], Value::Null);
    assert!(r["residual_floor"].as_f64().unwrap() > 1e-4);
    let csv = std::fs::read_to_string(out_dir.join("scan.csv")).unwrap();
    assert!(csv.starts_with("T,eps,min_residual\n"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn reports_are_reproducible_apart_from_timings() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &bundled("unit-circle"));
    let strip = |out: Output| {
        let mut v = report(&out);
        v["manifest"]["stages"] = Value::Null;
        v
    };
    let a = strip(analyze(&["cycle", "--config", cfg.to_str().unwrap()]));
    let b = strip(analyze(&["cycle", "--config", cfg.to_str().unwrap()]));
    assert_eq!(a, b);
}

#[test]
fn jobs_come_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &bundled("unit-circle"));
    let out = Command::new(env!("CARGO_BIN_EXE_analyze"))
        .args(["cycle", "--config", cfg.to_str().unwrap()])
        .env("CYCLEPERTURB_JOBS", "3")
        .output()
        .unwrap();
    assert_eq!(report(&out)["manifest"]["jobs"], 3);
    let out = analyze(&["cycle", "--config", cfg.to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(report(&out)["manifest"]["jobs"], 2);
}

#[test]
fn example_lists_and_prints_configs() {
    let out = analyze(&["example"]);
    let names = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        names.lines().collect::<Vec<_>>(),
        ["unit-circle", "irrational", "rotation", "zero-phi"]
    );
    let out = analyze(&["example", "unit-circle"]);
    assert!(Config::from_toml(&String::from_utf8(out.stdout).unwrap()).is_ok());
}
