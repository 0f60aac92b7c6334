//! `analyze`: command-line front end for cycleperturb.
//!
//! Every command reads one TOML configuration (see `analyze example`),
//! prints a JSON report on stdout and, with `--out DIR`, also writes the
//! report and its CSV companions into `DIR`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 hypothesis
//! (A0)/(A1) violated, 3 an existence condition fails, 4 numerical failure.

mod pipeline;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use cycleperturb::conditions::Via;
use cycleperturb::config::{self, Config};
use cycleperturb::geom::hausdorff;
use cycleperturb::solver::{
    continuation, default_guesses, find_periodic, irrational_scan, phi_depends_on_time, scan_csv,
};
use cycleperturb::Error;
use serde::Serialize;
use serde_json::json;

use pipeline::{Pipeline, RunManifest};

#[derive(Parser)]
#[command(
    name = "analyze",
    version,
    about = "Periodic solutions of periodically perturbed planar systems"
)]
struct Cli {
    /// Worker threads for grid sweeps (defaults to all cores).
    #[arg(long, global = true, env = "CYCLEPERTURB_JOBS")]
    jobs: Option<usize>,
    /// Directory for the JSON report and CSV files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArg {
    /// TOML configuration file.
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Locate the limit cycle, its multiplier and the commensurability of periods.
    Cycle(ConfigArg),
    /// Build the tubular neighbourhood of the cycle.
    Tubes {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
        #[arg(long)]
        pitch: Option<f64>,
    },
    /// Check the existence conditions.
    Conditions {
        #[command(flatten)]
        cfg: ConfigArg,
        /// direct, theorem3 or both.
        #[arg(long)]
        via: Option<Via>,
    },
    /// Estimate the constants and the admissible perturbation size.
    Bounds {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
        #[arg(long)]
        pitch: Option<f64>,
        /// Time samples per trajectory.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Find the periodic solutions at one perturbation size, then continue them down the ladder.
    Solve {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        eps: Option<f64>,
        /// Solve even when eps exceeds the certified bound; results are tagged uncertified.
        #[arg(long)]
        force: bool,
    },
    /// Residual floors for incommensurable forcing.
    Scan(ConfigArg),
    /// Print a bundled configuration.
    Example {
        /// One of: unit-circle, irrational, rotation, zero-phi.
        name: Option<String>,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
struct Exit {
    code: u8,
    message: String,
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

fn exit(code: u8, message: impl Into<String>) -> anyhow::Error {
    Exit {
        code,
        message: message.into(),
    }
    .into()
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Config(_) | Error::Geometry(_) => 1,
        Error::HypothesisA0 { .. } | Error::HypothesisA1(_) => 2,
        Error::DegenerateField { .. } => 3,
        Error::BlowUp { .. }
        | Error::StepUnderflow { .. }
        | Error::TooManySteps { .. }
        | Error::Numeric(_) => 4,
    }
}

fn code_of(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Exit>() {
        return e.code;
    }
    if let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) {
        return exit_code(e);
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code_of(&e))
        }
    }
}

/// Report output: stdout always, `DIR/<name>` files when `--out` is given.
struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    fn new(dir: Option<PathBuf>) -> anyhow::Result<Sink> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
        }
        Ok(Sink { dir })
    }

    fn file(&self, name: &str, body: &str) -> anyhow::Result<()> {
        if let Some(d) = &self.dir {
            let path = d.join(name);
            std::fs::write(&path, body)
                .with_context(|| format!("cannot write {}", path.display()))?;
        }
        Ok(())
    }

    fn report<T: Serialize>(
        &self,
        name: &str,
        manifest: &RunManifest,
        body: T,
    ) -> anyhow::Result<()> {
        let doc = json!({ "manifest": manifest, "report": body });
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        print!("{text}");
        self.file(&format!("{name}.json"), &text)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(exit(1, "--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let sink = Sink::new(cli.out)?;
    match cli.command {
        Command::Cycle(c) => cmd_cycle(&c.config, &sink),
        Command::Tubes { cfg, gamma, pitch } => cmd_tubes(&cfg.config, gamma, pitch, &sink),
        Command::Conditions { cfg, via } => cmd_conditions(&cfg.config, via, &sink),
        Command::Bounds {
            cfg,
            gamma,
            pitch,
            grid,
        } => cmd_bounds(&cfg.config, gamma, pitch, grid, &sink),
        Command::Solve { cfg, eps, force } => cmd_solve(&cfg.config, eps, force, &sink),
        Command::Scan(c) => cmd_scan(&c.config, &sink),
        Command::Example { name } => cmd_example(name.as_deref()),
    }
}

fn load(path: &Path, command: &str) -> anyhow::Result<Pipeline> {
    Ok(Pipeline::load(path, command)?)
}

fn cmd_cycle(path: &Path, sink: &Sink) -> anyhow::Result<()> {
    let mut p = load(path, "cycle")?;
    let lc = p.cycle()?;
    let a1 = p.a1(&lc);
    sink.file("cycle.csv", &lc.to_csv())?;
    sink.report(
        "cycle",
        &p.manifest,
        json!({ "cycle": lc.summary(), "a1": a1 }),
    )
}

fn cmd_tubes(
    path: &Path,
    gamma: Option<f64>,
    pitch: Option<f64>,
    sink: &Sink,
) -> anyhow::Result<()> {
    let mut p = load(path, "tubes")?;
    override_tubes(&mut p.cfg, gamma, pitch);
    p.resolve();
    let lc = p.cycle()?;
    let ts = p.tubes(&lc)?;
    let (reach_in, reach_out) = ts.curve.reach();
    sink.file("cycle_polyline.csv", &ts.curve.to_csv())?;
    sink.file("tube_boundary.csv", &ts.boundary_w.to_csv())?;
    let report = json!({
        "gamma": ts.gamma,
        "pitch": ts.pitch,
        "annulus_samples": ts.annulus_samples.len(),
        "boundary_vertices": ts.boundary_w.len(),
        "boundary_simple": ts.boundary_w.is_simple(),
        "reach_inside": reach_in,
        "reach_outside": reach_out,
        "boundary_to_cycle_hausdorff": hausdorff(&ts.curve, &ts.boundary_w),
    });
    sink.report("tubes", &p.manifest, report)
}

fn override_tubes(cfg: &mut Config, gamma: Option<f64>, pitch: Option<f64>) {
    if let Some(g) = gamma {
        cfg.tubes.gamma = g;
    }
    if pitch.is_some() {
        cfg.tubes.pitch = pitch;
    }
}

fn cmd_conditions(path: &Path, via: Option<Via>, sink: &Sink) -> anyhow::Result<()> {
    let mut p = load(path, "conditions")?;
    if let Some(v) = via {
        p.cfg.conditions.via = v;
    }
    p.resolve();
    let lc = p.cycle()?;
    let period = p.period(&lc)?;
    let cc = p.cfg.conditions.clone();
    let rep = p.conditions(&lc, period, &cc)?;
    if let Some(t3) = &rep.theorem3 {
        sink.file("theorem3_grid.csv", &t3.to_csv())?;
    }
    sink.report("conditions", &p.manifest, &rep)?;
    if rep.implication_holds == Some(false) {
        return Err(exit(
            4,
            "(B2)/(B3) pass while (A2)/(A3) fail: refine the grids",
        ));
    }
    if !rep.all_pass() {
        return Err(exit(3, "existence conditions fail"));
    }
    Ok(())
}

fn cmd_bounds(
    path: &Path,
    gamma: Option<f64>,
    pitch: Option<f64>,
    grid: Option<usize>,
    sink: &Sink,
) -> anyhow::Result<()> {
    let mut p = load(path, "bounds")?;
    override_tubes(&mut p.cfg, gamma, pitch);
    if let Some(n) = grid {
        p.cfg.bounds.time_samples = n;
    }
    p.resolve();
    let lc = p.cycle()?;
    let period = p.period(&lc)?;
    let rep = p.bounds(&lc, period)?;
    sink.report("bounds", &p.manifest, &rep)?;
    if !(rep.eps_gamma > 0.0) {
        return Err(exit(
            3,
            rep.diagnostic
                .unwrap_or_else(|| "no admissible perturbation size".into()),
        ));
    }
    Ok(())
}

fn cmd_solve(path: &Path, eps: Option<f64>, force: bool, sink: &Sink) -> anyhow::Result<()> {
    let mut p = load(path, "solve")?;
    if let Some(e) = eps {
        p.cfg.solve.eps = e;
    }
    p.resolve();
    let lc = p.cycle()?;
    let period = match p.cfg.solve.period {
        Some(t) => t,
        None => p.period(&lc)?,
    };
    let bounds = p.bounds(&lc, period)?;
    let eps = p.cfg.solve.eps;
    let eps_bound = bounds.eps_gamma;
    let uncertified = eps > eps_bound;
    if uncertified && !force {
        return Err(exit(
            1,
            format!("eps = {eps:e} exceeds the certified bound eps_gamma = {eps_bound:e}; pass --force to solve anyway"),
        ));
    }
    let guesses = match p.cfg.solve.guess_points() {
        Some(g) => g,
        None => default_guesses(&lc, p.cfg.tubes.gamma, p.cfg.solve.guesses_per_curve)?,
    };
    let scfg = p.cfg.solve.solve_config();
    let icfg = p.cfg.integrator.clone();
    let sys = p.sys.clone();
    let solved = {
        let start = std::time::Instant::now();
        let r = find_periodic(&sys, &lc, eps, period, &guesses, &scfg, &icfg)?;
        p.manifest
            .stages
            .push(("solve".into(), start.elapsed().as_secs_f64()));
        r
    };
    for (i, o) in solved.orbits.iter().enumerate() {
        sink.file(&format!("orbit_{i}.csv"), &o.to_csv())?;
    }
    let ladder = p.cfg.solve.ladder.clone();
    let cont = if ladder.is_empty() {
        None
    } else {
        let start = std::time::Instant::now();
        let c = continuation(
            &sys,
            &lc,
            period,
            &ladder,
            &guesses,
            Some(eps_bound),
            &scfg,
            &icfg,
        )?;
        p.manifest
            .stages
            .push(("continuation".into(), start.elapsed().as_secs_f64()));
        Some(c)
    };
    let branch_distances: Option<Vec<_>> = cont.as_ref().map(|c| {
        (0..c.rungs.first().map_or(0, |r| r.orbits.len()))
            .map(|b| c.branch_distances(b))
            .collect()
    });
    let report = json!({
        "uncertified": uncertified,
        "eps_gamma": eps_bound,
        "bounds": bounds,
        "solve": solved,
        "continuation": cont,
        "branch_distances": branch_distances,
    });
    sink.report("solve", &p.manifest, report)?;
    if solved.curve_detected {
        return Err(exit(
            3,
            "converged points form a curve: no isolated periodic solution",
        ));
    }
    Ok(())
}

fn cmd_scan(path: &Path, sink: &Sink) -> anyhow::Result<()> {
    let mut p = load(path, "scan")?;
    let lc = p.cycle()?;
    let a1 = p.a1(&lc);
    let periods: Vec<f64> = p
        .cfg
        .scan
        .multiples
        .iter()
        .map(|&n| n as f64 * lc.t0)
        .collect();
    if periods.is_empty() || p.cfg.scan.eps.is_empty() {
        return Err(exit(1, "scan needs at least one multiple and one eps"));
    }
    let guesses = match p.cfg.solve.guess_points() {
        Some(g) => g,
        None => default_guesses(&lc, p.cfg.tubes.gamma, p.cfg.solve.guesses_per_curve)?,
    };
    let scfg = p.cfg.solve.solve_config();
    let icfg = p.cfg.integrator.clone();
    let sys = p.sys.clone();
    let tube = p.cfg.tubes.gamma.abs();
    let start = std::time::Instant::now();
    let rows = irrational_scan(
        &sys,
        &lc,
        &periods,
        &p.cfg.scan.eps,
        &guesses,
        tube,
        &scfg,
        &icfg,
    )?;
    p.manifest
        .stages
        .push(("scan".into(), start.elapsed().as_secs_f64()));
    sink.file("scan.csv", &scan_csv(&rows))?;
    let floor = rows
        .iter()
        .map(|r| r.min_residual)
        .fold(f64::INFINITY, f64::min);
    let report = json!({
        "a1": a1,
        "phi_depends_on_time": phi_depends_on_time(&sys, &lc),
        "residual_floor": floor,
        "rows": rows,
    });
    sink.report("scan", &p.manifest, report)
}

fn cmd_example(name: Option<&str>) -> anyhow::Result<()> {
    match name {
        None => {
            for (n, _) in config::EXAMPLES {
                println!("{n}");
            }
            Ok(())
        }
        Some(n) => match config::example(n) {
            Some(src) => {
                print!("{src}");
                Ok(())
            }
            None => {
                let names: Vec<&str> = config::EXAMPLES.iter().map(|e| e.0).collect();
                Err(exit(
                    1,
                    format!("unknown example `{n}`; available: {}", names.join(", ")),
                ))
            }
        },
    }
}
