//! Analysis stages in their fixed order (cycle → tubes → conditions →
//! bounds → solve), each timed into the run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use cycleperturb::bounds::{
    default_gamma_grid, estimate_constants, find_gamma0, BoundsReport, Gamma0,
};
use cycleperturb::conditions::{check_conditions, ConditionsConfig, ConditionsReport, Via};
use cycleperturb::config::Config;
use cycleperturb::cycle::{check_a1, find_cycle, A1Check, LimitCycle};
use cycleperturb::geom::{build_tubes, Polyline, TubeSets};
use cycleperturb::{Error, SystemDef};
use serde::Serialize;

/// Provenance block embedded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_path: PathBuf,
    pub command: String,
    pub version: &'static str,
    pub jobs: usize,
    /// The configuration after defaults and command-line overrides.
    pub resolved: Config,
    /// Wall-clock seconds per stage, in execution order.
    pub stages: Vec<(String, f64)>,
}

pub struct Pipeline {
    pub cfg: Config,
    pub sys: SystemDef,
    pub manifest: RunManifest,
}

impl Pipeline {
    pub fn load(path: &Path, command: &str) -> Result<Pipeline, Error> {
        let cfg = Config::load(path)?;
        Self::from_config(cfg, path, command)
    }

    pub fn from_config(cfg: Config, path: &Path, command: &str) -> Result<Pipeline, Error> {
        let start = Instant::now();
        let sys = cfg.system()?;
        let manifest = RunManifest {
            config_path: path.to_path_buf(),
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            jobs: rayon::current_num_threads(),
            resolved: cfg.clone(),
            stages: vec![("parse".into(), start.elapsed().as_secs_f64())],
        };
        Ok(Pipeline { cfg, sys, manifest })
    }

    /// Refresh the resolved configuration after command-line overrides.
    pub fn resolve(&mut self) {
        self.manifest.resolved = self.cfg.clone();
    }

    fn timed<T>(
        &mut self,
        stage: &str,
        f: impl FnOnce(&Self) -> Result<T, Error>,
    ) -> Result<T, Error> {
        let start = Instant::now();
        let out = f(self);
        self.manifest
            .stages
            .push((stage.to_string(), start.elapsed().as_secs_f64()));
        out
    }

    /// Locate the cycle and enforce (A0).
    pub fn cycle(&mut self) -> Result<LimitCycle, Error> {
        let lc = self.timed("cycle", |p| {
            find_cycle(&p.sys, &p.cfg.seed(), None, &p.cfg.cycle, &p.cfg.integrator)
        })?;
        if !lc.a0_holds(self.cfg.cycle.a0_band) {
            return Err(Error::HypothesisA0 { mu: lc.mu });
        }
        Ok(lc)
    }

    pub fn a1(&self, lc: &LimitCycle) -> A1Check {
        check_a1(lc.t0, self.sys.t1, self.cfg.scan.ratio_tol)
    }

    /// The common period `k*l*T0`, enforcing (A1).
    pub fn period(&self, lc: &LimitCycle) -> Result<f64, Error> {
        let a1 = self.a1(lc);
        let tol = self.cfg.scan.ratio_tol;
        a1.period.ok_or_else(|| {
            Error::HypothesisA1(format!(
                "T0/T1 = {} has no ratio l/k with k <= 1000 at tolerance {tol:e}",
                a1.ratio
            ))
        })
    }

    pub fn tubes(&mut self, lc: &LimitCycle) -> Result<TubeSets, Error> {
        let (gamma, pitch) = (self.cfg.tubes.gamma, self.cfg.tubes.pitch);
        self.timed("tubes", |_| {
            build_tubes(&Polyline::from_cycle(lc), gamma, pitch)
        })
    }

    pub fn conditions(
        &mut self,
        lc: &LimitCycle,
        period: f64,
        cfg: &ConditionsConfig,
    ) -> Result<ConditionsReport, Error> {
        self.timed("conditions", |p| {
            check_conditions(&p.sys, lc, period, cfg, &p.cfg.integrator)
        })
    }

    /// `K0` from the direct check alone (all the bound needs).
    pub fn k0(&mut self, lc: &LimitCycle, period: f64) -> Result<f64, Error> {
        let cfg = ConditionsConfig {
            via: Via::Direct,
            ..self.cfg.conditions.clone()
        };
        Ok(self
            .conditions(lc, period, &cfg)?
            .direct
            .map_or(0.0, |d| d.k0))
    }

    pub fn gamma0(&mut self, lc: &LimitCycle) -> Result<Gamma0, Error> {
        let grid = self
            .cfg
            .bounds
            .gamma_grid
            .clone()
            .unwrap_or_else(|| default_gamma_grid(lc));
        let icfg = self.cfg.bounds.integrator(&self.cfg.integrator);
        self.timed("gamma0", |p| {
            find_gamma0(&p.sys, lc, &grid, p.cfg.bounds.gamma0_safety, &icfg)
        })
    }

    pub fn bounds(&mut self, lc: &LimitCycle, period: f64) -> Result<BoundsReport, Error> {
        let k0 = self.k0(lc, period)?;
        let ts = self.tubes(lc)?;
        let g0 = self.gamma0(lc)?;
        let icfg = self.cfg.bounds.integrator(&self.cfg.integrator);
        let bcfg = self.cfg.bounds.bounds_config();
        let mut rep = self.timed("bounds", |p| {
            estimate_constants(&p.sys, &ts, period, k0, &bcfg, &icfg)
        })?;
        rep.gamma0 = Some(g0.gamma0);
        if ts.gamma.abs() > g0.gamma0 {
            let note = format!(
                "|gamma| = {} exceeds the admissible width gamma0 = {}",
                ts.gamma.abs(),
                g0.gamma0
            );
            rep.diagnostic = Some(match rep.diagnostic.take() {
                Some(d) => format!("{d}; {note}"),
                None => note,
            });
        }
        Ok(rep)
    }
}
