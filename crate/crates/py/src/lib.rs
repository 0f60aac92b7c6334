//! Python bindings: a `System` class for direct evaluation plus functions
//! that run the analysis pipeline from a TOML configuration. Reports come
//! back as plain dictionaries.

use std::collections::BTreeMap;

use cycleperturb::conditions::{check_conditions, compute_eta, Via};
use cycleperturb::config::{self, Config};
use cycleperturb::cycle::{check_a1, find_cycle, LimitCycle};
use cycleperturb::ode::{flow_perturbed, IntegratorConfig};
use cycleperturb::solver::{default_guesses, find_periodic};
use cycleperturb::{Error, SystemDef, Vec2};
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Parse { .. } | Error::Config(_) | Error::Geometry(_) => {
            PyValueError::new_err(e.to_string())
        }
        Error::BlowUp { .. }
        | Error::StepUnderflow { .. }
        | Error::TooManySteps { .. }
        | Error::Numeric(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Serialize through JSON so reports arrive as dicts and lists.
fn to_dict<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn cycle_dict(py: Python<'_>, lc: &LimitCycle, t1: f64) -> PyResult<Py<PyAny>> {
    let doc = serde_json::json!({ "cycle": lc.summary(), "a1": check_a1(lc.t0, t1, 1e-9) });
    to_dict(py, &doc)
}

/// `x' = psi(x) + eps * phi(t, x)` with `phi` of period `t1`.
#[pyclass(name = "System")]
pub struct PySystem {
    sys: SystemDef,
}

#[pymethods]
impl PySystem {
    #[new]
    #[pyo3(signature = (psi, phi, t1, params = None))]
    fn new(
        psi: [String; 2],
        phi: [String; 2],
        t1: f64,
        params: Option<BTreeMap<String, f64>>,
    ) -> PyResult<Self> {
        let sys = SystemDef::new(
            [&psi[0], &psi[1]],
            [&phi[0], &phi[1]],
            params.unwrap_or_default(),
            t1,
        )
        .map_err(to_py)?;
        sys.validate_period(1e-8).map_err(to_py)?;
        Ok(PySystem { sys })
    }

    #[getter]
    fn t1(&self) -> f64 {
        self.sys.t1
    }

    fn psi(&self, x: [f64; 2]) -> [f64; 2] {
        let v = self.sys.psi(&Vec2::new(x[0], x[1]));
        [v[0], v[1]]
    }

    fn phi(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let v = self.sys.phi(t, &Vec2::new(x[0], x[1]));
        [v[0], v[1]]
    }

    /// State at time `t` of the perturbed flow started at `xi` at time 0.
    #[pyo3(signature = (xi, t, eps = 0.0))]
    fn flow(&self, xi: [f64; 2], t: f64, eps: f64) -> PyResult<[f64; 2]> {
        let x = flow_perturbed(
            &self.sys,
            eps,
            &Vec2::new(xi[0], xi[1]),
            0.0,
            t,
            &IntegratorConfig::default(),
        )
        .map_err(to_py)?;
        Ok([x[0], x[1]])
    }

    /// Solution at time `t` of the linearized system forced by `phi`,
    /// vanishing at time `s`.
    fn eta(&self, t: f64, s: f64, xi: [f64; 2]) -> PyResult<[f64; 2]> {
        let v = compute_eta(
            &self.sys,
            t,
            s,
            &Vec2::new(xi[0], xi[1]),
            &IntegratorConfig::default(),
        )
        .map_err(to_py)?;
        Ok([v[0], v[1]])
    }

    /// Locate the limit cycle through the section at `seed`.
    fn find_cycle(&self, py: Python<'_>, seed: [f64; 2]) -> PyResult<Py<PyAny>> {
        let lc = find_cycle(
            &self.sys,
            &Vec2::new(seed[0], seed[1]),
            None,
            &Default::default(),
            &IntegratorConfig::default(),
        )
        .map_err(to_py)?;
        cycle_dict(py, &lc, self.sys.t1)
    }
}

/// Text of a bundled configuration.
#[pyfunction]
fn example(name: &str) -> PyResult<&'static str> {
    config::example(name).ok_or_else(|| PyValueError::new_err(format!("unknown example `{name}`")))
}

fn load(config: &str) -> PyResult<(Config, SystemDef, LimitCycle)> {
    let cfg = Config::from_toml(config).map_err(to_py)?;
    let sys = cfg.system().map_err(to_py)?;
    let lc = find_cycle(&sys, &cfg.seed(), None, &cfg.cycle, &cfg.integrator).map_err(to_py)?;
    if !lc.a0_holds(cfg.cycle.a0_band) {
        return Err(to_py(Error::HypothesisA0 { mu: lc.mu }));
    }
    Ok((cfg, sys, lc))
}

fn common_period(cfg: &Config, sys: &SystemDef, lc: &LimitCycle) -> PyResult<f64> {
    let a1 = check_a1(lc.t0, sys.t1, cfg.scan.ratio_tol);
    a1.period.ok_or_else(|| {
        to_py(Error::HypothesisA1(format!(
            "T0/T1 = {} is not rational",
            a1.ratio
        )))
    })
}

/// Cycle summary and commensurability check for a TOML configuration.
#[pyfunction]
fn cycle(py: Python<'_>, config: &str) -> PyResult<Py<PyAny>> {
    let (_, sys, lc) = load(config)?;
    cycle_dict(py, &lc, sys.t1)
}

/// Existence-condition report; `via` is "direct", "theorem3" or "both".
#[pyfunction]
#[pyo3(signature = (config, via = None))]
fn conditions(py: Python<'_>, config: &str, via: Option<&str>) -> PyResult<Py<PyAny>> {
    let (mut cfg, sys, lc) = load(config)?;
    if let Some(v) = via {
        cfg.conditions.via = v.parse::<Via>().map_err(PyValueError::new_err)?;
    }
    let period = common_period(&cfg, &sys, &lc)?;
    let rep = py
        .detach(|| check_conditions(&sys, &lc, period, &cfg.conditions, &cfg.integrator))
        .map_err(to_py)?;
    to_dict(py, &rep)
}

/// Periodic solutions at perturbation size `eps` (no certification).
#[pyfunction]
#[pyo3(signature = (config, eps = None))]
fn solve(py: Python<'_>, config: &str, eps: Option<f64>) -> PyResult<Py<PyAny>> {
    let (cfg, sys, lc) = load(config)?;
    let period = match cfg.solve.period {
        Some(t) => t,
        None => common_period(&cfg, &sys, &lc)?,
    };
    let eps = eps.unwrap_or(cfg.solve.eps);
    let guesses = match cfg.solve.guess_points() {
        Some(g) => g,
        None => {
            default_guesses(&lc, cfg.tubes.gamma, cfg.solve.guesses_per_curve).map_err(to_py)?
        }
    };
    let scfg = cfg.solve.solve_config();
    let rep = py
        .detach(|| find_periodic(&sys, &lc, eps, period, &guesses, &scfg, &cfg.integrator))
        .map_err(to_py)?;
    to_dict(py, &rep)
}

#[pymodule]
#[pyo3(name = "cycleperturb")]
fn cycleperturb_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_function(wrap_pyfunction!(example, m)?)?;
    m.add_function(wrap_pyfunction!(cycle, m)?)?;
    m.add_function(wrap_pyfunction!(conditions, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
