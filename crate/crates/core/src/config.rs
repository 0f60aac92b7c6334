//! TOML run configuration: one self-describing file per system.
//!
//! ```toml
//! [system]
//! psi1 = "x2 - x1*(x1^2 + x2^2 - 1)"
//! psi2 = "-x1 - x2*(x1^2 + x2^2 - 1)"
//! seed = [0.0, 1.0]
//!
//! [perturbation]
//! phi1 = "..."
//! phi2 = "..."
//! T1 = "4*pi"          # number or expression in the parameters
//!
//! [params]
//! a = 0.1
//! ```
//!
//! Every other section is optional and falls back to documented defaults.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::BoundsConfig;
use crate::conditions::ConditionsConfig;
use crate::cycle::CycleConfig;
use crate::error::{Error, Result};
use crate::expr::{parse_with, CompiledExpr};
use crate::ode::IntegratorConfig;
use crate::solver::SolveConfig;
use crate::system::{SystemDef, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub psi1: String,
    pub psi2: String,
    /// Starting point for the cycle search.
    #[serde(default = "default_seed")]
    pub seed: [f64; 2],
}

fn default_seed() -> [f64; 2] {
    [0.5, 0.5]
}

/// A number, or an expression in the parameters and `pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Real {
    Number(f64),
    Expr(String),
}

impl Real {
    pub fn resolve(&self, field: &str, params: &BTreeMap<String, f64>) -> Result<f64> {
        match self {
            Real::Number(v) => Ok(*v),
            Real::Expr(src) => {
                let names: Vec<&str> = params.keys().map(String::as_str).collect();
                let e = parse_with(src, &names).map_err(|source| Error::Parse {
                    field: field.into(),
                    source,
                })?;
                if e.depends_on("t") || e.depends_on("x1") || e.depends_on("x2") {
                    return Err(Error::Config(format!(
                        "{field} must not depend on t, x1 or x2"
                    )));
                }
                let hp = params.iter().map(|(k, v)| (k.clone(), *v)).collect();
                let c = CompiledExpr::new(&e, &hp).map_err(Error::Config)?;
                Ok(c.eval(0.0, 0.0, 0.0))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    pub phi1: String,
    pub phi2: String,
    #[serde(rename = "T1")]
    pub t1: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TubesSection {
    /// Signed tube width: positive outward, negative inward.
    pub gamma: f64,
    /// Ring spacing; `|gamma|/8` when absent.
    pub pitch: Option<f64>,
}

impl Default for TubesSection {
    fn default() -> Self {
        TubesSection {
            gamma: 0.2,
            pitch: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub time_samples: usize,
    pub directions: usize,
    pub polish: bool,
    /// Widths scanned for the admissible tube; derived from the cycle when absent.
    pub gamma_grid: Option<Vec<f64>>,
    pub gamma0_safety: f64,
    /// Tolerance override for the constant estimates (they need one
    /// second-variational trajectory per sample).
    pub rel_tol: Option<f64>,
}

impl Default for BoundsSection {
    fn default() -> Self {
        let b = BoundsConfig::default();
        BoundsSection {
            time_samples: b.time_samples,
            directions: b.directions,
            polish: b.polish,
            gamma_grid: None,
            gamma0_safety: 1e-3,
            rel_tol: Some(1e-8),
        }
    }
}

impl BoundsSection {
    pub fn bounds_config(&self) -> BoundsConfig {
        BoundsConfig {
            time_samples: self.time_samples,
            directions: self.directions,
            polish: self.polish,
        }
    }

    pub fn integrator(&self, base: &IntegratorConfig) -> IntegratorConfig {
        match self.rel_tol {
            Some(r) => IntegratorConfig {
                rel_tol: r,
                abs_tol: 1e-2 * r,
                ..base.clone()
            },
            None => base.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub eps: f64,
    /// Decreasing ladder for continuation; empty skips continuation.
    pub ladder: Vec<f64>,
    /// Shooting period; the common period `k*l*T0` when absent.
    pub period: Option<f64>,
    /// Explicit starting points; the default guess curves when absent.
    pub guesses: Option<Vec<[f64; 2]>>,
    pub max_newton: usize,
    pub accept: f64,
    pub dedup: f64,
    pub degenerate_ratio: f64,
    pub guesses_per_curve: usize,
    pub orbit_samples: usize,
    pub max_divisor: usize,
    pub period_threshold: f64,
}

impl Default for SolveSection {
    fn default() -> Self {
        let s = SolveConfig::default();
        SolveSection {
            eps: 1e-3,
            ladder: vec![],
            period: None,
            guesses: None,
            max_newton: s.max_newton,
            accept: s.accept,
            dedup: s.dedup,
            degenerate_ratio: s.degenerate_ratio,
            guesses_per_curve: s.guesses_per_curve,
            orbit_samples: s.orbit_samples,
            max_divisor: s.max_divisor,
            period_threshold: s.period_threshold,
        }
    }
}

impl SolveSection {
    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            max_newton: self.max_newton,
            accept: self.accept,
            dedup: self.dedup,
            degenerate_ratio: self.degenerate_ratio,
            guesses_per_curve: self.guesses_per_curve,
            orbit_samples: self.orbit_samples,
            max_divisor: self.max_divisor,
            period_threshold: self.period_threshold,
        }
    }

    pub fn guess_points(&self) -> Option<Vec<Vec2>> {
        self.guesses
            .as_ref()
            .map(|g| g.iter().map(|p| Vec2::new(p[0], p[1])).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    /// Periods as multiples `n0` of `T0`.
    pub multiples: Vec<u32>,
    pub eps: Vec<f64>,
    /// Tolerance of the commensurability test between `T0` and `T1`.
    pub ratio_tol: f64,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            multiples: vec![1, 2, 3],
            eps: vec![1e-3, 5e-4],
            ratio_tol: 1e-9,
        }
    }
}

/// A complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: SystemSection,
    pub perturbation: PerturbationSection,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub cycle: CycleConfig,
    #[serde(default)]
    pub tubes: TubesSection,
    #[serde(default)]
    pub conditions: ConditionsConfig,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub integrator: IntegratorConfig,
}

impl Config {
    pub fn from_toml(src: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        cfg.integrator.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&src)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn t1(&self) -> Result<f64> {
        self.perturbation.t1.resolve("T1", &self.params)
    }

    /// Parse the system and check that phi has the declared period.
    pub fn system(&self) -> Result<SystemDef> {
        let sys = SystemDef::new(
            [&self.system.psi1, &self.system.psi2],
            [&self.perturbation.phi1, &self.perturbation.phi2],
            self.params.clone(),
            self.t1()?,
        )?;
        sys.validate_period(1e-8)?;
        Ok(sys)
    }

    pub fn seed(&self) -> Vec2 {
        Vec2::new(self.system.seed[0], self.system.seed[1])
    }
}

/// Bundled configurations, by name.
pub const EXAMPLES: [(&str, &str); 4] = [
    ("unit-circle", UNIT_CIRCLE),
    ("irrational", IRRATIONAL),
    ("rotation", ROTATION),
    ("zero-phi", ZERO_PHI),
];

/// The unit-circle cycle with its 4*pi-periodic perturbation.
pub const UNIT_CIRCLE: &str = r#"# Limit cycle x1^2 + x2^2 = 1 with period 2*pi; forcing period 4*pi.
# Seeding at (0, 1) puts the phase origin there, so x0(theta) = (sin theta, cos theta).
[system]
psi1 = "x2 - x1*(x1^2 + x2^2 - 1)"
psi2 = "-x1 - x2*(x1^2 + x2^2 - 1)"
seed = [0.0, 1.0]

[perturbation]
phi1 = "x2*(x1*cos(t) - x2*sin(t) + a*sin(t/2)) + x1*(x1*sin(t) + x2*cos(t))"
phi2 = "-x1*(x1*cos(t) - x2*sin(t) + a*sin(t/2)) + x2*(x1*sin(t) + x2*cos(t))"
T1 = "4*pi"

[params]
a = 0.1

[tubes]
gamma = 0.2

[conditions]
f = ["sin(t)", "cos(t)"]

[solve]
eps = 1e-3
ladder = [4e-3, 2e-3, 1e-3, 5e-4]
"#;

/// The same cycle with forcing whose period is incommensurable with 2*pi.
pub const IRRATIONAL: &str = r#"# Forcing period 4*pi/w with w = sqrt(2): no common period with the cycle.
[system]
psi1 = "x2 - x1*(x1^2 + x2^2 - 1)"
psi2 = "-x1 - x2*(x1^2 + x2^2 - 1)"
seed = [0.0, 1.0]

[perturbation]
phi1 = "x2*(x1*cos(w*t) - x2*sin(w*t) + a*sin(w*t/2)) + x1*(x1*sin(w*t) + x2*cos(w*t))"
phi2 = "-x1*(x1*cos(w*t) - x2*sin(w*t) + a*sin(w*t/2)) + x2*(x1*sin(w*t) + x2*cos(w*t))"
T1 = "4*pi/w"

[params]
a = 0.1
w = 1.4142135623730951

[scan]
multiples = [1, 2, 3]
eps = [1e-3, 5e-4]
"#;

/// A linear center: every orbit is periodic and the multiplier is 1.
pub const ROTATION: &str = r#"# Pure rotation: all orbits have period 2*pi, so the multiplier is 1.
[system]
psi1 = "x2"
psi2 = "-x1"
seed = [1.0, 0.0]

[perturbation]
phi1 = "sin(t)"
phi2 = "cos(t)"
T1 = "2*pi"
"#;

/// The unit-circle cycle with no perturbation at all.
pub const ZERO_PHI: &str = r#"# No perturbation: every condition on phi fails.
[system]
psi1 = "x2 - x1*(x1^2 + x2^2 - 1)"
psi2 = "-x1 - x2*(x1^2 + x2^2 - 1)"
seed = [0.0, 1.0]

[perturbation]
phi1 = "0"
phi2 = "0"
T1 = "4*pi"
"#;

pub fn example(name: &str) -> Option<&'static str> {
    EXAMPLES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_examples_parse() {
        for (name, src) in EXAMPLES {
            let cfg = Config::from_toml(src).unwrap_or_else(|e| panic!("{name}: {e}"));
            cfg.system().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        let cfg = Config::from_toml(UNIT_CIRCLE).unwrap();
        assert!((cfg.t1().unwrap() - 4.0 * std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(
            cfg.conditions.f,
            Some(["sin(t)".to_string(), "cos(t)".to_string()])
        );
    }

    #[test]
    fn round_trip_through_toml() {
        let cfg = Config::from_toml(UNIT_CIRCLE).unwrap();
        assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        let bad_key = UNIT_CIRCLE.replace("[tubes]", "[tubes]\ngamma_typo = 1");
        assert!(matches!(Config::from_toml(&bad_key), Err(Error::Config(_))));
        let wrong_period = UNIT_CIRCLE.replace("T1 = \"4*pi\"", "T1 = 3.0");
        let cfg = Config::from_toml(&wrong_period).unwrap();
        assert!(matches!(cfg.system(), Err(Error::Config(_))));
        let bad_expr = UNIT_CIRCLE.replace("psi1 = \"x2 -", "psi1 = \"x2 -)");
        assert!(matches!(
            Config::from_toml(&bad_expr).unwrap().system(),
            Err(Error::Parse { .. })
        ));
        let t_dep = UNIT_CIRCLE.replace("T1 = \"4*pi\"", "T1 = \"4*t\"");
        assert!(Config::from_toml(&t_dep).unwrap().t1().is_err());
    }
}
