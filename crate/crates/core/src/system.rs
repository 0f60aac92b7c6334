//! Planar system definition `x' = psi(x) + eps*phi(t, x)` with symbolic
//! derivatives.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::expr::{parse_with, CompiledExpr, Expr};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;
/// Rank-3 tensor stored as `t[i][(j, k)]`.
pub type Tensor3 = [Mat2; 2];

const X: [&str; 2] = ["x1", "x2"];

#[derive(Debug, Clone)]
struct Compiled {
    psi: [CompiledExpr; 2],
    psi_jac: [[CompiledExpr; 2]; 2],
    // only j <= k is stored, the tensor is symmetric in (j, k)
    psi_hess: [[[CompiledExpr; 2]; 2]; 2],
    phi: [CompiledExpr; 2],
    phi_jac_x: [[CompiledExpr; 2]; 2],
}

/// Parsed system together with its derived Jacobians and Hessian.
#[derive(Debug, Clone)]
pub struct SystemDef {
    pub psi: [Expr; 2],
    pub phi: [Expr; 2],
    pub psi_jac: [[Expr; 2]; 2],
    pub psi_hess: [[[Expr; 2]; 2]; 2],
    pub phi_jac_x: [[Expr; 2]; 2],
    pub params: BTreeMap<String, f64>,
    pub t1: f64,
    /// Scale applied to phi (used to test linearity of derived constants).
    pub phi_scale: f64,
    /// True when `abs` appears, so derivatives may be undefined somewhere.
    pub nonsmooth: bool,
    c: Compiled,
}

fn compile_all<const N: usize>(
    es: &[Expr; N],
    params: &HashMap<String, f64>,
) -> Result<[CompiledExpr; N]> {
    let v: Vec<CompiledExpr> = es
        .iter()
        .map(|e| CompiledExpr::new(e, params).map_err(Error::Config))
        .collect::<Result<_>>()?;
    Ok(v.try_into().unwrap_or_else(|_| unreachable!()))
}

impl SystemDef {
    /// Parse the four component expressions. Parameter names come from
    /// `params`; phi must be `t1`-periodic in `t`.
    pub fn new(
        psi: [&str; 2],
        phi: [&str; 2],
        params: BTreeMap<String, f64>,
        t1: f64,
    ) -> Result<SystemDef> {
        let names: Vec<&str> = params.keys().map(String::as_str).collect();
        let parse_field = |field: &str, src: &str| {
            parse_with(src, &names).map_err(|source| Error::Parse {
                field: field.to_string(),
                source,
            })
        };
        let psi = [parse_field("psi1", psi[0])?, parse_field("psi2", psi[1])?];
        let phi = [parse_field("phi1", phi[0])?, parse_field("phi2", phi[1])?];
        Self::from_exprs(psi, phi, params, t1)
    }

    pub fn from_exprs(
        psi: [Expr; 2],
        phi: [Expr; 2],
        params: BTreeMap<String, f64>,
        t1: f64,
    ) -> Result<SystemDef> {
        if !(t1.is_finite() && t1 > 0.0) {
            return Err(Error::Config(format!("T1 must be positive, got {t1}")));
        }
        for (i, e) in psi.iter().enumerate() {
            if e.depends_on("t") {
                return Err(Error::Config(format!(
                    "psi{} depends on t; the unperturbed field must be autonomous",
                    i + 1
                )));
            }
        }
        let psi_jac = [0, 1].map(|i| [0, 1].map(|j| psi[i].diff(X[j])));
        let psi_hess = [0, 1].map(|i| [0, 1].map(|j| [0, 1].map(|k| psi_jac[i][j].diff(X[k]))));
        let phi_jac_x = [0, 1].map(|i| [0, 1].map(|j| phi[i].diff(X[j])));
        let nonsmooth = psi.iter().chain(phi.iter()).any(Expr::has_nonsmooth);
        if nonsmooth {
            log::warn!("system uses abs(); derivatives are undefined where its argument vanishes");
        }
        let hp: HashMap<String, f64> = params.iter().map(|(k, v)| (k.clone(), *v)).collect();
        let hess_upper = [0, 1].map(|i| {
            [
                [psi_hess[i][0][0].clone(), psi_hess[i][0][1].clone()],
                [psi_hess[i][0][1].clone(), psi_hess[i][1][1].clone()],
            ]
        });
        let c = Compiled {
            psi: compile_all(&psi, &hp)?,
            psi_jac: [
                compile_all(&psi_jac[0], &hp)?,
                compile_all(&psi_jac[1], &hp)?,
            ],
            psi_hess: [
                [
                    compile_all(&hess_upper[0][0], &hp)?,
                    compile_all(&hess_upper[0][1], &hp)?,
                ],
                [
                    compile_all(&hess_upper[1][0], &hp)?,
                    compile_all(&hess_upper[1][1], &hp)?,
                ],
            ],
            phi: compile_all(&phi, &hp)?,
            phi_jac_x: [
                compile_all(&phi_jac_x[0], &hp)?,
                compile_all(&phi_jac_x[1], &hp)?,
            ],
        };
        Ok(SystemDef {
            psi,
            phi,
            psi_jac,
            psi_hess,
            phi_jac_x,
            params,
            t1,
            phi_scale: 1.0,
            nonsmooth,
            c,
        })
    }

    /// Copy of the system with phi multiplied by `c`.
    pub fn with_phi_scale(&self, c: f64) -> SystemDef {
        let mut s = self.clone();
        s.phi_scale *= c;
        s
    }

    /// Copy of the system with phi replaced.
    pub fn with_phi(&self, phi: [Expr; 2], t1: f64) -> Result<SystemDef> {
        Self::from_exprs(self.psi.clone(), phi, self.params.clone(), t1)
    }

    #[inline]
    pub fn psi(&self, x: &Vec2) -> Vec2 {
        Vec2::new(
            self.c.psi[0].eval(0.0, x[0], x[1]),
            self.c.psi[1].eval(0.0, x[0], x[1]),
        )
    }

    #[inline]
    pub fn psi_jac(&self, x: &Vec2) -> Mat2 {
        let j = &self.c.psi_jac;
        Mat2::new(
            j[0][0].eval(0.0, x[0], x[1]),
            j[0][1].eval(0.0, x[0], x[1]),
            j[1][0].eval(0.0, x[0], x[1]),
            j[1][1].eval(0.0, x[0], x[1]),
        )
    }

    /// `h[i][(j, k)] = d^2 psi_i / dx_j dx_k`, exactly symmetric in (j, k).
    #[inline]
    pub fn psi_hess(&self, x: &Vec2) -> Tensor3 {
        [0, 1].map(|i| {
            let h = &self.c.psi_hess[i];
            let a = h[0][0].eval(0.0, x[0], x[1]);
            let b = h[0][1].eval(0.0, x[0], x[1]);
            let d = h[1][1].eval(0.0, x[0], x[1]);
            Mat2::new(a, b, b, d)
        })
    }

    #[inline]
    pub fn phi(&self, t: f64, x: &Vec2) -> Vec2 {
        self.phi_scale
            * Vec2::new(
                self.c.phi[0].eval(t, x[0], x[1]),
                self.c.phi[1].eval(t, x[0], x[1]),
            )
    }

    #[inline]
    pub fn phi_jac_x(&self, t: f64, x: &Vec2) -> Mat2 {
        let j = &self.c.phi_jac_x;
        self.phi_scale
            * Mat2::new(
                j[0][0].eval(t, x[0], x[1]),
                j[0][1].eval(t, x[0], x[1]),
                j[1][0].eval(t, x[0], x[1]),
                j[1][1].eval(t, x[0], x[1]),
            )
    }

    /// True when phi folded to the zero constant (or was scaled to zero).
    pub fn phi_is_zero(&self) -> bool {
        self.phi_scale == 0.0 || self.c.phi.iter().all(|e| e.as_constant() == Some(0.0))
    }

    /// Spot check of `phi(t + T1, x) = phi(t, x)` on a deterministic grid;
    /// returns the largest defect seen.
    pub fn periodicity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..16 {
            let t = self.t1 * (i as f64 * 0.618_033_988_749_895).fract();
            for j in 0..8 {
                let a = j as f64 * std::f64::consts::FRAC_PI_4 + 0.1;
                let r = 0.5 + 0.125 * j as f64;
                let x = Vec2::new(r * a.cos(), r * a.sin());
                worst = worst.max((self.phi(t + self.t1, &x) - self.phi(t, &x)).norm());
            }
        }
        worst
    }

    /// Check the declared period; fails when the defect exceeds `tol`.
    pub fn validate_period(&self, tol: f64) -> Result<()> {
        let d = self.periodicity_defect();
        if d > tol {
            return Err(Error::Config(format!(
                "phi is not T1-periodic: defect {d:e} exceeds {tol:e} (T1 = {})",
                self.t1
            )));
        }
        Ok(())
    }
}

/// Source text of the worked example: the unit circle is a limit cycle of
/// psi, and phi has period 4*pi through its `a*sin(t/2)` term.
pub mod example {
    pub const PSI: [&str; 2] = ["x2 - x1*(x1^2 + x2^2 - 1)", "-x1 - x2*(x1^2 + x2^2 - 1)"];
    pub const PHI: [&str; 2] = [
        "x2*(x1*cos(t) - x2*sin(t) + a*sin(t/2)) + x1*(x1*sin(t) + x2*cos(t))",
        "-x1*(x1*cos(t) - x2*sin(t) + a*sin(t/2)) + x2*(x1*sin(t) + x2*cos(t))",
    ];
    /// Same perturbation with time running at rate `w`, period `4*pi/w`.
    pub const PHI_RATE: [&str; 2] = [
        "x2*(x1*cos(w*t) - x2*sin(w*t) + a*sin(w*t/2)) + x1*(x1*sin(w*t) + x2*cos(w*t))",
        "-x1*(x1*cos(w*t) - x2*sin(w*t) + a*sin(w*t/2)) + x2*(x1*sin(w*t) + x2*cos(w*t))",
    ];
}

/// The worked example with amplitude `a`.
pub fn example_system(a: f64) -> SystemDef {
    let params = BTreeMap::from([("a".to_string(), a)]);
    SystemDef::new(
        example::PSI,
        example::PHI,
        params,
        4.0 * std::f64::consts::PI,
    )
    .expect("built-in example parses")
}

/// The example field with the perturbation time-scaled by `w`.
pub fn example_system_rate(a: f64, w: f64) -> SystemDef {
    let params = BTreeMap::from([("a".to_string(), a), ("w".to_string(), w)]);
    SystemDef::new(
        example::PSI,
        example::PHI_RATE,
        params,
        4.0 * std::f64::consts::PI / w,
    )
    .expect("built-in example parses")
}
