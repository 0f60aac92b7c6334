//! The averaged perturbation `Phi`, the auxiliary solution `eta`, and the
//! existence conditions checked both directly and through the Floquet
//! reformulation along the cycle.

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cycle::LimitCycle;
use crate::degree::{circle_map_degree, sign_change_degree, winding_degree, BoundaryField};
use crate::error::{Error, Result};
use crate::expr::{CompiledExpr, Expr};
use crate::ode::{
    decode7, integrate, integrate_dense, variational_trajectory, IntegratorConfig, Trajectory,
};
use crate::quad;
use crate::system::{Mat2, SystemDef, Vec2};

/// `det(a b)` for column vectors `a`, `b`.
#[inline]
pub fn det2(a: &Vec2, b: &Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// `a^perp = (-a2, a1)`.
#[inline]
pub fn perp(a: &Vec2) -> Vec2 {
    Vec2::new(-a[1], a[0])
}

/// `a^top = (a2, -a1)`.
#[inline]
pub fn top(a: &Vec2) -> Vec2 {
    Vec2::new(a[1], -a[0])
}

/// `Phi(t, xi) = V(t)^{-1} phi(t, Omega(t, 0, xi))`, with the inverse formed
/// from the adjugate and the Liouville determinant.
pub fn compute_phi(sys: &SystemDef, xi: &Vec2, t: f64, icfg: &IntegratorConfig) -> Result<Vec2> {
    let traj = variational_trajectory(sys, 0.0, xi, 0.0, t, icfg)?;
    let (x, v, logdet) = decode7(&traj.end());
    Ok(inverse_from_logdet(&v, logdet)? * sys.phi(t, &x))
}

/// `V^{-1} = adj(V) / det V` with `det V = exp(logdet)`.
pub fn inverse_from_logdet(v: &Mat2, logdet: f64) -> Result<Mat2> {
    let det = logdet.exp();
    if !(det >= 1e-14) {
        return Err(Error::Numeric(format!(
            "variational matrix is singular (det = {det:e})"
        )));
    }
    let adj = Matrix2::new(v[(1, 1)], -v[(0, 1)], -v[(1, 0)], v[(0, 0)]);
    Ok(adj / det)
}

/// Forward pass `[x, P, I]` with `P = V^{-1}` (so `P' = -P A`) and
/// `I(t) = int_0^t Phi`.
fn forward_profile(
    sys: &SystemDef,
    xi: &Vec2,
    t_end: f64,
    icfg: &IntegratorConfig,
) -> Result<Trajectory<8>> {
    let rhs = |t: f64, y: &[f64; 8], dy: &mut [f64; 8]| {
        let x = Vec2::new(y[0], y[1]);
        let p = Mat2::new(y[2], y[3], y[4], y[5]);
        let a = sys.psi_jac(&x);
        let dp = -p * a;
        let di = p * sys.phi(t, &x);
        let f = sys.psi(&x);
        *dy = [
            f[0],
            f[1],
            dp[(0, 0)],
            dp[(0, 1)],
            dp[(1, 0)],
            dp[(1, 1)],
            di[0],
            di[1],
        ];
    };
    integrate_dense(
        rhs,
        0.0,
        [xi[0], xi[1], 1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        t_end,
        icfg,
        2,
    )
}

/// Adjoint sweep from `t` down to `s_end`: `G(tau) = V(t) V(tau)^{-1}` and
/// `q(tau) = int_tau^t G phi`, so `q(s) = eta(t, s, xi)`.
fn adjoint_sweep(
    sys: &SystemDef,
    fwd: &Trajectory<8>,
    t: f64,
    s_end: f64,
    icfg: &IntegratorConfig,
) -> Result<Trajectory<6>> {
    let rhs = |tau: f64, y: &[f64; 6], dy: &mut [f64; 6]| {
        let z = fwd.eval(tau);
        let x = Vec2::new(z[0], z[1]);
        let g = Mat2::new(y[0], y[1], y[2], y[3]);
        let dg = -g * sys.psi_jac(&x);
        let dq = -(g * sys.phi(tau, &x));
        *dy = [dg[(0, 0)], dg[(0, 1)], dg[(1, 0)], dg[(1, 1)], dq[0], dq[1]];
    };
    integrate_dense(rhs, t, [1.0, 0.0, 0.0, 1.0, 0.0, 0.0], s_end, icfg, 4)
}

/// `eta(t, s, xi)`: the solution of the inhomogeneous linearization along
/// `Omega(., 0, xi)` vanishing at `s`.
pub fn compute_eta(
    sys: &SystemDef,
    t: f64,
    s: f64,
    xi: &Vec2,
    icfg: &IntegratorConfig,
) -> Result<Vec2> {
    if t == s {
        return Ok(Vec2::zeros());
    }
    let fwd = forward_profile(sys, xi, t.max(s).max(0.0), icfg)?;
    if t > s {
        let back = adjoint_sweep(sys, &fwd, t, s, icfg)?;
        let e = back.end();
        Ok(Vec2::new(e[4], e[5]))
    } else {
        // eta(t, s) = -V(t) int_t^s Phi
        let zt = fwd.eval(t);
        let zs = fwd.eval(s);
        let p = Mat2::new(zt[2], zt[3], zt[4], zt[5]);
        let v = p
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular variational matrix".into()))?;
        Ok(-(v * Vec2::new(zs[6] - zt[6], zs[7] - zt[7])))
    }
}

/// All `eta(T, s, xi)` and `eta(0, s, xi)` for one `xi` and every `s` in
/// `[0, T]`, from one forward pass and one adjoint sweep.
pub struct EtaProfile {
    fwd: Trajectory<8>,
    back: Trajectory<6>,
}

impl EtaProfile {
    pub fn new(sys: &SystemDef, xi: &Vec2, period: f64, icfg: &IntegratorConfig) -> Result<Self> {
        let fwd = forward_profile(sys, xi, period, icfg)?;
        let back = adjoint_sweep(sys, &fwd, period, 0.0, icfg)?;
        Ok(EtaProfile { fwd, back })
    }

    pub fn eta_t(&self, s: f64) -> Vec2 {
        let q = self.back.eval(s);
        Vec2::new(q[4], q[5])
    }

    pub fn eta_0(&self, s: f64) -> Vec2 {
        let z = self.fwd.eval(s);
        -Vec2::new(z[6], z[7])
    }

    /// `eta(T, s, xi) - eta(0, s, xi)`.
    pub fn a2_field(&self, s: f64) -> Vec2 {
        self.eta_t(s) - self.eta_0(s)
    }

    /// `eta(0, T, xi) = -int_0^T Phi`.
    pub fn eta_0_t(&self) -> Vec2 {
        let z = self.fwd.end();
        -Vec2::new(z[6], z[7])
    }
}

/// `eta(0, T, xi)` alone (one forward pass).
pub fn eta_0_t(sys: &SystemDef, xi: &Vec2, period: f64, icfg: &IntegratorConfig) -> Result<Vec2> {
    let rhs = |t: f64, y: &[f64; 8], dy: &mut [f64; 8]| {
        let x = Vec2::new(y[0], y[1]);
        let p = Mat2::new(y[2], y[3], y[4], y[5]);
        let dp = -p * sys.psi_jac(&x);
        let di = p * sys.phi(t, &x);
        let f = sys.psi(&x);
        *dy = [
            f[0],
            f[1],
            dp[(0, 0)],
            dp[(0, 1)],
            dp[(1, 0)],
            dp[(1, 1)],
            di[0],
            di[1],
        ];
    };
    let z = integrate(
        rhs,
        0.0,
        [xi[0], xi[1], 1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        period,
        icfg,
        2,
    )?;
    Ok(-Vec2::new(z[6], z[7]))
}

/// Which path(s) `check` evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Via {
    Direct,
    Theorem3,
    Both,
}

impl std::str::FromStr for Via {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "direct" => Ok(Via::Direct),
            "theorem3" => Ok(Via::Theorem3),
            "both" => Ok(Via::Both),
            other => Err(format!("unknown path `{other}` (direct|theorem3|both)")),
        }
    }
}

/// Grid sizes and options for the condition checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConditionsConfig {
    pub n_s: usize,
    pub n_xi: usize,
    pub n_theta: usize,
    pub via: Via,
    /// Recompute K0 on the doubled grid and report the relative change.
    pub monitor: bool,
    /// Components of `f(theta)` as expressions in `t` (read as theta).
    pub f: Option<[String; 2]>,
    /// Relative cancellation level below which the (A2) field counts as zero.
    pub degeneracy_tol: f64,
}

impl Default for ConditionsConfig {
    fn default() -> Self {
        ConditionsConfig {
            n_s: 64,
            n_xi: 256,
            n_theta: 256,
            via: Via::Both,
            monitor: true,
            f: None,
            degeneracy_tol: 1e-10,
        }
    }
}

/// Grid-doubling convergence check of K0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Refinement {
    pub k0_refined: f64,
    pub rel_change: f64,
    pub converged: bool,
}

/// Direct evaluation of (A2) and (A3).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectReport {
    pub k0: f64,
    /// `(s, theta)` where K0 is attained.
    pub k0_argmin: (f64, f64),
    /// Smallest `|eta(T,s) - eta(0,s)| / (|eta(T,s)| + |eta(0,s)|)` on the grid.
    pub k0_rel: f64,
    pub deg_a3: Option<i64>,
    pub a2_pass: bool,
    /// None when the degree could not be decided.
    pub a3_pass: Option<bool>,
    pub a3_note: Option<String>,
    pub n_s: usize,
    pub n_xi: usize,
    pub refinement: Option<Refinement>,
}

/// Evaluation of (B2) and (B3) along the cycle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theorem3Report {
    pub b2_min: f64,
    pub b2_max: f64,
    pub b2_argmin: (f64, f64),
    pub b2_min_abs: f64,
    pub b2_constant_sign: bool,
    pub deg_b3: i64,
    pub deg_b3_sign_change: Option<i64>,
    pub b2_pass: bool,
    pub b3_pass: bool,
    pub n_s: usize,
    pub n_theta: usize,
    /// `<F(s, theta), f(theta)>` on the grid, row-major in `s`.
    #[serde(skip)]
    pub grid: Vec<(f64, f64, f64)>,
}

impl Theorem3Report {
    /// CSV `s,theta,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,theta,value\n");
        for (s, th, v) in &self.grid {
            out.push_str(&format!("{s:.17e},{th:.17e},{v:.17e}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionsReport {
    pub period: f64,
    pub direct: Option<DirectReport>,
    pub theorem3: Option<Theorem3Report>,
    /// When both paths ran: B2 and B3 passing implies A2 and A3 passing.
    pub implication_holds: Option<bool>,
}

impl ConditionsReport {
    /// True when every evaluated condition passes.
    pub fn all_pass(&self) -> bool {
        let d = self
            .direct
            .as_ref()
            .map_or(true, |d| d.a2_pass && d.a3_pass == Some(true));
        let t = self
            .theorem3
            .as_ref()
            .map_or(true, |t| t.b2_pass && t.b3_pass);
        d && t
    }
}

/// The auxiliary function `f(theta)` of the Floquet reformulation.
#[derive(Clone)]
pub enum FChoice {
    /// Unit vector from the centroid of the cycle to `x0(theta)`.
    Radial {
        centroid: Vec2,
    },
    Exprs(Box<[CompiledExpr; 2]>),
}

impl FChoice {
    pub fn for_cycle(
        lc: &LimitCycle,
        exprs: Option<&[String; 2]>,
        sys: &SystemDef,
    ) -> Result<Self> {
        match exprs {
            None => Ok(FChoice::Radial {
                centroid: lc.centroid(),
            }),
            Some([a, b]) => {
                let names: Vec<&str> = sys.params.keys().map(String::as_str).collect();
                let params = sys.params.iter().map(|(k, v)| (k.clone(), *v)).collect();
                let comp = |field: &str, src: &str| -> Result<CompiledExpr> {
                    let e: Expr =
                        crate::expr::parse_with(src, &names).map_err(|source| Error::Parse {
                            field: field.into(),
                            source,
                        })?;
                    CompiledExpr::new(&e, &params).map_err(Error::Config)
                };
                Ok(FChoice::Exprs(Box::new([comp("f1", a)?, comp("f2", b)?])))
            }
        }
    }

    pub fn eval(&self, lc: &LimitCycle, theta: f64) -> Vec2 {
        match self {
            FChoice::Radial { centroid } => (lc.x0(theta) - centroid).normalize(),
            FChoice::Exprs(e) => Vec2::new(e[0].eval(theta, 0.0, 0.0), e[1].eval(theta, 0.0, 0.0)),
        }
    }
}

/// Integrand data of the Floquet reformulation at phase `tau`: the tangent,
/// and the solution `y` as a unit direction plus log-length (shifted by
/// `log_scale`).
fn frame(sys: &SystemDef, lc: &LimitCycle, tau: f64, log_scale: f64) -> (Vec2, Vec2, f64, Vec2) {
    let x = lc.x0(tau);
    let dx = sys.psi(&x);
    let (yh, ell) = lc.floquet().eval(tau);
    (x, dx, ell + log_scale, yh)
}

/// `(x0'(tau) y(tau))^{-1} phi(tau - theta, x0(tau))`, by Cramer's rule with
/// the log-length of `y` kept separate.
fn lemma3_integrand(
    sys: &SystemDef,
    lc: &LimitCycle,
    tau: f64,
    theta: f64,
    log_scale: f64,
) -> Vec2 {
    let (x, dx, ell, yh) = frame(sys, lc, tau, log_scale);
    let p = sys.phi((tau - theta).rem_euclid(sys.t1), &x);
    let w = det2(&dx, &yh);
    Vec2::new(det2(&p, &yh) / w, (-ell).exp() * det2(&dx, &p) / w)
}

/// `F(s, theta) = int_{s-T+theta}^{s+theta} (x0' y)^{-1} phi(tau - theta, x0(tau)) dtau`.
pub fn lemma3_f(sys: &SystemDef, lc: &LimitCycle, period: f64, s: f64, theta: f64) -> Vec2 {
    quad::integrate(
        |tau| lemma3_integrand(sys, lc, tau, theta, 0.0),
        s - period + theta,
        s + theta,
        1e-12,
        0.0,
    )
}

/// `N(theta) = (y(theta)^top  x0'(theta)^perp) f(theta)`.
pub fn n_field(sys: &SystemDef, lc: &LimitCycle, f: &FChoice, theta: f64, log_scale: f64) -> Vec2 {
    let (_, dx, ell, yh) = frame(sys, lc, theta, log_scale);
    let fv = f.eval(lc, theta);
    fv[0] * ell.exp() * top(&yh) + fv[1] * perp(&dx)
}

/// `det(x0'(theta) y(theta))`.
pub fn wronskian(sys: &SystemDef, lc: &LimitCycle, theta: f64) -> f64 {
    let (_, dx, ell, yh) = frame(sys, lc, theta, 0.0);
    ell.exp() * det2(&dx, &yh)
}

fn check_wronskian(sys: &SystemDef, lc: &LimitCycle) -> Result<()> {
    for i in 0..1000 {
        let th = lc.t0 * i as f64 / 1000.0;
        let (_, dx, _, yh) = frame(sys, lc, th, 0.0);
        if det2(&dx, &yh).abs() < 1e-10 * dx.norm() {
            return Err(Error::Numeric(format!(
                "Floquet solution is parallel to the tangent at theta = {th}"
            )));
        }
    }
    Ok(())
}

fn grid(n: usize, span: f64) -> Vec<f64> {
    (0..n).map(|i| span * i as f64 / n as f64).collect()
}

/// (B2)/(B3) on an `n_s x n_theta` grid; `y_scale` multiplies the Floquet
/// solution (the verdicts must not depend on it).
pub fn theorem3_check(
    sys: &SystemDef,
    lc: &LimitCycle,
    period: f64,
    f: &FChoice,
    n_s: usize,
    n_theta: usize,
    y_scale: f64,
) -> Result<Theorem3Report> {
    check_wronskian(sys, lc)?;
    let log_scale = y_scale.ln();
    let s_grid = grid(n_s, period);
    let panel_width = period / n_s as f64;
    let sub = ((panel_width / 0.1).ceil() as usize).max(1);
    let rows: Vec<Vec<(f64, f64, f64)>> = grid(n_theta, lc.t0)
        .into_par_iter()
        .map(|theta| {
            // panels aligned with the s grid: [theta - T + k*T/n_s, ...]
            let h = panel_width / sub as f64;
            let start = theta - period;
            let npan = 2 * n_s * sub;
            let panels: Vec<Vec2> = (0..npan)
                .map(|k| {
                    let a = start + k as f64 * h;
                    quad::composite(
                        &|tau| lemma3_integrand(sys, lc, tau, theta, log_scale),
                        a,
                        a + h,
                        1,
                    )
                })
                .collect();
            let fv = f.eval(lc, theta);
            s_grid
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    let fsum: Vec2 = panels[i * sub..(i + n_s) * sub].iter().sum();
                    (s, theta, fsum.dot(&fv))
                })
                .collect()
        })
        .collect();
    let mut cells: Vec<(f64, f64, f64)> = Vec::with_capacity(n_s * n_theta);
    for i in 0..n_s {
        for row in &rows {
            cells.push(row[i]);
        }
    }
    let (mut mn, mut mx, mut arg, mut min_abs) =
        (f64::INFINITY, f64::NEG_INFINITY, (0.0, 0.0), f64::INFINITY);
    for &(s, th, v) in &cells {
        if v < mn {
            mn = v;
            arg = (s, th);
        }
        mx = mx.max(v);
        min_abs = min_abs.min(v.abs());
    }
    let constant_sign = (mn > 0.0 && mx > 0.0) || (mn < 0.0 && mx < 0.0);
    let g = |th: f64| n_field(sys, lc, f, th, log_scale);
    let deg_b3 = circle_map_degree(g, lc.t0, lc.ccw, n_theta)?;
    let deg_sc = sign_change_degree(g, lc.t0, lc.ccw, 4 * n_theta).ok();
    if let Some(d) = deg_sc {
        if d != deg_b3 {
            log::warn!("sign-change degree {d} disagrees with winding degree {deg_b3}");
        }
    }
    Ok(Theorem3Report {
        b2_min: mn,
        b2_max: mx,
        b2_argmin: arg,
        b2_min_abs: min_abs,
        b2_constant_sign: constant_sign,
        deg_b3,
        deg_b3_sign_change: deg_sc,
        b2_pass: constant_sign && min_abs > 0.0,
        b3_pass: deg_b3 != 1,
        n_s,
        n_theta,
        grid: cells,
    })
}

fn k0_on_grid(
    sys: &SystemDef,
    lc: &LimitCycle,
    period: f64,
    n_s: usize,
    n_xi: usize,
    icfg: &IntegratorConfig,
) -> Result<(f64, (f64, f64), f64)> {
    let thetas = grid(n_xi, lc.t0);
    let s_grid: Vec<f64> = (0..=n_s).map(|i| period * i as f64 / n_s as f64).collect();
    let per_xi: Vec<(f64, f64, f64, f64)> = thetas
        .par_iter()
        .map(|&th| -> Result<_> {
            let prof = EtaProfile::new(sys, &lc.x0(th), period, icfg)?;
            let (mut best, mut arg, mut rel) = (f64::INFINITY, 0.0, f64::INFINITY);
            for &s in &s_grid {
                let (et, e0) = (prof.eta_t(s), prof.eta_0(s));
                let v = (et - e0).norm();
                let r = v / (et.norm() + e0.norm());
                rel = rel.min(if r.is_nan() { 0.0 } else { r });
                if v < best {
                    best = v;
                    arg = s;
                }
            }
            Ok((best, arg, th, rel))
        })
        .collect::<Result<_>>()?;
    let mut k0 = f64::INFINITY;
    let mut argmin = (0.0, 0.0);
    for &(v, s, th, _) in &per_xi {
        if v < k0 {
            k0 = v;
            argmin = (s, th);
        }
    }
    let rel = per_xi.iter().map(|p| p.3).fold(f64::INFINITY, f64::min);
    Ok((k0, argmin, rel))
}

/// (A2) via K0 on the `s x boundary` grid and (A3) via the winding of
/// `xi -> eta(0, T, xi)` along the cycle.
pub fn check_a2_a3(
    sys: &SystemDef,
    lc: &LimitCycle,
    period: f64,
    cfg: &ConditionsConfig,
    icfg: &IntegratorConfig,
) -> Result<DirectReport> {
    let (k0, argmin, k0_rel) = k0_on_grid(sys, lc, period, cfg.n_s, cfg.n_xi, icfg)?;
    // the difference must survive cancellation between its two terms
    let a2_pass = k0 > 0.0 && k0_rel > cfg.degeneracy_tol && !sys.phi_is_zero();
    let refinement = if cfg.monitor {
        let (k0r, _, _) = k0_on_grid(sys, lc, period, 2 * cfg.n_s, 2 * cfg.n_xi, icfg)?;
        let rel = if k0r > 0.0 {
            (k0 - k0r).abs() / k0r
        } else if k0 == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Some(Refinement {
            k0_refined: k0r,
            rel_change: rel,
            converged: rel < 0.05,
        })
    } else {
        None
    };
    // boundary traversed counterclockwise
    let ccw = lc.ccw;
    let t0 = lc.t0;
    let bf = BoundaryField::new(
        |s| {
            let th = if ccw { s * t0 } else { (1.0 - s) * t0 };
            eta_0_t(sys, &lc.x0(th), period, icfg).unwrap_or(Vec2::new(f64::NAN, f64::NAN))
        },
        cfg.n_xi,
    );
    let (deg_a3, a3_note) = if sys.phi_is_zero() {
        (None, Some("perturbation vanishes identically".to_string()))
    } else {
        match winding_degree(&bf) {
            Ok(w) => (Some(w.degree), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    Ok(DirectReport {
        k0,
        k0_argmin: argmin,
        k0_rel,
        deg_a3,
        a2_pass,
        a3_pass: deg_a3.map(|d| d != 1),
        a3_note,
        n_s: cfg.n_s,
        n_xi: cfg.n_xi,
        refinement,
    })
}

/// Run the requested paths and cross-check Theorem 3's implication.
pub fn check_conditions(
    sys: &SystemDef,
    lc: &LimitCycle,
    period: f64,
    cfg: &ConditionsConfig,
    icfg: &IntegratorConfig,
) -> Result<ConditionsReport> {
    let direct = match cfg.via {
        Via::Direct | Via::Both => Some(check_a2_a3(sys, lc, period, cfg, icfg)?),
        Via::Theorem3 => None,
    };
    let theorem3 = match cfg.via {
        Via::Theorem3 | Via::Both => {
            let f = FChoice::for_cycle(lc, cfg.f.as_ref(), sys)?;
            Some(theorem3_check(
                sys,
                lc,
                period,
                &f,
                cfg.n_s,
                cfg.n_theta,
                1.0,
            )?)
        }
        Via::Direct => None,
    };
    let implication_holds = match (&direct, &theorem3) {
        (Some(d), Some(t)) => {
            Some(!(t.b2_pass && t.b3_pass) || (d.a2_pass && d.a3_pass == Some(true)))
        }
        _ => None,
    };
    if implication_holds == Some(false) {
        log::warn!("(B2)/(B3) pass but (A2)/(A3) do not; grids may be too coarse");
    }
    Ok(ConditionsReport {
        period,
        direct,
        theorem3,
        implication_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn phi_without_flow_is_phi() {
        let sys = SystemDef::new(
            ["0", "0"],
            ["sin(t) + x1", "x2*cos(t)"],
            BTreeMap::new(),
            std::f64::consts::TAU,
        )
        .unwrap();
        let icfg = IntegratorConfig::default();
        let xi = Vec2::new(0.3, -0.2);
        for t in [0.0, 0.7, 2.0] {
            let p = compute_phi(&sys, &xi, t, &icfg).unwrap();
            assert!((p - sys.phi(t, &xi)).norm() < 1e-12);
        }
    }

    #[test]
    fn eta_vanishes_on_the_diagonal_and_averages_without_flow() {
        let sys = SystemDef::new(
            ["0", "0"],
            ["sin(t)^2 + x1", "x2*cos(t)"],
            BTreeMap::new(),
            std::f64::consts::TAU,
        )
        .unwrap();
        let icfg = IntegratorConfig::default();
        let xi = Vec2::new(0.3, -0.2);
        assert_eq!(
            compute_eta(&sys, 1.0, 1.0, &xi, &icfg).unwrap(),
            Vec2::zeros()
        );
        let t = std::f64::consts::TAU;
        let prof = EtaProfile::new(&sys, &xi, t, &icfg).unwrap();
        let avg = Vec2::new(std::f64::consts::PI + 0.3 * t, 0.0);
        for s in [0.0, 1.0, 4.0] {
            assert!((prof.a2_field(s) - avg).norm() < 1e-8);
        }
    }
}
