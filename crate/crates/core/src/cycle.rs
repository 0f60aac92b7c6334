//! Limit cycle location, monodromy, Floquet companion solution and the
//! commensurability check between the cycle and forcing periods.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::PeriodicHermite;
use crate::ode::{flow, flow_variational, integrate_dense, trajectory, IntegratorConfig};
use crate::system::{Mat2, SystemDef, Vec2};

/// Knobs for [`find_cycle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CycleConfig {
    /// Number of samples along one period.
    pub samples: usize,
    /// Longest time to wait for a section crossing.
    pub max_return_time: f64,
    pub max_newton: usize,
    /// Acceptance threshold for `|Omega(T0, 0, xi0) - xi0|`.
    pub closure_tol: f64,
    /// `(A0)` fails when the nontrivial multiplier is this close to +-1.
    pub a0_band: f64,
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig {
            samples: 2048,
            max_return_time: 1000.0,
            max_newton: 40,
            closure_tol: 1e-9,
            a0_band: 1e-6,
        }
    }
}

/// A refined periodic orbit of the unperturbed system with its Floquet data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitCycle {
    pub xi0: Vec2,
    pub t0: f64,
    pub monodromy: Mat2,
    /// Nontrivial multiplier (the determinant of the monodromy).
    pub mu: f64,
    pub log_mu: f64,
    pub newton_steps: usize,
    /// True when the orbit runs counterclockwise.
    pub ccw: bool,
    pub samples_x: Vec<Vec2>,
    pub samples_dx: Vec<Vec2>,
    x_interp: [PeriodicHermite; 2],
    floquet: FloquetData,
}

/// Independent solution `y` of the linearization along the cycle, stored as
/// a unit direction and a log-length so that long Floquet extensions neither
/// overflow nor underflow.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FloquetData {
    pub mu: f64,
    pub log_mu: f64,
    pub y0: Vec2,
    dir: [PeriodicHermite; 2],
    /// `log|y| - t*log_mu/T0`, which is periodic.
    ell: PeriodicHermite,
    period: f64,
}

impl FloquetData {
    /// Unit direction and log-length of `y(t)` for any real `t`.
    pub fn eval(&self, t: f64) -> (Vec2, f64) {
        let d = Vec2::new(self.dir[0].eval(t), self.dir[1].eval(t)).normalize();
        let l = self.ell.eval(t) + t * self.log_mu / self.period;
        (d, l)
    }

    /// `y(t)` itself; may over- or underflow far from `[0, T0]`.
    pub fn y(&self, t: f64) -> Vec2 {
        let (d, l) = self.eval(t);
        d * l.exp()
    }
}

/// Header written alongside the cycle sample CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleSummary {
    pub t0: f64,
    pub mu: f64,
    pub xi0: [f64; 2],
    pub newton_steps: usize,
    pub counterclockwise: bool,
    pub samples: usize,
}

impl LimitCycle {
    pub fn n(&self) -> usize {
        self.samples_x.len()
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.t0 * i as f64 / self.n() as f64
    }

    /// Point of the cycle at phase `theta` (any real, periodic).
    pub fn x0(&self, theta: f64) -> Vec2 {
        Vec2::new(self.x_interp[0].eval(theta), self.x_interp[1].eval(theta))
    }

    /// Derivative of the interpolant at `theta`.
    pub fn x0_deriv(&self, theta: f64) -> Vec2 {
        Vec2::new(
            self.x_interp[0].eval_with_deriv(theta).1,
            self.x_interp[1].eval_with_deriv(theta).1,
        )
    }

    pub fn floquet(&self) -> &FloquetData {
        &self.floquet
    }

    /// `(A0)` status under the configured band.
    pub fn a0_holds(&self, band: f64) -> bool {
        (self.mu - 1.0).abs() > band && (self.mu + 1.0).abs() > band
    }

    pub fn centroid(&self) -> Vec2 {
        self.samples_x.iter().sum::<Vec2>() / self.n() as f64
    }

    pub fn summary(&self) -> CycleSummary {
        CycleSummary {
            t0: self.t0,
            mu: self.mu,
            xi0: [self.xi0[0], self.xi0[1]],
            newton_steps: self.newton_steps,
            counterclockwise: self.ccw,
            samples: self.n(),
        }
    }

    /// CSV `theta,x1,x2,dx1,dx2`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("theta,x1,x2,dx1,dx2\n");
        for i in 0..self.n() {
            let (x, d) = (self.samples_x[i], self.samples_dx[i]);
            s.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                self.theta(i),
                x[0],
                x[1],
                d[0],
                d[1]
            ));
        }
        s
    }
}

fn section_value(x: &Vec2, origin: &Vec2, n: &Vec2) -> f64 {
    (x - origin).dot(n)
}

/// First upward crossing of the section after leaving `xi`.
fn first_return(
    sys: &SystemDef,
    xi: &Vec2,
    origin: &Vec2,
    n: &Vec2,
    budget: f64,
    icfg: &IntegratorConfig,
) -> Result<(Vec2, f64)> {
    let mut t = 0.0;
    let mut x = *xi;
    let chunk = 8.0;
    while t < budget {
        let traj = trajectory(sys, 0.0, &x, t, t + chunk, icfg)?;
        for seg in &traj.segments {
            let a = seg.start();
            let b = seg.end();
            let ga = section_value(&Vec2::new(a[0], a[1]), origin, n);
            let gb = section_value(&Vec2::new(b[0], b[1]), origin, n);
            if ga < 0.0 && gb >= 0.0 {
                let (mut lo, mut hi) = (seg.t0, seg.t1);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    let y = seg.eval(mid);
                    if section_value(&Vec2::new(y[0], y[1]), origin, n) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * hi.abs().max(1.0) {
                        break;
                    }
                }
                let tc = 0.5 * (lo + hi);
                // land exactly with a short integration from the step start
                let xc = flow(sys, &Vec2::new(a[0], a[1]), seg.t0, tc, icfg)?;
                return Ok((xc, tc));
            }
        }
        let e = traj.end();
        x = Vec2::new(e[0], e[1]);
        t += chunk;
    }
    Err(Error::Numeric(format!(
        "no section crossing within time {budget}"
    )))
}

fn bordered_solve(a: &Matrix3<f64>, rhs: &Vector3<f64>) -> Vector3<f64> {
    if let Some(sol) = a.lu().solve(rhs) {
        if sol.iter().all(|v| v.is_finite())
            && (a * sol - rhs).norm() <= 1e-8 * rhs.norm().max(1e-300)
        {
            return sol;
        }
    }
    // minimal-norm least-squares step through the pseudo-inverse
    let svd = a.svd(true, true);
    let tol = 1e-10 * svd.singular_values.max();
    svd.solve(rhs, tol).unwrap_or_else(|_| Vector3::zeros())
}

/// Locate the periodic orbit through the Poincaré section at `seed`.
pub fn find_cycle(
    sys: &SystemDef,
    seed: &Vec2,
    section_normal: Option<Vec2>,
    cfg: &CycleConfig,
    icfg: &IntegratorConfig,
) -> Result<LimitCycle> {
    let (xi0, t0, steps) = refine_orbit(sys, seed, section_normal, cfg, icfg)?;
    build_cycle(sys, xi0, t0, steps, cfg, icfg)
}

fn refine_orbit(
    sys: &SystemDef,
    seed: &Vec2,
    section_normal: Option<Vec2>,
    cfg: &CycleConfig,
    icfg: &IntegratorConfig,
) -> Result<(Vec2, f64, usize)> {
    let f_seed = sys.psi(seed);
    let n = match section_normal {
        Some(n) if n.norm() > 0.0 => n.normalize(),
        Some(_) => return Err(Error::Config("section normal must be nonzero".into())),
        None => {
            if f_seed.norm() < 1e-12 {
                return Err(Error::Numeric(
                    "seed is an equilibrium; no section through it".into(),
                ));
            }
            f_seed.normalize()
        }
    };
    let origin = *seed;
    let (mut xi, mut t) = first_return(sys, seed, &origin, &n, cfg.max_return_time, icfg)?;
    let scale = xi.norm().max(1.0);
    let mut steps = 0;
    let residual = |xi: &Vec2, t: f64| -> Result<Vector3<f64>> {
        let x = flow(sys, xi, 0.0, t, icfg)?;
        let r = x - xi;
        Ok(Vector3::new(r[0], r[1], section_value(xi, &origin, &n)))
    };
    let mut r = residual(&xi, t)?;
    let target = 1e-12 * scale;
    while r.norm() > target {
        if steps >= cfg.max_newton {
            break;
        }
        steps += 1;
        let fp = flow_variational(sys, &xi, 0.0, t, icfg)?;
        let v = fp.v.expect("variational");
        let fx = sys.psi(&fp.x);
        let a = Matrix3::new(
            v[(0, 0)] - 1.0,
            v[(0, 1)],
            fx[0],
            v[(1, 0)],
            v[(1, 1)] - 1.0,
            fx[1],
            n[0],
            n[1],
            0.0,
        );
        let delta = bordered_solve(&a, &(-r));
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = xi + lambda * Vec2::new(delta[0], delta[1]);
            let tc = t + lambda * delta[2];
            if tc > 0.0 {
                if let Ok(rc) = residual(&cand, tc) {
                    if rc.norm() < r.norm() {
                        xi = cand;
                        t = tc;
                        r = rc;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            // fall back on one application of the return map
            let (xr, tr) = first_return(sys, &xi, &origin, &n, cfg.max_return_time, icfg)?;
            let rc = residual(&xr, tr)?;
            if rc.norm() >= r.norm() {
                break;
            }
            xi = xr;
            t = tr;
            r = rc;
        }
    }
    if r.norm() > cfg.closure_tol * scale {
        return Err(Error::Numeric(format!(
            "cycle Newton iteration stagnated with residual {:e}",
            r.norm()
        )));
    }
    // make sure T is the first return, not a multiple
    let (_, tr) = first_return(sys, &xi, &origin, &n, t * 1.5, icfg).unwrap_or((xi, t));
    if tr < t * (1.0 - 1e-6) {
        log::warn!("refined period {t} is not the first return ({tr}); using the latter");
        t = tr;
    }
    for m in 2..=5 {
        let xm = flow(sys, &xi, 0.0, t / m as f64, icfg)?;
        if (xm - xi).norm() <= 1e-6 * scale {
            log::warn!("orbit closes already at T/{m}; reducing the period");
            t /= m as f64;
            break;
        }
    }
    Ok((xi, t, steps))
}

fn build_cycle(
    sys: &SystemDef,
    xi0: Vec2,
    t0: f64,
    newton_steps: usize,
    cfg: &CycleConfig,
    icfg: &IntegratorConfig,
) -> Result<LimitCycle> {
    let fp = flow_variational(sys, &xi0, 0.0, t0, icfg)?;
    let monodromy = fp.v.expect("variational");
    let log_mu = fp.logdet.expect("logdet");
    let mu = log_mu.exp();
    let f0 = sys.psi(&xi0);
    let eig_res = (monodromy * f0 - f0).norm();
    if eig_res > 1e-6 * f0.norm() {
        log::warn!("monodromy does not fix psi(xi0): residual {eig_res:e}");
    }
    if !((mu - 1.0).abs() > cfg.a0_band && (mu + 1.0).abs() > cfg.a0_band) {
        return Err(Error::HypothesisA0 { mu });
    }

    let n = cfg.samples.max(8);
    let traj = trajectory(sys, 0.0, &xi0, 0.0, t0, icfg)?;
    let samples_x: Vec<Vec2> = (0..n)
        .map(|i| {
            let y = traj.eval(t0 * i as f64 / n as f64);
            Vec2::new(y[0], y[1])
        })
        .collect();
    let samples_dx: Vec<Vec2> = samples_x.iter().map(|x| sys.psi(x)).collect();
    let x_interp = [0, 1].map(|k| {
        PeriodicHermite::new(
            t0,
            samples_x.iter().map(|x| x[k]).collect(),
            samples_dx.iter().map(|d| d[k]).collect(),
        )
    });
    let area: f64 = (0..n)
        .map(|i| {
            let a = samples_x[i];
            let b = samples_x[(i + 1) % n];
            a[0] * b[1] - a[1] * b[0]
        })
        .sum();
    let floquet = floquet_companion(sys, &xi0, t0, &monodromy, log_mu, n, icfg)?;
    Ok(LimitCycle {
        xi0,
        t0,
        monodromy,
        mu,
        log_mu,
        newton_steps,
        ccw: area > 0.0,
        samples_x,
        samples_dx,
        x_interp,
        floquet,
    })
}

/// Solution of the linearization along the cycle independent of the
/// tangent, with `y(0)` the unit eigenvector of the monodromy for `mu`
/// oriented so that `det(x0'(0), y(0)) > 0`.
pub fn floquet_companion(
    sys: &SystemDef,
    xi0: &Vec2,
    t0: f64,
    monodromy: &Mat2,
    log_mu: f64,
    samples: usize,
    icfg: &IntegratorConfig,
) -> Result<FloquetData> {
    let mu = log_mu.exp();
    let f0 = sys.psi(xi0);
    // (M - I) annihilates the tangent, so its range is the mu-eigenspace
    let b = monodromy - Mat2::identity();
    let c0 = b.column(0).into_owned();
    let c1 = b.column(1).into_owned();
    let mut y0 = if c0.norm() >= c1.norm() { c0 } else { c1 };
    if y0.norm() < 1e-12 {
        return Err(Error::HypothesisA0 { mu });
    }
    y0 = y0.normalize();
    if f0[0] * y0[1] - f0[1] * y0[0] < 0.0 {
        y0 = -y0;
    }
    // the cycle attracts forward in time while the y-direction contracts, so
    // x is integrated forward and (y^, l) backward along the stored orbit
    let orbit = trajectory(sys, 0.0, xi0, 0.0, t0, icfg)?;
    let rhs = |t: f64, s: &[f64; 3], ds: &mut [f64; 3]| {
        let o = orbit.eval(t);
        let x = Vec2::new(o[0], o[1]);
        let yh = Vec2::new(s[0], s[1]);
        let ay = sys.psi_jac(&x) * yh;
        let rate = yh.dot(&ay);
        let dy = ay - rate * yh;
        *ds = [dy[0], dy[1], rate];
    };
    let traj = integrate_dense(rhs, t0, [y0[0], y0[1], log_mu], 0.0, icfg, 2)?;
    let mut dir_v = [Vec::with_capacity(samples), Vec::with_capacity(samples)];
    let mut dir_d = [Vec::with_capacity(samples), Vec::with_capacity(samples)];
    let mut ell_v = Vec::with_capacity(samples);
    let mut ell_d = Vec::with_capacity(samples);
    let drift = log_mu / t0;
    for i in 0..samples {
        let th = t0 * i as f64 / samples as f64;
        let s = traj.eval(th);
        let mut ds = [0.0; 3];
        let r = rhs;
        r(th, &s, &mut ds);
        for k in 0..2 {
            dir_v[k].push(s[k]);
            dir_d[k].push(ds[k]);
        }
        ell_v.push(s[2] - th * drift);
        ell_d.push(ds[2] - drift);
    }
    let end = traj.end();
    let closure = (Vec2::new(end[0], end[1]) - y0).norm() + end[2].abs();
    if closure > 1e-6 {
        log::warn!("Floquet companion closes with defect {closure:e}");
    }
    let [dv0, dv1] = dir_v;
    let [dd0, dd1] = dir_d;
    Ok(FloquetData {
        mu,
        log_mu,
        y0,
        dir: [
            PeriodicHermite::new(t0, dv0, dd0),
            PeriodicHermite::new(t0, dv1, dd1),
        ],
        ell: PeriodicHermite::new(t0, ell_v, ell_d),
        period: t0,
    })
}

/// Result of the commensurability check between `T0` and `T1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A1Check {
    pub ratio: f64,
    /// `(l, k)` in lowest terms with `T0/T1 ~ l/k`, when one exists.
    pub lk: Option<(u64, u64)>,
    /// Common period `k*l*T0`.
    pub period: Option<f64>,
    /// Whether `l` and `k` are both prime (the literal reading of (A1)).
    pub both_prime: bool,
}

impl A1Check {
    pub fn is_rational(&self) -> bool {
        self.lk.is_some()
    }
}

fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

/// Smallest `k <= 1000` with `|T0/T1 - l/k| <= tol`.
pub fn check_a1(t0: f64, t1: f64, tol: f64) -> A1Check {
    let r = t0 / t1;
    for k in 1..=1000u64 {
        let l = (r * k as f64).round();
        if l >= 1.0 && (r - l / k as f64).abs() <= tol {
            let l = l as u64;
            return A1Check {
                ratio: r,
                lk: Some((l, k)),
                period: Some((k * l) as f64 * t0),
                both_prime: is_prime(l) && is_prime(k),
            };
        }
    }
    A1Check {
        ratio: r,
        lk: None,
        period: None,
        both_prime: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::example_system;
    use std::f64::consts::PI;

    #[test]
    fn a1_examples() {
        let c = check_a1(2.0 * PI, 4.0 * PI, 1e-9);
        assert_eq!(c.lk, Some((1, 2)));
        assert!((c.period.unwrap() - 4.0 * PI).abs() < 1e-12);
        assert!(!c.both_prime);
        assert_eq!(check_a1(3.0, 3.0, 1e-9).lk, Some((1, 1)));
        let irr = check_a1(2.0 * PI, 2.0 * PI * 2f64.sqrt(), 1e-9);
        assert!(!irr.is_rational());
        let c = check_a1(2.0, 3.0, 1e-12);
        assert_eq!(c.lk, Some((2, 3)));
        assert!(c.both_prime);
    }

    #[test]
    fn example_cycle_from_seed_on_cycle() {
        let sys = example_system(0.0);
        let lc = find_cycle(
            &sys,
            &Vec2::new(0.0, 1.0),
            None,
            &CycleConfig::default(),
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert!(lc.newton_steps <= 2);
        assert!((lc.t0 - 2.0 * PI).abs() < 1e-8);
        assert!(!lc.ccw);
        let y = lc.floquet();
        assert!((y.y(lc.t0) - lc.mu * y.y(0.0)).norm() < 1e-8);
    }
}
