//! The constants bounding the perturbed flow on the tube around the cycle,
//! the admissible tube width, and the resulting explicit bound on `eps`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::inverse_from_logdet;
use crate::cycle::LimitCycle;
use crate::error::{Error, Result};
use crate::geom::{Polyline, TubeSets};
use crate::ode::{decode15, flow, second_variational_trajectory, IntegratorConfig, Trajectory};
use crate::system::{Mat2, SystemDef, Tensor3, Vec2};

/// Sampling knobs for [`estimate_constants`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundsConfig {
    /// Time grid intervals over `[0, T]`.
    pub time_samples: usize,
    /// Unit directions used for the bilinear norm of the second derivative.
    pub directions: usize,
    /// Golden-section refinement in `t` at the best sample.
    pub polish: bool,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            time_samples: 64,
            directions: 64,
            polish: true,
        }
    }
}

/// Largest singular value of a 2x2 matrix in closed form.
pub fn spectral_norm(m: &Mat2) -> f64 {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let s = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    (0.5 * (s + disc)).sqrt()
}

/// `W[u, u]` for the second-derivative tensor.
pub fn bilinear(w: &Tensor3, u: &Vec2) -> Vec2 {
    Vec2::new(u.dot(&(w[0] * u)), u.dot(&(w[1] * u)))
}

/// `max_{|u|=1} |W[u, u]|` over `n` directions on the half circle.
pub fn bilinear_norm(w: &Tensor3, n: usize) -> f64 {
    (0..n)
        .map(|k| {
            let a = std::f64::consts::PI * k as f64 / n as f64;
            bilinear(w, &Vec2::new(a.cos(), a.sin())).norm()
        })
        .fold(0.0, f64::max)
}

/// `Phi(t, xi)` and its derivative in `xi` from one dense sample of the
/// second variational system.
pub fn phi_and_derivative(sys: &SystemDef, t: f64, y: &[f64; 15]) -> Result<(Vec2, Mat2)> {
    let (x, v, logdet, w) = decode15(y);
    let vinv = inverse_from_logdet(&v, logdet)?;
    let big_phi = vinv * sys.phi(t, &x);
    // (d_xi V) applied to Phi: D[i][j] = sum_k W^i_{kj} Phi_k
    let mut d = Mat2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            d[(i, j)] = (0..2).map(|k| w[i][(k, j)] * big_phi[k]).sum();
        }
    }
    Ok((big_phi, vinv * (sys.phi_jac_x(t, &x) * v - d)))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Attained {
    pub value: f64,
    pub t: f64,
    pub xi: [f64; 2],
}

impl Attained {
    fn none() -> Self {
        Attained {
            value: f64::NEG_INFINITY,
            t: 0.0,
            xi: [0.0; 2],
        }
    }

    fn take_max(self, other: Self) -> Self {
        if other.value > self.value {
            other
        } else {
            self
        }
    }
}

/// The tube constants and the bound they imply.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsReport {
    pub gamma: f64,
    pub period: f64,
    pub m: f64,
    pub mp: f64,
    pub lp: f64,
    pub lpp: f64,
    pub k0: f64,
    pub k_gamma: f64,
    pub gamma0: Option<f64>,
    pub eps_gamma: f64,
    pub diagnostic: Option<String>,
    pub m_at: Attained,
    pub mp_at: Attained,
    /// Annulus samples whose trajectories failed.
    pub failed_samples: Vec<[f64; 2]>,
    pub samples: usize,
    pub boundary_samples: usize,
    pub time_samples: usize,
    pub directions: usize,
}

struct SampleMax {
    m: Attained,
    mp: Attained,
    lp: f64,
    lpp: f64,
}

fn sample_constants(
    sys: &SystemDef,
    xi: &Vec2,
    period: f64,
    cfg: &BoundsConfig,
    icfg: &IntegratorConfig,
) -> Result<SampleMax> {
    let traj = second_variational_trajectory(sys, xi, 0.0, period, icfg)?;
    let mut m = Attained::none();
    let mut mp = Attained::none();
    for j in 0..=cfg.time_samples {
        let t = period * j as f64 / cfg.time_samples as f64;
        let (p, dp) = phi_and_derivative(sys, t, &traj.eval(t))?;
        m = m.take_max(Attained {
            value: p.norm(),
            t,
            xi: [xi[0], xi[1]],
        });
        mp = mp.take_max(Attained {
            value: spectral_norm(&dp),
            t,
            xi: [xi[0], xi[1]],
        });
    }
    let (_, v, _, w) = decode15(&traj.end());
    Ok(SampleMax {
        m,
        mp,
        lp: spectral_norm(&v),
        lpp: bilinear_norm(&w, cfg.directions),
    })
}

/// Maximize `g` on `[a, b]` by golden-section search.
fn golden_max(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..iters {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d);
        }
    }
    if gc > gd {
        (c, gc)
    } else {
        (d, gd)
    }
}

fn polish(
    best: Attained,
    traj: &Trajectory<15>,
    period: f64,
    dt: f64,
    value: impl Fn(f64, &[f64; 15]) -> f64,
) -> Attained {
    let (a, b) = ((best.t - dt).max(0.0), (best.t + dt).min(period));
    let (t, v) = golden_max(|t| value(t, &traj.eval(t)), a, b, 40);
    if v > best.value {
        Attained {
            value: v,
            t,
            ..best
        }
    } else {
        best
    }
}

/// `K_gamma = min over the outer boundary of |xi - Omega(T, 0, xi)|`.
pub fn k_gamma(
    sys: &SystemDef,
    boundary: &[Vec2],
    period: f64,
    icfg: &IntegratorConfig,
) -> Result<f64> {
    let vals: Vec<f64> = boundary
        .par_iter()
        .map(|xi| flow(sys, xi, 0.0, period, icfg).map(|x| (xi - x).norm()))
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(f64::INFINITY, f64::min))
}

/// Definition-1 constants over the closed annulus between the cycle and
/// the offset curve, with `k0` taken from the condition check.
pub fn estimate_constants(
    sys: &SystemDef,
    ts: &TubeSets,
    period: f64,
    k0: f64,
    cfg: &BoundsConfig,
    icfg: &IntegratorConfig,
) -> Result<BoundsReport> {
    let results: Vec<(Vec2, Result<SampleMax>)> = ts
        .annulus_samples
        .par_iter()
        .map(|xi| (*xi, sample_constants(sys, xi, period, cfg, icfg)))
        .collect();
    let mut failed = Vec::new();
    let (mut m, mut mp, mut lp, mut lpp) = (Attained::none(), Attained::none(), 0.0f64, 0.0f64);
    for (xi, r) in results {
        match r {
            Ok(s) => {
                m = m.take_max(s.m);
                mp = mp.take_max(s.mp);
                lp = lp.max(s.lp);
                lpp = lpp.max(s.lpp);
            }
            Err(Error::Numeric(_))
            | Err(Error::BlowUp { .. })
            | Err(Error::StepUnderflow { .. })
            | Err(Error::TooManySteps { .. }) => failed.push([xi[0], xi[1]]),
            Err(e) => return Err(e),
        }
    }
    if failed.len() == ts.annulus_samples.len() {
        return Err(Error::Numeric(
            "every annulus sample failed to integrate".into(),
        ));
    }
    if cfg.polish {
        let dt = period / cfg.time_samples as f64;
        let xi_m = Vec2::new(m.xi[0], m.xi[1]);
        let traj = second_variational_trajectory(sys, &xi_m, 0.0, period, icfg)?;
        m = polish(m, &traj, period, dt, |t, y| {
            phi_and_derivative(sys, t, y).map_or(f64::NEG_INFINITY, |p| p.0.norm())
        });
        let xi_mp = Vec2::new(mp.xi[0], mp.xi[1]);
        let traj = second_variational_trajectory(sys, &xi_mp, 0.0, period, icfg)?;
        mp = polish(mp, &traj, period, dt, |t, y| {
            phi_and_derivative(sys, t, y).map_or(f64::NEG_INFINITY, |p| spectral_norm(&p.1))
        });
    }
    let m_val = m.value.max(0.0);
    let mp_val = mp.value.max(0.0);
    let boundary = ts
        .boundary_w
        .resample(((ts.boundary_w.perimeter() / ts.pitch).ceil() as usize).max(8));
    let kg = k_gamma(sys, &boundary, period, icfg)?;
    let mut rep = BoundsReport {
        gamma: ts.gamma,
        period,
        m: m_val,
        mp: mp_val,
        lp,
        lpp,
        k0,
        k_gamma: kg,
        gamma0: None,
        eps_gamma: 0.0,
        diagnostic: None,
        m_at: m,
        mp_at: mp,
        failed_samples: failed,
        samples: ts.annulus_samples.len(),
        boundary_samples: boundary.len(),
        time_samples: cfg.time_samples,
        directions: cfg.directions,
    };
    let (eps, diag) = epsilon_star(&rep);
    rep.eps_gamma = eps;
    rep.diagnostic = diag;
    if !rep.failed_samples.is_empty() {
        rep.eps_gamma = 0.0;
        rep.diagnostic = Some(format!(
            "{} annulus samples failed to integrate",
            rep.failed_samples.len()
        ));
    }
    Ok(rep)
}

/// `a / b` with a zero denominator read as an unbounded branch.
fn guarded(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        f64::INFINITY
    } else {
        a / b
    }
}

/// `min{K0 / (T^2 M (M' + sqrt2 M L'' + M' L')), K_gamma / (T M (1 + L'))}`,
/// or zero with a diagnostic when a condition constant vanishes.
pub fn epsilon_star(br: &BoundsReport) -> (f64, Option<String>) {
    if !(br.k0 > 0.0) || !(br.k_gamma > 0.0) {
        return (
            0.0,
            Some(format!(
                "conditions fail: K0 = {:e}, K_gamma = {:e}",
                br.k0, br.k_gamma
            )),
        );
    }
    let t = br.period;
    let first = guarded(
        br.k0,
        t * t * br.m * (br.mp + std::f64::consts::SQRT_2 * br.m * br.lpp + br.mp * br.lp),
    );
    let second = guarded(br.k_gamma, t * br.m * (1.0 + br.lp));
    let eps = first.min(second);
    if eps.is_infinite() {
        (
            eps,
            Some("perturbation vanishes on the tube; every eps is admissible".into()),
        )
    } else {
        (eps, None)
    }
}

/// Outcome of the tube-width scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Gamma0 {
    pub gamma0: f64,
    /// `(gamma, smallest |xi - Omega(T0, 0, xi)| / |d| over its new rings)`.
    pub scanned: Vec<(f64, f64)>,
    pub warning: Option<String>,
}

/// Residual ratio and normal displacement at ring offset `d` along fixed
/// normal lines through `base`.
fn ring_probe(
    sys: &SystemDef,
    base: &[(Vec2, Vec2)],
    d: f64,
    t0: f64,
    icfg: &IntegratorConfig,
) -> Vec<(f64, f64)> {
    base.par_iter()
        .map(|(p, n)| {
            let xi = p + d * n;
            match flow(sys, &xi, 0.0, t0, icfg) {
                Ok(x) => ((xi - x).norm() / d.abs(), (x - xi).dot(n)),
                Err(_) => (0.0, f64::NAN),
            }
        })
        .collect()
}

/// Largest width on `gamma_grid` (scanned upward) for which no `T0`-periodic
/// point shows up on either side of the cycle.
///
/// Rings are probed along fixed normal lines. A width is rejected when some
/// probe has `|xi - Omega(T0, 0, xi)| < safety * |d|`, or when the normal
/// component of the displacement changes sign along a line, which means an
/// invariant closed curve crosses the tube there.
pub fn find_gamma0(
    sys: &SystemDef,
    lc: &LimitCycle,
    gamma_grid: &[f64],
    safety: f64,
    icfg: &IntegratorConfig,
) -> Result<Gamma0> {
    if gamma_grid.is_empty() {
        return Err(Error::Config("gamma grid is empty".into()));
    }
    let mut grid: Vec<f64> = gamma_grid.iter().map(|g| g.abs()).collect();
    grid.sort_by(|a, b| a.total_cmp(b));
    let curve = Polyline::from_cycle(lc);
    let (reach_in, reach_out) = curve.reach();
    let normals = curve.outward_normals();
    // A crossing curve flips the normal displacement between consecutive
    // rings however far apart they are, so modest resolution suffices.
    let pitch = grid[0] / 2.0;
    let lines = curve.len().min(256);
    let base: Vec<(Vec2, Vec2)> = (0..lines)
        .map(|k| k * curve.len() / lines)
        .map(|i| (curve.pts[i], normals[i]))
        .collect();
    let mut last_sign: [Vec<f64>; 2] = [vec![0.0; lines], vec![0.0; lines]];
    let mut scanned = Vec::new();
    let mut accepted: Option<f64> = None;
    let mut prev = 0.0;
    'scan: for &g in &grid {
        let rings = (((g - prev) / pitch).ceil() as usize).max(1);
        let mut worst = f64::INFINITY;
        let mut crossing = false;
        for j in 1..=rings {
            let d = prev + (g - prev) * j as f64 / rings as f64;
            for (side, sign) in [(0usize, -1.0), (1usize, 1.0)] {
                let reach = if sign < 0.0 { reach_in } else { reach_out };
                if d >= 0.98 * reach {
                    worst = 0.0;
                    continue;
                }
                for (k, (ratio, normal)) in ring_probe(sys, &base, sign * d, lc.t0, icfg)
                    .into_iter()
                    .enumerate()
                {
                    worst = worst.min(ratio);
                    let s = normal.signum();
                    if normal.is_nan() || (last_sign[side][k] != 0.0 && s != last_sign[side][k]) {
                        crossing = true;
                    }
                    last_sign[side][k] = s;
                }
            }
        }
        scanned.push((g, if crossing { 0.0 } else { worst }));
        if crossing || !(worst > safety) {
            break 'scan;
        }
        accepted = Some(g);
        prev = g;
    }
    Ok(match accepted {
        Some(g) => Gamma0 {
            gamma0: g,
            scanned,
            warning: None,
        },
        None => Gamma0 {
            gamma0: grid[0],
            scanned,
            warning: Some(format!(
                "even gamma = {} shows a nearby periodic point",
                grid[0]
            )),
        },
    })
}

/// `0.05, 0.10, ..., 0.95` times the smaller reach of the cycle.
pub fn default_gamma_grid(lc: &LimitCycle) -> Vec<f64> {
    let (reach_in, reach_out) = Polyline::from_cycle(lc).reach();
    let r = reach_in.min(reach_out);
    (1..20).map(|k| 0.05 * k as f64 * r).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_spectral_norm() {
        let m = Mat2::new(1.0, 2.0, -0.5, 3.0);
        let sv = m.singular_values();
        assert!((spectral_norm(&m) - sv.max()).abs() < 1e-14);
        assert_eq!(spectral_norm(&Mat2::zeros()), 0.0);
    }

    #[test]
    fn golden_section_finds_interior_maximum() {
        let (t, v) = golden_max(|t| -(t - 0.3) * (t - 0.3) + 2.0, 0.0, 1.0, 60);
        assert!((t - 0.3).abs() < 1e-7 && (v - 2.0).abs() < 1e-12);
    }

    fn report(m: f64, mp: f64, lp: f64, lpp: f64, k0: f64, kg: f64, t: f64) -> BoundsReport {
        BoundsReport {
            gamma: 0.2,
            period: t,
            m,
            mp,
            lp,
            lpp,
            k0,
            k_gamma: kg,
            gamma0: None,
            eps_gamma: 0.0,
            diagnostic: None,
            m_at: Attained::none(),
            mp_at: Attained::none(),
            failed_samples: vec![],
            samples: 0,
            boundary_samples: 0,
            time_samples: 0,
            directions: 0,
        }
    }

    #[test]
    fn bound_formula() {
        let tau = std::f64::consts::TAU;
        let (e, d) = epsilon_star(&report(1.0, 0.0, 1.0, 0.0, 1.0, 1.0, tau));
        assert!((e - 1.0 / (2.0 * tau)).abs() < 1e-15 && d.is_none());
        let (e, d) = epsilon_star(&report(1.0, 0.0, 1.0, 0.0, 0.0, 0.0, tau));
        assert_eq!(e, 0.0);
        assert!(d.unwrap().contains("conditions fail"));
        let (e, _) = epsilon_star(&report(2.0, 3.0, 1.5, 0.5, 0.7, 0.4, 3.0));
        let a = 0.7 / (9.0 * 2.0 * (3.0 + 2f64.sqrt() * 2.0 * 0.5 + 3.0 * 1.5));
        let b = 0.4 / (3.0 * 2.0 * 2.5);
        assert!((e - a.min(b)).abs() < 1e-15);
    }
}
