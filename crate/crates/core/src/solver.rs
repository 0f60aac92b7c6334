//! Periodic solutions of the perturbed system by shooting on the time-`T`
//! map, continuation in `eps`, the least-period check, and the residual scan
//! used when the two periods are incommensurable.

use nalgebra::{Matrix4x2, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cycle::LimitCycle;
use crate::error::{Error, Result};
use crate::geom::{hausdorff, Polyline};
use crate::ode::IntegratorConfig;
use crate::ode::{
    decode7, flow_perturbed, flow_perturbed_variational, trajectory, variational_trajectory,
};
use crate::system::{Mat2, SystemDef, Vec2};

/// Knobs shared by the Newton-based searches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub max_newton: usize,
    /// Residual accepted as a periodic point.
    pub accept: f64,
    /// Fixed points closer than this are the same solution.
    pub dedup: f64,
    /// `sigma_min / sigma_max` of the Newton matrix below which the fixed
    /// point is treated as part of a curve.
    pub degenerate_ratio: f64,
    /// Points on each guess curve.
    pub guesses_per_curve: usize,
    /// Orbit samples over one period.
    pub orbit_samples: usize,
    /// Largest divisor tested by the least-period check.
    pub max_divisor: usize,
    /// Defect below which `T/m` counts as a period.
    pub period_threshold: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            max_newton: 60,
            accept: 1e-8,
            dedup: 1e-6,
            degenerate_ratio: 1e-6,
            guesses_per_curve: 16,
            orbit_samples: 1024,
            max_divisor: 10,
            period_threshold: 1e-4,
        }
    }
}

/// Where an orbit lies relative to the cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Inside,
    Outside,
    Crossing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodVerdict {
    /// No tested divisor of `T` is a period.
    Pass,
    /// `T/m` is a period for the reported `m`.
    Reduced,
    /// Every divisor up to the cap is a period (a constant solution).
    Degenerate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeastPeriod {
    /// Largest `m` with `T/m` a period, 1 when none.
    pub m: usize,
    pub verdict: PeriodVerdict,
    /// `(m, max_t |x(t + T/m) - x(t)|)` for `m = 2..=max_divisor`.
    pub defects: Vec<(usize, f64)>,
}

/// An accepted periodic solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitResult {
    pub eps: f64,
    pub period: f64,
    pub xi: [f64; 2],
    pub residual: f64,
    /// Residual after re-integration at tenfold tighter tolerance.
    pub residual_tight: f64,
    pub newton_steps: usize,
    /// `sigma_min / sigma_max` of `I - d Omega / d xi` at the solution.
    pub conditioning: f64,
    pub hausdorff_to_cycle: f64,
    pub side: Side,
    pub least_period: LeastPeriod,
    #[serde(skip)]
    pub samples: Vec<(f64, Vec2)>,
}

impl OrbitResult {
    /// CSV `t,x1,x2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x1,x2\n");
        for (t, x) in &self.samples {
            out.push_str(&format!("{t:.17e},{:.17e},{:.17e}\n", x[0], x[1]));
        }
        out
    }

    pub fn polyline(&self) -> Polyline {
        Polyline::new(self.samples.iter().map(|s| s.1).collect())
    }
}

/// A guess that did not produce an accepted solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuessFailure {
    pub guess: [f64; 2],
    pub residual: f64,
    pub iterations: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub eps: f64,
    pub period: f64,
    pub orbits: Vec<OrbitResult>,
    pub failures: Vec<GuessFailure>,
    /// A converged point had a degenerate Newton matrix: the solutions form
    /// a curve and no isolated orbit is claimed.
    pub curve_detected: bool,
    /// Converged points on such a curve, with their residuals.
    pub curve_points: Vec<([f64; 2], f64)>,
}

struct Newton {
    xi: Vec2,
    residual: f64,
    iterations: usize,
    conditioning: f64,
}

/// Minimal-norm solution of `J d = r` dropping singular values below
/// `1e-12 * sigma_max`.
fn pinv_solve(j: &Mat2, r: &Vec2) -> (Vec2, f64) {
    let svd = j.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smax > 0.0 { smin / smax } else { 0.0 };
    let d = svd.solve(r, 1e-12 * smax).unwrap_or_else(|_| Vec2::zeros());
    (d, cond)
}

fn residual_and_jacobian(
    sys: &SystemDef,
    eps: f64,
    period: f64,
    xi: &Vec2,
    icfg: &IntegratorConfig,
) -> Result<(Vec2, Mat2)> {
    let fp = flow_perturbed_variational(sys, eps, xi, 0.0, period, icfg)?;
    let v = fp.v.expect("variational flow carries V");
    Ok((xi - fp.x, Mat2::identity() - v))
}

fn newton(
    sys: &SystemDef,
    eps: f64,
    period: f64,
    guess: &Vec2,
    cfg: &SolveConfig,
    icfg: &IntegratorConfig,
) -> Result<Newton> {
    let mut xi = *guess;
    let (mut r, mut j) = residual_and_jacobian(sys, eps, period, &xi, icfg)?;
    let mut res = r.norm();
    let mut it = 0;
    let mut history = vec![res];
    while it < cfg.max_newton && res > 0.01 * cfg.accept && !stalled(&history) {
        it += 1;
        let (d, _) = pinv_solve(&j, &r);
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand = xi - lambda * d;
            if let Ok((rc, jc)) = residual_and_jacobian(sys, eps, period, &cand, icfg) {
                if rc.norm() < res {
                    xi = cand;
                    r = rc;
                    j = jc;
                    res = rc.norm();
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
        history.push(res);
    }
    let (_, cond) = pinv_solve(&j, &r);
    Ok(Newton {
        xi,
        residual: res,
        iterations: it,
        conditioning: cond,
    })
}

/// Less than a tenfold decrease over the last eight iterations.
fn stalled(history: &[f64]) -> bool {
    let n = history.len();
    n > 8 && history[n - 1] > 0.1 * history[n - 9]
}

/// Default starting points: `n` points on each of the cycle and its offsets
/// by `-gamma/2` and `+gamma/2`.
pub fn default_guesses(lc: &LimitCycle, gamma: f64, n: usize) -> Result<Vec<Vec2>> {
    let curve = Polyline::from_cycle(lc);
    let mut out = curve.resample(n);
    for d in [-0.5 * gamma.abs(), 0.5 * gamma.abs()] {
        out.extend(curve.offset(d)?.resample(n));
    }
    Ok(out)
}

/// Largest `m <= max_divisor` for which `T/m` is a period of the solution
/// through `xi`.
pub fn least_period_check(
    sys: &SystemDef,
    eps: f64,
    period: f64,
    xi: &Vec2,
    cfg: &SolveConfig,
    icfg: &IntegratorConfig,
) -> Result<LeastPeriod> {
    let traj = trajectory(sys, eps, xi, 0.0, 1.5 * period, icfg)?;
    let n = 512;
    let mut defects = Vec::new();
    for m in 2..=cfg.max_divisor {
        let shift = period / m as f64;
        let d = (0..n)
            .map(|i| {
                let t = period * i as f64 / n as f64;
                let a = traj.eval(t);
                let b = traj.eval(t + shift);
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
            })
            .fold(0.0, f64::max);
        defects.push((m, d));
    }
    let qualifying: Vec<usize> = defects
        .iter()
        .filter(|(_, d)| *d < cfg.period_threshold)
        .map(|p| p.0)
        .collect();
    let (m, verdict) = if qualifying.len() == defects.len() && !defects.is_empty() {
        (cfg.max_divisor, PeriodVerdict::Degenerate)
    } else if let Some(&m) = qualifying.iter().max() {
        (m, PeriodVerdict::Reduced)
    } else {
        (1, PeriodVerdict::Pass)
    };
    Ok(LeastPeriod {
        m,
        verdict,
        defects,
    })
}

fn side_of(curve: &Polyline, samples: &[(f64, Vec2)]) -> Side {
    let inside = samples.iter().filter(|(_, x)| curve.encloses(x)).count();
    if inside == samples.len() {
        Side::Inside
    } else if inside == 0 {
        Side::Outside
    } else {
        Side::Crossing
    }
}

fn build_orbit(
    sys: &SystemDef,
    lc: &LimitCycle,
    eps: f64,
    period: f64,
    nw: &Newton,
    cfg: &SolveConfig,
    icfg: &IntegratorConfig,
) -> Result<OrbitResult> {
    let tight = icfg.tightened(10.0);
    let residual_tight = (nw.xi - flow_perturbed(sys, eps, &nw.xi, 0.0, period, &tight)?).norm();
    let traj = trajectory(sys, eps, &nw.xi, 0.0, period, icfg)?;
    let samples: Vec<(f64, Vec2)> = (0..cfg.orbit_samples)
        .map(|i| {
            let t = period * i as f64 / cfg.orbit_samples as f64;
            let y = traj.eval(t);
            (t, Vec2::new(y[0], y[1]))
        })
        .collect();
    let curve = Polyline::from_cycle(lc);
    let poly = Polyline::new(samples.iter().map(|s| s.1).collect());
    Ok(OrbitResult {
        eps,
        period,
        xi: [nw.xi[0], nw.xi[1]],
        residual: nw.residual,
        residual_tight,
        newton_steps: nw.iterations,
        conditioning: nw.conditioning,
        hausdorff_to_cycle: hausdorff(&poly, &curve),
        side: side_of(&curve, &samples),
        least_period: least_period_check(sys, eps, period, &nw.xi, cfg, icfg)?,
        samples,
    })
}

/// All distinct `T`-periodic solutions reached by damped Newton from the
/// guesses. Never claims completeness.
pub fn find_periodic(
    sys: &SystemDef,
    lc: &LimitCycle,
    eps: f64,
    period: f64,
    guesses: &[Vec2],
    cfg: &SolveConfig,
    icfg: &IntegratorConfig,
) -> Result<SolveReport> {
    if !(eps >= 0.0) {
        return Err(Error::Config(format!("eps must be nonnegative, got {eps}")));
    }
    if guesses.is_empty() {
        return Err(Error::Config("no starting guesses".into()));
    }
    let runs: Vec<(Vec2, Result<Newton>)> = guesses
        .par_iter()
        .map(|g| (*g, newton(sys, eps, period, g, cfg, icfg)))
        .collect();
    let mut failures = Vec::new();
    let mut accepted: Vec<Newton> = Vec::new();
    let mut curve_detected = false;
    let mut curve_points = Vec::new();
    for (g, run) in runs {
        match run {
            Ok(nw) if nw.residual <= cfg.accept => {
                if nw.conditioning < cfg.degenerate_ratio {
                    curve_detected = true;
                    curve_points.push(([nw.xi[0], nw.xi[1]], nw.residual));
                } else if !accepted.iter().any(|a| (a.xi - nw.xi).norm() < cfg.dedup) {
                    accepted.push(nw);
                }
            }
            Ok(nw) => failures.push(GuessFailure {
                guess: [g[0], g[1]],
                residual: nw.residual,
                iterations: nw.iterations,
                reason: "no convergence".into(),
            }),
            Err(e) => failures.push(GuessFailure {
                guess: [g[0], g[1]],
                residual: f64::NAN,
                iterations: 0,
                reason: e.to_string(),
            }),
        }
    }
    if curve_detected {
        for nw in accepted.drain(..) {
            curve_points.push(([nw.xi[0], nw.xi[1]], nw.residual));
        }
    }
    let mut orbits = accepted
        .par_iter()
        .map(|nw| build_orbit(sys, lc, eps, period, nw, cfg, icfg))
        .collect::<Result<Vec<_>>>()?;
    orbits.sort_by(|a, b| {
        a.hausdorff_to_cycle
            .total_cmp(&b.hausdorff_to_cycle)
            .then(a.xi[0].total_cmp(&b.xi[0]))
    });
    Ok(SolveReport {
        eps,
        period,
        orbits,
        failures,
        curve_detected,
        curve_points,
    })
}

/// One `eps` value of a continuation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rung {
    pub eps: f64,
    /// One entry per branch; `None` where the branch was lost.
    pub orbits: Vec<Option<OrbitResult>>,
    /// `eps` exceeds the certified bound.
    pub uncertified: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Continuation {
    pub period: f64,
    pub rungs: Vec<Rung>,
    /// First rung where some branch was lost.
    pub failed_rung: Option<usize>,
}

impl Continuation {
    /// Hausdorff distance to the cycle along branch `b`.
    pub fn branch_distances(&self, b: usize) -> Vec<Option<f64>> {
        self.rungs
            .iter()
            .map(|r| {
                r.orbits
                    .get(b)
                    .and_then(|o| o.as_ref())
                    .map(|o| o.hausdorff_to_cycle)
            })
            .collect()
    }
}

/// Follow every solution found at the first (largest) `eps` down the ladder,
/// seeding each rung from the previous fixed point.
#[allow(clippy::too_many_arguments)]
pub fn continuation(
    sys: &SystemDef,
    lc: &LimitCycle,
    period: f64,
    ladder: &[f64],
    guesses: &[Vec2],
    eps_bound: Option<f64>,
    cfg: &SolveConfig,
    icfg: &IntegratorConfig,
) -> Result<Continuation> {
    let Some(&first) = ladder.first() else {
        return Err(Error::Config("empty eps ladder".into()));
    };
    let start = find_periodic(sys, lc, first, period, guesses, cfg, icfg)?;
    let tag = |eps: f64| eps_bound.is_some_and(|b| eps > b);
    let mut rungs = vec![Rung {
        eps: first,
        orbits: start.orbits.into_iter().map(Some).collect(),
        uncertified: tag(first),
    }];
    let mut failed_rung = None;
    for (k, &eps) in ladder.iter().enumerate().skip(1) {
        let prev = &rungs[k - 1].orbits;
        let orbits: Vec<Option<OrbitResult>> = prev
            .par_iter()
            .map(|o| {
                let o = o.as_ref()?;
                let nw = newton(sys, eps, period, &Vec2::new(o.xi[0], o.xi[1]), cfg, icfg).ok()?;
                if nw.residual > cfg.accept {
                    return None;
                }
                build_orbit(sys, lc, eps, period, &nw, cfg, icfg).ok()
            })
            .collect();
        if failed_rung.is_none() && orbits.iter().any(Option::is_none) {
            failed_rung = Some(k);
        }
        rungs.push(Rung {
            eps,
            orbits,
            uncertified: tag(eps),
        });
    }
    Ok(Continuation {
        period,
        rungs,
        failed_rung,
    })
}

/// One row of the incommensurable-period scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRow {
    pub period: f64,
    pub eps: f64,
    /// Smallest `|(xi - x(T), x(T) - x(2T))|` reached from the guesses.
    pub min_residual: f64,
    pub argmin: [f64; 2],
    /// Guesses whose iterates stayed within the tube.
    pub in_tube: usize,
}

/// Two-period residual `[xi - x(T); x(T) - x(2T)]` and its Jacobian.
fn two_period(
    sys: &SystemDef,
    eps: f64,
    period: f64,
    xi: &Vec2,
    icfg: &IntegratorConfig,
) -> Result<(Vector4<f64>, Matrix4x2<f64>)> {
    let traj = variational_trajectory(sys, eps, xi, 0.0, 2.0 * period, icfg)?;
    let (x1, v1, _) = decode7(&traj.eval(period));
    let (x2, v2, _) = decode7(&traj.end());
    let r = Vector4::new(xi[0] - x1[0], xi[1] - x1[1], x1[0] - x2[0], x1[1] - x2[1]);
    let a = Mat2::identity() - v1;
    let b = v1 - v2;
    let j = Matrix4x2::new(
        a[(0, 0)],
        a[(0, 1)],
        a[(1, 0)],
        a[(1, 1)],
        b[(0, 0)],
        b[(0, 1)],
        b[(1, 0)],
        b[(1, 1)],
    );
    Ok((r, j))
}

/// Levenberg–Marquardt on the two-period residual from one guess; `None`
/// when an iterate leaves the tube of half-width `tube` around the cycle.
#[allow(clippy::too_many_arguments)]
fn scan_from(
    sys: &SystemDef,
    curve: &Polyline,
    eps: f64,
    period: f64,
    guess: &Vec2,
    tube: f64,
    cfg: &SolveConfig,
    icfg: &IntegratorConfig,
) -> Option<(f64, Vec2)> {
    let mut xi = *guess;
    let (mut r, mut j) = two_period(sys, eps, period, &xi, icfg).ok()?;
    let mut cost = r.norm();
    let mut damping = 1e-3 * (j.transpose() * j).diagonal().max();
    let mut history = vec![cost];
    for _ in 0..cfg.max_newton {
        let a = j.transpose() * j;
        let g = j.transpose() * r;
        let mut improved = false;
        for _ in 0..12 {
            let Some(d) = (a + damping * Mat2::identity())
                .try_inverse()
                .map(|m| m * g)
            else {
                break;
            };
            let cand = xi - d;
            if curve.distance(&cand) > tube {
                return None;
            }
            if let Ok((rc, jc)) = two_period(sys, eps, period, &cand, icfg) {
                if rc.norm() < cost {
                    xi = cand;
                    r = rc;
                    j = jc;
                    cost = rc.norm();
                    damping /= 3.0;
                    improved = true;
                    break;
                }
            }
            damping *= 4.0;
        }
        history.push(cost);
        let n = history.len();
        // the floor is reached once the residual stops moving
        let flat = n > 3 && history[n - 1] > (1.0 - 1e-6) * history[n - 4];
        if !improved || cost < 1e-3 * cfg.accept || flat {
            break;
        }
    }
    Some((cost, xi))
}

/// Residual floor of the two-period problem for each `(T, eps)`. With
/// commensurable periods and `T` a common period the floor reaches the
/// accepted-orbit level; a floor bounded away from zero across the ladder
/// is the numerical signature of nonexistence.
#[allow(clippy::too_many_arguments)]
pub fn irrational_scan(
    sys: &SystemDef,
    lc: &LimitCycle,
    periods: &[f64],
    ladder: &[f64],
    guesses: &[Vec2],
    tube: f64,
    cfg: &SolveConfig,
    icfg: &IntegratorConfig,
) -> Result<Vec<ScanRow>> {
    if sys.phi_is_zero() {
        return Err(Error::Config(
            "the scan needs a perturbation that depends on t".into(),
        ));
    }
    let curve = Polyline::from_cycle(lc);
    let mut rows = Vec::new();
    for &period in periods {
        for &eps in ladder {
            let runs: Vec<Option<(f64, Vec2)>> = guesses
                .par_iter()
                .map(|g| scan_from(sys, &curve, eps, period, g, tube, cfg, icfg))
                .collect();
            let in_tube = runs.iter().filter(|r| r.is_some()).count();
            let (min_residual, argmin) =
                runs.into_iter()
                    .flatten()
                    .fold((f64::INFINITY, Vec2::zeros()), |acc, r| {
                        if r.0 < acc.0 {
                            r
                        } else {
                            acc
                        }
                    });
            rows.push(ScanRow {
                period,
                eps,
                min_residual,
                argmin: [argmin[0], argmin[1]],
                in_tube,
            });
        }
    }
    Ok(rows)
}

/// CSV `T,eps,min_residual`.
pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut out = String::from("T,eps,min_residual\n");
    for r in rows {
        out.push_str(&format!(
            "{:.17e},{:.17e},{:.17e}\n",
            r.period, r.eps, r.min_residual
        ));
    }
    out
}

/// Whether `t -> phi(t, xi)` varies for some `xi` on the cycle.
pub fn phi_depends_on_time(sys: &SystemDef, lc: &LimitCycle) -> bool {
    (0..32).any(|i| {
        let xi = lc.x0(lc.t0 * i as f64 / 32.0);
        let p0 = sys.phi(0.0, &xi);
        (1..64).any(|k| {
            (sys.phi(sys.t1 * k as f64 / 64.0, &xi) - p0).norm() > 1e-12 * (1.0 + p0.norm())
        })
    })
}
