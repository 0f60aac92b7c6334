//! Planar topological degree via winding numbers along closed boundaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Polyline;
use crate::system::Vec2;

/// Default relative degeneracy tolerance (against the median boundary norm).
pub const DEGENERACY_TOL: f64 = 1e-10;

/// A field evaluated along a closed boundary parametrized by `s in [0, 1)`,
/// traversed counterclockwise.
pub struct BoundaryField<'a> {
    eval: Box<dyn Fn(f64) -> Vec2 + Sync + 'a>,
    /// Number of initial uniform samples before adaptive refinement.
    pub initial: usize,
    pub degeneracy_tol: f64,
}

/// Outcome of a winding computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Winding {
    pub degree: i64,
    pub min_norm: f64,
    pub median_norm: f64,
    pub evaluations: usize,
}

impl<'a> BoundaryField<'a> {
    pub fn new(f: impl Fn(f64) -> Vec2 + Sync + 'a, initial: usize) -> Self {
        BoundaryField {
            eval: Box::new(f),
            initial: initial.max(4),
            degeneracy_tol: DEGENERACY_TOL,
        }
    }

    /// `F` composed with a polyline boundary, oriented counterclockwise.
    pub fn on_polyline(
        poly: &Polyline,
        f: impl Fn(&Vec2) -> Vec2 + Sync + 'a,
        initial: usize,
    ) -> Self {
        let ccw = poly.counterclockwise();
        BoundaryField::new(move |s| f(&ccw.point_at(s)), initial)
    }

    pub fn eval(&self, s: f64) -> Vec2 {
        (self.eval)(s)
    }
}

fn angle_between(a: &Vec2, b: &Vec2) -> f64 {
    (a[0] * b[1] - a[1] * b[0]).atan2(a.dot(b))
}

struct Refined {
    angle: f64,
    min_norm: f64,
    evaluations: usize,
}

fn refine(bf: &BoundaryField, s0: f64, f0: Vec2, s1: f64, f1: Vec2, depth: u32) -> Refined {
    let d = angle_between(&f0, &f1);
    if d.abs() < std::f64::consts::FRAC_PI_2 || depth >= 60 {
        return Refined {
            angle: d,
            min_norm: f0.norm().min(f1.norm()),
            evaluations: 0,
        };
    }
    let sm = 0.5 * (s0 + s1);
    let fm = bf.eval(sm);
    let a = refine(bf, s0, f0, sm, fm, depth + 1);
    let b = refine(bf, sm, fm, s1, f1, depth + 1);
    Refined {
        angle: a.angle + b.angle,
        min_norm: a.min_norm.min(b.min_norm),
        evaluations: a.evaluations + b.evaluations + 1,
    }
}

/// Winding number of the boundary field about the origin, with adaptive
/// bisection until every angular step is below a quarter turn.
pub fn winding_degree(bf: &BoundaryField) -> Result<Winding> {
    let n = bf.initial;
    let samples: Vec<Vec2> = (0..n)
        .into_par_iter()
        .map(|i| bf.eval(i as f64 / n as f64))
        .collect();
    let mut norms: Vec<f64> = samples.iter().map(|v| v.norm()).collect();
    norms.sort_by(|a, b| a.total_cmp(b));
    let median = norms[n / 2];
    let pieces: Vec<Refined> = (0..n)
        .into_par_iter()
        .map(|i| {
            let j = (i + 1) % n;
            let s1 = if j == 0 { 1.0 } else { j as f64 / n as f64 };
            refine(bf, i as f64 / n as f64, samples[i], s1, samples[j], 0)
        })
        .collect();
    let total: f64 = pieces.iter().map(|p| p.angle).sum();
    let min_norm = pieces.iter().map(|p| p.min_norm).fold(norms[0], f64::min);
    let evaluations = n + pieces.iter().map(|p| p.evaluations).sum::<usize>();
    if !(min_norm > bf.degeneracy_tol * median) || !total.is_finite() {
        return Err(Error::DegenerateField { min_norm });
    }
    let turns = total / std::f64::consts::TAU;
    let degree = turns.round();
    if (turns - degree).abs() > 1e-6 {
        return Err(Error::Numeric(format!(
            "winding angle {total} is not a whole number of turns"
        )));
    }
    Ok(Winding {
        degree: degree as i64,
        min_norm,
        median_norm: median,
        evaluations,
    })
}

fn check_closed(g: &(impl Fn(f64) -> Vec2 + ?Sized), period: f64) -> Result<()> {
    let (a, b) = (g(0.0), g(period));
    if (a - b).norm() > 1e-8 * a.norm().max(1.0) {
        return Err(Error::Numeric(format!(
            "circle map is not closed: |g(0) - g(P)| = {:e}",
            (a - b).norm()
        )));
    }
    Ok(())
}

/// Degree of `theta -> g(theta)` on `[0, P]`.
///
/// `ccw` states whether increasing `theta` traverses the underlying curve
/// counterclockwise; for a clockwise parametrization the raw winding is
/// negated so the result is the degree relative to the enclosed region.
pub fn circle_map_degree(
    g: impl Fn(f64) -> Vec2 + Sync,
    period: f64,
    ccw: bool,
    initial: usize,
) -> Result<i64> {
    check_closed(&g, period)?;
    let bf = BoundaryField::new(|s| g(s * period), initial);
    let w = winding_degree(&bf)?;
    Ok(if ccw { w.degree } else { -w.degree })
}

/// Degree from the sign pattern of `g` at the roots of its first component:
/// `(1/4) * sum_i s_i * (sigma_{i+1} - sigma_i)` where `sigma_i` is the sign
/// of `[g]_2` at the i-th root of `[g]_1` and `s_i` the sign of `[g]_1`
/// between roots `i` and `i+1`.
pub fn sign_change_degree(
    g: impl Fn(f64) -> Vec2 + Sync,
    period: f64,
    ccw: bool,
    grid: usize,
) -> Result<i64> {
    check_closed(&g, period)?;
    // an irrational shift keeps grid points off symmetric roots
    let shift = 0.381_966_011_250_105_2 * period / grid as f64;
    let ts: Vec<f64> = (0..=grid)
        .map(|i| shift + period * i as f64 / grid as f64)
        .collect();
    let vals: Vec<Vec2> = ts.par_iter().map(|&t| g(t)).collect();
    let median = {
        let mut n: Vec<f64> = vals.iter().map(|v| v.norm()).collect();
        n.sort_by(|a, b| a.total_cmp(b));
        n[n.len() / 2]
    };
    let mut sigma = Vec::new();
    let mut after = Vec::new();
    for i in 0..grid {
        let (a, b) = (vals[i][0], vals[i + 1][0]);
        if a == 0.0 || (a < 0.0) != (b < 0.0) {
            let (mut lo, mut hi) = (ts[i], ts[i + 1]);
            let mut glo = a;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let gm = g(mid)[0];
                if (gm < 0.0) == (glo < 0.0) && gm != 0.0 {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
            }
            let root = g(0.5 * (lo + hi));
            if root[1].abs() <= DEGENERACY_TOL * median {
                return Err(Error::DegenerateField {
                    min_norm: root.norm(),
                });
            }
            sigma.push(root[1].signum());
            after.push(if b == 0.0 { -a.signum() } else { b.signum() });
        }
    }
    let m = sigma.len();
    if m % 2 == 1 {
        return Err(Error::Numeric(
            "odd number of sign changes on a closed curve".into(),
        ));
    }
    let mut total = 0.0;
    for i in 0..m {
        total += after[i] * (sigma[(i + 1) % m] - sigma[i]);
    }
    let raw = (total / 4.0).round() as i64;
    Ok(if ccw { raw } else { -raw })
}

/// Brute-force winding from `n` uniform samples (oracle for tests).
pub fn brute_force_degree(g: impl Fn(f64) -> Vec2 + Sync, period: f64, ccw: bool, n: usize) -> i64 {
    let vals: Vec<Vec2> = (0..n)
        .into_par_iter()
        .map(|i| g(period * i as f64 / n as f64))
        .collect();
    let total: f64 = (0..n)
        .map(|i| angle_between(&vals[i], &vals[(i + 1) % n]))
        .sum();
    let raw = (total / std::f64::consts::TAU).round() as i64;
    if ccw {
        raw
    } else {
        -raw
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn circle(s: f64) -> Vec2 {
        Vec2::new((TAU * s).cos(), (TAU * s).sin())
    }

    #[test]
    fn identity_and_square_on_unit_circle() {
        let id = BoundaryField::new(circle, 16);
        assert_eq!(winding_degree(&id).unwrap().degree, 1);
        let sq = BoundaryField::new(
            |s| {
                let x = circle(s);
                Vec2::new(x[0] * x[0] - x[1] * x[1], 2.0 * x[0] * x[1])
            },
            16,
        );
        assert_eq!(winding_degree(&sq).unwrap().degree, 2);
    }

    #[test]
    fn vanishing_field_is_degenerate() {
        let bf = BoundaryField::new(|s| Vec2::new(circle(s)[0], 0.0), 64);
        assert!(matches!(
            winding_degree(&bf),
            Err(Error::DegenerateField { .. })
        ));
    }

    #[test]
    fn circle_maps() {
        let g2 = |t: f64| Vec2::new((2.0 * t).sin(), (2.0 * t).cos());
        assert_eq!(circle_map_degree(g2, TAU, false, 64).unwrap(), 2);
        assert_eq!(sign_change_degree(g2, TAU, false, 512).unwrap(), 2);
        let g1 = |t: f64| Vec2::new(t.cos(), t.sin());
        assert_eq!(circle_map_degree(g1, TAU, true, 64).unwrap(), 1);
        assert_eq!(sign_change_degree(g1, TAU, true, 512).unwrap(), 1);
        let c = |_t: f64| Vec2::new(1.0, 0.0);
        assert_eq!(circle_map_degree(c, TAU, true, 64).unwrap(), 0);
        let off = |t: f64| Vec2::new(t.sin(), 2.0 + t.cos());
        assert_eq!(sign_change_degree(off, TAU, true, 512).unwrap(), 0);
        assert_eq!(circle_map_degree(off, TAU, true, 64).unwrap(), 0);
        assert!(circle_map_degree(|t: f64| Vec2::new(t, 1.0), TAU, true, 64).is_err());
    }

    #[test]
    fn polyline_boundary_uses_counterclockwise_traversal() {
        let poly = Polyline::circle(Vec2::zeros(), 1.0, 256);
        let cw = Polyline::new(poly.pts.iter().rev().cloned().collect());
        let bf = BoundaryField::on_polyline(&cw, |x| *x, 32);
        assert_eq!(winding_degree(&bf).unwrap().degree, 1);
    }
}
