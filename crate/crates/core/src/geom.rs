//! Closed polylines approximating the cycle, offset tubes around it, point
//! membership and Hausdorff distance.

use serde::{Deserialize, Serialize};

use crate::cycle::LimitCycle;
use crate::error::{Error, Result};
use crate::system::Vec2;

/// Points closer than this to a boundary count as on the boundary.
pub const BOUNDARY_BAND: f64 = 1e-12;

/// Closed polyline; the last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub pts: Vec<Vec2>,
}

fn seg_dist(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let l2 = ab.norm_squared();
    let u = if l2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(&ab) / l2).clamp(0.0, 1.0)
    };
    (p - (a + u * ab)).norm()
}

fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn segments_cross(p1: &Vec2, p2: &Vec2, q1: &Vec2, q2: &Vec2) -> bool {
    let d1 = cross(&(p2 - p1), &(q1 - p1));
    let d2 = cross(&(p2 - p1), &(q2 - p1));
    let d3 = cross(&(q2 - q1), &(p1 - q1));
    let d4 = cross(&(q2 - q1), &(p2 - q1));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

impl Polyline {
    pub fn new(pts: Vec<Vec2>) -> Self {
        Polyline { pts }
    }

    /// Regular polygon approximating the circle of `radius` about `center`.
    pub fn circle(center: Vec2, radius: f64, n: usize) -> Self {
        Polyline::new(
            (0..n)
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / n as f64;
                    center + radius * Vec2::new(a.cos(), a.sin())
                })
                .collect(),
        )
    }

    pub fn from_cycle(lc: &LimitCycle) -> Self {
        Polyline::new(lc.samples_x.clone())
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    fn seg(&self, i: usize) -> (&Vec2, &Vec2) {
        (&self.pts[i], &self.pts[(i + 1) % self.pts.len()])
    }

    pub fn signed_area(&self) -> f64 {
        let n = self.len();
        0.5 * (0..n)
            .map(|i| {
                let (a, b) = self.seg(i);
                cross(a, b)
            })
            .sum::<f64>()
    }

    pub fn is_ccw(&self) -> bool {
        self.signed_area() > 0.0
    }

    pub fn perimeter(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let (a, b) = self.seg(i);
                (b - a).norm()
            })
            .sum()
    }

    /// Same vertices traversed counterclockwise.
    pub fn counterclockwise(&self) -> Polyline {
        if self.is_ccw() {
            self.clone()
        } else {
            let mut pts = self.pts.clone();
            pts.reverse();
            Polyline::new(pts)
        }
    }

    /// Distance from `p` to the polyline.
    pub fn distance(&self, p: &Vec2) -> f64 {
        (0..self.len())
            .map(|i| {
                let (a, b) = self.seg(i);
                seg_dist(p, a, b)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Even-odd point-in-polygon test (boundary handling is left to callers).
    pub fn encloses(&self, p: &Vec2) -> bool {
        let mut inside = false;
        let n = self.len();
        for i in 0..n {
            let (a, b) = self.seg(i);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Winding number of the polyline about `p`.
    pub fn winding_number(&self, p: &Vec2) -> i64 {
        let mut w = 0i64;
        for i in 0..self.len() {
            let (a, b) = self.seg(i);
            if a[1] <= p[1] {
                if b[1] > p[1] && cross(&(b - a), &(p - a)) > 0.0 {
                    w += 1;
                }
            } else if b[1] <= p[1] && cross(&(b - a), &(p - a)) < 0.0 {
                w -= 1;
            }
        }
        w
    }

    /// True when no two non-adjacent edges cross.
    pub fn is_simple(&self) -> bool {
        let n = self.len();
        let bbox = |i: usize| {
            let (a, b) = self.seg(i);
            (
                a[0].min(b[0]),
                a[0].max(b[0]),
                a[1].min(b[1]),
                a[1].max(b[1]),
            )
        };
        let boxes: Vec<_> = (0..n).map(bbox).collect();
        for i in 0..n {
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (bi, bj) = (boxes[i], boxes[j]);
                if bi.1 < bj.0 || bj.1 < bi.0 || bi.3 < bj.2 || bj.3 < bi.2 {
                    continue;
                }
                let (p1, p2) = self.seg(i);
                let (q1, q2) = self.seg(j);
                if segments_cross(p1, p2, q1, q2) {
                    return false;
                }
            }
        }
        true
    }

    /// Unit outward normals at the vertices (central-difference tangents).
    pub fn outward_normals(&self) -> Vec<Vec2> {
        let n = self.len();
        let sign = if self.is_ccw() { 1.0 } else { -1.0 };
        (0..n)
            .map(|i| {
                let t = self.pts[(i + 1) % n] - self.pts[(i + n - 1) % n];
                sign * Vec2::new(t[1], -t[0]).normalize()
            })
            .collect()
    }

    /// Discrete curvature magnitude at each vertex (turning angle over
    /// local arc length); positive where the curve bends towards its
    /// interior.
    pub fn curvature(&self) -> Vec<f64> {
        let n = self.len();
        let sign = if self.is_ccw() { 1.0 } else { -1.0 };
        (0..n)
            .map(|i| {
                let a = self.pts[(i + n - 1) % n];
                let b = self.pts[i];
                let c = self.pts[(i + 1) % n];
                let (u, v) = (b - a, c - b);
                let turn = cross(&u, &v).atan2(u.dot(&v));
                sign * 2.0 * turn / (u.norm() + v.norm())
            })
            .collect()
    }

    /// Largest inward and outward offsets before the local radius of
    /// curvature is exceeded.
    pub fn reach(&self) -> (f64, f64) {
        let k = self.curvature();
        let inward = k.iter().cloned().fold(0.0, f64::max);
        let outward = -k.iter().cloned().fold(0.0, f64::min);
        let r = |k: f64| if k > 0.0 { 1.0 / k } else { f64::INFINITY };
        (r(inward), r(outward))
    }

    /// Normal offset: outward by `d` for `d > 0`, inward for `d < 0`.
    pub fn offset(&self, d: f64) -> Result<Polyline> {
        let (reach_in, reach_out) = self.reach();
        let safe = if d < 0.0 { reach_in } else { reach_out };
        if d.abs() >= 0.98 * safe {
            return Err(Error::Geometry(format!(
                "offset {d} exceeds the curve's reach; max safe |gamma| is about {:.4}",
                0.98 * safe
            )));
        }
        let normals = self.outward_normals();
        let pts: Vec<Vec2> = self
            .pts
            .iter()
            .zip(&normals)
            .map(|(p, nrm)| p + d * nrm)
            .collect();
        let out = Polyline::new(pts);
        if out.is_ccw() != self.is_ccw() || !out.is_simple() {
            return Err(Error::Geometry(format!(
                "offset {d} self-intersects; reduce |gamma| below {:.4}",
                0.98 * safe.min(d.abs())
            )));
        }
        Ok(out)
    }

    /// Point at normalized arc-length parameter `s` in `[0, 1)`.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let n = self.len();
        let total = self.perimeter();
        let mut target = s.rem_euclid(1.0) * total;
        for i in 0..n {
            let (a, b) = self.seg(i);
            let l = (b - a).norm();
            if target <= l || i == n - 1 {
                let u = if l == 0.0 { 0.0 } else { (target / l).min(1.0) };
                return a + u * (b - a);
            }
            target -= l;
        }
        self.pts[0]
    }

    /// `m` points equally spaced in arc length.
    pub fn resample(&self, m: usize) -> Vec<Vec2> {
        let n = self.len();
        let total = self.perimeter();
        let mut out = Vec::with_capacity(m);
        let mut i = 0;
        let mut acc = 0.0;
        for j in 0..m {
            let target = total * j as f64 / m as f64;
            loop {
                let (a, b) = self.seg(i);
                let l = (b - a).norm();
                if target <= acc + l || i == n - 1 {
                    let u = if l == 0.0 {
                        0.0
                    } else {
                        ((target - acc) / l).clamp(0.0, 1.0)
                    };
                    out.push(a + u * (b - a));
                    break;
                }
                acc += l;
                i += 1;
            }
        }
        out
    }

    /// CSV `x1,x2`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x1,x2\n");
        for p in &self.pts {
            s.push_str(&format!("{:.17e},{:.17e}\n", p[0], p[1]));
        }
        s
    }
}

/// Directed distance sup over `a` of the distance to `b`, with each edge of
/// `a` subdivided to the resolution of `b`.
fn directed_hausdorff(a: &Polyline, b: &Polyline) -> f64 {
    let spacing = (b.perimeter() / b.len().max(1) as f64).max(1e-12);
    let mut worst: f64 = 0.0;
    for i in 0..a.len() {
        let (p, q) = a.seg(i);
        let k = (((q - p).norm() / spacing).ceil() as usize).clamp(1, 256);
        for j in 0..k {
            let x = p + (q - p) * (j as f64 / k as f64);
            worst = worst.max(b.distance(&x));
        }
    }
    worst
}

/// Symmetric Hausdorff distance between two closed polylines.
pub fn hausdorff(a: &Polyline, b: &Polyline) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

/// Sets in [`contains`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Interior of the cycle.
    U,
    /// Interior of the offset curve.
    WGamma,
    /// Closed annulus between the cycle and the offset curve.
    BGamma,
}

/// The cycle curve, its offset and a sampling of the annulus between them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TubeSets {
    pub curve: Polyline,
    pub gamma: f64,
    pub pitch: f64,
    pub boundary_w: Polyline,
    pub annulus_samples: Vec<Vec2>,
    /// Orientation of `curve` as supplied.
    pub ccw: bool,
}

/// Build the offset set `W_gamma(U)` and sample the annulus between the
/// cycle and `boundary_w` with rings spaced at most `pitch` apart.
pub fn build_tubes(curve: &Polyline, gamma: f64, pitch: Option<f64>) -> Result<TubeSets> {
    if gamma == 0.0 || !gamma.is_finite() {
        return Err(Error::Geometry("gamma must be nonzero".into()));
    }
    if curve.len() < 3 || !curve.is_simple() {
        return Err(Error::Geometry(
            "cycle polyline is not a simple closed curve".into(),
        ));
    }
    let pitch = pitch.unwrap_or(gamma.abs() / 8.0);
    if !(pitch > 0.0) {
        return Err(Error::Geometry("pitch must be positive".into()));
    }
    let boundary_w = curve.offset(gamma)?;
    let rings = (gamma.abs() / pitch).ceil().max(1.0) as usize;
    let mut annulus_samples = Vec::new();
    for j in 0..=rings {
        let d = gamma * j as f64 / rings as f64;
        let ring = if j == 0 {
            curve.clone()
        } else if j == rings {
            boundary_w.clone()
        } else {
            curve.offset(d)?
        };
        let m = ((ring.perimeter() / pitch).ceil() as usize).max(8);
        annulus_samples.extend(ring.resample(m));
    }
    Ok(TubeSets {
        curve: curve.clone(),
        gamma,
        pitch,
        boundary_w,
        annulus_samples,
        ccw: curve.is_ccw(),
    })
}

/// Membership in `U`, `W_gamma(U)` (open, boundary band excluded) or the
/// closed annulus `B_gamma`.
pub fn contains(ts: &TubeSets, region: Region, p: &Vec2) -> bool {
    let open_in = |poly: &Polyline| poly.encloses(p) && poly.distance(p) > BOUNDARY_BAND;
    match region {
        Region::U => open_in(&ts.curve),
        Region::WGamma => open_in(&ts.boundary_w),
        Region::BGamma => {
            let on = |poly: &Polyline| poly.distance(p) <= BOUNDARY_BAND;
            if on(&ts.curve) || on(&ts.boundary_w) {
                return true;
            }
            ts.curve.encloses(p) != ts.boundary_w.encloses(p)
        }
    }
}
