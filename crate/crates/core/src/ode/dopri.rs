//! Dormand–Prince 5(4) with PI step control and the native 4th-order
//! continuous extension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances and limits for every integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Norm of the leading state pair that counts as blow-up.
    pub blowup: f64,
    pub dense_output: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 2_000_000,
            blowup: 1e8,
            dense_output: true,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.max_step > 0.0) {
            return Err(Error::Config(
                "integrator tolerances and max_step must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The same configuration with both tolerances divided by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        IntegratorConfig {
            rel_tol: self.rel_tol / factor,
            abs_tol: self.abs_tol / factor,
            ..*self
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
pub struct Segment<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    rc: [[f64; N]; 5],
}

impl<const N: usize> Segment<N> {
    /// Dense output at `t` (meaningful for `t` between `t0` and `t1`).
    pub fn eval(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        let th = if h == 0.0 { 0.0 } else { (t - self.t0) / h };
        let th1 = 1.0 - th;
        let rc = &self.rc;
        std::array::from_fn(|i| {
            rc[0][i] + th * (rc[1][i] + th1 * (rc[2][i] + th * (rc[3][i] + th1 * rc[4][i])))
        })
    }

    pub fn start(&self) -> [f64; N] {
        self.rc[0]
    }

    pub fn end(&self) -> [f64; N] {
        std::array::from_fn(|i| self.rc[0][i] + self.rc[1][i])
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.t0 <= self.t1 {
            (self.t0, self.t1)
        } else {
            (self.t1, self.t0)
        };
        t >= lo && t <= hi
    }
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        y[i] + h * s
    })
}

/// Adaptive stepper for `y' = f(t, y)` on a fixed-size state.
///
/// Only the first `guard` components enter the blow-up test; all components
/// are checked for finiteness.
pub struct Stepper<const N: usize, F> {
    f: F,
    cfg: IntegratorConfig,
    guard: usize,
    pub t: f64,
    pub y: [f64; N],
    k1: [f64; N],
    h: f64,
    err_old: f64,
    steps: usize,
    last: Option<Segment<N>>,
}

impl<const N: usize, F> Stepper<N, F>
where
    F: FnMut(f64, &[f64; N], &mut [f64; N]),
{
    pub fn new(mut f: F, t0: f64, y0: [f64; N], cfg: IntegratorConfig, guard: usize) -> Self {
        let mut k1 = [0.0; N];
        f(t0, &y0, &mut k1);
        Stepper {
            f,
            cfg,
            guard: guard.min(N),
            t: t0,
            y: y0,
            k1,
            h: 0.0,
            err_old: 1e-4,
            steps: 0,
            last: None,
        }
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.cfg.abs_tol + self.cfg.rel_tol * a.abs().max(b.abs())
    }

    /// Starting step estimate (Hairer's `hinit`).
    fn initial_step(&mut self, dir: f64, span: f64) -> f64 {
        let (mut dnf, mut dny) = (0.0, 0.0);
        for i in 0..N {
            let sk = self.scale(self.y[i], self.y[i]);
            dnf += (self.k1[i] / sk).powi(2);
            dny += (self.y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(self.cfg.max_step).min(span);
        let y1 = axpy(&self.y, dir * h, &[(1.0, &self.k1)]);
        let mut k2 = [0.0; N];
        (self.f)(self.t + dir * h, &y1, &mut k2);
        let mut der2 = 0.0;
        for i in 0..N {
            let sk = self.scale(self.y[i], self.y[i]);
            der2 += ((k2[i] - self.k1[i]) / sk).powi(2);
        }
        let der2 = der2.sqrt() / h;
        let der12 = der2.max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(0.2)
        };
        (100.0 * h).min(h1).min(self.cfg.max_step).min(span)
    }

    /// Advance one accepted step towards `t_end`; returns true on arrival.
    pub fn step(&mut self, t_end: f64) -> Result<bool> {
        let span = (t_end - self.t).abs();
        if span == 0.0 {
            return Ok(true);
        }
        let dir = if t_end > self.t { 1.0 } else { -1.0 };
        if self.h == 0.0 {
            self.h = self.initial_step(dir, span);
        }
        const BETA: f64 = 0.04;
        const EXPO1: f64 = 0.2 - BETA * 0.75;
        const SAFE: f64 = 0.9;
        const FAC_MIN: f64 = 0.2; // 1/facc1
        const FAC_MAX: f64 = 10.0; // 1/facc2
        let mut reject = false;
        loop {
            self.steps += 1;
            if self.steps > self.cfg.max_steps {
                return Err(Error::TooManySteps { t: self.t });
            }
            let mut h = self.h.min(self.cfg.max_step);
            let last = h >= span * (1.0 - 1e-12) || span - h < 1e-12 * self.t.abs().max(1.0);
            if last {
                h = span;
            }
            if h.abs() <= 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::StepUnderflow { t: self.t });
            }
            let hs = dir * h;
            let t = self.t;
            let y = self.y;
            let k1 = self.k1;
            let mut k2 = [0.0; N];
            let mut k3 = [0.0; N];
            let mut k4 = [0.0; N];
            let mut k5 = [0.0; N];
            let mut k6 = [0.0; N];
            let mut k7 = [0.0; N];
            let f = &mut self.f;
            f(t + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]), &mut k2);
            f(
                t + C3 * hs,
                &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]),
                &mut k3,
            );
            f(
                t + C4 * hs,
                &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
                &mut k4,
            );
            f(
                t + C5 * hs,
                &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
                &mut k5,
            );
            let tn = if last { t_end } else { t + hs };
            f(
                tn,
                &axpy(
                    &y,
                    hs,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                ),
                &mut k6,
            );
            let ynew = axpy(
                &y,
                hs,
                &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
            );
            f(tn, &ynew, &mut k7);

            let mut err = 0.0;
            let mut finite = true;
            for i in 0..N {
                let e = hs
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sk = self.scale(y[i], ynew[i]);
                err += (e / sk).powi(2);
                finite &= ynew[i].is_finite() && k7[i].is_finite();
            }
            let err = (err / N as f64).sqrt();
            if !finite || !err.is_finite() {
                // shrink and retry; persistent non-finite values end as underflow
                if h < 1e-12 * self.t.abs().max(1.0) {
                    return Err(Error::BlowUp { t: self.t });
                }
                self.h = h * 0.1;
                reject = true;
                continue;
            }
            let fac11 = err.powf(EXPO1);
            let fac = (fac11 / self.err_old.powf(BETA) / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let hnew = h / fac;
            if err <= 1.0 {
                self.err_old = err.max(1e-4);
                let mut dense = [[0.0; N]; 5];
                for i in 0..N {
                    let d = ynew[i] - y[i];
                    let bspl = hs * k1[i] - d;
                    dense[0][i] = y[i];
                    dense[1][i] = d;
                    dense[2][i] = bspl;
                    dense[3][i] = d - hs * k7[i] - bspl;
                    dense[4][i] = hs
                        * (D1 * k1[i]
                            + D3 * k3[i]
                            + D4 * k4[i]
                            + D5 * k5[i]
                            + D6 * k6[i]
                            + D7 * k7[i]);
                }
                self.last = Some(Segment {
                    t0: t,
                    t1: tn,
                    rc: dense,
                });
                self.t = tn;
                self.y = ynew;
                self.k1 = k7;
                let norm: f64 = ynew[..self.guard].iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > self.cfg.blowup {
                    return Err(Error::BlowUp { t: tn });
                }
                self.h = if reject { hnew.min(h) } else { hnew };
                return Ok(last);
            }
            self.h = h / (fac11 / SAFE).min(1.0 / FAC_MIN);
            reject = true;
        }
    }

    /// The segment produced by the last accepted step.
    pub fn segment(&self) -> Option<&Segment<N>> {
        self.last.as_ref()
    }

    pub fn take_segment(&mut self) -> Option<Segment<N>> {
        self.last.take()
    }
}

/// Dense trajectory assembled from accepted steps, ordered by time of
/// integration (forward or backward).
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub segments: Vec<Segment<N>>,
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
}

impl<const N: usize> Trajectory<N> {
    pub fn end(&self) -> [f64; N] {
        self.segments.last().map(Segment::end).unwrap_or(self.y0)
    }

    /// Dense value at `t`; times outside the span are clamped.
    pub fn eval(&self, t: f64) -> [f64; N] {
        if self.segments.is_empty() {
            return self.y0;
        }
        let forward = self.t1 >= self.t0;
        let key = |s: &Segment<N>| if forward { s.t1 } else { -s.t1 };
        let tk = if forward { t } else { -t };
        let idx = self.segments.partition_point(|s| key(s) < tk);
        let seg = &self.segments[idx.min(self.segments.len() - 1)];
        let (lo, hi) = if forward {
            (self.t0, self.t1)
        } else {
            (self.t1, self.t0)
        };
        seg.eval(t.clamp(lo, hi))
    }

    /// Accepted step end times (including the initial time).
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.t0).chain(self.segments.iter().map(|s| s.t1))
    }
}

/// Integrate from `t0` to `t1`, returning only the final state.
pub fn integrate<const N: usize, F>(
    f: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    cfg: &IntegratorConfig,
    guard: usize,
) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N], &mut [f64; N]),
{
    if t0 == t1 {
        return Ok(y0);
    }
    let mut st = Stepper::new(f, t0, y0, *cfg, guard);
    while !st.step(t1)? {}
    Ok(st.y)
}

/// Integrate from `t0` to `t1`, keeping every step's dense output.
pub fn integrate_dense<const N: usize, F>(
    f: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    cfg: &IntegratorConfig,
    guard: usize,
) -> Result<Trajectory<N>>
where
    F: FnMut(f64, &[f64; N], &mut [f64; N]),
{
    let mut traj = Trajectory {
        segments: Vec::new(),
        t0,
        t1,
        y0,
    };
    if t0 == t1 {
        return Ok(traj);
    }
    let mut st = Stepper::new(f, t0, y0, *cfg, guard);
    loop {
        let done = st.step(t1)?;
        if let Some(seg) = st.take_segment() {
            traj.segments.push(seg);
        }
        if done {
            return Ok(traj);
        }
    }
}
