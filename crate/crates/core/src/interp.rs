//! Periodic cubic Hermite interpolation on a uniform grid.

use serde::{Deserialize, Serialize};

/// Samples `values[i]` and `derivs[i]` at `i * period / n`, extended
/// periodically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicHermite {
    pub period: f64,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
}

impl PeriodicHermite {
    pub fn new(period: f64, values: Vec<f64>, derivs: Vec<f64>) -> Self {
        assert_eq!(values.len(), derivs.len());
        assert!(!values.is_empty() && period > 0.0);
        PeriodicHermite {
            period,
            values,
            derivs,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value and derivative at `t`.
    pub fn eval_with_deriv(&self, t: f64) -> (f64, f64) {
        let n = self.values.len();
        let h = self.period / n as f64;
        let s = (t / h).rem_euclid(n as f64);
        let i = (s.floor() as usize).min(n - 1);
        let u = s - i as f64;
        let j = (i + 1) % n;
        let (p0, p1) = (self.values[i], self.values[j]);
        let (m0, m1) = (self.derivs[i] * h, self.derivs[j] * h);
        let u2 = u * u;
        let u3 = u2 * u;
        let v = (2.0 * u3 - 3.0 * u2 + 1.0) * p0
            + (u3 - 2.0 * u2 + u) * m0
            + (-2.0 * u3 + 3.0 * u2) * p1
            + (u3 - u2) * m1;
        let d = ((6.0 * u2 - 6.0 * u) * p0
            + (3.0 * u2 - 4.0 * u + 1.0) * m0
            + (-6.0 * u2 + 6.0 * u) * p1
            + (3.0 * u2 - 2.0 * u) * m1)
            / h;
        (v, d)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_with_deriv(t).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn reproduces_trigonometric_samples() {
        let n = 256;
        let vals: Vec<f64> = (0..n).map(|i| (TAU * i as f64 / n as f64).sin()).collect();
        let ders: Vec<f64> = (0..n).map(|i| (TAU * i as f64 / n as f64).cos()).collect();
        let p = PeriodicHermite::new(TAU, vals, ders);
        for k in 0..1000 {
            let t = -7.0 + 0.0173 * k as f64;
            let (v, d) = p.eval_with_deriv(t);
            assert!((v - t.sin()).abs() < 1e-9);
            assert!((d - t.cos()).abs() < 1e-5);
        }
    }
}
