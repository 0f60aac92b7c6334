//! Composite Gauss–Legendre quadrature with panel doubling.

use std::sync::OnceLock;

use crate::system::Vec2;

const ORDER: usize = 16;

/// Nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
fn legendre_rule(n: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule
}

fn rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(ORDER))
}

/// Fixed composite rule with `panels` equal panels.
pub fn composite(f: &impl Fn(f64) -> Vec2, a: f64, b: f64, panels: usize) -> Vec2 {
    let h = (b - a) / panels as f64;
    let mut acc = Vec2::zeros();
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for &(x, w) in rule() {
            acc += w * f(c + 0.5 * h * x);
        }
    }
    acc * (0.5 * h)
}

/// Integrate a smooth vector function, doubling panels until two successive
/// results agree to `rtol` relative (or `atol` absolute).
pub fn integrate(f: impl Fn(f64) -> Vec2, a: f64, b: f64, rtol: f64, atol: f64) -> Vec2 {
    if a == b {
        return Vec2::zeros();
    }
    let mut panels = (((b - a).abs() / 2.0).ceil() as usize).max(2);
    let mut prev = composite(&f, a, b, panels);
    for _ in 0..12 {
        panels *= 2;
        let next = composite(&f, a, b, panels);
        if (next - prev).norm() <= rtol * next.norm() + atol {
            return next;
        }
        prev = next;
    }
    prev
}
