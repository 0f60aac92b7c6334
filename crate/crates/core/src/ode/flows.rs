//! Flows of the unperturbed and perturbed systems with their first and
//! second variational equations, integrated as augmented states.

use serde::{Deserialize, Serialize};

use super::dopri::{integrate, integrate_dense, IntegratorConfig, Trajectory};
use crate::error::Result;
use crate::system::{Mat2, SystemDef, Tensor3, Vec2};

/// State of a flow evaluation at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowPoint {
    pub t: f64,
    pub x: Vec2,
    /// First variational matrix `V[i][j] = dx_i/dxi_j`.
    pub v: Option<Mat2>,
    /// Second variational tensor `W[i][(j, k)] = d^2 x_i / dxi_j dxi_k`.
    pub w: Option<Tensor3>,
    /// `log det V` accumulated from the trace of the Jacobian.
    pub logdet: Option<f64>,
}

#[inline]
pub(crate) fn pack_v(x: &Vec2, v: &Mat2, logdet: f64) -> [f64; 7] {
    [
        x[0],
        x[1],
        v[(0, 0)],
        v[(0, 1)],
        v[(1, 0)],
        v[(1, 1)],
        logdet,
    ]
}

#[inline]
pub(crate) fn unpack_v(y: &[f64]) -> (Vec2, Mat2, f64) {
    (
        Vec2::new(y[0], y[1]),
        Mat2::new(y[2], y[3], y[4], y[5]),
        y[6],
    )
}

/// Right-hand side of `x' = psi(x) + eps*phi(t, x)`.
#[inline]
pub fn field(sys: &SystemDef, eps: f64, t: f64, x: &Vec2) -> Vec2 {
    if eps == 0.0 {
        sys.psi(x)
    } else {
        sys.psi(x) + eps * sys.phi(t, x)
    }
}

/// Jacobian in `x` of [`field`].
#[inline]
pub fn field_jac(sys: &SystemDef, eps: f64, t: f64, x: &Vec2) -> Mat2 {
    if eps == 0.0 {
        sys.psi_jac(x)
    } else {
        sys.psi_jac(x) + eps * sys.phi_jac_x(t, x)
    }
}

fn rhs2(sys: &SystemDef, eps: f64) -> impl FnMut(f64, &[f64; 2], &mut [f64; 2]) + '_ {
    move |t, y, dy| {
        let f = field(sys, eps, t, &Vec2::new(y[0], y[1]));
        dy[0] = f[0];
        dy[1] = f[1];
    }
}

fn rhs7(sys: &SystemDef, eps: f64) -> impl FnMut(f64, &[f64; 7], &mut [f64; 7]) + '_ {
    move |t, y, dy| {
        let (x, v, _) = unpack_v(y);
        let j = field_jac(sys, eps, t, &x);
        let f = field(sys, eps, t, &x);
        let dv = j * v;
        *dy = pack_v(&f, &dv, j.trace());
    }
}

fn rhs15(sys: &SystemDef) -> impl FnMut(f64, &[f64; 15], &mut [f64; 15]) + '_ {
    move |_t, y, dy| {
        let (x, v, _) = unpack_v(y);
        let j = sys.psi_jac(&x);
        let h = sys.psi_hess(&x);
        let w = unpack_w(y);
        let head = pack_v(&sys.psi(&x), &(j * v), j.trace());
        dy[..7].copy_from_slice(&head);
        for i in 0..2 {
            let dw = j[(i, 0)] * w[0] + j[(i, 1)] * w[1] + v.transpose() * h[i] * v;
            dy[7 + 4 * i] = dw[(0, 0)];
            dy[8 + 4 * i] = dw[(0, 1)];
            dy[9 + 4 * i] = dw[(1, 0)];
            dy[10 + 4 * i] = dw[(1, 1)];
        }
    }
}

fn unpack_w(y: &[f64; 15]) -> Tensor3 {
    [0, 1].map(|i| Mat2::new(y[7 + 4 * i], y[8 + 4 * i], y[9 + 4 * i], y[10 + 4 * i]))
}

/// `Omega(t1, t0, xi)` of the unperturbed system; `t1 < t0` integrates
/// backwards.
pub fn flow(sys: &SystemDef, xi: &Vec2, t0: f64, t1: f64, cfg: &IntegratorConfig) -> Result<Vec2> {
    flow_perturbed(sys, 0.0, xi, t0, t1, cfg)
}

/// Solution of `x' = psi(x) + eps*phi(t, x)` with `x(t0) = xi`, at `t1`.
pub fn flow_perturbed(
    sys: &SystemDef,
    eps: f64,
    xi: &Vec2,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec2> {
    let y = integrate(rhs2(sys, eps), t0, [xi[0], xi[1]], t1, cfg, 2)?;
    Ok(Vec2::new(y[0], y[1]))
}

/// Flow together with its first variational matrix.
pub fn flow_variational(
    sys: &SystemDef,
    xi: &Vec2,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<FlowPoint> {
    flow_perturbed_variational(sys, 0.0, xi, t0, t1, cfg)
}

/// Perturbed flow with the variational matrix of the perturbed field.
pub fn flow_perturbed_variational(
    sys: &SystemDef,
    eps: f64,
    xi: &Vec2,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<FlowPoint> {
    let y = integrate(
        rhs7(sys, eps),
        t0,
        pack_v(xi, &Mat2::identity(), 0.0),
        t1,
        cfg,
        2,
    )?;
    let (x, v, logdet) = unpack_v(&y);
    Ok(FlowPoint {
        t: t1,
        x,
        v: Some(v),
        w: None,
        logdet: Some(logdet),
    })
}

/// Flow with first and second variational data.
pub fn flow_second_variational(
    sys: &SystemDef,
    xi: &Vec2,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<FlowPoint> {
    let mut y0 = [0.0; 15];
    y0[..7].copy_from_slice(&pack_v(xi, &Mat2::identity(), 0.0));
    let y = integrate(rhs15(sys), t0, y0, t1, cfg, 2)?;
    let (x, v, logdet) = unpack_v(&y);
    Ok(FlowPoint {
        t: t1,
        x,
        v: Some(v),
        w: Some(unpack_w(&y)),
        logdet: Some(logdet),
    })
}

/// Dense trajectory of the (perturbed) flow.
pub fn trajectory(
    sys: &SystemDef,
    eps: f64,
    xi: &Vec2,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory<2>> {
    integrate_dense(rhs2(sys, eps), t0, [xi[0], xi[1]], t1, cfg, 2)
}

/// Dense trajectory of `[x, V, log det V]`.
pub fn variational_trajectory(
    sys: &SystemDef,
    eps: f64,
    xi: &Vec2,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory<7>> {
    integrate_dense(
        rhs7(sys, eps),
        t0,
        pack_v(xi, &Mat2::identity(), 0.0),
        t1,
        cfg,
        2,
    )
}

/// Dense trajectory of the flow with first and second variational data.
pub fn second_variational_trajectory(
    sys: &SystemDef,
    xi: &Vec2,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory<15>> {
    let mut y0 = [0.0; 15];
    y0[..7].copy_from_slice(&pack_v(xi, &Mat2::identity(), 0.0));
    integrate_dense(rhs15(sys), t0, y0, t1, cfg, 2)
}

/// Decode a dense sample of [`second_variational_trajectory`].
pub fn decode15(y: &[f64; 15]) -> (Vec2, Mat2, f64, Tensor3) {
    let (x, v, l) = unpack_v(y);
    (x, v, l, unpack_w(y))
}

/// Decode a dense sample of [`variational_trajectory`].
pub fn decode7(y: &[f64; 7]) -> (Vec2, Mat2, f64) {
    unpack_v(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::example_system;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn linear_rotation() -> SystemDef {
        SystemDef::new(["x2", "-x1"], ["0", "0"], BTreeMap::new(), 1.0).unwrap()
    }

    #[test]
    fn example_cycle_returns_after_two_pi() {
        let sys = example_system(0.1);
        let cfg = IntegratorConfig::default();
        let x = flow(&sys, &Vec2::new(0.0, 1.0), 0.0, 2.0 * PI, &cfg).unwrap();
        assert!((x - Vec2::new(0.0, 1.0)).norm() < 1e-8);
    }

    #[test]
    fn rotation_variational_matrix() {
        let sys = linear_rotation();
        let cfg = IntegratorConfig::default();
        let fp = flow_variational(&sys, &Vec2::new(1.0, 0.0), 0.0, PI, &cfg).unwrap();
        assert!((fp.v.unwrap() + Mat2::identity()).norm() < 1e-10);
        let fp = flow_variational(&sys, &Vec2::new(1.0, 0.0), 0.0, PI / 2.0, &cfg).unwrap();
        assert!((fp.x - Vec2::new(0.0, -1.0)).norm() < 1e-10);
        let same = flow_variational(&sys, &Vec2::new(1.0, 0.0), 2.0, 2.0, &cfg).unwrap();
        assert_eq!(same.v.unwrap(), Mat2::identity());
    }

    #[test]
    fn linear_second_variation_vanishes() {
        let sys = linear_rotation();
        let fp = flow_second_variational(
            &sys,
            &Vec2::new(0.3, 0.4),
            0.0,
            7.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        let w = fp.w.unwrap();
        assert!(w[0].norm() + w[1].norm() < 1e-12);
    }

    #[test]
    fn example_monodromy_eigenvalues() {
        let sys = example_system(0.0);
        let fp = flow_variational(
            &sys,
            &Vec2::new(0.0, 1.0),
            0.0,
            2.0 * PI,
            &IntegratorConfig::default(),
        )
        .unwrap();
        let v = fp.v.unwrap();
        let mu = (-4.0 * PI).exp();
        // eigenvalues from trace and Liouville determinant
        let det = fp.logdet.unwrap().exp();
        assert!((det - mu).abs() <= 1e-6 * mu);
        let tr = v.trace();
        assert!((tr - (1.0 + mu)).abs() < 1e-9);
    }

    #[test]
    fn perturbed_with_zero_eps_matches_flow() {
        let sys = example_system(0.1);
        let cfg = IntegratorConfig::default();
        let xi = Vec2::new(0.4, 0.9);
        let a = flow(&sys, &xi, 0.0, 3.0, &cfg).unwrap();
        let b = flow_perturbed(&sys, 0.0, &xi, 0.0, 3.0, &cfg).unwrap();
        assert!((a - b).norm() < 1e-9);
        let drift = SystemDef::new(["0", "0"], ["1", "0"], BTreeMap::new(), 1.0).unwrap();
        let x = flow_perturbed(&drift, 1.0, &Vec2::zeros(), 0.0, 3.0, &cfg).unwrap();
        assert!((x - Vec2::new(3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn perturbed_example_stays_near_circle() {
        let sys = example_system(0.1);
        let x = flow_perturbed(
            &sys,
            1e-3,
            &Vec2::new(0.0, 1.0),
            0.0,
            4.0 * PI,
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert!((x.norm() - 1.0).abs() < 0.05);
    }
}
