//! Adaptive integration of flows and their variational equations.

mod dopri;
mod flows;

pub use dopri::{integrate, integrate_dense, IntegratorConfig, Segment, Stepper, Trajectory};
pub use flows::{
    decode15, decode7, field, field_jac, flow, flow_perturbed, flow_perturbed_variational,
    flow_second_variational, flow_variational, second_variational_trajectory, trajectory,
    variational_trajectory, FlowPoint,
};
