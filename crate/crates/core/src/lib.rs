//! Periodic solutions of periodically perturbed planar autonomous systems
//! `x' = psi(x) + eps*phi(t, x)` near a limit cycle of the unperturbed field.

pub mod bounds;
pub mod conditions;
pub mod config;
pub mod cycle;
pub mod degree;
pub mod error;
pub mod expr;
pub mod geom;
pub mod interp;
pub mod ode;
pub mod quad;
pub mod solver;
pub mod system;

pub use error::{Error, Result};
pub use system::{example_system, example_system_rate, Mat2, SystemDef, Tensor3, Vec2};
