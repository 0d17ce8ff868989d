//! Trajectory-tracking model predictive control for systems whose state lives
//! on a manifold.
//!
//! The crate is layered bottom-up:
//!
//! * [`manifold`]: `⊞`/`⊟`/`⊕` for ℝⁿ, SO(2), SO(3), the two-sphere, a
//!   quadratic surface and products of these, with the manifold-specific
//!   linearization blocks `G_x`/`G_f`.
//! * [`dynamics`]: the canonical discrete model `x⁺ = x ⊕ Δt f(x, u)` and
//!   its linearized error system.
//! * [`qp`] and [`mpc`]: the condensed box-constrained QP and the per-tick
//!   controller.
//! * [`vehicles`]: a quadrotor on ℝ³×ℝ³×SO(3) and a ground vehicle on a
//!   curved surface, with their reference generators.
//! * [`sim`]: closed-loop rollouts and tracking metrics; [`scenarios`] holds
//!   the named presets.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod exec;
pub mod manifold;
pub mod mpc;
pub mod qp;
pub mod scenarios;
pub mod sim;
pub mod vehicles;

pub use error::{Error, Result};
pub use exec::ExecPolicy;
pub use manifold::{Manifold, Point, SurfaceModel};
