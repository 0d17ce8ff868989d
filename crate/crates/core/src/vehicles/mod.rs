//! Vehicle models and their reference generators.

pub mod quadrotor;
pub mod terrain;
pub mod ugv;

use nalgebra::Vector3;

use crate::dynamics::CanonicalSystem;
use crate::error::Result;
use crate::manifold::Point;

pub use quadrotor::{Quadrotor, QuadrotorInput, QuadrotorState, SpeedProfile, YawPolicy};
pub use terrain::{fit_local_surface, fit_surface, SurfaceFit};
pub use ugv::{Path2d, Ugv, UgvState};

/// A system with a physical position and attitude, used for tracking metrics.
pub trait Vehicle: CanonicalSystem {
    fn position(&self, x: &Point) -> Result<Vector3<f64>>;
    /// Geodesic attitude distance (rad) between `x` and `x_d`.
    fn attitude_error(&self, x: &Point, x_d: &Point) -> Result<f64>;
}

impl Vehicle for Quadrotor {
    fn position(&self, x: &Point) -> Result<Vector3<f64>> {
        Ok(QuadrotorState::from_point(x)?.p)
    }

    fn attitude_error(&self, x: &Point, x_d: &Point) -> Result<f64> {
        let r = QuadrotorState::from_point(x)?.r;
        let rd = QuadrotorState::from_point(x_d)?.r;
        // Angle from the trace; robust at π where the logarithm is refused.
        let c = ((rd.transpose() * r).trace() - 1.0) / 2.0;
        Ok(c.clamp(-1.0, 1.0).acos())
    }
}

impl Vehicle for Ugv {
    fn position(&self, x: &Point) -> Result<Vector3<f64>> {
        Ok(Ugv::unpack(x)?.0)
    }

    fn attitude_error(&self, x: &Point, x_d: &Point) -> Result<f64> {
        let a = Ugv::state(x)?.heading;
        let b = Ugv::state(x_d)?.heading;
        Ok(ugv::wrap_angle(a - b).abs())
    }
}
