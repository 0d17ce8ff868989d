//! Quadrotor on ℝ³ × ℝ³ × SO(3), inertial frame forward-right-down.
//!
//! ```text
//! ṗ = v,   v̇ = g − a_T R e₃,   Ṙ = R⌊ω⌋
//! ```
//!
//! with input `u = [a_T, ω]` (thrust acceleration, body rates).

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::dynamics::{CanonicalSystem, ReferencePoint};
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::manifold::{skew, so3_log, Manifold, Point};

pub const GRAVITY: f64 = 9.81;

/// Below this thrust the attitude of a flat output is undefined.
pub const MIN_THRUST: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadrotorState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub r: Matrix3<f64>,
}

impl QuadrotorState {
    pub fn to_point(&self) -> Point {
        Point::Product(vec![
            Point::Euclidean(DVector::from_column_slice(self.p.as_slice())),
            Point::Euclidean(DVector::from_column_slice(self.v.as_slice())),
            Point::So3(self.r),
        ])
    }

    pub fn from_point(x: &Point) -> Result<Self> {
        match x {
            Point::Product(parts) => match parts.as_slice() {
                [Point::Euclidean(p), Point::Euclidean(v), Point::So3(r)] if p.len() == 3 && v.len() == 3 => {
                    Ok(Self {
                        p: Vector3::from_column_slice(p.as_slice()),
                        v: Vector3::from_column_slice(v.as_slice()),
                        r: *r,
                    })
                }
                _ => Err(Error::InvalidPoint(format!("not a quadrotor state: {x:?}"))),
            },
            _ => Err(Error::InvalidPoint(format!("not a quadrotor state: {x:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadrotorInput {
    pub thrust: f64,
    pub rates: Vector3<f64>,
}

impl QuadrotorInput {
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.thrust, self.rates.x, self.rates.y, self.rates.z])
    }

    pub fn from_vector(u: &DVector<f64>) -> Self {
        Self {
            thrust: u[0],
            rates: Vector3::new(u[1], u[2], u[3]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quadrotor {
    manifold: Manifold,
    gravity: Vector3<f64>,
}

impl Default for Quadrotor {
    fn default() -> Self {
        Self::new(GRAVITY)
    }
}

impl Quadrotor {
    /// `gravity` is the magnitude; the vector points along +z (down).
    pub fn new(gravity: f64) -> Self {
        Self {
            manifold: Manifold::Product(vec![Manifold::Euclidean(3), Manifold::Euclidean(3), Manifold::So3]),
            gravity: Vector3::new(0.0, 0.0, gravity),
        }
    }

    pub fn gravity(&self) -> Vector3<f64> {
        self.gravity
    }

    fn unpack(x: &Point) -> QuadrotorState {
        QuadrotorState::from_point(x).expect("quadrotor evaluated on a foreign point")
    }
}

impl CanonicalSystem for Quadrotor {
    fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    fn input_dim(&self) -> usize {
        4
    }

    fn perturbation(&self, x: &Point, u: &DVector<f64>) -> DVector<f64> {
        let s = Self::unpack(x);
        let acc = self.gravity - s.r * Vector3::z() * u[0];
        DVector::from_vec(vec![s.v.x, s.v.y, s.v.z, acc.x, acc.y, acc.z, u[1], u[2], u[3]])
    }

    fn state_jacobian(&self, x: &Point, u: &DVector<f64>) -> DMatrix<f64> {
        let s = Self::unpack(x);
        let mut j = DMatrix::zeros(9, 9);
        j.view_mut((0, 3), (3, 3)).fill_with_identity();
        j.view_mut((3, 6), (3, 3)).copy_from(&(s.r * skew(&Vector3::z()) * u[0]));
        j
    }

    fn input_jacobian(&self, x: &Point, _u: &DVector<f64>) -> DMatrix<f64> {
        let s = Self::unpack(x);
        let mut j = DMatrix::zeros(9, 4);
        j.view_mut((3, 0), (3, 1)).copy_from(&(-s.r * Vector3::z()));
        j.view_mut((6, 1), (3, 3)).fill_with_identity();
        j
    }
}

/// How the reference heading is chosen along a flat trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YawPolicy {
    /// Body x-axis projected onto the world x-axis.
    Zero,
    /// Heading follows the path tangent.
    PathTangent,
}

/// Speed along the path as a function of time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedProfile {
    Constant(f64),
    /// Smoothstep ramp from rest to `max` over `duration`, then constant.
    Ramp { max: f64, duration: f64 },
}

impl SpeedProfile {
    pub fn speed(&self, t: f64) -> f64 {
        match *self {
            SpeedProfile::Constant(v) => v,
            SpeedProfile::Ramp { max, duration } => {
                let tau = (t / duration).clamp(0.0, 1.0);
                max * tau * tau * (3.0 - 2.0 * tau)
            }
        }
    }

    /// Arc length covered after `t` seconds.
    pub fn distance(&self, t: f64) -> f64 {
        match *self {
            SpeedProfile::Constant(v) => v * t,
            SpeedProfile::Ramp { max, duration } => {
                if t <= duration {
                    let tau = t / duration;
                    max * duration * (tau.powi(3) - 0.5 * tau.powi(4))
                } else {
                    0.5 * max * duration + max * (t - duration)
                }
            }
        }
    }
}

/// A position trajectory from which full references are derived.
pub trait FlatTrajectory: Sync {
    fn position(&self, t: f64) -> Vector3<f64>;
    /// Heading of the path tangent (rad), used by [`YawPolicy::PathTangent`].
    fn tangent_heading(&self, t: f64) -> f64;
}

/// Stationary hover.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hover {
    pub position: Vector3<f64>,
}

impl FlatTrajectory for Hover {
    fn position(&self, _t: f64) -> Vector3<f64> {
        self.position
    }
    fn tangent_heading(&self, _t: f64) -> f64 {
        0.0
    }
}

/// Horizontal circle around `center`, starting at `center + radius·e₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub speed: SpeedProfile,
}

impl FlatTrajectory for Circle {
    fn position(&self, t: f64) -> Vector3<f64> {
        let phi = self.speed.distance(t) / self.radius;
        self.center + Vector3::new(phi.cos(), phi.sin(), 0.0) * self.radius
    }
    fn tangent_heading(&self, t: f64) -> f64 {
        self.speed.distance(t) / self.radius + std::f64::consts::FRAC_PI_2
    }
}

/// Vertical loop in the y–z plane, entered at the bottom moving along +y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalLoop {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub speed: SpeedProfile,
}

impl FlatTrajectory for VerticalLoop {
    fn position(&self, t: f64) -> Vector3<f64> {
        let phi = self.speed.distance(t) / self.radius;
        self.center + Vector3::new(0.0, phi.sin(), phi.cos()) * self.radius
    }
    fn tangent_heading(&self, _t: f64) -> f64 {
        0.0
    }
}

/// Attitude whose body z-axis is `thrust_dir` and whose heading is `yaw`.
fn attitude(thrust_dir: &Vector3<f64>, yaw: f64) -> Result<Matrix3<f64>> {
    let heading = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let b2 = thrust_dir.cross(&heading);
    if b2.norm() < 1e-6 {
        return Err(Error::InfeasibleReference(
            "thrust axis parallel to the commanded heading".into(),
        ));
    }
    let b2 = b2.normalize();
    let b1 = b2.cross(thrust_dir);
    Ok(Matrix3::from_columns(&[b1, b2, *thrust_dir]))
}

/// Reference point `k` of a flat trajectory sampled every `dt`.
///
/// Velocities and accelerations are forward differences of the sampled
/// positions, so consecutive reference points satisfy the canonical Euler
/// step to round-off: `x_d^{k+1} = x_d^k ⊕ Δt f(x_d^k, u_d^k)`.
pub fn flat_reference(
    quad: &Quadrotor,
    traj: &dyn FlatTrajectory,
    yaw: YawPolicy,
    dt: f64,
    k: usize,
) -> Result<ReferencePoint> {
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    let t = |j: usize| (k + j) as f64 * dt;
    let p: Vec<Vector3<f64>> = (0..4).map(|j| traj.position(t(j))).collect();
    let v: Vec<Vector3<f64>> = (0..3).map(|j| (p[j + 1] - p[j]) / dt).collect();
    let heading = |j: usize| match yaw {
        YawPolicy::Zero => 0.0,
        YawPolicy::PathTangent => traj.tangent_heading(t(j)),
    };
    let g = quad.gravity();
    let frame = |j: usize| -> Result<(f64, Matrix3<f64>)> {
        let acc = (v[j + 1] - v[j]) / dt;
        let thrust_vec = g - acc;
        let thrust = thrust_vec.norm();
        if thrust < MIN_THRUST {
            return Err(Error::InfeasibleReference(format!(
                "free fall at t = {:.3} s (thrust {thrust:.3} m/s²)",
                t(j)
            )));
        }
        Ok((thrust, attitude(&(thrust_vec / thrust), heading(j))?))
    };
    let (thrust, r0) = frame(0)?;
    let (_, r1) = frame(1)?;
    let rates = so3_log(&(r0.transpose() * r1))? / dt;
    Ok(ReferencePoint {
        state: QuadrotorState { p: p[0], v: v[0], r: r0 }.to_point(),
        input: QuadrotorInput { thrust, rates }.to_vector(),
    })
}

/// `count` consecutive reference points, computed under `exec`.
pub fn flat_reference_sequence(
    quad: &Quadrotor,
    traj: &dyn FlatTrajectory,
    yaw: YawPolicy,
    dt: f64,
    count: usize,
    exec: ExecPolicy,
) -> Result<Vec<ReferencePoint>> {
    exec.map_range(count, |k| flat_reference(quad, traj, yaw, dt, k))
        .into_iter()
        .collect()
}

/// Reference point `k` on a horizontal circle centred at the origin.
pub fn quad_circle_reference(
    radius: f64,
    speed: SpeedProfile,
    yaw: YawPolicy,
    dt: f64,
    k: usize,
) -> Result<ReferencePoint> {
    if !(radius > 0.0) {
        return Err(Error::InvalidConfig(format!("circle radius must be positive, got {radius}")));
    }
    let circle = Circle {
        center: Vector3::zeros(),
        radius,
        speed,
    };
    flat_reference(&Quadrotor::default(), &circle, yaw, dt, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{fd_error_jacobians, linearize, step};
    use crate::manifold::so3_exp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hover_point() -> (Point, DVector<f64>) {
        let s = QuadrotorState { p: Vector3::new(1.0, 2.0, -3.0), v: Vector3::zeros(), r: Matrix3::identity() };
        (s.to_point(), QuadrotorInput { thrust: GRAVITY, rates: Vector3::zeros() }.to_vector())
    }

    #[test]
    fn hover_is_an_equilibrium() {
        let quad = Quadrotor::default();
        let (x, u) = hover_point();
        assert_eq!(quad.perturbation(&x, &u), DVector::zeros(9));
        assert_eq!(step(&quad, &x, &u, 0.01).unwrap(), x);
    }

    #[test]
    fn hover_jacobian_blocks() {
        let quad = Quadrotor::default();
        let (x, u) = hover_point();
        let j = quad.state_jacobian(&x, &u);
        let expected = skew(&Vector3::z()) * GRAVITY;
        assert!((j.view((3, 6), (3, 3)) - expected).amax() < 1e-15);
        let lin = linearize(&quad, &ReferencePoint { state: x, input: u }, 0.01).unwrap();
        assert!((lin.fx.view((0, 3), (3, 3)) - Matrix3::identity() * 0.01).amax() < 1e-15);
        assert!((lin.fx.view((3, 6), (3, 3)) - skew(&Vector3::z()) * 0.0981).amax() < 1e-15);
        assert!((lin.fu.view((3, 0), (3, 1)) + Vector3::z() * 0.01).amax() < 1e-15);
    }

    #[test]
    fn analytic_jacobians_match_oracle() {
        let quad = Quadrotor::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = quad.manifold().random_point(&mut rng, 3.0);
            let u = DVector::from_vec(vec![
                rng.random_range(0.0..30.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ]);
            let r = ReferencePoint { state: x, input: u };
            let lin = linearize(&quad, &r, 0.01).unwrap();
            let (fx, fu) = fd_error_jacobians(&quad, &r, 0.01, 1e-6).unwrap();
            assert!((fx - lin.fx).amax() < 1e-5);
            assert!((fu - lin.fu).amax() < 1e-5);
        }
    }

    #[test]
    fn zero_speed_circle_is_hover() {
        let r = quad_circle_reference(1.3, SpeedProfile::Constant(0.0), YawPolicy::Zero, 0.01, 7).unwrap();
        let s = QuadrotorState::from_point(&r.state).unwrap();
        assert_eq!(s.v, Vector3::zeros());
        assert!((s.r - Matrix3::identity()).amax() < 1e-15);
        assert!((r.input[0] - GRAVITY).abs() < 1e-12);
        assert!(r.input.rows(1, 3).amax() < 1e-12);
    }

    #[test]
    fn fast_circle_pulls_about_two_g() {
        // v²/r at 5 m/s on a 1.3 m circle.
        let centripetal: f64 = 5.0 * 5.0 / 1.3;
        assert!((centripetal - 19.23).abs() < 0.01);
        let r = quad_circle_reference(1.3, SpeedProfile::Constant(5.0), YawPolicy::Zero, 0.001, 500).unwrap();
        let expected = (centripetal.powi(2) + GRAVITY * GRAVITY).sqrt();
        assert!((r.input[0] - expected).abs() < 0.05);
    }

    #[test]
    fn reference_is_consistent_with_the_step() {
        let quad = Quadrotor::default();
        let circle = Circle {
            center: Vector3::new(0.0, 0.0, -1.0),
            radius: 1.3,
            speed: SpeedProfile::Ramp { max: 5.0, duration: 8.0 },
        };
        for yaw in [YawPolicy::Zero, YawPolicy::PathTangent] {
            let refs = flat_reference_sequence(&quad, &circle, yaw, 0.01, 1000, ExecPolicy::Parallel).unwrap();
            for pair in refs.windows(2) {
                let next = step(&quad, &pair[0].state, &pair[0].input, 0.01).unwrap();
                let gap = quad.manifold().boxminus(&next, &pair[1].state).unwrap();
                assert!(gap.norm() < 1e-3);
                assert!(gap.norm() < 1e-9, "discrete flatness should be exact, gap {}", gap.norm());
            }
        }
    }

    #[test]
    fn free_fall_is_infeasible() {
        // Dropping straight down at exactly g.
        struct Drop;
        impl FlatTrajectory for Drop {
            fn position(&self, t: f64) -> Vector3<f64> {
                Vector3::new(0.0, 0.0, 0.5 * GRAVITY * t * t)
            }
            fn tangent_heading(&self, _t: f64) -> f64 {
                0.0
            }
        }
        let e = flat_reference(&Quadrotor::default(), &Drop, YawPolicy::Zero, 0.01, 3);
        assert!(matches!(e, Err(Error::InfeasibleReference(_))));
    }

    #[test]
    fn attitude_builder_is_a_rotation() {
        let dir = so3_exp(&Vector3::new(0.4, -0.2, 0.0)) * Vector3::z();
        let r = attitude(&dir, 0.7).unwrap();
        assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        assert!((r.column(2) - dir).amax() < 1e-15);
    }
}
