//! Ground vehicle on a quadratic terrain, state on 𝒮 × SO(2).
//!
//! The horizontal projection of the body velocity is scaled so that the
//! commanded speed `v_x` and yaw rate `ω_z` are measured along the surface:
//!
//! ```text
//! ṗ = α R e₁ v_x,   Ṙ = R⌊β ω_z⌋,
//! α = 1/√(1 + (gᵀRe₁)²),   β = 1/√(1 + gᵀg),   g = ∇F(p)
//! ```

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, RowVector2, Vector2, Vector3};

use crate::dynamics::{CanonicalSystem, ReferencePoint};
use crate::error::{Error, Result};
use crate::manifold::{lift, so2_exp, Manifold, Point, SurfaceModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UgvState {
    pub xy: Vector2<f64>,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ugv {
    manifold: Manifold,
    surface: SurfaceModel,
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

impl Ugv {
    pub fn new(surface: SurfaceModel) -> Self {
        Self {
            manifold: Manifold::Product(vec![Manifold::Surface(surface), Manifold::So2]),
            surface,
        }
    }

    pub fn surface(&self) -> &SurfaceModel {
        &self.surface
    }

    pub fn point(&self, s: &UgvState) -> Point {
        Point::Product(vec![
            Point::Surface(lift(&self.surface, s.xy)),
            Point::So2(so2_exp(s.heading)),
        ])
    }

    pub fn unpack(x: &Point) -> Result<(Vector3<f64>, Matrix2<f64>)> {
        match x {
            Point::Product(parts) => match parts.as_slice() {
                [Point::Surface(p), Point::So2(r)] => Ok((*p, *r)),
                _ => Err(Error::InvalidPoint(format!("not a ground-vehicle state: {x:?}"))),
            },
            _ => Err(Error::InvalidPoint(format!("not a ground-vehicle state: {x:?}"))),
        }
    }

    pub fn state(x: &Point) -> Result<UgvState> {
        let (p, r) = Self::unpack(x)?;
        Ok(UgvState {
            xy: p.xy(),
            heading: r[(1, 0)].atan2(r[(0, 0)]),
        })
    }

    /// Speed scale α at horizontal position `xy` with heading matrix `r`.
    pub fn alpha(&self, xy: &Vector2<f64>, r: &Matrix2<f64>) -> f64 {
        let slope = self.surface.gradient(xy).dot(&r.column(0));
        1.0 / (1.0 + slope * slope).sqrt()
    }

    /// Yaw-rate scale β at horizontal position `xy`.
    pub fn beta(&self, xy: &Vector2<f64>) -> f64 {
        1.0 / (1.0 + self.surface.gradient(xy).norm_squared()).sqrt()
    }

    fn parts(x: &Point) -> (Vector2<f64>, Matrix2<f64>) {
        let (p, r) = Self::unpack(x).expect("ground vehicle evaluated on a foreign point");
        (p.xy(), r)
    }
}

impl CanonicalSystem for Ugv {
    fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn perturbation(&self, x: &Point, u: &DVector<f64>) -> DVector<f64> {
        let (xy, r) = Self::parts(x);
        let dp = r.column(0) * (self.alpha(&xy, &r) * u[0]);
        DVector::from_vec(vec![dp.x, dp.y, self.beta(&xy) * u[1]])
    }

    fn state_jacobian(&self, x: &Point, u: &DVector<f64>) -> DMatrix<f64> {
        let (xy, r) = Self::parts(x);
        let g = self.surface.gradient(&xy);
        let hess = self.surface.hessian();
        let e1 = r.column(0).into_owned();
        let e2 = r.column(1).into_owned();
        let slope = g.dot(&e1);
        let a_den = (1.0 + slope * slope).powf(1.5);
        let alpha = 1.0 / (1.0 + slope * slope).sqrt();
        let dalpha_dp: RowVector2<f64> = -(slope / a_den) * e1.transpose() * hess;
        let dalpha_dr = -slope * g.dot(&e2) / a_den;
        let dbeta_dp: RowVector2<f64> = -g.transpose() * hess / (1.0 + g.norm_squared()).powf(1.5);

        let v = u[0];
        let mut j = DMatrix::zeros(3, 3);
        j.view_mut((0, 0), (2, 2)).copy_from(&(e1 * dalpha_dp * v));
        j.view_mut((0, 2), (2, 1)).copy_from(&((e1 * dalpha_dr + e2 * alpha) * v));
        j.view_mut((2, 0), (1, 2)).copy_from(&(dbeta_dp * u[1]));
        j
    }

    fn input_jacobian(&self, x: &Point, _u: &DVector<f64>) -> DMatrix<f64> {
        let (xy, r) = Self::parts(x);
        let mut j = DMatrix::zeros(3, 2);
        j.view_mut((0, 0), (2, 1)).copy_from(&(r.column(0) * self.alpha(&xy, &r)));
        j[(2, 1)] = self.beta(&xy);
        j
    }
}

/// Planar path parametrized by `λ` (arc length for lines and circles,
/// distance along the carrier axis for sinusoids).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Path2d {
    Line {
        start: Vector2<f64>,
        heading: f64,
    },
    /// Counter-clockwise circle starting at angle `phase`.
    Circle {
        center: Vector2<f64>,
        radius: f64,
        phase: f64,
    },
    Sine {
        origin: Vector2<f64>,
        heading: f64,
        amplitude: f64,
        wavelength: f64,
    },
}

impl Path2d {
    pub fn point(&self, lambda: f64) -> Vector2<f64> {
        match *self {
            Path2d::Line { start, heading } => start + Vector2::new(heading.cos(), heading.sin()) * lambda,
            Path2d::Circle { center, radius, phase } => {
                let a = phase + lambda / radius;
                center + Vector2::new(a.cos(), a.sin()) * radius
            }
            Path2d::Sine {
                origin,
                heading,
                amplitude,
                wavelength,
            } => {
                let along = Vector2::new(heading.cos(), heading.sin());
                let across = Vector2::new(-along.y, along.x);
                origin + along * lambda + across * (amplitude * (2.0 * PI * lambda / wavelength).sin())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Path2d::Line { start, heading } => start.iter().all(|c| c.is_finite()) && heading.is_finite(),
            Path2d::Circle { radius, .. } => radius > 0.0 && radius.is_finite(),
            Path2d::Sine { wavelength, amplitude, .. } => wavelength > 0.0 && amplitude.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("degenerate path {self:?}")))
        }
    }
}

/// Next parameter whose lifted point lies `spacing` away (in 3D) from `from`.
fn advance(path: &Path2d, surface: &SurfaceModel, lambda: f64, from: &Vector3<f64>, spacing: f64) -> Result<f64> {
    let dist = |l: f64| (lift(surface, path.point(l)) - from).norm();
    let mut lo = lambda;
    let mut hi = lambda + spacing;
    let mut grow = 0;
    while dist(hi) < spacing {
        lo = hi;
        hi = lambda + (hi - lambda) * 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::InfeasibleReference("path does not advance".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dist(mid) < spacing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `count` reference points along `path` lifted onto the terrain, spaced
/// `v_d Δt` apart in 3D. Headings follow the horizontal chords and the
/// inputs are chosen so that each point steps exactly onto the next.
pub fn ugv_reference(
    ugv: &Ugv,
    path: &Path2d,
    speed: f64,
    dt: f64,
    count: usize,
    omega_max: Option<f64>,
) -> Result<Vec<ReferencePoint>> {
    path.validate()?;
    if !(speed > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "speed and dt must be positive, got {speed} and {dt}"
        )));
    }
    let surface = ugv.surface();
    let spacing = speed * dt;
    let mut lambda = 0.0;
    let mut points = vec![lift(surface, path.point(0.0))];
    for _ in 0..count + 1 {
        lambda = advance(path, surface, lambda, points.last().unwrap(), spacing)?;
        points.push(lift(surface, path.point(lambda)));
    }
    let headings: Vec<f64> = points
        .windows(2)
        .map(|w| {
            let d = w[1].xy() - w[0].xy();
            d.y.atan2(d.x)
        })
        .collect();

    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let xy = points[k].xy();
        let r = so2_exp(headings[k]);
        let chord = (points[k + 1].xy() - xy).norm();
        let v_x = chord / (ugv.alpha(&xy, &r) * dt);
        let omega = wrap_angle(headings[k + 1] - headings[k]) / (dt * ugv.beta(&xy));
        if let Some(limit) = omega_max {
            if omega.abs() > limit {
                return Err(Error::InfeasibleReference(format!(
                    "yaw rate {omega:.3} rad/s exceeds {limit} at point {k}"
                )));
            }
        }
        out.push(ReferencePoint {
            state: Point::Product(vec![Point::Surface(points[k]), Point::So2(r)]),
            input: DVector::from_vec(vec![v_x, omega]),
        });
    }
    Ok(out)
}

/// Signed horizontal offset to the left of the reference heading.
pub fn lateral_offset(x: &Point, x_d: &Point) -> Result<f64> {
    let (p, _) = Ugv::unpack(x)?;
    let (pd, rd) = Ugv::unpack(x_d)?;
    Ok((p.xy() - pd.xy()).dot(&rd.column(1)))
}
