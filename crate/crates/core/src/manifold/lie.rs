//! Exp/Log maps of SO(2) and SO(3) plus the rotation-vector Jacobian `A(θ)`.

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::error::{Error, Result};

/// Below this rotation angle the closed forms switch to Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-7;

/// Largest angle `so3_log` accepts; the cut locus sits at π.
pub const MAX_LOG_ANGLE: f64 = std::f64::consts::PI - 1e-4;

/// Skew-symmetric matrix with `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] applied to the skew part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

pub fn so3_exp(delta: &Vector3<f64>) -> Matrix3<f64> {
    let theta = delta.norm();
    let k = skew(delta);
    let k2 = k * k;
    if theta < SMALL_ANGLE {
        return Matrix3::identity() + k + 0.5 * k2;
    }
    Matrix3::identity() + k * (theta.sin() / theta) + k2 * ((1.0 - theta.cos()) / (theta * theta))
}

/// Rotation vector of `r`.
///
/// The angle is recovered with `atan2(sin, cos)` instead of `acos` so that
/// rotations within a few micro-radians of the identity keep full precision.
pub fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let w = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let cos_a = 0.5 * (r.trace() - 1.0);
    let sin_a = 0.5 * w.norm();
    let alpha = sin_a.atan2(cos_a);
    if alpha > MAX_LOG_ANGLE {
        return Err(Error::OutOfChart(format!(
            "SO(3) log at angle {alpha:.6} rad (trace {:.6}) is too close to the cut locus",
            r.trace()
        )));
    }
    if alpha < SMALL_ANGLE {
        return Ok(0.5 * w * (1.0 + alpha * alpha / 6.0));
    }
    Ok(w * (alpha / (2.0 * sin_a)))
}

pub fn so2_exp(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

pub fn so2_log(r: &Matrix2<f64>) -> f64 {
    r[(1, 0)].atan2(r[(0, 0)])
}

/// `A(θ)`, the matrix with `Log(Exp(-θ) Exp(θ + δ)) ≈ A(θ)ᵀ δ` to first order.
pub fn a_matrix(theta: &Vector3<f64>) -> Matrix3<f64> {
    let t = theta.norm();
    let k = skew(theta);
    let k2 = k * k;
    if t < SMALL_ANGLE {
        return Matrix3::identity() + 0.5 * k + k2 / 6.0;
    }
    let t2 = t * t;
    Matrix3::identity() + k * ((1.0 - t.cos()) / t2) + k2 * ((1.0 - t.sin() / t) / t2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    /// Truncated power series of the matrix exponential.
    fn series_exp(k: &Matrix3<f64>, terms: usize) -> Matrix3<f64> {
        let mut out = Matrix3::identity();
        let mut term = Matrix3::identity();
        for i in 1..terms {
            term = term * k / i as f64;
            out += term;
        }
        out
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(so3_exp(&Vector3::zeros()), Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_x_matches_series() {
        let d = Vector3::new(FRAC_PI_2, 0.0, 0.0);
        let oracle = series_exp(&skew(&d), 20);
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert!((oracle - expected).amax() < 1e-9);
        assert!((so3_exp(&d) - expected).amax() < 1e-12);
    }

    #[test]
    fn log_inverts_exp() {
        for d in [
            Vector3::new(0.3, -0.2, 0.9),
            Vector3::new(1e-9, 2e-9, 0.0),
            Vector3::new(0.0, 0.0, 3.0),
            Vector3::new(2e-6, -1e-6, 3e-6),
        ] {
            let back = so3_log(&so3_exp(&d)).unwrap();
            assert!((back - d).amax() < 1e-12, "{d:?} -> {back:?}");
        }
    }

    #[test]
    fn log_rejects_half_turn() {
        let r = so3_exp(&Vector3::new(std::f64::consts::PI, 0.0, 0.0));
        assert!(matches!(so3_log(&r), Err(Error::OutOfChart(_))));
    }

    #[test]
    fn so2_roundtrip() {
        assert!((so2_log(&so2_exp(0.7)) - 0.7).abs() < 1e-15);
        assert!((so2_exp(0.2) * so2_exp(-0.2) - Matrix2::identity()).amax() < 1e-15);
    }

    #[test]
    fn a_matrix_limits() {
        assert_eq!(a_matrix(&Vector3::zeros()), Matrix3::identity());
        for t in [1e-4, 1e-6] {
            let theta = Vector3::new(t, -t, 0.5 * t);
            let err = (a_matrix(&theta) - Matrix3::identity()).amax();
            assert!(err <= theta.norm(), "error {err} not O(|θ|) at {t}");
        }
        let a = a_matrix(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        assert!(a.iter().all(|x| x.is_finite()));
        let sv = a.svd(false, false).singular_values;
        assert!(sv.max() / sv.min() < 10.0);
    }

    #[test]
    fn a_matrix_matches_finite_difference() {
        let theta = Vector3::new(0.5, 0.0, 0.0);
        let h = 1e-6;
        let base = so3_exp(&-theta);
        let mut fd = Matrix3::zeros();
        for j in 0..3 {
            let mut e = Vector3::zeros();
            e[j] = h;
            let plus = so3_log(&(base * so3_exp(&(theta + e)))).unwrap();
            let minus = so3_log(&(base * so3_exp(&(theta - e)))).unwrap();
            fd.set_column(j, &((plus - minus) / (2.0 * h)));
        }
        assert!((fd - a_matrix(&theta).transpose()).amax() < 1e-6);
    }
}
