use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

/// Quadratic height field `z = F(x, y) = γ₁x² + γ₂xy + γ₃y² + γ₄x + γ₅y + γ₆`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceModel {
    pub gamma: [f64; 6],
}

impl SurfaceModel {
    pub fn new(gamma: [f64; 6]) -> Result<Self> {
        if gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "surface coefficients must be finite, got {gamma:?}"
            )));
        }
        Ok(Self { gamma })
    }

    /// Level plane at height `z`.
    pub fn flat(z: f64) -> Self {
        Self {
            gamma: [0.0, 0.0, 0.0, 0.0, 0.0, z],
        }
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        let [g1, g2, g3, g4, g5, g6] = self.gamma;
        g1 * x * x + g2 * x * y + g3 * y * y + g4 * x + g5 * y + g6
    }

    pub fn height_at(&self, xy: &Vector2<f64>) -> f64 {
        self.height(xy.x, xy.y)
    }

    /// `(F'ₓ, F'ᵧ)` at `(x, y)`.
    pub fn gradient(&self, xy: &Vector2<f64>) -> Vector2<f64> {
        let [g1, g2, g3, g4, g5, _] = self.gamma;
        Vector2::new(
            2.0 * g1 * xy.x + g2 * xy.y + g4,
            g2 * xy.x + 2.0 * g3 * xy.y + g5,
        )
    }

    /// Constant Hessian of the quadratic.
    pub fn hessian(&self) -> Matrix2<f64> {
        let [g1, g2, g3, ..] = self.gamma;
        Matrix2::new(2.0 * g1, g2, g2, 2.0 * g3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_differences() {
        let s = SurfaceModel::new([0.3, -0.2, 0.1, 0.5, -0.4, 2.0]).unwrap();
        let p = Vector2::new(0.7, -1.3);
        let h = 1e-6;
        let gx = (s.height(p.x + h, p.y) - s.height(p.x - h, p.y)) / (2.0 * h);
        let gy = (s.height(p.x, p.y + h) - s.height(p.x, p.y - h)) / (2.0 * h);
        assert!((s.gradient(&p) - Vector2::new(gx, gy)).amax() < 1e-8);
        let dg = (s.gradient(&Vector2::new(p.x + h, p.y)) - s.gradient(&Vector2::new(p.x - h, p.y)))
            / (2.0 * h);
        assert!((s.hessian().column(0) - dg).amax() < 1e-8);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(SurfaceModel::new([f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }
}
