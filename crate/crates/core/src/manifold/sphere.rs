//! Tangent-plane basis `B(x)` for the two-sphere.
//!
//! The natural axis `eᵢ` closest to `x` (largest signed component) is rotated
//! onto `x/‖x‖` by the minimal rotation; the images of the remaining two axes,
//! taken in cyclic order, form the columns of `B(x)`.

use nalgebra::{Matrix3, Matrix3x2, Vector3};

use super::lie::skew;

pub fn s2_basis(x: &Vector3<f64>) -> Matrix3x2<f64> {
    let u = x.normalize();
    let mut i = 0;
    for j in 1..3 {
        if u[j] > u[i] {
            i = j;
        }
    }
    let mut e_i = Vector3::zeros();
    e_i[i] = 1.0;
    // u[i] >= 1/sqrt(3), so the rotation from e_i to u never degenerates.
    let k = e_i.cross(&u);
    let c = e_i.dot(&u);
    let kx = skew(&k);
    let rot = Matrix3::identity() + kx + kx * kx / (1.0 + c);
    Matrix3x2::from_columns(&[rot.column((i + 1) % 3), rot.column((i + 2) % 3)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn aligned_axis_gives_remaining_axes() {
        let b = s2_basis(&Vector3::new(0.0, 0.0, 2.5));
        assert_eq!(b.column(0), Vector3::x());
        assert_eq!(b.column(1), Vector3::y());
    }

    #[test]
    fn orthonormal_and_tangent_for_random_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let r = rng.random_range(0.1..10.0);
            let x = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize()
                * r;
            let b = s2_basis(&x);
            assert!((b.transpose() * b - nalgebra::Matrix2::identity()).amax() < 1e-12);
            assert!((b.transpose() * x).amax() < 1e-9 * r);
            assert_eq!(b, s2_basis(&x));
        }
    }

    #[test]
    fn negative_axis_is_handled() {
        let b = s2_basis(&Vector3::new(0.0, 0.0, -1.0));
        assert!((b.transpose() * b - nalgebra::Matrix2::identity()).amax() < 1e-12);
        assert!((b.transpose() * Vector3::new(0.0, 0.0, -1.0)).amax() < 1e-12);
    }
}
