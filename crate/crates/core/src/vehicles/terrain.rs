//! Least-squares quadratic terrain fits from scattered height samples.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::manifold::SurfaceModel;

/// Smallest singular value ratio accepted before the design is called degenerate.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceFit {
    pub model: SurfaceModel,
    /// Root-mean-square height residual of the samples.
    pub rms_residual: f64,
}

fn design_row(x: f64, y: f64) -> [f64; 6] {
    [x * x, x * y, y * y, x, y, 1.0]
}

/// Fits `z = γ₁x² + γ₂xy + γ₃y² + γ₄x + γ₅y + γ₆` to the samples.
///
/// Coordinates are centred and scaled before solving; a design whose
/// conditioning is worse than about 1e10 is rejected as degenerate
/// (collinear samples, too few distinct points).
pub fn fit_surface(points: &[Vector3<f64>]) -> Result<SurfaceFit> {
    if points.len() < 6 {
        return Err(Error::DegenerateSamples(format!(
            "need at least 6 samples, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::DegenerateSamples("non-finite sample".into()));
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector2::zeros(), |acc, p| acc + p.xy()) / n;
    let scale = points
        .iter()
        .map(|p| (p.xy() - mean).amax())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    let a = DMatrix::from_fn(points.len(), 6, |i, j| {
        let q = (points[i].xy() - mean) / scale;
        design_row(q.x, q.y)[j]
    });
    let b = DVector::from_iterator(points.len(), points.iter().map(|p| p.z));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > RANK_TOL * smax) {
        return Err(Error::DegenerateSamples(format!(
            "rank-deficient design (singular value ratio {:e})",
            smin / smax
        )));
    }
    let c = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::DegenerateSamples(e.to_string()))?;
    let rms_residual = ((&a * &c - &b).norm_squared() / n).sqrt();

    // Undo the normalization: with q = (p − m)/s the quadratic in p follows
    // by expanding each monomial.
    let (mx, my, s) = (mean.x, mean.y, scale);
    let (c1, c2, c3, c4, c5, c6) = (c[0] / (s * s), c[1] / (s * s), c[2] / (s * s), c[3] / s, c[4] / s, c[5]);
    let gamma = [
        c1,
        c2,
        c3,
        -2.0 * c1 * mx - c2 * my + c4,
        -c2 * mx - 2.0 * c3 * my + c5,
        c1 * mx * mx + c2 * mx * my + c3 * my * my - c4 * mx - c5 * my + c6,
    ];
    Ok(SurfaceFit {
        model: SurfaceModel::new(gamma)?,
        rms_residual,
    })
}

/// Fits a quadratic to the `k` samples closest (horizontally) to `center`.
pub fn fit_local_surface(points: &[Vector3<f64>], center: Vector2<f64>, k: usize) -> Result<SurfaceFit> {
    if k < 6 {
        return Err(Error::InvalidConfig(format!("local fit needs k >= 6, got {k}")));
    }
    let mut near: Vec<&Vector3<f64>> = points.iter().collect();
    near.sort_by(|a, b| {
        (a.xy() - center)
            .norm_squared()
            .total_cmp(&(b.xy() - center).norm_squared())
    });
    near.truncate(k);
    fit_surface(&near.into_iter().copied().collect::<Vec<_>>())
}

/// Parses whitespace-separated `x y z` lines; blank lines and `#` comments are skipped.
pub fn parse_samples(text: &str) -> Result<Vec<Vector3<f64>>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", no + 1)))?;
        if vals.len() != 3 {
            return Err(Error::Parse(format!(
                "line {}: expected 3 values, got {}",
                no + 1,
                vals.len()
            )));
        }
        out.push(Vector3::new(vals[0], vals[1], vals[2]));
    }
    Ok(out)
}

pub fn format_samples(points: &[Vector3<f64>]) -> String {
    let mut s = String::new();
    for p in points {
        writeln!(s, "{:e} {:e} {:e}", p.x, p.y, p.z).unwrap();
    }
    s
}

/// Regular `nx × ny` grid of horizontal positions spanning `[lo, hi]`.
pub fn grid(lo: Vector2<f64>, hi: Vector2<f64>, nx: usize, ny: usize) -> Vec<Vector2<f64>> {
    let at = |a: f64, b: f64, i: usize, n: usize| if n < 2 { 0.5 * (a + b) } else { a + (b - a) * i as f64 / (n - 1) as f64 };
    (0..ny)
        .flat_map(|j| (0..nx).map(move |i| Vector2::new(at(lo.x, hi.x, i, nx), at(lo.y, hi.y, j, ny))))
        .collect()
}

/// Heights of `surface` at `xy` with independent Gaussian noise of std `sigma`.
pub fn synthesize_samples(surface: &SurfaceModel, xy: &[Vector2<f64>], sigma: f64, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    xy.iter()
        .map(|p| Vector3::new(p.x, p.y, surface.height_at(p) + noise.sample(&mut rng)))
        .collect()
}

/// Largest absolute coefficient error of a noisy refit, one trial per seed.
pub fn coefficient_error_trials(
    surface: &SurfaceModel,
    xy: &[Vector2<f64>],
    sigma: f64,
    seeds: &[u64],
    exec: ExecPolicy,
) -> Result<Vec<f64>> {
    exec.map_slice(seeds, |&seed| {
        let fit = fit_surface(&synthesize_samples(surface, xy, sigma, seed))?;
        Ok(fit
            .model
            .gamma
            .iter()
            .zip(surface.gamma.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    })
    .into_iter()
    .collect()
}
