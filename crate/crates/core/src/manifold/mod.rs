//! Manifold operations `⊞`, `⊟`, `⊕` and the manifold-specific linearization
//! blocks `G_x`, `G_f` for the primitive manifolds and their products.
//!
//! A [`Manifold`] is a descriptor: it owns the parameters of the space (sphere
//! radius, surface height field, product components) while a [`Point`] only
//! carries ambient coordinates. Every operation is a pure function of its
//! arguments.
//!
//! Perturbations come in two flavours. Tangent perturbations `δ` have the
//! manifold dimension `n` and drive `⊞`/`⊟`. Exogenous perturbations `δᵉ`
//! have dimension `l` and drive `⊕`; on the two-sphere `l = 3 ≠ n = 2`.

mod lie;
mod sphere;
mod surface;

pub use lie::{a_matrix, skew, so2_exp, so2_log, so3_exp, so3_log, vee, MAX_LOG_ANGLE, SMALL_ANGLE};
pub use sphere::s2_basis;
pub use surface::SurfaceModel;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use rand::Rng;

use crate::error::{check_len, Error, Result};

/// Tolerance used when validating that a point lies on its manifold.
pub const ON_MANIFOLD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Manifold {
    Euclidean(usize),
    So2,
    So3,
    Sphere2 { radius: f64 },
    Surface(SurfaceModel),
    Product(Vec<Manifold>),
}

/// A value on a [`Manifold`], stored in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    Euclidean(DVector<f64>),
    So2(Matrix2<f64>),
    So3(Matrix3<f64>),
    Sphere2(Vector3<f64>),
    Surface(Vector3<f64>),
    Product(Vec<Point>),
}

impl Point {
    /// Flattened ambient coordinates; matrices are written row-major.
    pub fn ambient(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.push_ambient(&mut out);
        out
    }

    fn push_ambient(&self, out: &mut Vec<f64>) {
        match self {
            Point::Euclidean(v) => out.extend(v.iter()),
            Point::So2(r) => out.extend(r.transpose().iter()),
            Point::So3(r) => out.extend(r.transpose().iter()),
            Point::Sphere2(v) | Point::Surface(v) => out.extend(v.iter()),
            Point::Product(parts) => parts.iter().for_each(|p| p.push_ambient(out)),
        }
    }

    /// Component `i` of a product point.
    pub fn component(&self, i: usize) -> Option<&Point> {
        match self {
            Point::Product(parts) => parts.get(i),
            _ => None,
        }
    }
}

fn kind_mismatch(m: &Manifold, x: &Point) -> Error {
    Error::InvalidPoint(format!("{x:?} is not a point of {m:?}"))
}

impl Manifold {
    /// Cartesian product of `components`.
    pub fn product(components: Vec<Manifold>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyProduct);
        }
        Ok(Manifold::Product(components))
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidConfig(format!("sphere radius must be positive, got {radius}")));
        }
        Ok(Manifold::Sphere2 { radius })
    }

    /// Tangent dimension `n`.
    pub fn dim(&self) -> usize {
        match self {
            Manifold::Euclidean(n) => *n,
            Manifold::So2 => 1,
            Manifold::So3 => 3,
            Manifold::Sphere2 { .. } | Manifold::Surface(_) => 2,
            Manifold::Product(c) => c.iter().map(Manifold::dim).sum(),
        }
    }

    /// Exogenous-perturbation dimension `l`.
    pub fn exo_dim(&self) -> usize {
        match self {
            Manifold::Sphere2 { .. } => 3,
            Manifold::Product(c) => c.iter().map(Manifold::exo_dim).sum(),
            m => m.dim(),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            Manifold::Euclidean(n) => *n,
            Manifold::So2 => 4,
            Manifold::So3 => 9,
            Manifold::Sphere2 { .. } | Manifold::Surface(_) => 3,
            Manifold::Product(c) => c.iter().map(Manifold::ambient_dim).sum(),
        }
    }

    /// Column labels for [`Point::ambient`], each prefixed with `prefix`.
    pub fn ambient_labels(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        self.push_labels(prefix, &mut out);
        out
    }

    fn push_labels(&self, prefix: &str, out: &mut Vec<String>) {
        match self {
            Manifold::Euclidean(n) => out.extend((0..*n).map(|i| format!("{prefix}{i}"))),
            Manifold::So2 => {
                out.extend(["00", "01", "10", "11"].iter().map(|s| format!("{prefix}r{s}")))
            }
            Manifold::So3 => out.extend(
                (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| format!("{prefix}r{i}{j}")),
            ),
            Manifold::Sphere2 { .. } | Manifold::Surface(_) => {
                out.extend(["x", "y", "z"].iter().map(|s| format!("{prefix}{s}")))
            }
            Manifold::Product(c) => {
                for (i, m) in c.iter().enumerate() {
                    m.push_labels(&format!("{prefix}{i}_"), out);
                }
            }
        }
    }

    /// Checks the membership invariants of `x`.
    pub fn validate(&self, x: &Point) -> Result<()> {
        match (self, x) {
            (Manifold::Euclidean(n), Point::Euclidean(v)) => {
                check_len("euclidean point", *n, v.len())?;
                if v.iter().all(|c| c.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::InvalidPoint(format!("non-finite coordinates {v:?}")))
                }
            }
            (Manifold::So2, Point::So2(r)) => {
                let ortho = (r.transpose() * r - Matrix2::identity()).amax();
                check_rotation(ortho, r.determinant())
            }
            (Manifold::So3, Point::So3(r)) => {
                let ortho = (r.transpose() * r - Matrix3::identity()).amax();
                check_rotation(ortho, r.determinant())
            }
            (Manifold::Sphere2 { radius }, Point::Sphere2(v)) => {
                if (v.norm() - radius).abs() < ON_MANIFOLD_TOL * radius {
                    Ok(())
                } else {
                    Err(Error::InvalidPoint(format!("|x| = {} but radius is {radius}", v.norm())))
                }
            }
            (Manifold::Surface(s), Point::Surface(p)) => {
                let gap = p.z - s.height(p.x, p.y);
                if gap.abs() < ON_MANIFOLD_TOL {
                    Ok(())
                } else {
                    Err(Error::InvalidPoint(format!("point is {gap:e} m off the surface")))
                }
            }
            (Manifold::Product(ms), Point::Product(ps)) => {
                check_len("product components", ms.len(), ps.len())?;
                ms.iter().zip(ps).try_for_each(|(m, p)| m.validate(p))
            }
            _ => Err(kind_mismatch(self, x)),
        }
    }

    /// `x ⊞ δ`.
    pub fn boxplus(&self, x: &Point, delta: &DVector<f64>) -> Result<Point> {
        check_len("tangent perturbation", self.dim(), delta.len())?;
        self.boxplus_slice(x, delta.as_slice())
    }

    fn boxplus_slice(&self, x: &Point, d: &[f64]) -> Result<Point> {
        match (self, x) {
            (Manifold::Euclidean(_), Point::Euclidean(v)) => {
                Ok(Point::Euclidean(v + DVector::from_column_slice(d)))
            }
            (Manifold::So2, Point::So2(r)) => Ok(Point::So2(r * so2_exp(d[0]))),
            (Manifold::So3, Point::So3(r)) => {
                let d = Vector3::from_column_slice(d);
                if d.norm() >= std::f64::consts::PI {
                    return Err(Error::OutOfChart(format!(
                        "SO(3) perturbation of norm {} leaves the chart",
                        d.norm()
                    )));
                }
                Ok(Point::So3(r * so3_exp(&d)))
            }
            (Manifold::Sphere2 { .. }, Point::Sphere2(v)) => {
                let d = Vector2::from_column_slice(d);
                if d.norm() >= std::f64::consts::PI {
                    return Err(Error::OutOfChart(format!(
                        "S2 perturbation of norm {} leaves the chart",
                        d.norm()
                    )));
                }
                Ok(Point::Sphere2(so3_exp(&(s2_basis(v) * d)) * v))
            }
            (Manifold::Surface(s), Point::Surface(p)) => {
                Ok(Point::Surface(lift(s, Vector2::new(p.x + d[0], p.y + d[1]))))
            }
            (Manifold::Product(ms), Point::Product(ps)) => {
                check_len("product components", ms.len(), ps.len())?;
                let mut offset = 0;
                let mut out = Vec::with_capacity(ms.len());
                for (m, p) in ms.iter().zip(ps) {
                    let n = m.dim();
                    out.push(m.boxplus_slice(p, &d[offset..offset + n])?);
                    offset += n;
                }
                Ok(Point::Product(out))
            }
            _ => Err(kind_mismatch(self, x)),
        }
    }

    /// `y ⊟ x`, the tangent perturbation taking `x` to `y`.
    pub fn boxminus(&self, y: &Point, x: &Point) -> Result<DVector<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        self.boxminus_into(y, x, &mut out)?;
        Ok(DVector::from_vec(out))
    }

    fn boxminus_into(&self, y: &Point, x: &Point, out: &mut Vec<f64>) -> Result<()> {
        match (self, y, x) {
            (Manifold::Euclidean(n), Point::Euclidean(a), Point::Euclidean(b)) => {
                check_len("euclidean point", *n, a.len())?;
                check_len("euclidean point", *n, b.len())?;
                out.extend((a - b).iter());
            }
            (Manifold::So2, Point::So2(a), Point::So2(b)) => {
                out.push(so2_log(&(b.transpose() * a)));
            }
            (Manifold::So3, Point::So3(a), Point::So3(b)) => {
                out.extend(so3_log(&(b.transpose() * a))?.iter());
            }
            (Manifold::Sphere2 { .. }, Point::Sphere2(a), Point::Sphere2(b)) => {
                out.extend(sphere_minus(a, b)?.iter());
            }
            (Manifold::Surface(_), Point::Surface(a), Point::Surface(b)) => {
                out.push(a.x - b.x);
                out.push(a.y - b.y);
            }
            (Manifold::Product(ms), Point::Product(ys), Point::Product(xs)) => {
                check_len("product components", ms.len(), ys.len())?;
                check_len("product components", ms.len(), xs.len())?;
                for ((m, a), b) in ms.iter().zip(ys).zip(xs) {
                    m.boxminus_into(a, b, out)?;
                }
            }
            _ => {
                return Err(Error::InvalidPoint(format!(
                    "boxminus operands {y:?} and {x:?} do not belong to {self:?}"
                )))
            }
        }
        Ok(())
    }

    /// `x ⊕ δᵉ`.
    pub fn oplus(&self, x: &Point, exo: &DVector<f64>) -> Result<Point> {
        check_len("exogenous perturbation", self.exo_dim(), exo.len())?;
        self.oplus_slice(x, exo.as_slice())
    }

    fn oplus_slice(&self, x: &Point, d: &[f64]) -> Result<Point> {
        match (self, x) {
            (Manifold::So3, Point::So3(r)) => Ok(Point::So3(r * so3_exp(&Vector3::from_column_slice(d)))),
            (Manifold::Sphere2 { .. }, Point::Sphere2(v)) => {
                Ok(Point::Sphere2(so3_exp(&Vector3::from_column_slice(d)) * v))
            }
            (Manifold::Product(ms), Point::Product(ps)) => {
                check_len("product components", ms.len(), ps.len())?;
                let mut offset = 0;
                let mut out = Vec::with_capacity(ms.len());
                for (m, p) in ms.iter().zip(ps) {
                    let l = m.exo_dim();
                    out.push(m.oplus_slice(p, &d[offset..offset + l])?);
                    offset += l;
                }
                Ok(Point::Product(out))
            }
            // R^n, SO(2) and the surface act through boxplus.
            _ => self.boxplus_slice(x, d),
        }
    }

    /// `G_x` evaluated at `x_d` with `v = Δt f(x_d, u_d)`; an `n × n` matrix.
    pub fn gx(&self, x_d: &Point, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len("exogenous perturbation", self.exo_dim(), v.len())?;
        self.g_blocks(x_d, v.as_slice(), Block::State)
    }

    /// `G_f` evaluated at `x_d` with `v = Δt f(x_d, u_d)`; an `n × l` matrix.
    pub fn gf(&self, x_d: &Point, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len("exogenous perturbation", self.exo_dim(), v.len())?;
        self.g_blocks(x_d, v.as_slice(), Block::Input)
    }

    fn g_blocks(&self, x_d: &Point, v: &[f64], which: Block) -> Result<DMatrix<f64>> {
        match (self, x_d) {
            (Manifold::Euclidean(n), Point::Euclidean(_)) => Ok(DMatrix::identity(*n, *n)),
            (Manifold::So2, Point::So2(_)) => Ok(DMatrix::identity(1, 1)),
            (Manifold::Surface(_), Point::Surface(_)) => Ok(DMatrix::identity(2, 2)),
            (Manifold::So3, Point::So3(_)) => {
                let v = Vector3::from_column_slice(v);
                let block = match which {
                    Block::State => so3_exp(&-v),
                    Block::Input => a_matrix(&v).transpose(),
                };
                Ok(to_dmatrix(&block))
            }
            (Manifold::Sphere2 { radius }, Point::Sphere2(x)) => {
                let v = Vector3::from_column_slice(v);
                let rot = so3_exp(&v);
                let moved = rot * x;
                let sx = skew(x);
                let lead = -(s2_basis(&moved).transpose() * rot * sx * sx) / (radius * radius);
                Ok(match which {
                    Block::State => to_dmatrix(&(lead * s2_basis(x))),
                    Block::Input => to_dmatrix(&(lead * a_matrix(&v).transpose())),
                })
            }
            (Manifold::Product(ms), Point::Product(ps)) => {
                check_len("product components", ms.len(), ps.len())?;
                let cols = match which {
                    Block::State => self.dim(),
                    Block::Input => self.exo_dim(),
                };
                let mut out = DMatrix::zeros(self.dim(), cols);
                let (mut row, mut col, mut off) = (0, 0, 0);
                for (m, p) in ms.iter().zip(ps) {
                    let l = m.exo_dim();
                    let block = m.g_blocks(p, &v[off..off + l], which)?;
                    out.view_mut((row, col), block.shape()).copy_from(&block);
                    row += block.nrows();
                    col += block.ncols();
                    off += l;
                }
                Ok(out)
            }
            _ => Err(kind_mismatch(self, x_d)),
        }
    }

    /// Draws a point uniformly-ish over the manifold; surfaces and Euclidean
    /// components are sampled in `[-scale, scale]`.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> Point {
        match self {
            Manifold::Euclidean(n) => {
                Point::Euclidean(DVector::from_fn(*n, |_, _| rng.random_range(-scale..=scale)))
            }
            Manifold::So2 => Point::So2(so2_exp(rng.random_range(-3.1..3.1))),
            Manifold::So3 => {
                let axis = random_unit(rng);
                Point::So3(so3_exp(&(axis * rng.random_range(0.0..3.1))))
            }
            Manifold::Sphere2 { radius } => Point::Sphere2(random_unit(rng) * *radius),
            Manifold::Surface(s) => Point::Surface(lift(
                s,
                Vector2::new(rng.random_range(-scale..=scale), rng.random_range(-scale..=scale)),
            )),
            Manifold::Product(ms) => Point::Product(ms.iter().map(|m| m.random_point(rng, scale)).collect()),
        }
    }
}

#[derive(Clone, Copy)]
enum Block {
    State,
    Input,
}

fn check_rotation(ortho: f64, det: f64) -> Result<()> {
    if ortho < ON_MANIFOLD_TOL && det > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidPoint(format!(
            "not a rotation: orthogonality defect {ortho:e}, det {det}"
        )))
    }
}

/// Lifts horizontal coordinates onto the surface.
pub fn lift(s: &SurfaceModel, xy: Vector2<f64>) -> Vector3<f64> {
    Vector3::new(xy.x, xy.y, s.height_at(&xy))
}

fn sphere_minus(y: &Vector3<f64>, x: &Vector3<f64>) -> Result<Vector2<f64>> {
    let axis = x.cross(y);
    let s = axis.norm();
    let c = x.dot(y);
    let r2 = x.norm_squared();
    if s < SMALL_ANGLE * r2 {
        if c > 0.0 {
            // θ / |x × y| → 1 / r² as y → x.
            return Ok(s2_basis(x).transpose() * (axis / r2));
        }
        return Err(Error::OutOfChart("S2 boxminus between antipodal points".into()));
    }
    let theta = s.atan2(c);
    Ok(s2_basis(x).transpose() * (axis * (theta / s)))
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn to_dmatrix<R: nalgebra::Dim, C: nalgebra::Dim, S>(m: &nalgebra::Matrix<f64, R, C, S>) -> DMatrix<f64>
where
    S: nalgebra::RawStorage<f64, R, C>,
{
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}
