//! Canonical on-manifold systems and their linearized error dynamics.
//!
//! A system is written as `x_{k+1} = x_k ⊕ Δt f(x_k, u_k)`. Only `f` and its
//! two Jacobians are system specific; the manifold contributes `G_x`/`G_f`:
//!
//! ```text
//! F_x = G_x + Δt G_f ∂f/∂δx
//! F_u =       Δt G_f ∂f/∂δu
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::manifold::{Manifold, Point};

/// A discrete-time system in canonical form.
///
/// Implementations must be pure: the simulator and the controller may call
/// them from several threads at once.
pub trait CanonicalSystem: Send + Sync {
    fn manifold(&self) -> &Manifold;

    fn input_dim(&self) -> usize;

    /// The perturbation `f(x, u)`, of length `manifold().exo_dim()`.
    fn perturbation(&self, x: &Point, u: &DVector<f64>) -> DVector<f64>;

    /// `∂f(x ⊞ δx, u)/∂δx` at `δx = 0`; `l × n`.
    fn state_jacobian(&self, x: &Point, u: &DVector<f64>) -> DMatrix<f64>;

    /// `∂f(x, u + δu)/∂δu` at `δu = 0`; `l × m`.
    fn input_jacobian(&self, x: &Point, u: &DVector<f64>) -> DMatrix<f64>;
}

/// A reference state and the input that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint {
    pub state: Point,
    pub input: DVector<f64>,
}

/// Per-step matrices of the linearized error system
/// `δx_{k+1} ≈ F_x δx_k + F_u δu_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedErrorDynamics {
    pub fx: DMatrix<f64>,
    pub fu: DMatrix<f64>,
    pub dt: f64,
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")))
    }
}

/// One canonical step `x ⊕ Δt f(x, u)`.
pub fn step<S: CanonicalSystem + ?Sized>(sys: &S, x: &Point, u: &DVector<f64>, dt: f64) -> Result<Point> {
    check_dt(dt)?;
    check_len("input", sys.input_dim(), u.len())?;
    if u.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidConfig(format!("non-finite input {u:?}")));
    }
    sys.manifold().oplus(x, &(sys.perturbation(x, u) * dt))
}

/// `δx = x ⊟ x_d`.
pub fn error_state(m: &Manifold, x: &Point, x_d: &Point) -> Result<DVector<f64>> {
    m.boxminus(x, x_d)
}

/// Analytic `F_x`, `F_u` at a reference point.
pub fn linearize<S: CanonicalSystem + ?Sized>(
    sys: &S,
    reference: &ReferencePoint,
    dt: f64,
) -> Result<LinearizedErrorDynamics> {
    check_dt(dt)?;
    let m = sys.manifold();
    let (x_d, u_d) = (&reference.state, &reference.input);
    check_len("reference input", sys.input_dim(), u_d.len())?;
    let v = sys.perturbation(x_d, u_d) * dt;
    let gx = m.gx(x_d, &v)?;
    let gf = m.gf(x_d, &v)? * dt;
    let fx = gx + &gf * sys.state_jacobian(x_d, u_d);
    let fu = gf * sys.input_jacobian(x_d, u_d);
    Ok(LinearizedErrorDynamics { fx, fu, dt })
}

/// Full nonlinear error map
/// `((x_d ⊞ δx) ⊕ Δt f(x_d ⊞ δx, u_d + δu)) ⊟ (x_d ⊕ Δt f(x_d, u_d))`.
pub fn propagate_error<S: CanonicalSystem + ?Sized>(
    sys: &S,
    reference: &ReferencePoint,
    dt: f64,
    dx: &DVector<f64>,
    du: &DVector<f64>,
) -> Result<DVector<f64>> {
    let m = sys.manifold();
    let nominal = step(sys, &reference.state, &reference.input, dt)?;
    let x = m.boxplus(&reference.state, dx)?;
    let moved = step(sys, &x, &(&reference.input + du), dt)?;
    m.boxminus(&moved, &nominal)
}

/// Central-difference estimate of `(F_x, F_u)` from [`propagate_error`].
///
/// Used as an independent oracle for [`linearize`]. If probing leaves the
/// chart the step is shrunk tenfold once before giving up.
pub fn fd_error_jacobians<S: CanonicalSystem + ?Sized>(
    sys: &S,
    reference: &ReferencePoint,
    dt: f64,
    h: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(1e-8..=1e-4).contains(&h) {
        return Err(Error::InvalidConfig(format!("difference step {h} outside [1e-8, 1e-4]")));
    }
    match fd_once(sys, reference, dt, h) {
        Err(Error::OutOfChart(_)) => fd_once(sys, reference, dt, h / 10.0),
        other => other,
    }
}

fn fd_once<S: CanonicalSystem + ?Sized>(
    sys: &S,
    reference: &ReferencePoint,
    dt: f64,
    h: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = sys.manifold().dim();
    let mu = sys.input_dim();
    let zero_x = DVector::zeros(n);
    let zero_u = DVector::zeros(mu);
    let mut fx = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = h;
        let plus = propagate_error(sys, reference, dt, &e, &zero_u)?;
        let minus = propagate_error(sys, reference, dt, &-e, &zero_u)?;
        fx.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    let mut fu = DMatrix::zeros(n, mu);
    for j in 0..mu {
        let mut e = DVector::zeros(mu);
        e[j] = h;
        let plus = propagate_error(sys, reference, dt, &zero_x, &e)?;
        let minus = propagate_error(sys, reference, dt, &zero_x, &-e)?;
        fu.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    Ok((fx, fu))
}

type PerturbationFn = dyn Fn(&Point, &DVector<f64>) -> DVector<f64> + Send + Sync;
type JacobianFn = dyn Fn(&Point, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// A [`CanonicalSystem`] assembled from closures.
pub struct FnSystem {
    manifold: Manifold,
    input_dim: usize,
    f: Box<PerturbationFn>,
    dfdx: Box<JacobianFn>,
    dfdu: Box<JacobianFn>,
}

impl FnSystem {
    pub fn new(
        manifold: Manifold,
        input_dim: usize,
        f: impl Fn(&Point, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        dfdx: impl Fn(&Point, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        dfdu: impl Fn(&Point, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            manifold,
            input_dim,
            f: Box::new(f),
            dfdx: Box::new(dfdx),
            dfdu: Box::new(dfdu),
        }
    }

    /// `ẋ = A x + B u` on ℝⁿ.
    pub fn linear(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        let n = a.nrows();
        let m = b.ncols();
        let (a1, b1, a2, b2) = (a.clone(), b.clone(), a, b);
        Self::new(
            Manifold::Euclidean(n),
            m,
            move |x, u| match x {
                Point::Euclidean(v) => &a1 * v + &b1 * u,
                _ => panic!("linear system evaluated off ℝⁿ"),
            },
            move |_, _| a2.clone(),
            move |_, _| b2.clone(),
        )
    }
}

impl CanonicalSystem for FnSystem {
    fn manifold(&self) -> &Manifold {
        &self.manifold
    }
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn perturbation(&self, x: &Point, u: &DVector<f64>) -> DVector<f64> {
        (self.f)(x, u)
    }
    fn state_jacobian(&self, x: &Point, u: &DVector<f64>) -> DMatrix<f64> {
        (self.dfdx)(x, u)
    }
    fn input_jacobian(&self, x: &Point, u: &DVector<f64>) -> DMatrix<f64> {
        (self.dfdu)(x, u)
    }
}
