//! Condensed error-state MPC.
//!
//! Stacking the linearized error system over the horizon gives
//! `δX = M δU + H δx₀`, which turns the tracking problem into a dense QP in
//! `δU` with box bounds `u_min − u_dᵏ ≤ δuₖ ≤ u_max − u_dᵏ`. The QP is posed
//! with the half-scaled objective
//!
//! ```text
//! J(δU) = ½ δUᵀ (MᵀQ̄M + R̄) δU + δx₀ᵀ HᵀQ̄M δU
//! ```
//!
//! whose minimizer is that of the stacked tracking cost.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::dynamics::{linearize, CanonicalSystem, LinearizedErrorDynamics, ReferencePoint};
use crate::error::{check_len, Error, Result};
use crate::exec::ExecPolicy;
use crate::manifold::Point;
use crate::qp::{BoxQp, QpOptions, QpSolution};

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Stage state weight, applied to δx₁ … δx_{N−1}.
    pub q: DMatrix<f64>,
    /// Stage input weight.
    pub r: DMatrix<f64>,
    /// Terminal weight; `q` when absent.
    pub terminal: Option<DMatrix<f64>>,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// How the horizon is linearized.
    pub exec: ExecPolicy,
}

fn check_spd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidConfig(format!("{name} must be square")));
    }
    if (m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::InvalidConfig(format!("{name} must be symmetric")));
    }
    if Cholesky::new(m.clone()).is_none() {
        return Err(Error::IllConditioned(format!("{name} is not positive definite")));
    }
    Ok(())
}

impl MpcConfig {
    pub fn terminal_weight(&self) -> &DMatrix<f64> {
        self.terminal.as_ref().unwrap_or(&self.q)
    }

    pub fn qp_options(&self) -> QpOptions {
        QpOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
        }
    }

    /// Checks the configuration on its own.
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidConfig("solver tolerance and iteration cap must be positive".into()));
        }
        check_len("u_max", self.u_min.len(), self.u_max.len())?;
        for i in 0..self.u_min.len() {
            if !(self.u_min[i] < self.u_max[i]) {
                return Err(Error::InvalidConfig(format!(
                    "input channel {i}: u_min ({}) must be strictly below u_max ({})",
                    self.u_min[i], self.u_max[i]
                )));
            }
        }
        check_spd("Q", &self.q)?;
        check_spd("R", &self.r)?;
        check_spd("P", self.terminal_weight())?;
        Ok(())
    }

    /// Checks shapes against a system with tangent dimension `n` and `m` inputs.
    pub fn validate_for(&self, n: usize, m: usize) -> Result<()> {
        self.validate()?;
        check_len("Q size", n, self.q.nrows())?;
        check_len("P size", n, self.terminal_weight().nrows())?;
        check_len("R size", m, self.r.nrows())?;
        check_len("input bounds", m, self.u_min.len())
    }
}

/// Stacked prediction matrices and weights of one MPC tick.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedQp {
    /// `(N·n) × (N·m)`, block lower-triangular.
    pub m: DMatrix<f64>,
    /// `(N·n) × n`.
    pub h: DMatrix<f64>,
    pub q_bar: DMatrix<f64>,
    pub r_bar: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

/// Assembles `M`, `H`, the block weights and the shifted input bounds.
pub fn build_condensed(
    dynamics: &[LinearizedErrorDynamics],
    reference_inputs: &[DVector<f64>],
    cfg: &MpcConfig,
) -> Result<CondensedQp> {
    let horizon = cfg.horizon;
    check_len("linearized horizon", horizon, dynamics.len())?;
    check_len("reference inputs", horizon, reference_inputs.len())?;
    let n = dynamics[0].fx.nrows();
    let mu = dynamics[0].fu.ncols();
    for d in dynamics {
        check_len("F_x rows", n, d.fx.nrows())?;
        check_len("F_x cols", n, d.fx.ncols())?;
        check_len("F_u rows", n, d.fu.nrows())?;
        check_len("F_u cols", mu, d.fu.ncols())?;
    }
    check_len("Q size", n, cfg.q.nrows())?;
    check_len("R size", mu, cfg.r.nrows())?;
    check_len("input bounds", mu, cfg.u_min.len())?;

    let mut m = DMatrix::zeros(horizon * n, horizon * mu);
    let mut h = DMatrix::zeros(horizon * n, n);
    h.view_mut((0, 0), (n, n)).copy_from(&dynamics[0].fx);
    for (i, d) in dynamics.iter().enumerate() {
        m.view_mut((i * n, i * mu), (n, mu)).copy_from(&d.fu);
        if i > 0 {
            let fx = &d.fx;
            let prev_h = h.view(((i - 1) * n, 0), (n, n)).into_owned();
            h.view_mut((i * n, 0), (n, n)).copy_from(&(fx * prev_h));
            let prev = m.view(((i - 1) * n, 0), (n, i * mu)).into_owned();
            m.view_mut((i * n, 0), (n, i * mu)).copy_from(&(fx * prev));
        }
    }

    let mut q_bar = DMatrix::zeros(horizon * n, horizon * n);
    for i in 0..horizon {
        let w = if i + 1 == horizon { cfg.terminal_weight() } else { &cfg.q };
        q_bar.view_mut((i * n, i * n), (n, n)).copy_from(w);
    }
    let mut r_bar = DMatrix::zeros(horizon * mu, horizon * mu);
    let mut lower = DVector::zeros(horizon * mu);
    let mut upper = DVector::zeros(horizon * mu);
    for (i, u_d) in reference_inputs.iter().enumerate() {
        check_len("reference input", mu, u_d.len())?;
        r_bar.view_mut((i * mu, i * mu), (mu, mu)).copy_from(&cfg.r);
        lower.rows_mut(i * mu, mu).copy_from(&(&cfg.u_min - u_d));
        upper.rows_mut(i * mu, mu).copy_from(&(&cfg.u_max - u_d));
    }
    Ok(CondensedQp { m, h, q_bar, r_bar, lower, upper })
}

impl CondensedQp {
    pub fn state_dim(&self) -> usize {
        self.h.ncols()
    }

    pub fn horizon(&self) -> usize {
        self.h.nrows() / self.h.ncols()
    }

    /// `MᵀQ̄M + R̄`.
    pub fn hessian(&self) -> DMatrix<f64> {
        let qm = &self.q_bar * &self.m;
        let mut k = self.m.transpose() * qm + &self.r_bar;
        // symmetrize away round-off so the factorization sees an exact SPD matrix
        let kt = k.transpose();
        k += kt;
        k * 0.5
    }

    /// `δX = M δU + H δx₀`.
    pub fn predict(&self, du: &DVector<f64>, dx0: &DVector<f64>) -> DVector<f64> {
        &self.m * du + &self.h * dx0
    }

    pub fn box_qp(&self, dx0: &DVector<f64>) -> Result<BoxQp> {
        check_len("initial error", self.state_dim(), dx0.len())?;
        let linear = self.m.transpose() * (&self.q_bar * (&self.h * dx0));
        BoxQp::new(self.hessian(), linear, self.lower.clone(), self.upper.clone())
    }
}

/// `δU* = −(MᵀQ̄M + R̄)⁻¹ MᵀQ̄H δx₀`.
pub fn solve_unconstrained(qp: &CondensedQp, dx0: &DVector<f64>) -> Result<DVector<f64>> {
    qp.box_qp(dx0)?.solve_unconstrained()
}

pub fn solve_box_qp(
    qp: &CondensedQp,
    dx0: &DVector<f64>,
    warm_start: Option<&DVector<f64>>,
    opts: &QpOptions,
) -> Result<QpSolution> {
    qp.box_qp(dx0)?.solve(warm_start, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// Optimal input corrections over the horizon.
    pub delta_u: DVector<f64>,
    /// Input to apply now: `δu₀* + u_d⁰`, clamped into the bounds.
    pub u0: DVector<f64>,
    /// Predicted error states δx₁ … δx_N.
    pub predicted: DVector<f64>,
    pub initial_error: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub active_bounds: usize,
    pub converged: bool,
    pub residual: f64,
}

/// One pass of the tracking loop: error, linearization, condensed QP, first input.
pub fn mpc_step<S: CanonicalSystem + ?Sized>(
    sys: &S,
    cfg: &MpcConfig,
    x_now: &Point,
    window: &[ReferencePoint],
    warm_start: Option<&DVector<f64>>,
) -> Result<MpcSolution> {
    check_len("reference window", cfg.horizon, window.len())?;
    let m = sys.manifold();
    let dx0 = m.boxminus(x_now, &window[0].state).map_err(|e| match e {
        Error::OutOfChart(msg) => Error::TrackingLost(msg),
        other => other,
    })?;
    let dynamics = cfg
        .exec
        .map_slice(window, |r| linearize(sys, r, cfg.dt))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<DVector<f64>> = window.iter().map(|r| r.input.clone()).collect();
    let qp = build_condensed(&dynamics, &inputs, cfg)?;
    let sol = solve_box_qp(&qp, &dx0, warm_start, &cfg.qp_options())?;

    let mu = sys.input_dim();
    let u_d = &window[0].input;
    let u0 = DVector::from_fn(mu, |i, _| (sol.z[i] + u_d[i]).clamp(cfg.u_min[i], cfg.u_max[i]));
    Ok(MpcSolution {
        predicted: qp.predict(&sol.z, &dx0),
        initial_error: dx0,
        u0,
        objective: sol.objective,
        iterations: sol.iterations,
        active_bounds: sol.active,
        converged: sol.converged,
        residual: sol.residual,
        delta_u: sol.z,
    })
}

/// Stateful controller that warm-starts each tick from the previous
/// solution shifted by one step.
#[derive(Debug, Clone)]
pub struct MpcController {
    cfg: MpcConfig,
    warm: Option<DVector<f64>>,
}

impl MpcController {
    pub fn new(cfg: MpcConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, warm: None })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    pub fn step<S: CanonicalSystem + ?Sized>(
        &mut self,
        sys: &S,
        x_now: &Point,
        window: &[ReferencePoint],
    ) -> Result<MpcSolution> {
        let sol = mpc_step(sys, &self.cfg, x_now, window, self.warm.as_ref())?;
        let mu = sys.input_dim();
        let len = sol.delta_u.len();
        let mut shifted = DVector::zeros(len);
        shifted.rows_mut(0, len - mu).copy_from(&sol.delta_u.rows(mu, len - mu));
        shifted.rows_mut(len - mu, mu).copy_from(&sol.delta_u.rows(len - mu, mu));
        self.warm = Some(shifted);
        Ok(sol)
    }
}
