//! Dense box-constrained convex QP
//!
//! ```text
//! minimize  ½ zᵀ K z + cᵀ z   subject to  lower ≤ z ≤ upper
//! ```
//!
//! solved by projected gradient with Barzilai–Borwein steps and a monotone
//! backtracking safeguard. After every gradient step the variables strictly
//! inside their bounds are re-optimized exactly with the others held fixed
//! (a subspace Newton step); once the active set settles this lands on the
//! optimum to machine precision, so the projected-gradient residual can be
//! driven well below 1e-8.
//!
//! When the unconstrained minimizer already satisfies the bounds it is
//! returned directly, without iterating.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_len, Error, Result};

/// Armijo constant of the backtracking safeguard.
const SUFFICIENT_DECREASE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// Stop once `‖z − Π(z − ∇J(z))‖∞` drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxQp {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    /// Gradient-projection iterations; zero when the unconstrained minimizer was feasible.
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    /// Number of variables sitting on a bound.
    pub active: usize,
    /// Objective after each iteration, starting with the initial point.
    pub history: Vec<f64>,
}

impl BoxQp {
    pub fn new(
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self> {
        let n = linear.len();
        check_len("hessian rows", n, hessian.nrows())?;
        check_len("hessian cols", n, hessian.ncols())?;
        check_len("lower bound", n, lower.len())?;
        check_len("upper bound", n, upper.len())?;
        if let Some(i) = (0..n).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::InvalidConfig(format!(
                "bound {i} is inconsistent: {} > {}",
                lower[i], upper[i]
            )));
        }
        Ok(Self { hessian, linear, lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.hessian * z)) + self.linear.dot(z)
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.hessian * z + &self.linear
    }

    pub fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(z.len(), |i, _| z[i].clamp(self.lower[i], self.upper[i]))
    }

    /// `‖z − Π(z − ∇J(z))‖∞`, zero exactly at the optimum.
    pub fn kkt_residual(&self, z: &DVector<f64>) -> f64 {
        let g = self.gradient(z);
        self.residual_with(z, &g)
    }

    fn residual_with(&self, z: &DVector<f64>, g: &DVector<f64>) -> f64 {
        (0..z.len())
            .map(|i| (z[i] - (z[i] - g[i]).clamp(self.lower[i], self.upper[i])).abs())
            .fold(0.0, f64::max)
    }

    pub fn active_count(&self, z: &DVector<f64>) -> usize {
        (0..z.len())
            .filter(|&i| z[i] <= self.lower[i] || z[i] >= self.upper[i])
            .count()
    }

    fn factor(&self) -> Result<Cholesky<f64, Dyn>> {
        Cholesky::new(self.hessian.clone())
            .ok_or_else(|| Error::IllConditioned("QP hessian is not positive definite".into()))
    }

    /// `−K⁻¹c`, ignoring the bounds.
    pub fn solve_unconstrained(&self) -> Result<DVector<f64>> {
        Ok(-self.factor()?.solve(&self.linear))
    }

    pub fn solve(&self, warm_start: Option<&DVector<f64>>, opts: &QpOptions) -> Result<QpSolution> {
        let unconstrained = self.solve_unconstrained()?;
        if (0..self.dim()).all(|i| self.lower[i] <= unconstrained[i] && unconstrained[i] <= self.upper[i]) {
            let objective = self.objective(&unconstrained);
            return Ok(QpSolution {
                residual: self.kkt_residual(&unconstrained),
                active: self.active_count(&unconstrained),
                z: unconstrained,
                objective,
                iterations: 0,
                converged: true,
                history: vec![objective],
            });
        }
        let start = match warm_start {
            Some(w) => {
                check_len("warm start", self.dim(), w.len())?;
                self.project(w)
            }
            None => self.project(&DVector::zeros(self.dim())),
        };
        Ok(self.projected_gradient(start, opts))
    }

    fn projected_gradient(&self, mut z: DVector<f64>, opts: &QpOptions) -> QpSolution {
        let lipschitz = self
            .hessian
            .row_iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(f64::MIN_POSITIVE, f64::max);
        let mut step = 1.0 / lipschitz;
        let mut g = self.gradient(&z);
        let mut f = self.objective(&z);
        let mut history = vec![f];
        let mut residual = self.residual_with(&z, &g);
        let mut iterations = 0;

        while residual >= opts.tolerance && iterations < opts.max_iterations {
            iterations += 1;

            // Gradient projection with backtracking.
            let mut trial_step = step;
            let (z_new, f_new) = loop {
                let cand = self.project(&(&z - &g * trial_step));
                let f_cand = self.objective(&cand);
                if f_cand <= f + SUFFICIENT_DECREASE * g.dot(&(&cand - &z)) || trial_step < 1e-20 {
                    break (cand, f_cand);
                }
                trial_step *= 0.5;
            };
            let g_new = self.gradient(&z_new);
            let s = &z_new - &z;
            let sy = s.dot(&(&g_new - &g));
            step = if sy > 0.0 { s.norm_squared() / sy } else { 1.0 / lipschitz };
            if f_new <= f {
                z = z_new;
                g = g_new;
                f = f_new;
            }

            if let Some((z_n, f_n)) = self.subspace_step(&z, f) {
                g = self.gradient(&z_n);
                z = z_n;
                f = f_n;
            }
            history.push(f);
            residual = self.residual_with(&z, &g);
        }

        QpSolution {
            objective: f,
            active: self.active_count(&z),
            converged: residual < opts.tolerance,
            residual,
            iterations,
            history,
            z,
        }
    }

    /// Exact minimization over the variables strictly inside their bounds,
    /// followed by a projected backtracking search toward that point.
    fn subspace_step(&self, z: &DVector<f64>, f: f64) -> Option<(DVector<f64>, f64)> {
        let free: Vec<usize> = (0..z.len())
            .filter(|&i| self.lower[i] < z[i] && z[i] < self.upper[i])
            .collect();
        if free.is_empty() {
            return None;
        }
        let k_ff = DMatrix::from_fn(free.len(), free.len(), |a, b| self.hessian[(free[a], free[b])]);
        let g = self.gradient(z);
        let g_f = DVector::from_fn(free.len(), |a, _| g[free[a]]);
        let delta = Cholesky::new(k_ff)?.solve(&g_f);
        let mut t = 1.0;
        while t > 1e-6 {
            let mut cand = z.clone();
            for (a, &i) in free.iter().enumerate() {
                cand[i] -= t * delta[a];
            }
            let cand = self.project(&cand);
            let f_cand = self.objective(&cand);
            if f_cand < f {
                return Some((cand, f_cand));
            }
            t *= 0.5;
        }
        None
    }
}
