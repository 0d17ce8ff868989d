//! Closed-loop rollouts: plant integration, reference windows, traces and metrics.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::ReferencePoint;
use crate::error::{check_len, Error, Result};
use crate::exec::ExecPolicy;
use crate::manifold::Point;
use crate::mpc::{MpcConfig, MpcController};
use crate::vehicles::Vehicle;

/// Additive Gaussian noise on the perturbation `f`, resampled every tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Disturbance {
    /// Per-channel standard deviation, length `l`.
    pub std: DVector<f64>,
    pub seed: u64,
}

#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub vehicle: Arc<dyn Vehicle>,
    /// Reference sampled at the controller period; the last point is held
    /// once the rollout runs past the end.
    pub reference: Vec<ReferencePoint>,
    pub mpc: MpcConfig,
    /// Initial deviation `δx` from the first reference point.
    pub initial_offset: DVector<f64>,
    pub disturbance: Option<Disturbance>,
    pub duration: f64,
    /// Plant integration steps per controller tick.
    pub substeps: usize,
}

impl Scenario {
    pub fn ticks(&self) -> usize {
        (self.duration / self.mpc.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.vehicle.manifold();
        self.mpc.validate_for(m.dim(), self.vehicle.input_dim())?;
        check_len("initial offset", m.dim(), self.initial_offset.len())?;
        if self.reference.is_empty() {
            return Err(Error::InvalidConfig("empty reference".into()));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidConfig(format!("duration must be positive, got {}", self.duration)));
        }
        let ticks = self.duration / self.mpc.dt;
        if (ticks - ticks.round()).abs() > 1e-6 * ticks.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "duration {} s is not a multiple of dt {} s",
                self.duration, self.mpc.dt
            )));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidConfig("substeps must be at least 1".into()));
        }
        if let Some(d) = &self.disturbance {
            check_len("disturbance std", m.exo_dim(), d.std.len())?;
            if d.std.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
                return Err(Error::InvalidConfig("disturbance std must be finite and non-negative".into()));
            }
        }
        Ok(())
    }

    fn reference_at(&self, k: usize) -> &ReferencePoint {
        &self.reference[k.min(self.reference.len() - 1)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    /// Ambient coordinates of the plant state.
    pub state: Vec<f64>,
    pub reference: Vec<f64>,
    pub error: Vec<f64>,
    pub u: Vec<f64>,
    pub u_ref: Vec<f64>,
    pub iterations: usize,
    pub solve_time_us: f64,
    pub active_bounds: usize,
    pub converged: bool,
    pub position_error: f64,
    pub attitude_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub scenario: String,
    pub state_labels: Vec<String>,
    pub error_dim: usize,
    pub input_dim: usize,
    pub records: Vec<TickRecord>,
    /// Set when the rollout stopped early because tracking was lost.
    pub failure: Option<String>,
}

impl SimTrace {
    pub fn nonconverged_ticks(&self) -> usize {
        self.records.iter().filter(|r| !r.converged).count()
    }

    /// Same trace with wall-clock timings zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> SimTrace {
        let mut t = self.clone();
        t.records.iter_mut().for_each(|r| r.solve_time_us = 0.0);
        t
    }
}

fn lost(e: Error) -> Error {
    match e {
        Error::OutOfChart(msg) | Error::InvalidPoint(msg) => Error::TrackingLost(msg),
        other => other,
    }
}

/// Runs one closed-loop rollout.
///
/// Configuration problems are returned as errors; losing track of the
/// reference ends the rollout early and is reported in [`SimTrace::failure`].
pub fn rollout(sc: &Scenario) -> Result<SimTrace> {
    sc.validate()?;
    let veh = sc.vehicle.as_ref();
    let m = veh.manifold();
    let n_ticks = sc.ticks();
    let horizon = sc.mpc.horizon;
    let dt = sc.mpc.dt;
    let sub_dt = dt / sc.substeps as f64;

    let mut noise = match &sc.disturbance {
        Some(d) => {
            let dists = d
                .std
                .iter()
                .map(|s| Normal::new(0.0, *s).map_err(|e| Error::InvalidConfig(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            Some((ChaCha8Rng::seed_from_u64(d.seed), dists))
        }
        None => None,
    };

    let mut trace = SimTrace {
        scenario: sc.name.clone(),
        state_labels: m.ambient_labels("x"),
        error_dim: m.dim(),
        input_dim: veh.input_dim(),
        records: Vec::with_capacity(n_ticks),
        failure: None,
    };
    let mut ctrl = MpcController::new(sc.mpc.clone())?;
    let mut x = match m.boxplus(&sc.reference[0].state, &sc.initial_offset) {
        Ok(x) => x,
        Err(e) => return Err(Error::InvalidConfig(format!("initial offset: {e}"))),
    };

    for k in 0..n_ticks {
        let window: Vec<ReferencePoint> = (0..horizon).map(|j| sc.reference_at(k + j).clone()).collect();
        let started = Instant::now();
        let sol = match ctrl.step(veh, &x, &window) {
            Ok(s) => s,
            Err(Error::TrackingLost(msg)) => {
                trace.failure = Some(format!("t = {:.3} s: {msg}", k as f64 * dt));
                break;
            }
            Err(e) => return Err(e),
        };
        let solve_time_us = started.elapsed().as_secs_f64() * 1e6;
        let x_d = &window[0].state;
        trace.records.push(TickRecord {
            t: k as f64 * dt,
            state: x.ambient(),
            reference: x_d.ambient(),
            error: sol.initial_error.as_slice().to_vec(),
            u: sol.u0.as_slice().to_vec(),
            u_ref: window[0].input.as_slice().to_vec(),
            iterations: sol.iterations,
            solve_time_us,
            active_bounds: sol.active_bounds,
            converged: sol.converged,
            position_error: (veh.position(&x)? - veh.position(x_d)?).norm(),
            attitude_error: veh.attitude_error(&x, x_d)?,
        });

        let w = noise.as_mut().map(|(rng, dists)| {
            DVector::from_iterator(dists.len(), dists.iter().map(|d| d.sample(rng)))
        });
        match integrate(veh, &x, &sol.u0, w.as_ref(), sub_dt, sc.substeps) {
            Ok(next) => x = next,
            Err(e) => {
                let e = lost(e);
                match e {
                    Error::TrackingLost(msg) => {
                        trace.failure = Some(format!("t = {:.3} s: {msg}", k as f64 * dt));
                        break;
                    }
                    other => return Err(other),
                }
            }
        }
    }
    Ok(trace)
}

fn integrate(
    veh: &dyn Vehicle,
    x: &Point,
    u: &DVector<f64>,
    w: Option<&DVector<f64>>,
    sub_dt: f64,
    substeps: usize,
) -> Result<Point> {
    let m = veh.manifold();
    let mut x = x.clone();
    for _ in 0..substeps {
        let mut f = veh.perturbation(&x, u);
        if let Some(w) = w {
            f += w;
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::TrackingLost("non-finite plant derivative".into()));
        }
        x = m.oplus(&x, &(f * sub_dt))?;
    }
    m.validate(&x)?;
    Ok(x)
}

/// Independent rollouts evaluated under `exec`; results keep input order.
pub fn rollout_batch(scenarios: &[Scenario], exec: ExecPolicy) -> Vec<Result<SimTrace>> {
    exec.map_slice(scenarios, rollout)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub ticks: usize,
    pub rms_position_error: f64,
    pub max_position_error: f64,
    pub final_position_error: f64,
    pub rms_attitude_error: f64,
    pub max_attitude_error: f64,
    pub mean_solve_time_us: f64,
    pub p99_solve_time_us: f64,
    pub mean_iterations: f64,
    /// Fraction of ticks whose QP had at least one active bound.
    pub constraint_activity: f64,
    pub nonconverged_ticks: usize,
    pub failed: bool,
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (sum / n as f64).sqrt()
}

/// Summary statistics over the records of a trace, optionally skipping the
/// first `skip` seconds of transient.
pub fn metrics(trace: &SimTrace, skip: f64) -> Result<Metrics> {
    let recs: Vec<&TickRecord> = trace.records.iter().filter(|r| r.t >= skip - 1e-12).collect();
    if recs.is_empty() {
        return Err(Error::InvalidConfig("metrics of an empty trace".into()));
    }
    let n = recs.len() as f64;
    let mut times: Vec<f64> = recs.iter().map(|r| r.solve_time_us).collect();
    times.sort_by(f64::total_cmp);
    let p99_idx = ((0.99 * times.len() as f64).ceil() as usize).clamp(1, times.len()) - 1;
    Ok(Metrics {
        ticks: recs.len(),
        rms_position_error: rms(recs.iter().map(|r| r.position_error)),
        max_position_error: recs.iter().map(|r| r.position_error).fold(0.0, f64::max),
        final_position_error: recs.last().unwrap().position_error,
        rms_attitude_error: rms(recs.iter().map(|r| r.attitude_error)),
        max_attitude_error: recs.iter().map(|r| r.attitude_error).fold(0.0, f64::max),
        mean_solve_time_us: times.iter().sum::<f64>() / n,
        p99_solve_time_us: times[p99_idx],
        mean_iterations: recs.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
        constraint_activity: recs.iter().filter(|r| r.active_bounds > 0).count() as f64 / n,
        nonconverged_ticks: recs.iter().filter(|r| !r.converged).count(),
        failed: trace.failure.is_some(),
    })
}
