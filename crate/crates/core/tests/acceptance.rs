//! End-to-end acceptance gates. Runs without the libtest harness and prints
//! one PASS/FAIL line per criterion; exits non-zero if any gate fails.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

use std::process::ExitCode;
use std::time::Instant;

use manifold_mpc::dynamics::{fd_error_jacobians, linearize, CanonicalSystem, LinearizedErrorDynamics, ReferencePoint};
use manifold_mpc::manifold::{Manifold, Point, SurfaceModel};
use manifold_mpc::mpc::{build_condensed, solve_box_qp, solve_unconstrained, MpcConfig};
use manifold_mpc::qp::{BoxQp, QpOptions};
use manifold_mpc::scenarios::{hill, preset, ReferenceSpec, PRESETS};
use manifold_mpc::sim::{metrics, rollout};
use manifold_mpc::vehicles::terrain::{coefficient_error_trials, fit_surface, grid, synthesize_samples};
use manifold_mpc::vehicles::{Quadrotor, Ugv};
use manifold_mpc::ExecPolicy;
use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn surface() -> SurfaceModel {
    SurfaceModel::new([0.12, -0.05, 0.08, 0.3, -0.2, 1.0]).unwrap()
}

fn manifolds() -> Vec<(&'static str, Manifold)> {
    let quad = Quadrotor::default().manifold().clone();
    let ugv = Ugv::new(surface()).manifold().clone();
    vec![
        ("R3", Manifold::Euclidean(3)),
        ("SO2", Manifold::So2),
        ("SO3", Manifold::So3),
        ("S2", Manifold::sphere(2.5).unwrap()),
        ("surface", Manifold::Surface(surface())),
        ("quad", quad),
        ("ugv", ugv),
    ]
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, max_norm: f64) -> DVector<f64> {
    let v: DVector<f64> = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let norm = v.norm().max(1e-300);
    v * (rng.random_range(0.0..max_norm) / norm)
}

/// Random tangent vector kept inside every chart of `m`.
fn random_tangent(rng: &mut ChaCha8Rng, m: &Manifold) -> DVector<f64> {
    match m {
        Manifold::Product(ms) => {
            let parts: Vec<DVector<f64>> = ms.iter().map(|c| random_tangent(rng, c)).collect();
            DVector::from_iterator(m.dim(), parts.iter().flat_map(|p| p.iter().copied()))
        }
        Manifold::So3 => random_vec(rng, 3, 3.0),
        Manifold::Sphere2 { .. } => random_vec(rng, 2, 3.0),
        Manifold::So2 => random_vec(rng, 1, 3.0),
        _ => random_vec(rng, m.dim(), 5.0),
    }
}

fn ambient_gap(a: &Point, b: &Point) -> f64 {
    a.ambient()
        .iter()
        .zip(b.ambient())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for (_, m) in manifolds() {
        for _ in 0..1000 {
            let x = m.random_point(&mut rng, 5.0);
            let delta = random_tangent(&mut rng, &m);
            let y = m.boxplus(&x, &random_tangent(&mut rng, &m)).map_err(|e| e.to_string())?;
            let zero = m.boxplus(&x, &DVector::zeros(m.dim())).map_err(|e| e.to_string())?;
            worst = worst.max(ambient_gap(&zero, &x));
            let moved = m.boxplus(&x, &delta).map_err(|e| e.to_string())?;
            let back = m.boxminus(&moved, &x).map_err(|e| e.to_string())?;
            worst = worst.max((back - &delta).amax());
            let d = m.boxminus(&y, &x).map_err(|e| e.to_string())?;
            let y2 = m.boxplus(&x, &d).map_err(|e| e.to_string())?;
            worst = worst.max(ambient_gap(&y2, &y));
            cases += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        worst < 1e-9 && secs < 5.0,
        format!("{cases} cases on 7 manifolds, worst axiom error {worst:.2e}, {secs:.2} s"),
    )
}

/// Central differences of the two defining maps of the error propagation.
fn fd_g(m: &Manifold, x_d: &Point, v: &DVector<f64>, h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let base = m.oplus(x_d, v).unwrap();
    let (n, l) = (m.dim(), m.exo_dim());
    let mut gx = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = h;
        let plus = m.boxminus(&m.oplus(&m.boxplus(x_d, &e).unwrap(), v).unwrap(), &base).unwrap();
        let minus = m.boxminus(&m.oplus(&m.boxplus(x_d, &-e).unwrap(), v).unwrap(), &base).unwrap();
        gx.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    let mut gf = DMatrix::zeros(n, l);
    for j in 0..l {
        let mut e = DVector::zeros(l);
        e[j] = h;
        let plus = m.boxminus(&m.oplus(x_d, &(v + &e)).unwrap(), &base).unwrap();
        let minus = m.boxminus(&m.oplus(x_d, &(v - &e)).unwrap(), &base).unwrap();
        gf.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    (gx, gf)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let all = manifolds();
    for (name, m) in &all {
        for _ in 0..200 {
            let x_d = m.random_point(&mut rng, 3.0);
            let v = random_vec(&mut rng, m.exo_dim(), 0.3);
            let (gx, gf) = fd_g(m, &x_d, &v, 1e-6);
            let ex = (m.gx(&x_d, &v).map_err(|e| e.to_string())? - gx).amax();
            let ef = (m.gf(&x_d, &v).map_err(|e| e.to_string())? - gf).amax();
            if !(ex < 1e-5 && ef < 1e-5) {
                return Err(format!("{name}: G_x error {ex:.2e}, G_f error {ef:.2e}"));
            }
            worst = worst.max(ex).max(ef);
        }
    }
    check(worst < 1e-5, format!("{} manifolds x 200 draws, worst entry error {worst:.2e}", all.len()))
}

fn random_ref(rng: &mut ChaCha8Rng, sys: &dyn CanonicalSystem, u_lo: &[f64], u_hi: &[f64]) -> ReferencePoint {
    ReferencePoint {
        state: sys.manifold().random_point(rng, 4.0),
        input: DVector::from_fn(u_lo.len(), |i, _| rng.random_range(u_lo[i]..u_hi[i])),
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let quad = Quadrotor::default();
    let ugv = Ugv::new(hill());
    let systems: [(&str, &dyn CanonicalSystem, Vec<f64>, Vec<f64>); 2] = [
        ("quadrotor", &quad, vec![0.0, -8.0, -8.0, -8.0], vec![30.0, 8.0, 8.0, 8.0]),
        ("ugv", &ugv, vec![-1.0, -3.0], vec![4.0, 3.0]),
    ];
    let mut worst: f64 = 0.0;
    for (name, sys, lo, hi) in systems.iter() {
        for dt in [0.005, 0.01, 0.02] {
            for _ in 0..100 {
                let r = random_ref(&mut rng, *sys, lo, hi);
                let lin = linearize(*sys, &r, dt).map_err(|e| e.to_string())?;
                let (fx, fu) = fd_error_jacobians(*sys, &r, dt, 1e-6).map_err(|e| e.to_string())?;
                let e = (fx - &lin.fx).amax().max((fu - &lin.fu).amax());
                if !(e < 1e-5) {
                    return Err(format!("{name} at dt {dt}: error {e:.2e}"));
                }
                worst = worst.max(e);
            }
        }
    }
    check(worst < 1e-5, format!("600 references, worst entry error {worst:.2e}"))
}

fn weights_config(n: usize, m: usize, horizon: usize, bound: f64) -> MpcConfig {
    MpcConfig {
        horizon,
        dt: 0.01,
        q: DMatrix::identity(n, n),
        r: DMatrix::identity(m, m) * 0.1,
        terminal: Some(DMatrix::identity(n, n) * 5.0),
        u_min: DVector::from_element(m, -bound),
        u_max: DVector::from_element(m, bound),
        tolerance: 1e-10,
        max_iterations: 5000,
        exec: ExecPolicy::Sequential,
    }
}

fn random_dynamics(rng: &mut ChaCha8Rng, n: usize, m: usize, horizon: usize) -> Vec<LinearizedErrorDynamics> {
    (0..horizon)
        .map(|_| LinearizedErrorDynamics {
            fx: DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.05..0.05)),
            fu: DMatrix::from_fn(n, m, |_, _| rng.random_range(-0.1..0.1)),
            dt: 0.01,
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    let mut max_h = 0;
    for case in 0..100 {
        let n = rng.random_range(1..=9);
        let m = rng.random_range(1..=4);
        let horizon = if case < 10 { 45 } else { rng.random_range(1..=45) };
        max_h = max_h.max(horizon);
        let dynamics = random_dynamics(&mut rng, n, m, horizon);
        let inputs = vec![DVector::zeros(m); horizon];
        let qp = build_condensed(&dynamics, &inputs, &weights_config(n, m, horizon, 1.0)).map_err(|e| e.to_string())?;
        let dx0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let du = DVector::from_fn(horizon * m, |_, _| rng.random_range(-1.0..1.0));
        let stacked = qp.predict(&du, &dx0);
        let mut x = dx0.clone();
        for (k, d) in dynamics.iter().enumerate() {
            x = &d.fx * &x + &d.fu * du.rows(k * m, m);
            let gap = (stacked.rows(k * n, n) - &x).amax() / x.amax().max(1.0);
            worst = worst.max(gap);
        }
    }
    check(worst < 1e-10, format!("100 problems up to N = {max_h}, worst gap {worst:.2e}"))
}

/// Coordinate grid search over the box, shrinking around the incumbent.
fn grid_oracle(qp: &BoxQp) -> f64 {
    let d = qp.dim();
    let mut lo = qp.lower.clone();
    let mut hi = qp.upper.clone();
    let per_axis = 9usize;
    let mut best = DVector::zeros(d);
    let mut best_f = f64::INFINITY;
    for _ in 0..80 {
        let total = per_axis.pow(d as u32);
        for idx in 0..total {
            let mut rem = idx;
            let z = DVector::from_fn(d, |i, _| {
                let k = rem % per_axis;
                rem /= per_axis;
                lo[i] + (hi[i] - lo[i]) * k as f64 / (per_axis - 1) as f64
            });
            let f = qp.objective(&z);
            if f < best_f {
                best_f = f;
                best = z;
            }
        }
        for i in 0..d {
            let half = 0.3 * (hi[i] - lo[i]);
            lo[i] = (best[i] - half).max(qp.lower[i]);
            hi[i] = (best[i] + half).min(qp.upper[i]);
        }
    }
    best_f
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let opts = QpOptions {
        tolerance: 1e-10,
        max_iterations: 5000,
    };
    // Inactive bounds: agreement with the closed form.
    let mut free_err: f64 = 0.0;
    for _ in 0..50 {
        let (n, m, horizon) = (rng.random_range(2..=9), rng.random_range(1..=4), rng.random_range(1..=20));
        let qp = build_condensed(
            &random_dynamics(&mut rng, n, m, horizon),
            &vec![DVector::zeros(m); horizon],
            &weights_config(n, m, horizon, 1e6),
        )
        .map_err(|e| e.to_string())?;
        let dx0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let sol = solve_box_qp(&qp, &dx0, None, &opts).map_err(|e| e.to_string())?;
        let k = qp.hessian();
        let c = qp.m.transpose() * (&qp.q_bar * (&qp.h * &dx0));
        let closed = -k.lu().solve(&c).ok_or("singular hessian")?;
        free_err = free_err.max((&sol.z - &closed).amax());
        free_err = free_err.max((solve_unconstrained(&qp, &dx0).map_err(|e| e.to_string())? - closed).amax());
    }
    // Active bounds: projected-gradient KKT residual.
    let mut kkt: f64 = 0.0;
    let mut active_cases = 0;
    for _ in 0..50 {
        let (n, m, horizon) = (rng.random_range(2..=9), rng.random_range(1..=4), rng.random_range(2..=20));
        let qp = build_condensed(
            &random_dynamics(&mut rng, n, m, horizon),
            &vec![DVector::zeros(m); horizon],
            &weights_config(n, m, horizon, 0.5),
        )
        .map_err(|e| e.to_string())?;
        let dx0 = DVector::from_fn(n, |_, _| rng.random_range(-20.0..20.0));
        let sol = solve_box_qp(&qp, &dx0, None, &opts).map_err(|e| e.to_string())?;
        let res = qp.box_qp(&dx0).map_err(|e| e.to_string())?.kkt_residual(&sol.z);
        kkt = kkt.max(res);
        if sol.active > 0 {
            active_cases += 1;
        }
    }
    // Low-dimensional instances against grid refinement.
    let mut oracle_gap: f64 = 0.0;
    let mut mixed = 0;
    for case in 0..20 {
        let (n, m, horizon) = if case % 2 == 0 { (3, 2, 1) } else { (2, 1, 3) };
        let qp = build_condensed(
            &random_dynamics(&mut rng, n, m, horizon),
            &vec![DVector::zeros(m); horizon],
            &weights_config(n, m, horizon, 1.0),
        )
        .map_err(|e| e.to_string())?;
        let dx0 = DVector::from_fn(n, |_, _| rng.random_range(-4.0..4.0));
        let mut bqp = qp.box_qp(&dx0).map_err(|e| e.to_string())?;
        // Box cutting through the unconstrained optimum so that some
        // coordinates clamp and others stay free.
        let free = bqp.solve_unconstrained().map_err(|e| e.to_string())?;
        let b = 0.6 * free.amax();
        bqp.lower.fill(-b);
        bqp.upper.fill(b);
        let sol = bqp.solve(None, &opts).map_err(|e| e.to_string())?;
        if sol.active > 0 && sol.active < bqp.dim() {
            mixed += 1;
        }
        oracle_gap = oracle_gap.max((sol.objective - grid_oracle(&bqp)).abs());
    }
    check(
        free_err < 1e-6 && kkt < 1e-8 && oracle_gap < 1e-6 && active_cases > 25 && mixed >= 10,
        format!(
            "closed-form gap {free_err:.2e}, KKT residual {kkt:.2e} ({active_cases}/50 with active bounds), \
             grid-oracle gap {oracle_gap:.2e} ({mixed}/20 partly active)"
        ),
    )
}

fn criterion_6() -> Outcome {
    let spec = preset("quad-circle").map_err(|e| e.to_string())?;
    let sc = spec.build().map_err(|e| e.to_string())?;
    let setup_ok = sc.mpc.horizon == 8
        && sc.mpc.dt == 0.01
        && sc.substeps == 10
        && sc.disturbance.is_none()
        && matches!(spec.reference, ReferenceSpec::QuadCircle { radius, .. } if radius == 1.3);
    let trace = rollout(&sc).map_err(|e| e.to_string())?;
    let m = metrics(&trace, 0.0).map_err(|e| e.to_string())?;
    check(
        setup_ok && !m.failed && m.max_position_error <= 0.1 && m.rms_position_error <= 0.05 && m.mean_solve_time_us < 5000.0,
        format!(
            "max pos error {:.4} m, RMS {:.4} m, mean solve {:.0} us over {} ticks",
            m.max_position_error, m.rms_position_error, m.mean_solve_time_us, m.ticks
        ),
    )
}

fn criterion_7() -> Outcome {
    let spec = preset("ugv-hill").map_err(|e| e.to_string())?;
    let sc = spec.build().map_err(|e| e.to_string())?;
    let setup_ok = sc.mpc.horizon == 45
        && sc.mpc.dt == 0.02
        && matches!(spec.reference, ReferenceSpec::Ugv { speed, .. } if speed == 2.4)
        && (sc.initial_offset.norm() - 0.5).abs() < 1e-12;
    let trace = rollout(&sc).map_err(|e| e.to_string())?;
    let settled = metrics(&trace, 3.0).map_err(|e| e.to_string())?;
    let heading_deg = settled.max_attitude_error.to_degrees();
    // Required bars, then regression bounds frozen from the reference run
    // (observed: 0.0043 m, 0.47 deg).
    let bars = settled.max_position_error < 0.05 && heading_deg < 2.0;
    let frozen = settled.max_position_error < 0.01 && heading_deg < 1.0;
    check(
        setup_ok && !settled.failed && bars && frozen,
        format!(
            "after 3 s: max pos error {:.4} m, max heading error {heading_deg:.3} deg",
            settled.max_position_error
        ),
    )
}

fn criterion_8() -> Outcome {
    let truth = hill();
    let xy = grid(Vector2::new(-2.0, -6.0), Vector2::new(30.0, 6.0), 9, 9);
    let exact = fit_surface(&synthesize_samples(&truth, &xy, 0.0, 0)).map_err(|e| e.to_string())?;
    let exact_err = exact
        .model
        .gamma
        .iter()
        .zip(truth.gamma.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let seeds: Vec<u64> = (0..100).collect();
    let mut errs = coefficient_error_trials(&truth, &xy, 0.01, &seeds, ExecPolicy::Parallel).map_err(|e| e.to_string())?;
    errs.sort_by(f64::total_cmp);
    let median = 0.5 * (errs[49] + errs[50]);
    check(
        exact_err < 1e-8 && median < 0.05,
        format!("noise-free error {exact_err:.2e}, median noisy error {median:.2e} over 100 seeds"),
    )
}

fn criterion_9() -> Outcome {
    let mut worst: f64 = 0.0;
    for (id, _) in PRESETS {
        let mut spec = preset(id).map_err(|e| e.to_string())?;
        spec.initial_offset.fill(0.0);
        spec.disturbance = None;
        spec.substeps = 1;
        let trace = rollout(&spec.build().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        if trace.failure.is_some() || trace.records.len() != spec.build().unwrap().ticks() {
            return Err(format!("{id}: rollout incomplete"));
        }
        for r in &trace.records {
            for (u, ud) in r.u.iter().zip(&r.u_ref) {
                worst = worst.max((u - ud).abs());
            }
        }
        if !(worst <= 1e-10) {
            return Err(format!("{id}: |u - u_d| reached {worst:.2e}"));
        }
    }
    check(worst <= 1e-10, format!("{} presets, worst |u - u_d| {worst:.2e}", PRESETS.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("manifold axioms", criterion_1),
        ("G-matrix correctness", criterion_2),
        ("linearization correctness", criterion_3),
        ("condensed equivalence", criterion_4),
        ("QP solver", criterion_5),
        ("quadrotor circle", criterion_6),
        ("UGV hill", criterion_7),
        ("surface fit", criterion_8),
        ("zero-error fixed point", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
