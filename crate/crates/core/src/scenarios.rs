//! Named scenario presets and the parameter structs used to build them.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::mpc::MpcConfig;
use crate::sim::{Disturbance, Scenario};
use crate::vehicles::quadrotor::{flat_reference_sequence, Circle, FlatTrajectory, Hover, VerticalLoop};
use crate::vehicles::terrain::{fit_surface, grid, synthesize_samples};
use crate::vehicles::ugv::ugv_reference;
use crate::vehicles::{Path2d, Quadrotor, SpeedProfile, Ugv, YawPolicy};
use crate::SurfaceModel;

/// Preset identifiers with one-line descriptions.
pub const PRESETS: &[(&str, &str)] = &[
    ("quad-hover", "quadrotor recovering a hover from a 30 degree roll"),
    ("quad-circle", "quadrotor on a 1.3 m circle ramping up to 5 m/s"),
    ("quad-loop", "quadrotor flying a vertical loop at 6 m/s (stretch, unscored)"),
    ("ugv-hill", "ground vehicle on a fitted hill following a sine path"),
];

#[derive(Debug, Clone, PartialEq)]
pub enum TerrainSource {
    Exact(SurfaceModel),
    /// Least-squares fit of the given samples.
    Samples(Vec<Vector3<f64>>),
    /// Fit of noisy samples drawn from `truth` on a regular grid.
    Synthetic {
        truth: SurfaceModel,
        lo: Vector2<f64>,
        hi: Vector2<f64>,
        n: usize,
        noise: f64,
        seed: u64,
    },
}

impl TerrainSource {
    pub fn surface(&self) -> Result<SurfaceModel> {
        match self {
            TerrainSource::Exact(s) => Ok(*s),
            TerrainSource::Samples(pts) => Ok(fit_surface(pts)?.model),
            TerrainSource::Synthetic { truth, lo, hi, n, noise, seed } => {
                let xy = grid(*lo, *hi, *n, *n);
                Ok(fit_surface(&synthesize_samples(truth, &xy, *noise, *seed))?.model)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSpec {
    QuadHover {
        position: Vector3<f64>,
    },
    QuadCircle {
        center: Vector3<f64>,
        radius: f64,
        speed: SpeedProfile,
        yaw: YawPolicy,
    },
    QuadLoop {
        center: Vector3<f64>,
        radius: f64,
        speed: SpeedProfile,
    },
    Ugv {
        terrain: TerrainSource,
        path: Path2d,
        speed: f64,
        omega_max: Option<f64>,
    },
}

/// Everything needed to materialize a [`Scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub reference: ReferenceSpec,
    pub mpc: MpcConfig,
    pub initial_offset: DVector<f64>,
    pub disturbance: Option<Disturbance>,
    pub duration: f64,
    pub substeps: usize,
}

impl ScenarioSpec {
    pub fn build(&self) -> Result<Scenario> {
        let dt = self.mpc.dt;
        if !(dt > 0.0) || !(self.duration > 0.0) {
            return Err(Error::InvalidConfig("dt and duration must be positive".into()));
        }
        let count = (self.duration / dt).round() as usize + self.mpc.horizon + 1;
        let exec = self.mpc.exec;
        let quad_ref = |traj: &dyn FlatTrajectory, yaw| {
            let quad = Quadrotor::default();
            let reference = flat_reference_sequence(&quad, traj, yaw, dt, count, exec)?;
            Ok::<_, Error>((Arc::new(quad) as Arc<dyn crate::vehicles::Vehicle>, reference))
        };
        let (vehicle, reference) = match &self.reference {
            ReferenceSpec::QuadHover { position } => quad_ref(&Hover { position: *position }, YawPolicy::Zero)?,
            ReferenceSpec::QuadCircle { center, radius, speed, yaw } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidConfig(format!("radius must be positive, got {radius}")));
                }
                quad_ref(&Circle { center: *center, radius: *radius, speed: *speed }, *yaw)?
            }
            ReferenceSpec::QuadLoop { center, radius, speed } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidConfig(format!("radius must be positive, got {radius}")));
                }
                quad_ref(&VerticalLoop { center: *center, radius: *radius, speed: *speed }, YawPolicy::Zero)?
            }
            ReferenceSpec::Ugv { terrain, path, speed, omega_max } => {
                let ugv = Ugv::new(terrain.surface()?);
                let reference = ugv_reference(&ugv, path, *speed, dt, count, *omega_max)?;
                (Arc::new(ugv) as Arc<dyn crate::vehicles::Vehicle>, reference)
            }
        };
        let sc = Scenario {
            name: self.name.clone(),
            vehicle,
            reference,
            mpc: self.mpc.clone(),
            initial_offset: self.initial_offset.clone(),
            disturbance: self.disturbance.clone(),
            duration: self.duration,
            substeps: self.substeps,
        };
        sc.validate()?;
        Ok(sc)
    }
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

fn quad_mpc(horizon: usize, thrust_max: f64) -> MpcConfig {
    MpcConfig {
        horizon,
        dt: 0.01,
        q: diag(&[400.0, 400.0, 400.0, 10.0, 10.0, 10.0, 20.0, 20.0, 20.0]),
        r: diag(&[0.05, 0.05, 0.05, 0.05]),
        terminal: Some(diag(&[4000.0, 4000.0, 4000.0, 200.0, 200.0, 200.0, 100.0, 100.0, 100.0])),
        u_min: DVector::from_vec(vec![0.0, -12.0, -12.0, -12.0]),
        u_max: DVector::from_vec(vec![thrust_max, 12.0, 12.0, 12.0]),
        tolerance: 1e-8,
        max_iterations: 1000,
        exec: ExecPolicy::Sequential,
    }
}

fn ugv_mpc() -> MpcConfig {
    MpcConfig {
        horizon: 45,
        dt: 0.02,
        q: diag(&[200.0, 200.0, 20.0]),
        r: diag(&[0.1, 0.1]),
        terminal: Some(diag(&[2000.0, 2000.0, 200.0])),
        u_min: DVector::from_vec(vec![0.0, -3.0]),
        u_max: DVector::from_vec(vec![4.0, 3.0]),
        tolerance: 1e-8,
        max_iterations: 1000,
        exec: ExecPolicy::Sequential,
    }
}

/// Hill used by the ground-vehicle preset.
pub fn hill() -> SurfaceModel {
    SurfaceModel {
        gamma: [-0.02, 0.01, -0.03, 0.15, 0.05, 0.5],
    }
}

/// Looks up a preset by identifier.
pub fn preset(id: &str) -> Result<ScenarioSpec> {
    let spec = match id {
        "quad-hover" => {
            let mut offset = DVector::zeros(9);
            offset[6] = 30f64.to_radians();
            ScenarioSpec {
                name: id.into(),
                reference: ReferenceSpec::QuadHover { position: Vector3::new(0.0, 0.0, -1.0) },
                mpc: quad_mpc(8, 30.0),
                initial_offset: offset,
                disturbance: None,
                duration: 3.0,
                substeps: 10,
            }
        }
        "quad-circle" => ScenarioSpec {
            name: id.into(),
            reference: ReferenceSpec::QuadCircle {
                center: Vector3::new(0.0, 0.0, -1.0),
                radius: 1.3,
                speed: SpeedProfile::Ramp { max: 5.0, duration: 8.0 },
                yaw: YawPolicy::Zero,
            },
            mpc: quad_mpc(8, 30.0),
            initial_offset: DVector::zeros(9),
            disturbance: None,
            duration: 12.0,
            substeps: 10,
        },
        "quad-loop" => ScenarioSpec {
            name: id.into(),
            reference: ReferenceSpec::QuadLoop {
                center: Vector3::new(0.0, 0.0, -3.0),
                radius: 1.5,
                speed: SpeedProfile::Constant(6.0),
            },
            mpc: quad_mpc(8, 40.0),
            initial_offset: DVector::zeros(9),
            disturbance: None,
            duration: 5.0,
            substeps: 10,
        },
        "ugv-hill" => {
            let mut offset = DVector::zeros(3);
            offset[1] = 0.5;
            ScenarioSpec {
                name: id.into(),
                reference: ReferenceSpec::Ugv {
                    terrain: TerrainSource::Synthetic {
                        truth: hill(),
                        lo: Vector2::new(-2.0, -6.0),
                        hi: Vector2::new(30.0, 6.0),
                        n: 9,
                        noise: 0.0,
                        seed: 0,
                    },
                    path: Path2d::Sine {
                        origin: Vector2::zeros(),
                        heading: 0.0,
                        amplitude: 1.5,
                        wavelength: 12.0,
                    },
                    speed: 2.4,
                    omega_max: Some(3.0),
                },
                mpc: ugv_mpc(),
                initial_offset: offset,
                disturbance: None,
                duration: 10.0,
                substeps: 10,
            }
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown scenario '{other}' (known: {})",
                PRESETS.iter().map(|p| p.0).collect::<Vec<_>>().join(", ")
            )))
        }
    };
    Ok(spec)
}
