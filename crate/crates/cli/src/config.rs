//! Run configuration: a preset id plus optional overrides, in TOML.

use std::path::{Path, PathBuf};

use manifold_mpc::scenarios::{preset, ReferenceSpec, ScenarioSpec, TerrainSource};
use manifold_mpc::sim::Disturbance;
use manifold_mpc::vehicles::terrain::parse_samples;
use manifold_mpc::vehicles::{Path2d, SpeedProfile, YawPolicy};
use manifold_mpc::ExecPolicy;
use nalgebra::{DMatrix, DVector, Vector3};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Preset the overrides apply to.
    pub scenario: String,
    pub name: Option<String>,
    pub description: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub mpc: MpcSection,
    pub disturbance: Option<DisturbanceSection>,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub duration_s: Option<f64>,
    pub substeps: Option<usize>,
    /// Initial tangent-space offset from the first reference point (m, rad).
    pub initial_offset: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    pub horizon: Option<usize>,
    pub dt_s: Option<f64>,
    pub q_diag: Option<Vec<f64>>,
    pub r_diag: Option<Vec<f64>>,
    pub terminal_diag: Option<Vec<f64>>,
    pub u_min: Option<Vec<f64>>,
    pub u_max: Option<Vec<f64>>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub parallel: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    /// Per-channel standard deviation added to the perturbation f.
    pub std: Vec<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub center_m: Option<[f64; 3]>,
    pub position_m: Option<[f64; 3]>,
    pub radius_m: Option<f64>,
    pub speed_mps: Option<f64>,
    /// Ramp from rest to `speed_mps` over this time; constant speed when 0.
    pub ramp_s: Option<f64>,
    /// `"zero"` or `"tangent"`.
    pub yaw: Option<String>,
    pub amplitude_m: Option<f64>,
    pub wavelength_m: Option<f64>,
    pub heading_rad: Option<f64>,
    pub omega_max_radps: Option<f64>,
    /// Height samples (`x y z` per line) to fit the terrain from.
    pub samples_file: Option<PathBuf>,
    pub terrain_noise_m: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub trace: Option<bool>,
    pub summary: Option<bool>,
    pub verbosity: Option<u8>,
}

/// Flags given on the command line; they win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub horizon: Option<usize>,
    pub duration: Option<f64>,
}

/// A fully resolved run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub spec: ScenarioSpec,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub write_trace: bool,
    pub write_summary: bool,
    pub verbosity: u8,
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn vector(name: &str, v: &[f64], len: usize) -> Result<DVector<f64>, CliError> {
    if v.len() != len {
        return Err(cfg_err(format!("{name} needs {len} entries, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

fn diag(name: &str, v: &[f64], len: usize) -> Result<DMatrix<f64>, CliError> {
    Ok(DMatrix::from_diagonal(&vector(name, v, len)?))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    /// Applies the overrides to the named preset. `base_dir` anchors relative paths.
    pub fn resolve(&self, flags: &Overrides, base_dir: &Path) -> Result<Resolved, CliError> {
        let mut spec = preset(&self.scenario).map_err(|e| cfg_err(e.to_string()))?;
        if let Some(name) = &self.name {
            spec.name = name.clone();
        }
        let seed = flags.seed.or(self.seed).unwrap_or(0);
        self.apply_reference(&mut spec, seed, base_dir)?;

        let (n, l, m) = dims(&spec);
        let mpc = &mut spec.mpc;
        let s = &self.mpc;
        if let Some(h) = flags.horizon.or(s.horizon) {
            mpc.horizon = h;
        }
        if let Some(dt) = s.dt_s {
            mpc.dt = dt;
        }
        if let Some(v) = &s.q_diag {
            mpc.q = diag("mpc.q_diag", v, n)?;
        }
        if let Some(v) = &s.r_diag {
            mpc.r = diag("mpc.r_diag", v, m)?;
        }
        if let Some(v) = &s.terminal_diag {
            mpc.terminal = Some(diag("mpc.terminal_diag", v, n)?);
        }
        if let Some(v) = &s.u_min {
            mpc.u_min = vector("mpc.u_min", v, m)?;
        }
        if let Some(v) = &s.u_max {
            mpc.u_max = vector("mpc.u_max", v, m)?;
        }
        if let Some(t) = s.tolerance {
            mpc.tolerance = t;
        }
        if let Some(it) = s.max_iterations {
            mpc.max_iterations = it;
        }
        if let Some(p) = s.parallel {
            mpc.exec = if p { ExecPolicy::Parallel } else { ExecPolicy::Sequential };
        }

        if let Some(d) = flags.duration.or(self.sim.duration_s) {
            spec.duration = d;
        }
        if let Some(k) = self.sim.substeps {
            spec.substeps = k;
        }
        if let Some(v) = &self.sim.initial_offset {
            spec.initial_offset = vector("sim.initial_offset", v, n)?;
        }
        if let Some(d) = &self.disturbance {
            spec.disturbance = Some(Disturbance {
                std: vector("disturbance.std", &d.std, l)?,
                seed: flags.seed.or(d.seed).unwrap_or(seed),
            });
        }

        let out = &self.output;
        Ok(Resolved {
            spec,
            seed,
            out_dir: flags
                .out
                .clone()
                .or_else(|| out.dir.as_ref().map(|d| base_dir.join(d)))
                .unwrap_or_else(|| PathBuf::from("out")),
            write_trace: out.trace.unwrap_or(true),
            write_summary: out.summary.unwrap_or(true),
            verbosity: out.verbosity.unwrap_or(1),
        })
    }

    fn apply_reference(&self, spec: &mut ScenarioSpec, seed: u64, base_dir: &Path) -> Result<(), CliError> {
        let r = &self.reference;
        let speed_profile = |current: SpeedProfile| -> SpeedProfile {
            let (max, ramp) = match current {
                SpeedProfile::Constant(v) => (v, 0.0),
                SpeedProfile::Ramp { max, duration } => (max, duration),
            };
            let max = r.speed_mps.unwrap_or(max);
            match r.ramp_s.unwrap_or(ramp) {
                t if t > 0.0 => SpeedProfile::Ramp { max, duration: t },
                _ => SpeedProfile::Constant(max),
            }
        };
        let v3 = |a: [f64; 3]| Vector3::new(a[0], a[1], a[2]);
        match &mut spec.reference {
            ReferenceSpec::QuadHover { position } => {
                if let Some(p) = r.position_m {
                    *position = v3(p);
                }
            }
            ReferenceSpec::QuadCircle { center, radius, speed, yaw } => {
                if let Some(c) = r.center_m {
                    *center = v3(c);
                }
                *radius = r.radius_m.unwrap_or(*radius);
                *speed = speed_profile(*speed);
                if let Some(y) = &r.yaw {
                    *yaw = match y.as_str() {
                        "zero" => YawPolicy::Zero,
                        "tangent" => YawPolicy::PathTangent,
                        other => return Err(cfg_err(format!("reference.yaw must be \"zero\" or \"tangent\", got {other:?}"))),
                    };
                }
            }
            ReferenceSpec::QuadLoop { center, radius, speed } => {
                if let Some(c) = r.center_m {
                    *center = v3(c);
                }
                *radius = r.radius_m.unwrap_or(*radius);
                *speed = speed_profile(*speed);
            }
            ReferenceSpec::Ugv { terrain, path, speed, omega_max } => {
                *speed = r.speed_mps.unwrap_or(*speed);
                if let Some(w) = r.omega_max_radps {
                    *omega_max = Some(w);
                }
                if let Path2d::Sine { amplitude, wavelength, heading, .. } = path {
                    *amplitude = r.amplitude_m.unwrap_or(*amplitude);
                    *wavelength = r.wavelength_m.unwrap_or(*wavelength);
                    *heading = r.heading_rad.unwrap_or(*heading);
                }
                if let Some(file) = &r.samples_file {
                    let path = base_dir.join(file);
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
                    let pts = parse_samples(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
                    *terrain = TerrainSource::Samples(pts);
                } else if let TerrainSource::Synthetic { noise, seed: s, .. } = terrain {
                    *noise = r.terrain_noise_m.unwrap_or(*noise);
                    *s = seed;
                }
            }
        }
        Ok(())
    }
}

/// Tangent, exogenous and input dimensions of the preset's vehicle.
fn dims(spec: &ScenarioSpec) -> (usize, usize, usize) {
    match spec.reference {
        ReferenceSpec::Ugv { .. } => (3, 3, 2),
        _ => (9, 9, 4),
    }
}
