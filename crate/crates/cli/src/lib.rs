//! Scenario runner behind the `manifold-mpc` binary.

pub mod config;
pub mod output;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use manifold_mpc::sim::{metrics, rollout_batch};
use manifold_mpc::ExecPolicy;

use config::{Overrides, Resolved, RunConfig};
use output::{write_summary, write_trace, Status, SummaryInfo};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] manifold_mpc::Error),
}

/// Configs shipped with the binary, by id.
pub const BUNDLED: &[(&str, &str)] = &[
    ("quad-hover", include_str!("../scenarios/quad-hover.toml")),
    ("quad-circle", include_str!("../scenarios/quad-circle.toml")),
    ("quad-loop", include_str!("../scenarios/quad-loop.toml")),
    ("ugv-hill", include_str!("../scenarios/ugv-hill.toml")),
];

pub fn bundled(id: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(k, _)| *k == id).map(|(_, v)| *v)
}

/// `id  description` lines, or bare ids when `ids_only`.
pub fn list_scenarios(ids_only: bool) -> Result<String, CliError> {
    let mut out = String::new();
    for (id, text) in BUNDLED {
        if ids_only {
            out.push_str(id);
        } else {
            let cfg = RunConfig::parse(text)?;
            out.push_str(&format!("{id:<12} {}", cfg.description.unwrap_or_default()));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Loads a config from a path, falling back to the bundled ids.
pub fn load(arg: &str, flags: &Overrides) -> Result<Resolved, CliError> {
    let path = Path::new(arg);
    let (text, base) = if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {arg}: {e}")))?;
        (text, path.parent().map(Path::to_path_buf).unwrap_or_default())
    } else if let Some(text) = bundled(arg) {
        (text.to_string(), PathBuf::from("."))
    } else {
        return Err(CliError::Config(format!(
            "{arg}: no such file or bundled scenario (try list-scenarios)"
        )));
    };
    RunConfig::parse(&text)
        .and_then(|c| c.resolve(flags, &base))
        .map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{arg}: {m}")),
            other => other,
        })
}

pub struct RunReport {
    pub exit_code: u8,
    pub lines: Vec<String>,
}

/// Resolves, runs and writes every config; returns the worst exit status.
pub fn run(args: &[String], flags: &Overrides, parallel: bool) -> Result<RunReport, CliError> {
    let runs = args.iter().map(|a| load(a, flags)).collect::<Result<Vec<_>, _>>()?;
    let scenarios = runs
        .iter()
        .map(|r| r.spec.build().map_err(|e| CliError::Config(format!("{}: {e}", r.spec.name))))
        .collect::<Result<Vec<_>, _>>()?;
    let exec = if parallel { ExecPolicy::Parallel } else { ExecPolicy::Sequential };
    let traces = rollout_batch(&scenarios, exec);

    let mut report = RunReport { exit_code: 0, lines: Vec::new() };
    for (run, trace) in runs.iter().zip(traces) {
        let trace = trace.map_err(|e| CliError::Config(format!("{}: {e}", run.spec.name)))?;
        let m = metrics(&trace, 0.0).ok();
        fs::create_dir_all(&run.out_dir)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", run.out_dir.display())))?;
        let stem = run.out_dir.join(&trace.scenario);
        if run.write_trace {
            write_trace(&trace, BufWriter::new(File::create(stem.with_extension("trace.csv"))?))?;
        }
        if run.write_summary {
            let info = SummaryInfo {
                trace: &trace,
                metrics: m.as_ref(),
                seed: run.seed,
                dt: run.spec.mpc.dt,
                horizon: run.spec.mpc.horizon,
            };
            write_summary(&info, BufWriter::new(File::create(stem.with_extension("summary.txt"))?))?;
        }
        let status = Status::of(&trace);
        if run.verbosity > 0 {
            let detail = match &m {
                Some(m) => format!(
                    "max pos err {:.4} m, rms {:.4} m, mean solve {:.0} us",
                    m.max_position_error, m.rms_position_error, m.mean_solve_time_us
                ),
                None => "no ticks".into(),
            };
            report.lines.push(format!("{}: {} ({detail})", trace.scenario, status.as_str()));
            if let Some(f) = &trace.failure {
                report.lines.push(format!("  {f}"));
            }
        }
        report.exit_code = report.exit_code.max(status.exit_code());
    }
    Ok(report)
}
