//! Trace CSV and flat `key = value` summaries.

use std::io::{Read, Write};

use manifold_mpc::sim::{Metrics, SimTrace, TickRecord};

use crate::CliError;

pub fn trace_header(trace: &SimTrace) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(trace.state_labels.iter().cloned());
    h.extend(trace.state_labels.iter().map(|l| format!("ref_{l}")));
    h.extend((0..trace.error_dim).map(|i| format!("dx{i}")));
    h.extend((0..trace.input_dim).map(|i| format!("u{i}")));
    h.extend((0..trace.input_dim).map(|i| format!("ud{i}")));
    h.push("solver_iters".into());
    h.push("solve_time_us".into());
    h
}

pub fn write_trace<W: Write>(trace: &SimTrace, out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(trace))?;
    for r in &trace.records {
        let mut row = vec![r.t.to_string()];
        row.extend(r.state.iter().map(f64::to_string));
        row.extend(r.reference.iter().map(f64::to_string));
        row.extend(r.error.iter().map(f64::to_string));
        row.extend(r.u.iter().map(f64::to_string));
        row.extend(r.u_ref.iter().map(f64::to_string));
        row.push(r.iterations.to_string());
        row.push(r.solve_time_us.to_string());
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a written trace: the header and the numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_trace<R: Read>(input: R) -> Result<TraceTable, CliError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| CliError::Config(format!("bad trace value {s:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(TraceTable { header, rows })
}

/// The numeric row a record is written as.
pub fn record_row(r: &TickRecord) -> Vec<f64> {
    let mut row = vec![r.t];
    row.extend(&r.state);
    row.extend(&r.reference);
    row.extend(&r.error);
    row.extend(&r.u);
    row.extend(&r.u_ref);
    row.push(r.iterations as f64);
    row.push(r.solve_time_us);
    row
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Nonconverged,
    TrackingLost,
}

impl Status {
    pub fn of(trace: &SimTrace) -> Self {
        if trace.failure.is_some() {
            Status::TrackingLost
        } else if trace.nonconverged_ticks() > 0 {
            Status::Nonconverged
        } else {
            Status::Ok
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Nonconverged => 2,
            Status::TrackingLost => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Nonconverged => "nonconverged",
            Status::TrackingLost => "tracking_lost",
        }
    }
}

pub struct SummaryInfo<'a> {
    pub trace: &'a SimTrace,
    pub metrics: Option<&'a Metrics>,
    pub seed: u64,
    pub dt: f64,
    pub horizon: usize,
}

pub fn write_summary<W: Write>(info: &SummaryInfo, mut out: W) -> std::io::Result<()> {
    let t = info.trace;
    let status = Status::of(t);
    writeln!(out, "scenario = {}", t.scenario)?;
    writeln!(out, "status = {}", status.as_str())?;
    writeln!(out, "exit_code = {}", status.exit_code())?;
    writeln!(out, "seed = {}", info.seed)?;
    writeln!(out, "horizon = {}", info.horizon)?;
    writeln!(out, "dt_s = {}", info.dt)?;
    writeln!(out, "ticks = {}", t.records.len())?;
    if let Some(m) = info.metrics {
        writeln!(out, "rms_position_error_m = {}", m.rms_position_error)?;
        writeln!(out, "max_position_error_m = {}", m.max_position_error)?;
        writeln!(out, "final_position_error_m = {}", m.final_position_error)?;
        writeln!(out, "rms_attitude_error_rad = {}", m.rms_attitude_error)?;
        writeln!(out, "max_attitude_error_rad = {}", m.max_attitude_error)?;
        writeln!(out, "mean_solve_time_us = {}", m.mean_solve_time_us)?;
        writeln!(out, "p99_solve_time_us = {}", m.p99_solve_time_us)?;
        writeln!(out, "mean_qp_iterations = {}", m.mean_iterations)?;
        writeln!(out, "constraint_activity = {}", m.constraint_activity)?;
        writeln!(out, "nonconverged_ticks = {}", m.nonconverged_ticks)?;
    }
    writeln!(out, "tracking_lost = {}", t.failure.is_some())?;
    if let Some(f) = &t.failure {
        writeln!(out, "failure = {}", f.replace('\n', " "))?;
    }
    Ok(())
}

/// Parses a summary back into ordered key/value pairs.
pub fn parse_summary(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
