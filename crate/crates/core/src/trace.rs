//! Per-step simulation records and their CSV form.
//!
//! CSV column order: `t`; then for each agent `i` (labelled from 1) the blocks
//! `x{i}`, `u{i}`, `s{i}`, `V{i}`, `eta{i}`, `mode{i}`, `ref{i}`, `e{i}`; then
//! `max_gap`, `dist_to_source`, `tracking_error`, `ref_jump`. Vector blocks
//! (`x`, `u`, `s`, `ref`) take one column per axis, suffixed `_1.._d` when the
//! dimension exceeds one. Floats are written with Rust's shortest round-trip
//! formatting, so parsing a written trace recovers it exactly.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::Mode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSample {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    /// `0.5 |s_i|^2`.
    pub lyapunov: f64,
    /// Reachability margin `-s_i . s_dot_i / |s_i|` under the realized disturbance.
    pub eta: f64,
    pub mode: Mode,
    /// Reference tracked by the agent, formation offset included.
    pub reference: Vec<f64>,
    pub error_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub agents: Vec<AgentSample>,
    /// Largest pairwise distance between offset-corrected states.
    pub max_gap: f64,
    /// Largest distance from an offset-corrected state to the true source.
    pub dist_to_source: f64,
    /// Norm of the stacked tracking error.
    pub tracking_error: f64,
    /// The reference changed at this step.
    pub ref_jump: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filaments: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub n_agents: usize,
    pub dimension: usize,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

fn vector_columns(out: &mut Vec<String>, name: &str, agent: usize, d: usize) {
    if d == 1 {
        out.push(format!("{name}{agent}"));
    } else {
        out.extend((1..=d).map(|k| format!("{name}{agent}_{k}")));
    }
}

/// Column names for `n` agents in `d` dimensions.
pub fn csv_header(n: usize, d: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for i in 1..=n {
        vector_columns(&mut cols, "x", i, d);
        vector_columns(&mut cols, "u", i, d);
        vector_columns(&mut cols, "s", i, d);
        cols.push(format!("V{i}"));
        cols.push(format!("eta{i}"));
        cols.push(format!("mode{i}"));
        vector_columns(&mut cols, "ref", i, d);
        cols.push(format!("e{i}"));
    }
    cols.extend(["max_gap", "dist_to_source", "tracking_error", "ref_jump"].map(String::from));
    cols
}

impl Trace {
    pub fn new(n_agents: usize, dimension: usize) -> Self {
        Trace {
            n_agents,
            dimension,
            records: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), TraceError> {
        writeln!(w, "{}", csv_header(self.n_agents, self.dimension).join(","))?;
        let mut row: Vec<String> = Vec::new();
        for r in &self.records {
            row.clear();
            row.push(r.t.to_string());
            for a in &r.agents {
                row.extend(a.x.iter().map(f64::to_string));
                row.extend(a.u.iter().map(f64::to_string));
                row.extend(a.s.iter().map(f64::to_string));
                row.push(a.lyapunov.to_string());
                row.push(a.eta.to_string());
                row.push(a.mode.as_str().to_string());
                row.extend(a.reference.iter().map(f64::to_string));
                row.push(a.error_norm.to_string());
            }
            row.push(r.max_gap.to_string());
            row.push(r.dist_to_source.to_string());
            row.push(r.tracking_error.to_string());
            row.push(u8::from(r.ref_jump).to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads a trace written by [`Trace::write_csv`]. Filament snapshots are
    /// not part of the CSV form.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Trace, TraceError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(TraceError::Parse {
            line: 1,
            reason: "empty file".into(),
        })??;
        let cols: Vec<&str> = header.split(',').collect();
        let n = cols.iter().filter(|c| c.starts_with("mode")).count();
        let d = cols.iter().filter(|c| **c == "x1" || c.starts_with("x1_")).count();
        if n == 0 || d == 0 || cols != csv_header(n, d) {
            return Err(TraceError::Parse {
                line: 1,
                reason: "unrecognized header".into(),
            });
        }
        let mut trace = Trace::new(n, d);
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(TraceError::Parse {
                    line: line_no,
                    reason: format!("expected {} fields, got {}", cols.len(), fields.len()),
                });
            }
            let parse = |s: &[&str]| -> Result<Vec<f64>, TraceError> {
                s.iter()
                    .map(|f| {
                        f.parse::<f64>().map_err(|e| TraceError::Parse {
                            line: line_no,
                            reason: format!("`{f}`: {e}"),
                        })
                    })
                    .collect()
            };
            let t = parse(&fields[..1])?[0];
            let mut agents = Vec::with_capacity(n);
            let mut pos = 1;
            let mut take = |k: usize| {
                let s = &fields[pos..pos + k];
                pos += k;
                s
            };
            for _ in 0..n {
                let x = parse(take(d))?;
                let u = parse(take(d))?;
                let s = parse(take(d))?;
                let lyapunov = parse(take(1))?[0];
                let eta = parse(take(1))?[0];
                let mode_str = take(1)[0];
                let mode = mode_str
                    .parse::<Mode>()
                    .map_err(|reason| TraceError::Parse { line: line_no, reason })?;
                let reference = parse(take(d))?;
                let error_norm = parse(take(1))?[0];
                agents.push(AgentSample {
                    x,
                    u,
                    s,
                    lyapunov,
                    eta,
                    mode,
                    reference,
                    error_norm,
                });
            }
            let tail = parse(take(4))?;
            trace.records.push(TraceRecord {
                t,
                agents,
                max_gap: tail[0],
                dist_to_source: tail[1],
                tracking_error: tail[2],
                ref_jump: tail[3] != 0.0,
                filaments: None,
            });
        }
        Ok(trace)
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }
}
