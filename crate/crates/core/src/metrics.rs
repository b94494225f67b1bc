//! Summary metrics over a finished trace.

use serde::Serialize;

use crate::trace::Trace;

/// Times are `f64::INFINITY` when the event never happens; JSON writes that
/// as `null`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusMetrics {
    /// First time after which the max pairwise gap stays below the tolerance.
    pub time_to_consensus: f64,
    /// First time after which every agent stays within `theta` of the source.
    pub time_to_theta: f64,
    pub final_tracking_error: f64,
    /// Largest tracking-error norm over the final second.
    pub final_second_tracking_error: f64,
    pub final_max_gap: f64,
    pub final_dist_to_source: f64,
    /// Largest `|s|` component over the run.
    pub max_abs_s: f64,
    /// Mean `|u_k - u_{k-1}|` per component over the final 20% of steps.
    pub chattering_index: f64,
    /// `sum_k sum_i |u_i| dt`.
    pub control_energy: f64,
}

/// First time from which `pred` holds through the end of the trace.
fn settling_time(trace: &Trace, pred: impl Fn(usize) -> bool) -> f64 {
    let mut since = f64::INFINITY;
    for (k, r) in trace.records.iter().enumerate() {
        if pred(k) {
            if since.is_infinite() {
                since = r.t;
            }
        } else {
            since = f64::INFINITY;
        }
    }
    since
}

pub fn consensus_metrics(trace: &Trace, tolerance: f64, theta: f64) -> ConsensusMetrics {
    let recs = &trace.records;
    let Some(last) = recs.last() else {
        return ConsensusMetrics {
            time_to_consensus: f64::INFINITY,
            time_to_theta: f64::INFINITY,
            final_tracking_error: f64::NAN,
            final_second_tracking_error: f64::NAN,
            final_max_gap: f64::NAN,
            final_dist_to_source: f64::NAN,
            max_abs_s: 0.0,
            chattering_index: 0.0,
            control_energy: 0.0,
        };
    };

    let time_to_consensus = settling_time(trace, |k| recs[k].max_gap < tolerance);
    let time_to_theta = settling_time(trace, |k| recs[k].dist_to_source <= theta);
    let final_second_tracking_error = recs
        .iter()
        .filter(|r| r.t >= last.t - 1.0)
        .map(|r| r.tracking_error)
        .fold(0.0, f64::max);
    let max_abs_s = recs
        .iter()
        .flat_map(|r| r.agents.iter().flat_map(|a| a.s.iter()))
        .fold(0.0_f64, |m, v| m.max(v.abs()));

    let start = recs.len() - recs.len() / 5;
    let mut total = 0.0;
    let mut count = 0usize;
    for k in start.max(1)..recs.len() {
        for (a, b) in recs[k].agents.iter().zip(&recs[k - 1].agents) {
            for (u1, u0) in a.u.iter().zip(&b.u) {
                total += (u1 - u0).abs();
                count += 1;
            }
        }
    }
    let chattering_index = if count == 0 { 0.0 } else { total / count as f64 };

    let mut control_energy = 0.0;
    for k in 0..recs.len() {
        let dt = if k + 1 < recs.len() {
            recs[k + 1].t - recs[k].t
        } else if k > 0 {
            recs[k].t - recs[k - 1].t
        } else {
            0.0
        };
        let norms: f64 = recs[k]
            .agents
            .iter()
            .map(|a| a.u.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum();
        control_energy += norms * dt;
    }

    ConsensusMetrics {
        time_to_consensus,
        time_to_theta,
        final_tracking_error: last.tracking_error,
        final_second_tracking_error,
        final_max_gap: last.max_gap,
        final_dist_to_source: last.dist_to_source,
        max_abs_s,
        chattering_index,
        control_energy,
    }
}

/// Finite-difference check of `V_dot < 0` and `s . s_dot < 0` per agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttractivityReport {
    /// Samples with `|s_i| > band`; central differences that straddle a
    /// reference jump are skipped.
    pub samples: usize,
    pub s_sdot_negative: usize,
    pub v_dot_negative: usize,
    pub band: f64,
}

impl AttractivityReport {
    pub fn s_sdot_fraction(&self) -> f64 {
        self.s_sdot_negative as f64 / self.samples.max(1) as f64
    }

    pub fn v_dot_fraction(&self) -> f64 {
        self.v_dot_negative as f64 / self.samples.max(1) as f64
    }
}

pub fn attractivity(trace: &Trace, band: f64) -> AttractivityReport {
    let r = &trace.records;
    let mut rep = AttractivityReport {
        samples: 0,
        s_sdot_negative: 0,
        v_dot_negative: 0,
        band,
    };
    for k in 1..r.len().saturating_sub(1) {
        if r[k].ref_jump || r[k + 1].ref_jump {
            continue;
        }
        let h = r[k + 1].t - r[k - 1].t;
        for (i, a) in r[k].agents.iter().enumerate() {
            let norm = a.s.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm <= band {
                continue;
            }
            let (prev, next) = (&r[k - 1].agents[i], &r[k + 1].agents[i]);
            let s_dot_s: f64 = (0..a.s.len()).map(|c| a.s[c] * (next.s[c] - prev.s[c]) / h).sum();
            let v_dot = (next.lyapunov - prev.lyapunov) / h;
            rep.samples += 1;
            rep.s_sdot_negative += usize::from(s_dot_s < 0.0);
            rep.v_dot_negative += usize::from(v_dot < 0.0);
        }
    }
    rep
}
