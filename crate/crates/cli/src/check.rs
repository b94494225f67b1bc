//! `check`: structural and gain conditions of a scenario, without running it.

use std::fmt::Write;

use odor_consensus::config::SimConfig;
use odor_consensus::graph::{build_matrices, determinant, has_spanning_tree, rank, Root};
use odor_consensus::sim::realized_mu_bound;
use odor_consensus::smc::{gain_check, Coupling, GainReport};
use serde::Serialize;

use crate::{singular_message, CliError};

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub scenario: String,
    pub n_agents: usize,
    pub leader_spanning_tree: bool,
    pub h_rank: usize,
    pub h_determinant: f64,
    pub h_nonsingular: bool,
    /// `|H|_inf`, present when `H` is nonsingular.
    pub h_inf_norm: Option<f64>,
    pub disturbance_bound: f64,
    pub gain: Option<GainReport>,
}

impl CheckReport {
    pub fn structural_ok(&self) -> bool {
        self.leader_spanning_tree && self.h_nonsingular
    }
}

pub fn check(cfg: &SimConfig) -> Result<CheckReport, CliError> {
    let n = cfg.agents.count;
    let graph = cfg
        .topology
        .digraph(n)
        .map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    let m = build_matrices(&graph).map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    let tree = has_spanning_tree(&graph, Root::VirtualLeader).map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    let h_rank = rank(&m.coupling);
    let bound = cfg.dynamics.disturbance.bound();
    let (h_inf_norm, gain) = match Coupling::new(m.coupling.clone(), cfg.agents.dimension) {
        Ok(c) => {
            let empirical = realized_mu_bound(cfg, &c);
            let report = gain_check(&cfg.smc, &c, bound, 0.0).with_empirical(empirical, &cfg.smc);
            (Some(c.inf_norm()), Some(report))
        }
        Err(_) => (None, None),
    };
    Ok(CheckReport {
        scenario: cfg.name.clone(),
        n_agents: n,
        leader_spanning_tree: tree,
        h_rank,
        h_determinant: determinant(&m.coupling),
        h_nonsingular: h_rank == n,
        h_inf_norm,
        disturbance_bound: bound,
        gain,
    })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

pub fn render(r: &CheckReport, cfg: &SimConfig) -> String {
    let mut s = String::new();
    let p = &cfg.smc;
    let _ = writeln!(s, "scenario: {}", r.scenario);
    let _ = writeln!(
        s,
        "spanning tree rooted at the virtual leader: {}",
        yes_no(r.leader_spanning_tree)
    );
    let _ = writeln!(
        s,
        "rank(L + B): {} of {} (det {})",
        r.h_rank, r.n_agents, r.h_determinant
    );
    let _ = writeln!(s, "L + B nonsingular: {}", yes_no(r.h_nonsingular));
    if let Some(norm) = r.h_inf_norm {
        let _ = writeln!(s, "|L + B|_inf: {norm}");
    }
    let _ = writeln!(s, "disturbance bound: {}", r.disturbance_bound);
    let Some(g) = &r.gain else {
        let _ = writeln!(s, "gain conditions: not evaluated");
        return s;
    };
    let _ = writeln!(
        s,
        "w-condition: {} (w = {} vs bound {}, margin {:.6})",
        verdict(g.w_condition),
        p.w_gain,
        g.disturbance_bound,
        g.w_margin
    );
    let _ = writeln!(
        s,
        "mu-condition, conservative (Lambda |H|_inf bound, Gamma = 1): {} (mu = {} vs {:.6}, margin {:.6})",
        verdict(g.mu_conservative_condition),
        p.mu,
        g.mu_conservative_bound,
        g.mu_conservative_margin
    );
    if let (Some(b), Some(m)) = (g.mu_empirical_bound, g.mu_empirical_margin) {
        let _ = writeln!(
            s,
            "mu-condition, empirical (Lambda sup_i |(H disturbance)_i| over the run): {} (mu = {} vs {:.6}, margin {:.6})",
            verdict(m > 0.0),
            p.mu,
            b,
            m
        );
    }
    let _ = writeln!(
        s,
        "dominance radius |s|: conservative {:.6}, empirical {:.6}",
        g.conservative_dominance_radius,
        g.empirical_dominance_radius.unwrap_or(f64::NAN)
    );
    if g.near_manifold_gap {
        let _ = writeln!(
            s,
            "discrepancy: the mu-condition compares mu with the bound, but the reaching term is \
             mu asinh(m + w|s|), which equals {:.6} at s = 0; inside the dominance radius the \
             disturbance can outweigh it, so V_dot < 0 is not guaranteed there",
            p.mu * p.m_offset.asinh()
        );
    }
    s
}

/// Report text and exit code: 0 when the structure is sound, 4 otherwise.
pub fn run_check(cfg: &SimConfig) -> Result<(String, i32), CliError> {
    let r = check(cfg)?;
    let mut text = render(&r, cfg);
    let code = if r.structural_ok() {
        0
    } else {
        let _ = writeln!(text, "error: {}", singular_message(r.h_rank, r.n_agents));
        4
    };
    Ok((text, code))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load;

    #[test]
    fn paper_topology_is_sound() {
        let cfg = load("paper_consensus", &[]).unwrap();
        let r = check(&cfg).unwrap();
        assert!(r.leader_spanning_tree);
        assert_eq!(r.h_rank, 4);
        assert_eq!(r.h_determinant, 2.0);
        assert_eq!(r.h_inf_norm, Some(3.0));
        let g = r.gain.unwrap();
        assert!(g.w_condition);
        assert!((g.w_margin - 1.7).abs() < 1e-12);
        assert!(g.mu_empirical_bound.is_some());
        assert!(g.near_manifold_gap);
        let (text, code) = run_check(&cfg).unwrap();
        assert_eq!(code, 0);
        assert!(text.contains("w-condition: PASS"));
        assert!(text.contains("conservative"));
        assert!(text.contains("empirical"));
        assert!(text.contains("discrepancy"));
    }

    #[test]
    fn edgeless_leaderless_is_singular() {
        let cfg = load(
            "paper_consensus",
            &["topology.edges=[]".into(), "topology.leaders=[]".into()],
        )
        .unwrap();
        let (text, code) = run_check(&cfg).unwrap();
        assert_eq!(code, 4);
        assert!(text.contains("spanning tree"), "{text}");
        assert!(text.contains("rank(L + B): 0 of 4"));
    }

    #[test]
    fn weak_w_is_reported() {
        let cfg = load("paper_consensus", &["smc.w_gain=0.1".into()]).unwrap();
        let (text, code) = run_check(&cfg).unwrap();
        assert_eq!(code, 0);
        assert!(text.contains("w-condition: FAIL"), "{text}");
    }
}
