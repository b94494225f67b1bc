//! Group decision layer: concentration-driven PSO bests, the oscillation
//! center `p`, and its fusion with the wind estimate `q` into the tracking
//! reference `psi = c1 p + (1 - c1) q`.
//!
//! The PSO update itself is kept for analysis only. The agents are moved by
//! the sliding-mode layer, never by [`pso_control`].

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DecisionError {
    #[error("pso.alpha1 and pso.alpha2 must be positive (got {0}, {1})")]
    Acceleration(f64, f64),
    #[error("pso.c1 must lie strictly inside (0, 1), got {0}")]
    FusionWeight(f64),
    #[error("pso.alpha1 + pso.alpha2 must be non-zero")]
    ZeroAccelerationSum,
    #[error("pso.detection_threshold must be non-negative, got {0}")]
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsoParams {
    pub alpha1: f64,
    pub alpha2: f64,
    /// Inertia factor of the analysis-only velocity update.
    pub inertia_omega: f64,
    pub c1: f64,
    /// Concentration at or above which an agent reports a detection.
    pub detection_threshold: f64,
}

impl Default for PsoParams {
    fn default() -> Self {
        PsoParams {
            alpha1: 0.25,
            alpha2: 0.25,
            inertia_omega: 2.0,
            c1: 0.5,
            detection_threshold: 0.05,
        }
    }
}

impl PsoParams {
    pub fn validate(&self) -> Result<(), DecisionError> {
        if !(self.alpha1 > 0.0 && self.alpha2 > 0.0) {
            return Err(DecisionError::Acceleration(self.alpha1, self.alpha2));
        }
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return Err(DecisionError::FusionWeight(self.c1));
        }
        if !(self.detection_threshold >= 0.0) {
            return Err(DecisionError::Threshold(self.detection_threshold));
        }
        Ok(())
    }
}

/// A position together with the concentration score it earned.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub position: DVector<f64>,
    pub score: f64,
}

/// A neighbor's report as seen by the receiving agent.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborReport {
    pub position: DVector<f64>,
    pub concentration: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecisionState {
    pub best_local: Option<Scored>,
    /// Best weighted neighbor report; the stored score is `a_ij * g(x_j)`.
    pub best_global: Option<Scored>,
    pub oscillation_center: Option<DVector<f64>>,
    pub wind_estimate: Option<DVector<f64>>,
    pub reference: Option<DVector<f64>>,
    pub last_update: f64,
}

impl DecisionState {
    /// Highest score this agent knows about.
    pub fn best_score(&self) -> f64 {
        let l = self.best_local.as_ref().map_or(f64::NEG_INFINITY, |b| b.score);
        let g = self.best_global.as_ref().map_or(f64::NEG_INFINITY, |b| b.score);
        l.max(g)
    }

    /// Records a fresh wind estimate and refreshes `p` and `psi`.
    pub fn refresh(
        &mut self,
        wind_estimate: Option<DVector<f64>>,
        pp: &PsoParams,
        t: f64,
    ) -> Result<(), DecisionError> {
        if let Some(q) = wind_estimate {
            self.wind_estimate = Some(q);
        }
        if let Some(local) = &self.best_local {
            // An agent without neighbors has no global best; its own best stands in.
            let global = self.best_global.as_ref().unwrap_or(local);
            self.oscillation_center = Some(oscillation_center(&local.position, &global.position, pp)?);
        }
        if let (Some(p), Some(q)) = (&self.oscillation_center, &self.wind_estimate) {
            self.reference = Some(fuse_reference(p, q, pp.c1));
        }
        self.last_update = t;
        Ok(())
    }
}

/// Keeps the higher-scoring of the incumbent bests and the new observations.
/// The incumbent wins ties.
pub fn update_bests(d: &mut DecisionState, own: (&DVector<f64>, f64), neighbor_reports: &[NeighborReport]) {
    let (own_pos, own_score) = own;
    let replace_local = d.best_local.as_ref().is_none_or(|b| own_score > b.score);
    if replace_local {
        d.best_local = Some(Scored {
            position: own_pos.clone(),
            score: own_score,
        });
    }

    let mut candidate: Option<(&NeighborReport, f64)> = None;
    for r in neighbor_reports.iter().filter(|r| r.weight > 0.0) {
        let weighted = r.weight * r.concentration;
        if candidate.is_none_or(|(_, s)| weighted > s) {
            candidate = Some((r, weighted));
        }
    }
    if let Some((r, weighted)) = candidate {
        if d.best_global.as_ref().is_none_or(|b| weighted > b.score) {
            d.best_global = Some(Scored {
                position: r.position.clone(),
                score: weighted,
            });
        }
    }
}

/// `(alpha1 x_l + alpha2 x_g) / (alpha1 + alpha2)`.
pub fn oscillation_center(
    local: &DVector<f64>,
    global: &DVector<f64>,
    pp: &PsoParams,
) -> Result<DVector<f64>, DecisionError> {
    let total = pp.alpha1 + pp.alpha2;
    if total == 0.0 {
        return Err(DecisionError::ZeroAccelerationSum);
    }
    Ok((local * pp.alpha1 + global * pp.alpha2) / total)
}

/// Proportional PSO law `(alpha1 + alpha2)(p - x)`.
pub fn pso_control(p: &DVector<f64>, x: &DVector<f64>, pp: &PsoParams) -> DVector<f64> {
    (p - x) * (pp.alpha1 + pp.alpha2)
}

/// Textbook PSO step: `v' = omega v + u`, `x' = x + v'`.
pub fn pso_velocity_update(
    velocity: &DVector<f64>,
    x: &DVector<f64>,
    control: &DVector<f64>,
    pp: &PsoParams,
) -> (DVector<f64>, DVector<f64>) {
    let v_next = velocity * pp.inertia_omega + control;
    let x_next = x + &v_next;
    (v_next, x_next)
}

/// `c1 p + (1 - c1) q`.
pub fn fuse_reference(p: &DVector<f64>, q: &DVector<f64>, c1: f64) -> DVector<f64> {
    p * c1 + q * (1.0 - c1)
}
