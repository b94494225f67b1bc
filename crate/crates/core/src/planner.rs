//! Surge / cast / search waypoint planner.
//!
//! An agent that detects odor surges straight to the predicted source. One
//! that loses the scent casts back toward it, halving its distance each
//! sensing instant. When the whole group has been without a detection for
//! longer than `delta0`, agents search around the prediction with a Gaussian
//! draw.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Surging,
    Casting,
    Searching,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Surging => "surging",
            Mode::Casting => "casting",
            Mode::Searching => "searching",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "surging" => Ok(Mode::Surging),
            "casting" => Ok(Mode::Casting),
            "searching" => Ok(Mode::Searching),
            other => Err(format!("unknown planner mode `{other}`")),
        }
    }
}

/// How a casting waypoint is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CastingRule {
    /// `(x + x_hat) / 2`: halfway back toward the prediction.
    #[default]
    Midpoint,
    /// `|x - x_hat| / 2 + x_hat`, the scalar norm added to every axis.
    Literal,
}

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("planner.delta0 must be positive, got {0}")]
    Delta0(f64),
    #[error("planner.search_std must be non-negative, got {0}")]
    SearchStd(f64),
    #[error("planner.search_mean must be finite")]
    SearchMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// Group no-detection timeout before searching (s).
    pub delta0: f64,
    /// Per-axis mean of the search draw (m).
    pub search_mean: f64,
    /// Per-axis standard deviation of the search draw (m).
    pub search_std: f64,
    pub casting: CastingRule,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            delta0: 5.0,
            search_mean: 0.0,
            search_std: 1.0,
            casting: CastingRule::Midpoint,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if !(self.delta0 > 0.0) {
            return Err(PlannerError::Delta0(self.delta0));
        }
        if !(self.search_std >= 0.0) || !self.search_std.is_finite() {
            return Err(PlannerError::SearchStd(self.search_std));
        }
        if !self.search_mean.is_finite() {
            return Err(PlannerError::SearchMean);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerState {
    pub mode: Mode,
    /// Last time any agent in the group detected odor.
    pub last_detection_time: f64,
    pub config: PlannerConfig,
    pub predicted_source: Option<DVector<f64>>,
    pub waypoint: DVector<f64>,
}

impl PlannerState {
    pub fn new(config: PlannerConfig, initial_waypoint: DVector<f64>) -> Self {
        PlannerState {
            mode: Mode::Casting,
            last_detection_time: 0.0,
            config,
            predicted_source: None,
            waypoint: initial_waypoint,
        }
    }

    /// Classifies, records the prediction and advances the waypoint.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        own_detect: bool,
        group_detect_any: bool,
        now: f64,
        x: &DVector<f64>,
        predicted_source: Option<DVector<f64>>,
        rng: &mut R,
    ) -> &DVector<f64> {
        self.mode = classify_mode(own_detect, group_detect_any, now, self);
        if group_detect_any {
            self.last_detection_time = now;
        }
        if predicted_source.is_some() {
            self.predicted_source = predicted_source;
        }
        self.waypoint = next_waypoint(self.mode, x, self.predicted_source.as_ref(), rng, self);
        &self.waypoint
    }
}

pub fn classify_mode(own_detect: bool, group_detect_any: bool, now: f64, ps: &PlannerState) -> Mode {
    if own_detect {
        Mode::Surging
    } else if !group_detect_any && now - ps.last_detection_time > ps.config.delta0 {
        Mode::Searching
    } else {
        Mode::Casting
    }
}

/// Next waypoint for an agent at `x`. Without a prediction the current
/// waypoint is kept.
pub fn next_waypoint<R: Rng + ?Sized>(
    mode: Mode,
    x: &DVector<f64>,
    predicted_source: Option<&DVector<f64>>,
    rng: &mut R,
    ps: &PlannerState,
) -> DVector<f64> {
    let Some(target) = predicted_source else {
        return ps.waypoint.clone();
    };
    match mode {
        Mode::Surging => target.clone(),
        Mode::Casting => match ps.config.casting {
            CastingRule::Midpoint => (x + target) * 0.5,
            CastingRule::Literal => target.add_scalar((x - target).norm() / 2.0),
        },
        Mode::Searching => {
            if ps.config.search_std == 0.0 {
                return target.add_scalar(ps.config.search_mean);
            }
            let normal = Normal::new(ps.config.search_mean, ps.config.search_std)
                .expect("search_std validated as finite and non-negative");
            target.map(|c| c + normal.sample(rng))
        }
    }
}
