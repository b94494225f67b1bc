//! Scenario configuration. Every section fills missing keys from defaults;
//! the defaults reproduce the four-agent consensus scenario.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::PsoParams;
use crate::dynamics::{DisturbanceModel, DriftModel};
use crate::graph::{Digraph, Edge};
use crate::planner::PlannerConfig;
use crate::plume::{PlumeConfig, WindField};
use crate::smc::SmcParams;

/// A validation failure, naming the offending key.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("invalid `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    Consensus,
    Formation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    SlidingMode,
    /// Proportional PSO law toward the oscillation center, for comparison runs.
    Pso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentsConfig {
    pub count: usize,
    pub dimension: usize,
    pub scenario: ScenarioKind,
    /// Per-agent formation offsets; empty means all zero.
    pub offsets: Vec<Vec<f64>>,
    /// Per-agent initial states; empty means evenly spaced in `[-10, 10]`
    /// along every axis.
    pub initial_states: Vec<Vec<f64>>,
}

impl Default for AgentsConfig {
    fn default() -> Self {
        AgentsConfig {
            count: 4,
            dimension: 1,
            scenario: ScenarioKind::Consensus,
            offsets: Vec::new(),
            initial_states: Vec::new(),
        }
    }
}

/// Edge `[receiver, sender, weight]` with agents labelled from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec(pub usize, pub usize, pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    pub edges: Vec<EdgeSpec>,
    /// Agents (labelled from 1) that hear the virtual leader directly.
    pub leaders: Vec<usize>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            edges: vec![EdgeSpec(1, 3, 1.0), EdgeSpec(3, 2, 1.0), EdgeSpec(4, 3, 1.0)],
            leaders: vec![1, 2],
        }
    }
}

impl TopologyConfig {
    pub fn digraph(&self, n: usize) -> Result<Digraph, ConfigError> {
        let label = |key: &str, l: usize| {
            if l == 0 || l > n {
                Err(ConfigError::new(key, format!("agent label {l} outside 1..={n}")))
            } else {
                Ok(l - 1)
            }
        };
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            edges.push(Edge {
                receiver: label("topology.edges", e.0)?,
                sender: label("topology.edges", e.1)?,
                weight: e.2,
            });
        }
        let leaders = self
            .leaders
            .iter()
            .map(|&l| label("topology.leaders", l))
            .collect::<Result<Vec<_>, _>>()?;
        Digraph::from_edges(n, &edges, &leaders).map_err(|e| ConfigError::new("topology", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Interval between sensor instants.
    pub sensing_period: f64,
    /// Accuracy parameter for the distance to the source.
    pub theta: f64,
    /// Gap below which the group counts as in consensus.
    pub consensus_tolerance: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            dt: 1e-3,
            t_end: 10.0,
            sensing_period: 0.1,
            theta: 1e-3,
            consensus_tolerance: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub drift: DriftModel,
    pub disturbance: DisturbanceModel,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Keep filament positions in every trace record.
    pub record_filaments: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub name: String,
    pub seed: u64,
    pub controller: ControllerKind,
    /// Feed `(psi_k - psi_{k-1}) / sensing_period` forward as `psi_dot`.
    pub reference_feedforward: bool,
    pub agents: AgentsConfig,
    pub topology: TopologyConfig,
    pub time: TimeConfig,
    pub dynamics: DynamicsConfig,
    pub smc: SmcParams,
    pub pso: PsoParams,
    pub planner: PlannerConfig,
    pub plume: PlumeConfig,
    pub wind: WindField,
    pub output: OutputConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            name: "paper_consensus".into(),
            seed: 42,
            controller: ControllerKind::SlidingMode,
            reference_feedforward: false,
            agents: AgentsConfig::default(),
            topology: TopologyConfig::default(),
            time: TimeConfig::default(),
            dynamics: DynamicsConfig::default(),
            smc: SmcParams::default(),
            pso: PsoParams::default(),
            planner: PlannerConfig::default(),
            plume: PlumeConfig {
                source: vec![0.0],
                spinup: 15.0,
                ..PlumeConfig::default()
            },
            wind: WindField {
                noise_sigma: 1e-3,
                ..WindField::default()
            },
            output: OutputConfig::default(),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("must be positive and finite, got {v}")))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.agents.count;
        let d = self.agents.dimension;
        if n == 0 {
            return Err(ConfigError::new("agents.count", "must be at least 1"));
        }
        if d == 0 {
            return Err(ConfigError::new("agents.dimension", "must be at least 1"));
        }
        positive("time.dt", self.time.dt)?;
        positive("time.t_end", self.time.t_end)?;
        positive("time.theta", self.time.theta)?;
        positive("time.consensus_tolerance", self.time.consensus_tolerance)?;
        positive("time.sensing_period", self.time.sensing_period)?;
        if self.time.sensing_period < self.time.dt * (1.0 - 1e-9) {
            return Err(ConfigError::new("time.sensing_period", "must be at least time.dt"));
        }
        for (key, rows) in [
            ("agents.offsets", &self.agents.offsets),
            ("agents.initial_states", &self.agents.initial_states),
        ] {
            if rows.is_empty() {
                continue;
            }
            if rows.len() != n {
                return Err(ConfigError::new(
                    key,
                    format!("expected {n} entries, got {}", rows.len()),
                ));
            }
            if let Some(bad) = rows
                .iter()
                .position(|r| r.len() != d || r.iter().any(|v| !v.is_finite()))
            {
                return Err(ConfigError::new(
                    key,
                    format!("entry {} must hold {d} finite values", bad + 1),
                ));
            }
        }
        if self.agents.scenario == ScenarioKind::Consensus && self.agents.offsets.iter().flatten().any(|&v| v != 0.0) {
            return Err(ConfigError::new(
                "agents.offsets",
                "non-zero offsets need agents.scenario = \"formation\"",
            ));
        }
        self.topology.digraph(n)?;
        let bound = self.dynamics.disturbance.bound();
        if !(bound >= 0.0) || !bound.is_finite() {
            return Err(ConfigError::new(
                "dynamics.disturbance.amplitude",
                "must be finite and non-negative",
            ));
        }
        self.smc
            .validate()
            .map_err(|e| ConfigError::new("smc", e.to_string()))?;
        self.pso
            .validate()
            .map_err(|e| ConfigError::new("pso", e.to_string()))?;
        self.planner
            .validate()
            .map_err(|e| ConfigError::new("planner", e.to_string()))?;
        self.plume
            .validate(d)
            .map_err(|e| ConfigError::new("plume", e.to_string()))?;
        self.wind
            .validate(d)
            .map_err(|e| ConfigError::new("wind", e.to_string()))?;
        Ok(())
    }

    /// Formation offsets per agent (zeros for consensus).
    pub fn offsets(&self) -> Vec<DVector<f64>> {
        let d = self.agents.dimension;
        (0..self.agents.count)
            .map(|i| match (self.agents.scenario, self.agents.offsets.get(i)) {
                (ScenarioKind::Formation, Some(o)) => DVector::from_column_slice(o),
                _ => DVector::zeros(d),
            })
            .collect()
    }

    pub fn initial_states(&self) -> Vec<DVector<f64>> {
        let n = self.agents.count;
        let d = self.agents.dimension;
        if !self.agents.initial_states.is_empty() {
            return self
                .agents
                .initial_states
                .iter()
                .map(|r| DVector::from_column_slice(r))
                .collect();
        }
        (0..n)
            .map(|i| {
                let v = if n == 1 {
                    0.0
                } else {
                    -10.0 + 20.0 * i as f64 / (n - 1) as f64
                };
                DVector::from_element(d, v)
            })
            .collect()
    }

    /// Number of integration steps between sensor instants.
    pub fn sensing_stride(&self) -> usize {
        ((self.time.sensing_period / self.time.dt).round() as usize).max(1)
    }

    pub fn n_steps(&self) -> usize {
        (self.time.t_end / self.time.dt).round() as usize
    }
}
