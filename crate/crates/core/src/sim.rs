//! Closed-loop simulation: plume, sensing, decision layer, planner and
//! controller wired around explicit-Euler agent dynamics.
//!
//! Ordering within a step at time `t`:
//! 1. at sensing instants, advance the plume to `t`, sense, update bests,
//!    estimate the source from the wind, fuse `psi`, update planners and set
//!    the references;
//! 2. sample the disturbance and the drift, compute the control and record;
//! 3. integrate `x += (f + u + disturbance) dt`.
//!
//! The decision layer and planner work in the offset-corrected frame
//! `y_i = x_i - delta_i`; agent `i` tracks `base_i + delta_i`.

use log::warn;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, ControllerKind, SimConfig};
use crate::decision::{pso_control, update_bests, DecisionState, NeighborReport};
use crate::graph::{build_matrices, Digraph};
use crate::planner::{Mode, PlannerState};
use crate::plume::{wind_source_estimate, PlumeState};
use crate::smc::{self, compute_control, gain_check, ControlInput, Coupling, SmcError};
use crate::trace::{AgentSample, Trace, TraceRecord};

const PLUME_STREAM: u64 = 1;
const PLANNER_STREAM: u64 = 2;
const DISTURBANCE_STREAM: u64 = 3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Control(#[from] SmcError),
    #[error("non-finite {what} for agent {agent} at t = {t}")]
    NonFinite { what: &'static str, agent: usize, t: f64 },
    #[error("disturbance norm {norm} exceeds bound {bound} for agent {agent} at t = {t}")]
    DisturbanceBound {
        norm: f64,
        bound: f64,
        agent: usize,
        t: f64,
    },
    #[error("reference replay has {have} steps, run needs {need}")]
    ReplayLength { have: usize, need: usize },
}

/// Per-step base references (offsets removed) taken from an earlier run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceReplay {
    pub steps: Vec<Vec<DVector<f64>>>,
}

impl ReferenceReplay {
    /// Strips `offsets` from the references recorded in `trace`.
    pub fn from_trace(trace: &Trace, offsets: &[DVector<f64>]) -> Self {
        let steps = trace
            .records
            .iter()
            .map(|r| {
                r.agents
                    .iter()
                    .zip(offsets)
                    .map(|(a, d)| DVector::from_column_slice(&a.reference) - d)
                    .collect()
            })
            .collect();
        ReferenceReplay { steps }
    }
}

fn stack(parts: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        parts.iter().map(|p| p.len()).sum(),
        parts.iter().flat_map(|p| p.iter().copied()),
    )
}

fn agent_norm(v: &DVector<f64>, i: usize, d: usize) -> f64 {
    v.rows(i * d, d).norm()
}

pub struct World {
    cfg: SimConfig,
    graph: Digraph,
    coupling: Coupling,
    offsets: Vec<DVector<f64>>,
    offsets_stacked: DVector<f64>,
    x: DVector<f64>,
    step_index: usize,
    plume: PlumeState,
    last_plume_time: f64,
    decisions: Vec<DecisionState>,
    planners: Vec<PlannerState>,
    base: Vec<DVector<f64>>,
    base_rate: Vec<DVector<f64>>,
    ref_jump: bool,
    replay: Option<ReferenceReplay>,
    plume_rng: ChaCha8Rng,
    planner_rng: ChaCha8Rng,
    disturbance_rng: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl World {
    /// Validates `cfg`, builds the coupling and spins the plume up to `t = 0`.
    pub fn new(cfg: SimConfig) -> Result<World, SimError> {
        cfg.validate()?;
        let n = cfg.agents.count;
        let d = cfg.agents.dimension;
        let graph = cfg.topology.digraph(n)?;
        let matrices = build_matrices(&graph).map_err(|e| ConfigError::new("topology", e.to_string()))?;
        let coupling = Coupling::new(matrices.coupling, d)?;
        let offsets = cfg.offsets();
        let x0 = cfg.initial_states();
        let base: Vec<DVector<f64>> = x0.iter().zip(&offsets).map(|(x, o)| x - o).collect();

        let report = gain_check(&cfg.smc, &coupling, cfg.dynamics.disturbance.bound(), 0.0);
        if !report.passes() {
            warn!(
                "gain conditions not met (w margin {:.4}, conservative mu margin {:.4}); monitoring margins per step",
                report.w_margin, report.mu_conservative_margin
            );
        }

        let mut plume_rng = stream(cfg.seed, PLUME_STREAM);
        let mut plume = PlumeState::from_config(&cfg.plume);
        let substep = cfg.time.sensing_period / cfg.plume.substeps as f64;
        plume.spin_up(&cfg.wind, substep, &mut plume_rng);

        Ok(World {
            graph,
            coupling,
            offsets_stacked: stack(&offsets),
            x: stack(&x0),
            step_index: 0,
            plume,
            last_plume_time: 0.0,
            decisions: vec![DecisionState::default(); n],
            planners: base
                .iter()
                .map(|b| PlannerState::new(cfg.planner.clone(), b.clone()))
                .collect(),
            base_rate: vec![DVector::zeros(d); n],
            base,
            offsets,
            ref_jump: false,
            replay: None,
            plume_rng,
            planner_rng: stream(cfg.seed, PLANNER_STREAM),
            disturbance_rng: stream(cfg.seed, DISTURBANCE_STREAM),
            cfg,
        })
    }

    /// Runs with the base references taken from `replay` instead of the
    /// decision layer. Sensing still runs so modes are recorded.
    pub fn with_replay(cfg: SimConfig, replay: ReferenceReplay) -> Result<World, SimError> {
        let need = cfg.n_steps() + 1;
        if replay.steps.len() < need {
            return Err(SimError::ReplayLength {
                have: replay.steps.len(),
                need,
            });
        }
        let mut w = World::new(cfg)?;
        w.replay = Some(replay);
        Ok(w)
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.cfg.time.dt
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn plume(&self) -> &PlumeState {
        &self.plume
    }

    pub fn decisions(&self) -> &[DecisionState] {
        &self.decisions
    }

    fn dim(&self) -> usize {
        self.cfg.agents.dimension
    }

    fn n(&self) -> usize {
        self.cfg.agents.count
    }

    fn offset_frame(&self, i: usize) -> DVector<f64> {
        let d = self.dim();
        self.x.rows(i * d, d) - &self.offsets[i]
    }

    fn sense(&mut self, t: f64) {
        let n = self.n();
        if t > self.last_plume_time {
            self.plume.advance(
                &self.cfg.wind,
                self.last_plume_time,
                t,
                self.cfg.plume.substeps,
                &mut self.plume_rng,
            );
            self.last_plume_time = t;
        }
        let d = self.dim();
        let actual: Vec<DVector<f64>> = (0..n).map(|i| self.x.rows(i * d, d).into_owned()).collect();
        let frame: Vec<DVector<f64>> = (0..n).map(|i| self.offset_frame(i)).collect();
        let readings: Vec<f64> = actual.iter().map(|x| self.plume.concentration_at(x)).collect();
        let threshold = self.cfg.pso.detection_threshold;
        let detects: Vec<bool> = readings.iter().map(|&c| c >= threshold).collect();
        let any_detect = detects.iter().any(|&b| b);

        for i in 0..n {
            let reports: Vec<NeighborReport> = self
                .graph
                .in_neighbors(i)
                .map(|(j, weight)| NeighborReport {
                    position: frame[j].clone(),
                    concentration: readings[j],
                    weight,
                })
                .collect();
            update_bests(&mut self.decisions[i], (&frame[i], readings[i]), &reports);
            let q = if detects[i] {
                self.plume.dominant_filament(&actual[i]).map(wind_source_estimate)
            } else {
                None
            };
            self.decisions[i]
                .refresh(q, &self.cfg.pso, t)
                .expect("validated alpha1 + alpha2 > 0");
        }

        // The best-informed agent with a fused estimate plays the virtual leader.
        let mut leader: Option<usize> = None;
        for i in 0..n {
            if self.decisions[i].reference.is_some()
                && leader.is_none_or(|l| self.decisions[i].best_score() > self.decisions[l].best_score())
            {
                leader = Some(i);
            }
        }
        let group_psi = leader.and_then(|l| self.decisions[l].reference.clone());

        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let predicted = self.decisions[i].reference.clone().or_else(|| group_psi.clone());
            let waypoint = self.planners[i]
                .update(detects[i], any_detect, t, &frame[i], predicted, &mut self.planner_rng)
                .clone();
            next.push(group_psi.clone().unwrap_or(waypoint));
        }
        self.set_base(next, self.step_index > 0);
    }

    fn set_base(&mut self, next: Vec<DVector<f64>>, has_previous: bool) {
        let period = self.cfg.time.sensing_period;
        self.ref_jump = next.iter().zip(&self.base).any(|(a, b)| a != b);
        if self.cfg.reference_feedforward && has_previous {
            self.base_rate = next.iter().zip(&self.base).map(|(a, b)| (a - b) / period).collect();
        }
        self.base = next;
    }

    /// Advances one integration step and returns the record at the step's
    /// start time.
    pub fn step(&mut self) -> Result<TraceRecord, SimError> {
        let (record, x_next) = self.evaluate()?;
        self.x = x_next;
        self.step_index += 1;
        let t = self.time();
        let d = self.dim();
        if let Some(k) = self.x.iter().position(|v| !v.is_finite()) {
            return Err(SimError::NonFinite {
                what: "state",
                agent: k / d,
                t,
            });
        }
        Ok(record)
    }

    /// Record at the current time without integrating.
    pub fn observe(&mut self) -> Result<TraceRecord, SimError> {
        self.evaluate().map(|(r, _)| r)
    }

    fn evaluate(&mut self) -> Result<(TraceRecord, DVector<f64>), SimError> {
        let t = self.time();
        let n = self.n();
        let d = self.dim();
        let dt = self.cfg.time.dt;
        self.ref_jump = false;
        let sensing = self.step_index.is_multiple_of(self.cfg.sensing_stride());
        if sensing {
            self.sense(t);
        }
        if let Some(replay) = &self.replay {
            let next = replay.steps[self.step_index].clone();
            self.set_base(next, false);
        }

        let reference = stack(&self.base) + &self.offsets_stacked;
        let reference_rate = stack(&self.base_rate);
        let drift = self.cfg.dynamics.drift.eval(&self.x, t);
        let disturbance = self.cfg.dynamics.disturbance.sample(t, n, d, &mut self.disturbance_rng);
        let bound = self.cfg.dynamics.disturbance.bound();
        for i in 0..n {
            let norm = agent_norm(&disturbance, i, d);
            if norm > bound * (1.0 + 1e-12) {
                return Err(SimError::DisturbanceBound {
                    norm,
                    bound,
                    agent: i,
                    t,
                });
            }
        }

        let input = ControlInput {
            x: &self.x,
            reference: &reference,
            reference_rate: &reference_rate,
            drift: &drift,
        };
        let out = compute_control(input, &self.coupling, &self.cfg.smc, dt)?;
        let u = match self.cfg.controller {
            ControllerKind::SlidingMode => out.u.clone(),
            ControllerKind::Pso => {
                let mut u = DVector::zeros(n * d);
                for i in 0..n {
                    let target = match &self.decisions[i].oscillation_center {
                        Some(p) => p + &self.offsets[i],
                        None => reference.rows(i * d, d).into_owned(),
                    };
                    let xi = self.x.rows(i * d, d).into_owned();
                    u.rows_mut(i * d, d)
                        .copy_from(&pso_control(&target, &xi, &self.cfg.pso));
                }
                u
            }
        };
        if let Some(k) = u.iter().position(|v| !v.is_finite()) {
            return Err(SimError::NonFinite {
                what: "control",
                agent: k / d,
                t,
            });
        }

        let v = smc::lyapunov(&out.s, d);
        let eta = smc::reachability_margin(&out.eps, &out.s, &disturbance, &self.coupling, &self.cfg.smc);
        let source = self.plume.source_position().clone();
        let frame: Vec<DVector<f64>> = (0..n).map(|i| self.offset_frame(i)).collect();
        let mut max_gap: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                max_gap = max_gap.max((&frame[i] - &frame[j]).norm());
            }
        }
        let dist_to_source = frame.iter().map(|y| (y - &source).norm()).fold(0.0, f64::max);
        let slice = |v: &DVector<f64>, i: usize| v.as_slice()[i * d..(i + 1) * d].to_vec();
        let agents = (0..n)
            .map(|i| AgentSample {
                x: slice(&self.x, i),
                u: slice(&u, i),
                s: slice(&out.s, i),
                lyapunov: v[i],
                eta: eta[i],
                mode: self.planners[i].mode,
                reference: slice(&reference, i),
                error_norm: agent_norm(&out.error, i, d),
            })
            .collect();
        let filaments = (sensing && self.cfg.output.record_filaments).then(|| {
            self.plume
                .filaments
                .iter()
                .map(|f| f.position.as_slice().to_vec())
                .collect()
        });
        let record = TraceRecord {
            t,
            agents,
            max_gap,
            dist_to_source,
            tracking_error: out.error.norm(),
            ref_jump: self.ref_jump,
            filaments,
        };
        let x_next = &self.x + (drift + &u + disturbance) * dt;
        Ok((record, x_next))
    }

    pub fn modes(&self) -> Vec<Mode> {
        self.planners.iter().map(|p| p.mode).collect()
    }
}

/// Steps `world` to the configured end time; the trace holds one record per
/// step plus one at `t_end`.
pub fn run_world(mut world: World) -> Result<Trace, SimError> {
    let steps = world.cfg.n_steps();
    let mut trace = Trace::new(world.n(), world.dim());
    trace.records.reserve(steps + 1);
    for _ in 0..steps {
        trace.records.push(world.step()?);
    }
    trace.records.push(world.observe()?);
    Ok(trace)
}

/// `sup Lambda |((H ⊗ I_d) disturbance)_i|` over the disturbance a run of
/// `cfg` would see, replayed from the same seeded stream.
pub fn realized_mu_bound(cfg: &SimConfig, coupling: &Coupling) -> f64 {
    let n = cfg.agents.count;
    let d = cfg.agents.dimension;
    let mut rng = stream(cfg.seed, DISTURBANCE_STREAM);
    let samples: Vec<DVector<f64>> = (0..=cfg.n_steps())
        .map(|k| cfg.dynamics.disturbance.sample(k as f64 * cfg.time.dt, n, d, &mut rng))
        .collect();
    smc::empirical_mu_bound(&cfg.smc, coupling, &samples)
}

pub fn run_scenario(cfg: SimConfig) -> Result<Trace, SimError> {
    run_world(World::new(cfg)?)
}
