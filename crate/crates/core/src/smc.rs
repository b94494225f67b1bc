//! Distributed sliding-mode layer.
//!
//! Errors are stacked agent-major: entry `i * d + k` is axis `k` of agent `i`.
//! The coupling matrix `H = L + B` acts on that layout as `H ⊗ I_d`.
//!
//! * topological error `eps = (H ⊗ I_d) e`
//! * manifold `s = lambda1 tanh(lambda2 eps)`
//! * reaching law `s_dot = -mu asinh(m + w |s|) sign(s)`
//! * control `u = -(Lambda H)^-1 Gamma^-1 [mu asinh(m + w|s|) sign(s)] - f + psi_dot`
//!   with `Lambda = lambda1 lambda2` and `Gamma = 1 - tanh^2(lambda2 eps)`.
//!
//! With the disturbance removed the closed loop reproduces the reaching law
//! exactly, because `s_dot = Lambda Gamma H (x_dot - psi_dot)`.

use log::warn;
use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph;

/// Floor applied to `Gamma` before inversion.
pub const GAMMA_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, PartialEq)]
pub enum SmcError {
    #[error("smc.{0} must be positive")]
    NonPositive(&'static str),
    #[error("smc.boundary_layer must be non-negative")]
    BoundaryLayer,
    #[error("coupling matrix H = L + B is singular (rank {rank} < {n}); the digraph needs a spanning tree rooted at the leader")]
    SingularCoupling { rank: usize, n: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("integration step must be positive")]
    Step,
}

/// How `Gamma^-1` is realized when the law is applied over a finite step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discretization {
    /// Pointwise derivative `Gamma = sech^2(lambda2 eps)`.
    Derivative,
    /// Secant of `tanh` across the step: the Euler update lands exactly on
    /// `s - dt * reaching_rate(s)`. Converges to `Derivative` as `dt -> 0`.
    #[default]
    Secant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmcParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu: f64,
    pub m_offset: f64,
    pub w_gain: f64,
    /// Half-width of the `tanh(s / phi)` replacement for `sign(s)`; 0 keeps `sign`.
    pub boundary_layer: f64,
    pub discretization: Discretization,
}

impl Default for SmcParams {
    fn default() -> Self {
        SmcParams {
            lambda1: 1.774,
            lambda2: 2.85,
            mu: 5.0,
            m_offset: 1e-3,
            w_gain: 2.0,
            boundary_layer: 0.0,
            discretization: Discretization::Secant,
        }
    }
}

impl SmcParams {
    pub fn validate(&self) -> Result<(), SmcError> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("mu", self.mu),
            ("m_offset", self.m_offset),
            ("w_gain", self.w_gain),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SmcError::NonPositive(name));
            }
        }
        if !(self.boundary_layer >= 0.0) {
            return Err(SmcError::BoundaryLayer);
        }
        if self.m_offset >= self.w_gain {
            warn!(
                "smc.m_offset = {} is not small against smc.w_gain = {}",
                self.m_offset, self.w_gain
            );
        }
        Ok(())
    }

    /// `Lambda = lambda1 * lambda2`.
    pub fn lambda(&self) -> f64 {
        self.lambda1 * self.lambda2
    }

    fn switch(&self, s: f64) -> f64 {
        if self.boundary_layer > 0.0 {
            (s / self.boundary_layer).tanh()
        } else if s > 0.0 {
            1.0
        } else if s < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// `H` together with the factorization of `H ⊗ I_d`.
#[derive(Debug, Clone)]
pub struct Coupling {
    h: DMatrix<f64>,
    dim: usize,
    lifted: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
}

impl Coupling {
    pub fn new(h: DMatrix<f64>, dim: usize) -> Result<Self, SmcError> {
        if !h.is_square() {
            return Err(SmcError::Dimension(format!("H is {}x{}", h.nrows(), h.ncols())));
        }
        if dim == 0 {
            return Err(SmcError::Dimension("spatial dimension must be positive".into()));
        }
        let n = h.nrows();
        let rank = graph::rank(&h);
        if rank < n {
            return Err(SmcError::SingularCoupling { rank, n });
        }
        let lifted = h.kronecker(&DMatrix::<f64>::identity(dim, dim));
        let lu = lifted.clone().lu();
        Ok(Coupling { h, dim, lifted, lu })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn n_agents(&self) -> usize {
        self.h.nrows()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(H ⊗ I_d) v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.lifted * v
    }

    /// `(H ⊗ I_d)^-1 v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(v).expect("coupling checked non-singular at construction")
    }

    /// Maximum absolute row sum of `H`.
    pub fn inf_norm(&self) -> f64 {
        self.h
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// `(H ⊗ I_d) e` for an agent-major stacked error.
pub fn topological_error(h: &DMatrix<f64>, e: &DVector<f64>) -> Result<DVector<f64>, SmcError> {
    let n = h.nrows();
    if !h.is_square() || n == 0 || !e.len().is_multiple_of(n) || e.is_empty() {
        return Err(SmcError::Dimension(format!(
            "H is {}x{} but the stacked error has {} entries",
            h.nrows(),
            h.ncols(),
            e.len()
        )));
    }
    let d = e.len() / n;
    let mut out = DVector::zeros(e.len());
    for i in 0..n {
        for j in 0..n {
            let hij = h[(i, j)];
            if hij != 0.0 {
                for k in 0..d {
                    out[i * d + k] += hij * e[j * d + k];
                }
            }
        }
    }
    Ok(out)
}

pub fn sliding_value(eps: &DVector<f64>, p: &SmcParams) -> DVector<f64> {
    eps.map(|e| p.lambda1 * (p.lambda2 * e).tanh())
}

/// Commanded `s_dot` of the asinh reaching law, componentwise.
pub fn reaching_rate(s: &DVector<f64>, p: &SmcParams) -> DVector<f64> {
    s.map(|si| -p.mu * (p.m_offset + p.w_gain * si.abs()).asinh() * p.switch(si))
}

/// `Gamma = 1 - tanh^2(lambda2 eps)`, evaluated as `sech^2` and floored at
/// [`GAMMA_FLOOR`]. The flag reports whether the floor was hit.
pub fn gamma(eps: &DVector<f64>, p: &SmcParams) -> (DVector<f64>, bool) {
    let mut floored = false;
    let g = eps.map(|e| {
        let c = (p.lambda2 * e).cosh();
        let raw = 1.0 / (c * c);
        if raw < GAMMA_FLOOR || !raw.is_finite() {
            floored = true;
            GAMMA_FLOOR
        } else {
            raw
        }
    });
    (g, floored)
}

/// Everything the controller reads at one instant, stacked agent-major.
#[derive(Debug, Clone, Copy)]
pub struct ControlInput<'a> {
    pub x: &'a DVector<f64>,
    /// Per-agent reference, formation offsets included.
    pub reference: &'a DVector<f64>,
    pub reference_rate: &'a DVector<f64>,
    /// Nominal drift `f(x, t)` the controller cancels.
    pub drift: &'a DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u: DVector<f64>,
    pub error: DVector<f64>,
    pub eps: DVector<f64>,
    pub s: DVector<f64>,
    pub gamma_floored: bool,
}

fn check_input(input: &ControlInput<'_>, coupling: &Coupling) -> Result<(), SmcError> {
    let len = coupling.n_agents() * coupling.dim();
    for (name, v) in [
        ("x", input.x),
        ("reference", input.reference),
        ("reference_rate", input.reference_rate),
        ("drift", input.drift),
    ] {
        if v.len() != len {
            return Err(SmcError::Dimension(format!(
                "{name} has {} entries, expected {len}",
                v.len()
            )));
        }
    }
    Ok(())
}

/// The control law with the pointwise `Gamma`.
pub fn control_law(input: ControlInput<'_>, coupling: &Coupling, p: &SmcParams) -> Result<ControlOutput, SmcError> {
    check_input(&input, coupling)?;
    let error = input.x - input.reference;
    let eps = coupling.apply(&error);
    let s = sliding_value(&eps, p);
    let rate = reaching_rate(&s, p);
    let (g, gamma_floored) = gamma(&eps, p);
    if gamma_floored {
        warn!("Gamma underflowed and was floored at {GAMMA_FLOOR:e}");
    }
    // -rate = mu asinh(..) sign(s); scale by Gamma^-1, then undo Lambda H.
    let scaled = (-&rate).component_div(&g) / p.lambda();
    let u = -coupling.solve(&scaled) - input.drift + input.reference_rate;
    Ok(ControlOutput {
        u,
        error,
        eps,
        s,
        gamma_floored,
    })
}

/// The control law with the secant `Gamma` over a step of length `dt`.
pub fn sampled_control_law(
    input: ControlInput<'_>,
    coupling: &Coupling,
    p: &SmcParams,
    dt: f64,
) -> Result<ControlOutput, SmcError> {
    if !(dt > 0.0) {
        return Err(SmcError::Step);
    }
    check_input(&input, coupling)?;
    let error = input.x - input.reference;
    let eps = coupling.apply(&error);
    let s = sliding_value(&eps, p);
    let rate = reaching_rate(&s, p);
    let limit = 1.0 - f64::EPSILON;
    let eps_target = DVector::from_fn(s.len(), |k, _| {
        let ratio = ((s[k] + dt * rate[k]) / p.lambda1).clamp(-limit, limit);
        ratio.atanh() / p.lambda2
    });
    let velocity = (&eps - eps_target) / dt;
    let u = -coupling.solve(&velocity) - input.drift + input.reference_rate;
    Ok(ControlOutput {
        u,
        error,
        eps,
        s,
        gamma_floored: false,
    })
}

/// Dispatches on `p.discretization`.
pub fn compute_control(
    input: ControlInput<'_>,
    coupling: &Coupling,
    p: &SmcParams,
    dt: f64,
) -> Result<ControlOutput, SmcError> {
    match p.discretization {
        Discretization::Derivative => control_law(input, coupling, p),
        Discretization::Secant => sampled_control_law(input, coupling, p, dt),
    }
}

/// `V_i = 0.5 |s_i|^2` per agent.
pub fn lyapunov(s: &DVector<f64>, dim: usize) -> Vec<f64> {
    s.as_slice()
        .chunks(dim)
        .map(|c| 0.5 * c.iter().map(|v| v * v).sum::<f64>())
        .collect()
}

/// Reachability margin `eta_i = -(s_i . s_dot_i) / |s_i|` of the continuous
/// closed loop under disturbance `disturbance`, per agent. Zero where `s_i = 0`.
pub fn reachability_margin(
    eps: &DVector<f64>,
    s: &DVector<f64>,
    disturbance: &DVector<f64>,
    coupling: &Coupling,
    p: &SmcParams,
) -> Vec<f64> {
    let (g, _) = gamma(eps, p);
    let pushed = coupling.apply(disturbance);
    let s_dot = reaching_rate(s, p) + pushed.component_mul(&g) * p.lambda();
    let d = coupling.dim();
    (0..coupling.n_agents())
        .map(|i| {
            let range = i * d..(i + 1) * d;
            let norm = s.as_slice()[range.clone()].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let dot: f64 = range.map(|k| s[k] * s_dot[k]).sum();
            -dot / norm
        })
        .collect()
}

/// Outcome of the gain conditions for a disturbance bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainReport {
    pub disturbance_bound: f64,
    /// `w > sup |disturbance|`.
    pub w_condition: bool,
    pub w_margin: f64,
    /// `Lambda |H|_inf disturbance_bound Gamma_sup`.
    pub mu_conservative_bound: f64,
    pub mu_conservative_margin: f64,
    pub mu_conservative_condition: bool,
    /// Bound from a realized disturbance signal, when one was supplied.
    pub mu_empirical_bound: Option<f64>,
    pub mu_empirical_margin: Option<f64>,
    /// `|s|` beyond which `mu asinh(m + w|s|)` exceeds the conservative bound.
    pub conservative_dominance_radius: f64,
    pub empirical_dominance_radius: Option<f64>,
    /// True when `mu asinh(m)` is below the bound in use, so the `mu` condition
    /// cannot make `V_dot < 0` arbitrarily close to the manifold.
    pub near_manifold_gap: bool,
}

impl GainReport {
    pub fn passes(&self) -> bool {
        self.w_condition && self.mu_conservative_condition
    }

    /// Adds the bound obtained from a realized disturbance.
    pub fn with_empirical(mut self, bound: f64, p: &SmcParams) -> Self {
        self.mu_empirical_bound = Some(bound);
        self.mu_empirical_margin = Some(p.mu - bound);
        self.empirical_dominance_radius = Some(dominance_radius(bound, p));
        self.near_manifold_gap = p.mu * p.m_offset.asinh() < bound;
        self
    }
}

/// Smallest `|s|` at which the reaching term outweighs a disturbance term of
/// size `bound`; zero when it already does at `s = 0`.
pub fn dominance_radius(bound: f64, p: &SmcParams) -> f64 {
    if p.mu * p.m_offset.asinh() >= bound {
        return 0.0;
    }
    ((bound / p.mu).sinh() - p.m_offset) / p.w_gain
}

/// Checks `w > disturbance_bound` and the conservative
/// `mu > Lambda |H|_inf disturbance_bound Gamma_sup`, where `Gamma_sup` is the
/// largest `Gamma` over `|eps| >= min_abs_eps`.
pub fn gain_check(p: &SmcParams, coupling: &Coupling, disturbance_bound: f64, min_abs_eps: f64) -> GainReport {
    let c = (p.lambda2 * min_abs_eps.abs()).cosh();
    let gamma_sup = 1.0 / (c * c);
    let bound = p.lambda() * coupling.inf_norm() * disturbance_bound * gamma_sup;
    GainReport {
        disturbance_bound,
        w_condition: p.w_gain > disturbance_bound,
        w_margin: p.w_gain - disturbance_bound,
        mu_conservative_bound: bound,
        mu_conservative_margin: p.mu - bound,
        mu_conservative_condition: p.mu > bound,
        mu_empirical_bound: None,
        mu_empirical_margin: None,
        conservative_dominance_radius: dominance_radius(bound, p),
        empirical_dominance_radius: None,
        near_manifold_gap: p.mu * p.m_offset.asinh() < bound,
    }
}

/// `sup Lambda |((H ⊗ I_d) disturbance)_i|` over the supplied samples, with
/// `Gamma <= 1`.
pub fn empirical_mu_bound<'a>(
    p: &SmcParams,
    coupling: &Coupling,
    samples: impl IntoIterator<Item = &'a DVector<f64>>,
) -> f64 {
    let d = coupling.dim();
    samples
        .into_iter()
        .map(|sample| {
            let pushed = coupling.apply(sample);
            pushed
                .as_slice()
                .chunks(d)
                .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
        * p.lambda()
}
