//! Agent dynamics `x_dot = f(x, t) + u + disturbance`, with a nominal drift the
//! controller knows and a bounded disturbance it does not.

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Nominal drift `f(x, t)`, applied componentwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftModel {
    Zero,
    /// `state_gain sin(x) + forcing_amplitude cos(2 pi forcing_frequency t)`.
    Sinusoidal {
        state_gain: f64,
        forcing_amplitude: f64,
        forcing_frequency: f64,
    },
}

impl Default for DriftModel {
    fn default() -> Self {
        DriftModel::Sinusoidal {
            state_gain: 0.1,
            forcing_amplitude: 1.0,
            forcing_frequency: 1.0,
        }
    }
}

impl DriftModel {
    pub fn eval(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        match *self {
            DriftModel::Zero => DVector::zeros(x.len()),
            DriftModel::Sinusoidal {
                state_gain,
                forcing_amplitude,
                forcing_frequency,
            } => {
                let forcing = forcing_amplitude * (TAU * forcing_frequency * t).cos();
                x.map(|xi| state_gain * xi.sin() + forcing)
            }
        }
    }

    /// Global Lipschitz constant in `x`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            DriftModel::Zero => 0.0,
            DriftModel::Sinusoidal { state_gain, .. } => state_gain.abs(),
        }
    }
}

/// Exogenous disturbance entering through the input channel. Every variant
/// keeps each agent's disturbance norm at or below `amplitude`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceModel {
    None,
    /// `amplitude sin(pi^2 t^2)`, identical for every agent, split evenly
    /// across axes so the per-agent norm is `amplitude |sin(pi^2 t^2)|`.
    Chirp {
        amplitude: f64,
    },
    /// Independent draws, uniform per axis in `[-a/sqrt(d), a/sqrt(d)]`.
    Random {
        amplitude: f64,
    },
}

impl Default for DisturbanceModel {
    fn default() -> Self {
        DisturbanceModel::Chirp { amplitude: 0.3 }
    }
}

impl DisturbanceModel {
    /// Upper bound on any single agent's disturbance norm.
    pub fn bound(&self) -> f64 {
        match *self {
            DisturbanceModel::None => 0.0,
            DisturbanceModel::Chirp { amplitude } | DisturbanceModel::Random { amplitude } => amplitude,
        }
    }

    /// Stacked disturbance for `n` agents in `d` dimensions.
    pub fn sample<R: Rng + ?Sized>(&self, t: f64, n: usize, d: usize, rng: &mut R) -> DVector<f64> {
        let axis_scale = 1.0 / (d as f64).sqrt();
        match *self {
            DisturbanceModel::None => DVector::zeros(n * d),
            DisturbanceModel::Chirp { amplitude } => {
                DVector::from_element(n * d, amplitude * axis_scale * (PI * PI * t * t).sin())
            }
            DisturbanceModel::Random { amplitude } => {
                let a = amplitude * axis_scale;
                if a == 0.0 {
                    return DVector::zeros(n * d);
                }
                DVector::from_fn(n * d, |_, _| rng.random_range(-a..=a))
            }
        }
    }
}
