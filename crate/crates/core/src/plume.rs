//! Filament plume: odor packets released at a fixed source, advected by the
//! mean wind plus a Brownian increment, and sensed through a Gaussian kernel.
//!
//! Each filament keeps the running integral of the mean wind it has been
//! advected by. Subtracting that drift from its position leaves the source
//! location plus the accumulated random displacement, which is the wind-based
//! source estimate handed to the decision layer.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlumeError {
    #[error("wind.{0} must be finite and non-negative")]
    Wind(&'static str),
    #[error("wind.direction must be a non-zero vector of dimension {0}")]
    Direction(usize),
    #[error("plume.{0} must be positive")]
    NonPositive(&'static str),
    #[error("plume.source has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Mean wind with additive and multiplicative sinusoidal disturbances, capped
/// at `max_speed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindField {
    pub direction: Vec<f64>,
    /// Undisturbed mean speed (m/s).
    pub speed: f64,
    pub max_speed: f64,
    /// Standard deviation of the Brownian increment `n(t)` (m/s).
    pub noise_sigma: f64,
    pub additive_amplitude: f64,
    pub additive_frequency: f64,
    pub multiplicative_amplitude: f64,
    pub multiplicative_frequency: f64,
}

impl Default for WindField {
    fn default() -> Self {
        WindField {
            direction: vec![1.0],
            speed: 0.8,
            max_speed: 1.0,
            noise_sigma: 0.0,
            additive_amplitude: 0.1,
            additive_frequency: 0.2,
            multiplicative_amplitude: 0.2,
            multiplicative_frequency: 0.05,
        }
    }
}

impl WindField {
    pub fn constant(direction: Vec<f64>, speed: f64, noise_sigma: f64) -> Self {
        WindField {
            direction,
            speed,
            max_speed: speed.max(1.0),
            noise_sigma,
            additive_amplitude: 0.0,
            additive_frequency: 0.0,
            multiplicative_amplitude: 0.0,
            multiplicative_frequency: 0.0,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), PlumeError> {
        let checks = [
            ("speed", self.speed),
            ("max_speed", self.max_speed),
            ("noise_sigma", self.noise_sigma),
            ("additive_amplitude", self.additive_amplitude),
            ("additive_frequency", self.additive_frequency),
            ("multiplicative_amplitude", self.multiplicative_amplitude),
            ("multiplicative_frequency", self.multiplicative_frequency),
        ];
        for (name, v) in checks {
            if !v.is_finite() || v < 0.0 {
                return Err(PlumeError::Wind(name));
            }
        }
        let norm: f64 = self.direction.iter().map(|c| c * c).sum::<f64>().sqrt();
        if self.direction.len() != dim || !(norm > 0.0) || !norm.is_finite() {
            return Err(PlumeError::Direction(dim));
        }
        Ok(())
    }

    /// Mean airflow velocity at time `t`; its norm never exceeds `max_speed`.
    pub fn mean_velocity(&self, t: f64) -> DVector<f64> {
        let tau = std::f64::consts::TAU;
        let scale = 1.0 + self.multiplicative_amplitude * (tau * self.multiplicative_frequency * t).sin();
        let speed = self.speed * scale + self.additive_amplitude * (tau * self.additive_frequency * t).sin();
        let dir = DVector::from_column_slice(&self.direction);
        let mut v = dir.normalize() * speed;
        let norm = v.norm();
        if norm > self.max_speed {
            v *= self.max_speed / norm;
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filament {
    pub position: DVector<f64>,
    pub release_time: f64,
    /// Running sum of `mean_velocity * dt` since release.
    pub accumulated_mean_drift: DVector<f64>,
}

/// Position minus accumulated mean drift: the source plus the filament's
/// accumulated random displacement.
pub fn wind_source_estimate(f: &Filament) -> DVector<f64> {
    &f.position - &f.accumulated_mean_drift
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlumeConfig {
    pub source: Vec<f64>,
    pub release_period: f64,
    pub kernel_width: f64,
    pub kernel_amplitude: f64,
    /// Seconds of plume evolution simulated before `t = 0`.
    pub spinup: f64,
    /// Advection sub-steps per sensing interval.
    pub substeps: usize,
    /// Filaments older than this are dropped; `None` keeps every filament.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_age: Option<f64>,
}

impl Default for PlumeConfig {
    fn default() -> Self {
        PlumeConfig {
            source: vec![0.0],
            release_period: 0.1,
            kernel_width: 0.5,
            kernel_amplitude: 1.0,
            spinup: 0.0,
            substeps: 10,
            max_age: None,
        }
    }
}

impl PlumeConfig {
    pub fn validate(&self, dim: usize) -> Result<(), PlumeError> {
        if self.source.len() != dim {
            return Err(PlumeError::Dimension {
                expected: dim,
                got: self.source.len(),
            });
        }
        for (name, v) in [
            ("release_period", self.release_period),
            ("kernel_width", self.kernel_width),
            ("kernel_amplitude", self.kernel_amplitude),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PlumeError::NonPositive(name));
            }
        }
        if !(self.spinup >= 0.0) {
            return Err(PlumeError::NonPositive("spinup"));
        }
        if self.substeps == 0 {
            return Err(PlumeError::NonPositive("substeps"));
        }
        if let Some(age) = self.max_age {
            if !(age > 0.0) {
                return Err(PlumeError::NonPositive("max_age"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlumeState {
    source: DVector<f64>,
    pub filaments: Vec<Filament>,
    pub release_period: f64,
    pub kernel_width: f64,
    pub kernel_amplitude: f64,
    max_age: Option<f64>,
    releases: u64,
    release_origin: f64,
}

impl PlumeState {
    pub fn new(source: DVector<f64>, release_period: f64, kernel_width: f64, kernel_amplitude: f64) -> Self {
        PlumeState {
            source,
            filaments: Vec::new(),
            release_period,
            kernel_width,
            kernel_amplitude,
            max_age: None,
            releases: 0,
            release_origin: 0.0,
        }
    }

    /// Empty plume whose release schedule starts at `-cfg.spinup`.
    pub fn from_config(cfg: &PlumeConfig) -> Self {
        let mut p = PlumeState::new(
            DVector::from_column_slice(&cfg.source),
            cfg.release_period,
            cfg.kernel_width,
            cfg.kernel_amplitude,
        );
        p.max_age = cfg.max_age;
        p.release_origin = -cfg.spinup;
        p
    }

    pub fn source_position(&self) -> &DVector<f64> {
        &self.source
    }

    pub fn dimension(&self) -> usize {
        self.source.len()
    }

    /// Appends a fresh filament at the source.
    pub fn release_filament(&mut self, t: f64) {
        self.filaments.push(Filament {
            position: self.source.clone(),
            release_time: t,
            accumulated_mean_drift: DVector::zeros(self.source.len()),
        });
    }

    /// Releases every filament scheduled at or before `t`.
    pub fn release_due(&mut self, t: f64) {
        loop {
            let next = self.release_origin + self.releases as f64 * self.release_period;
            if next > t + 1e-9 * self.release_period {
                break;
            }
            self.release_filament(next);
            self.releases += 1;
        }
    }

    /// One Euler–Maruyama step of every filament.
    pub fn step_filaments<R: Rng + ?Sized>(&mut self, wind: &WindField, t: f64, dt: f64, rng: &mut R) {
        debug_assert!(dt > 0.0);
        let drift = wind.mean_velocity(t) * dt;
        let diffusion = dt.sqrt() * wind.noise_sigma;
        for f in &mut self.filaments {
            f.position += &drift;
            if diffusion > 0.0 {
                for c in f.position.iter_mut() {
                    let xi: f64 = rng.sample(StandardNormal);
                    *c += diffusion * xi;
                }
            }
            f.accumulated_mean_drift += &drift;
        }
    }

    /// Advances the plume from `t0` to `t1` in `substeps` equal steps,
    /// releasing filaments on schedule and pruning expired ones.
    pub fn advance<R: Rng + ?Sized>(&mut self, wind: &WindField, t0: f64, t1: f64, substeps: usize, rng: &mut R) {
        if t1 <= t0 {
            self.release_due(t0);
            return;
        }
        let h = (t1 - t0) / substeps as f64;
        for k in 0..substeps {
            let tau = t0 + k as f64 * h;
            self.release_due(tau);
            self.step_filaments(wind, tau, h, rng);
        }
        self.release_due(t1);
        if let Some(age) = self.max_age {
            self.filaments.retain(|f| t1 - f.release_time <= age);
        }
    }

    /// Runs the plume from its release origin up to `t = 0`.
    pub fn spin_up<R: Rng + ?Sized>(&mut self, wind: &WindField, substep: f64, rng: &mut R) {
        let mut t = self.release_origin;
        while t < -1e-12 {
            let next = (t + substep).min(0.0);
            self.advance(wind, t, next, 1, rng);
            t = next;
        }
        self.release_due(0.0);
    }

    fn kernel(&self, x: &DVector<f64>, f: &Filament) -> f64 {
        let d2 = (x - &f.position).norm_squared();
        self.kernel_amplitude * (-d2 / (2.0 * self.kernel_width * self.kernel_width)).exp()
    }

    pub fn concentration_at(&self, x: &DVector<f64>) -> f64 {
        self.filaments.iter().map(|f| self.kernel(x, f)).sum()
    }

    /// The filament contributing most to the concentration at `x`; ties go to
    /// the earliest released.
    pub fn dominant_filament(&self, x: &DVector<f64>) -> Option<&Filament> {
        let mut best: Option<(&Filament, f64)> = None;
        for f in &self.filaments {
            let k = self.kernel(x, f);
            if best.is_none_or(|(_, b)| k > b) {
                best = Some((f, k));
            }
        }
        best.map(|(f, _)| f)
    }
}
