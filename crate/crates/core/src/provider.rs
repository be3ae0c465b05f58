//! Abstract Hamiltonian contract, integrator configuration, and trajectory
//! containers.

use crate::state::{AugmentedState, PhaseState, StateError};
use thiserror::Error;

/// A black-box Hamiltonian `H(q, p)` with value and gradient.
///
/// Implementors: the analytic benchmark systems, the learned surrogate, and
/// the assembled N-body vortex Hamiltonian. The gradient must agree with
/// central finite differences of `value`.
pub trait HamiltonianProvider {
    /// Dimension `N` of each coordinate vector.
    fn dim(&self) -> usize;

    /// Scalar energy at `(q, p)`.
    fn value(&self, q: &[f64], p: &[f64]) -> f64;

    /// `(dH/dq, dH/dp)` at `(q, p)`, each of length `N`.
    fn gradient(&self, q: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>);
}

impl<T: HamiltonianProvider + ?Sized> HamiltonianProvider for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, q: &[f64], p: &[f64]) -> f64 {
        (**self).value(q, p)
    }
    fn gradient(&self, q: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (**self).gradient(q, p)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Step size, binding coefficient and step count for one integration run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub omega: f64,
    pub steps: usize,
}

impl IntegratorConfig {
    pub fn new(dt: f64, omega: f64, steps: usize) -> Result<Self, ConfigError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ConfigError::Invalid(format!("dt must be > 0, got {dt}")));
        }
        if !(omega >= 0.0 && omega.is_finite()) {
            return Err(ConfigError::Invalid(format!("omega must be >= 0, got {omega}")));
        }
        Ok(Self { dt, omega, steps })
    }

    /// `steps = floor((t - t0) / dt)` for a time horizon `[t0, t]`.
    pub fn from_horizon(dt: f64, omega: f64, t0: f64, t: f64) -> Result<Self, ConfigError> {
        if t < t0 {
            return Err(ConfigError::Invalid(format!("horizon end {t} before start {t0}")));
        }
        let steps = ((t - t0) / dt).floor() as usize;
        Self::new(dt, omega, steps)
    }
}

/// A time-stamped sequence of augmented states produced by one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<AugmentedState>,
    /// Set when the rollout hit a non-finite state and was truncated.
    pub diverged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.dim())
    }

    /// Projection onto the original `(q, p)` coordinates.
    pub fn phase_states(&self) -> Vec<PhaseState> {
        self.states.iter().map(|s| s.phase()).collect()
    }

    /// Per-sample auxiliary deviation `||(q,p) - (x,y)||_2`.
    pub fn auxiliary_deviation(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.auxiliary_deviation()).collect()
    }

    pub fn validate(&self) -> Result<(), StateError> {
        if self.times.len() != self.states.len() {
            return Err(StateError::DimensionMismatch(format!(
                "{} timestamps for {} states",
                self.times.len(),
                self.states.len()
            )));
        }
        for w in self.times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(StateError::DimensionMismatch(format!(
                    "times not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        for s in &self.states {
            s.validate()?;
        }
        Ok(())
    }
}

/// A collection of trajectories over the same system.
#[derive(Debug, Clone, Default)]
pub struct TrajectorySet {
    pub trajectories: Vec<Trajectory>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_step_count_uses_floor() {
        let cfg = IntegratorConfig::from_horizon(1e-3, 2000.0, 0.0, 10.0).unwrap();
        assert_eq!(cfg.steps, 10_000);
        let cfg = IntegratorConfig::from_horizon(0.3, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(cfg.steps, 3);
    }

    #[test]
    fn bad_dt_rejected() {
        assert!(IntegratorConfig::new(0.0, 2000.0, 1).is_err());
        assert!(IntegratorConfig::new(-1.0, 2000.0, 1).is_err());
        assert!(IntegratorConfig::new(1.0, -1.0, 1).is_err());
    }
}
