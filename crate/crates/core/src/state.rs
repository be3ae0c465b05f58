//! Phase-space state types shared by every other module.
//!
//! States are immutable value types: construction validates, and all
//! downstream code may assume finite entries and matching dimensions.

use thiserror::Error;

/// Errors raised by state validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry: {0}")]
    NonFiniteEntry(String),
}

/// Canonical coordinates `(q, p)`, each of length `N >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self, StateError> {
        let s = Self { q, p };
        s.validate()?;
        Ok(s)
    }

    /// Dimension `N` of the configuration space.
    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn validate(&self) -> Result<(), StateError> {
        if self.q.is_empty() {
            return Err(StateError::DimensionMismatch("q must have length >= 1".into()));
        }
        if self.q.len() != self.p.len() {
            return Err(StateError::DimensionMismatch(format!(
                "q has length {} but p has length {}",
                self.q.len(),
                self.p.len()
            )));
        }
        check_finite("q", &self.q)?;
        check_finite("p", &self.p)?;
        Ok(())
    }
}

/// Extended coordinates `(q, p, x, y)`; `x`, `y` are the auxiliary copies.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl AugmentedState {
    pub fn new(q: Vec<f64>, p: Vec<f64>, x: Vec<f64>, y: Vec<f64>) -> Result<Self, StateError> {
        let s = Self { q, p, x, y };
        s.validate()?;
        Ok(s)
    }

    /// Duplicate `(q, p)` into `(q, p, q, p)`, the initial condition of the
    /// augmented system. The copies are bit-exact.
    pub fn from_phase(s: &PhaseState) -> Self {
        Self {
            q: s.q.clone(),
            p: s.p.clone(),
            x: s.q.clone(),
            y: s.p.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Project back onto the original coordinates `(q, p)`.
    pub fn phase(&self) -> PhaseState {
        PhaseState {
            q: self.q.clone(),
            p: self.p.clone(),
        }
    }

    /// Auxiliary deviation `eps = ||(q,p) - (x,y)||_2`.
    pub fn auxiliary_deviation(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.q.len() {
            acc += (self.q[i] - self.x[i]).powi(2) + (self.p[i] - self.y[i]).powi(2);
        }
        acc.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().all(|v| v.is_finite())
            && self.p.iter().all(|v| v.is_finite())
            && self.x.iter().all(|v| v.is_finite())
            && self.y.iter().all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<(), StateError> {
        let n = self.q.len();
        if n == 0 {
            return Err(StateError::DimensionMismatch("q must have length >= 1".into()));
        }
        if self.p.len() != n || self.x.len() != n || self.y.len() != n {
            return Err(StateError::DimensionMismatch(format!(
                "q,p,x,y have lengths {},{},{},{}",
                n,
                self.p.len(),
                self.x.len(),
                self.y.len()
            )));
        }
        check_finite("q", &self.q)?;
        check_finite("p", &self.p)?;
        check_finite("x", &self.x)?;
        check_finite("y", &self.y)?;
        Ok(())
    }
}

fn check_finite(name: &str, v: &[f64]) -> Result<(), StateError> {
    for (i, e) in v.iter().enumerate() {
        if !e.is_finite() {
            return Err(StateError::NonFiniteEntry(format!("{name}[{i}] = {e}")));
        }
    }
    Ok(())
}
