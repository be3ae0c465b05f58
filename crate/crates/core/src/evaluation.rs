//! Long-horizon prediction with a trained model and the two headline
//! metrics: prediction error and Hamiltonian deviation.

use crate::integrator;
use crate::provider::{HamiltonianProvider, IntegratorConfig, Trajectory};
use crate::state::PhaseState;
use crate::systems::AnalyticSystem;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("misaligned trajectories: {0}")]
    MisalignedTrajectories(String),
}

/// Per-time L1 error `‖q − q̂‖₁ + ‖p − p̂‖₁`, one entry per sampled time.
pub fn prediction_error_series(
    truth: &Trajectory,
    pred: &Trajectory,
) -> Result<Vec<f64>, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::MisalignedTrajectories(format!(
            "lengths differ: {} vs {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(EvalError::MisalignedTrajectories("empty trajectories".into()));
    }
    if truth.dim() != pred.dim() {
        return Err(EvalError::MisalignedTrajectories(format!(
            "dimensions differ: {} vs {}",
            truth.dim(),
            pred.dim()
        )));
    }
    for (a, b) in truth.times.iter().zip(&pred.times) {
        if (a - b).abs() > 1e-9 * (1.0 + a.abs()) {
            return Err(EvalError::MisalignedTrajectories(format!(
                "timestamps differ: {a} vs {b}"
            )));
        }
    }
    Ok(truth
        .states
        .iter()
        .zip(&pred.states)
        .map(|(t, p)| {
            let dq: f64 = t.q.iter().zip(&p.q).map(|(a, b)| (a - b).abs()).sum();
            let dp: f64 = t.p.iter().zip(&p.p).map(|(a, b)| (a - b).abs()).sum();
            dq + dp
        })
        .collect())
}

/// `ε_p`: the per-time L1 error averaged over the horizon.
pub fn prediction_error(truth: &Trajectory, pred: &Trajectory) -> Result<f64, EvalError> {
    let series = prediction_error_series(truth, pred)?;
    Ok(series.iter().sum::<f64>() / series.len() as f64)
}

/// Result of [`hamiltonian_deviation`]. `relative` is false only when the
/// truth energy is identically zero over the horizon, in which case `value`
/// is the absolute L2 deviation instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyDeviation {
    pub value: f64,
    pub relative: bool,
}

/// `ε_H = ‖H_truth − H_pred‖₂ / ‖H_truth‖₂` over the horizon, where the
/// truth energy is the conserved initial value `truth_h0` and the predicted
/// energy is the true Hamiltonian evaluated on predicted states.
pub fn hamiltonian_deviation<H: HamiltonianProvider>(
    truth_h0: f64,
    pred: &Trajectory,
    h_true: &H,
) -> EnergyDeviation {
    let sq_dev: f64 = pred
        .states
        .iter()
        .map(|s| {
            let h = h_true.value(&s.q, &s.p);
            (truth_h0 - h).powi(2)
        })
        .sum();
    let sq_truth = truth_h0 * truth_h0 * pred.len() as f64;
    if sq_truth == 0.0 {
        EnergyDeviation { value: sq_dev.sqrt(), relative: false }
    } else {
        EnergyDeviation { value: (sq_dev / sq_truth).sqrt(), relative: true }
    }
}

/// Per-time energy deviation `|truth_h0 − H(q̂, p̂)|`, for plotting.
pub fn energy_deviation_series<H: HamiltonianProvider>(
    truth_h0: f64,
    pred: &Trajectory,
    h_true: &H,
) -> Vec<f64> {
    pred.states
        .iter()
        .map(|s| (truth_h0 - h_true.value(&s.q, &s.p)).abs())
        .collect()
}

/// Roll a provider (typically a trained surrogate) out to `t = horizon`
/// from the duplicated initial condition.
pub fn predict<H: HamiltonianProvider>(
    h: &H,
    s0: &PhaseState,
    horizon: f64,
    dt: f64,
    omega: f64,
) -> Trajectory {
    let cfg = IntegratorConfig {
        dt,
        omega,
        steps: (horizon / dt).floor() as usize,
    };
    integrator::rollout(s0, &cfg, h)
}

/// Reference trajectory for evaluation: the analytic provider integrated at
/// one tenth of the prediction step, subsampled back onto the prediction
/// grid.
pub fn reference_trajectory<H: HamiltonianProvider>(
    h: &H,
    s0: &PhaseState,
    horizon: f64,
    dt: f64,
    omega: f64,
) -> Trajectory {
    let refine = 10;
    let fine = IntegratorConfig {
        dt: dt / refine as f64,
        omega,
        steps: (horizon / dt).floor() as usize * refine,
    };
    let full = integrator::rollout(s0, &fine, h);
    let times = full.times.iter().step_by(refine).copied().collect();
    let states = full.states.iter().step_by(refine).cloned().collect();
    Trajectory { times, states, diverged: full.diverged }
}

/// Scalar summary of one trained-model evaluation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub system: String,
    pub dt: f64,
    pub omega: f64,
    pub horizon: f64,
    pub initial_q: Vec<f64>,
    pub initial_p: Vec<f64>,
    pub prediction_error: f64,
    pub hamiltonian_deviation: f64,
    pub hamiltonian_deviation_relative: bool,
    pub diverged: bool,
    pub times: Vec<f64>,
    pub prediction_error_series: Vec<f64>,
    pub energy_deviation_series: Vec<f64>,
}

/// Evaluate a trained provider against the analytic system over a horizon:
/// prediction at `dt`, reference at `dt/10`, both metrics.
pub fn evaluate<H: HamiltonianProvider>(
    model: &H,
    system: AnalyticSystem,
    s0: &PhaseState,
    horizon: f64,
    dt: f64,
    omega: f64,
) -> Result<EvaluationReport, EvalError> {
    let pred = predict(model, s0, horizon, dt, omega);
    let truth = reference_trajectory(&system, s0, horizon, dt, omega);
    let n = pred.len().min(truth.len());
    let clip = |t: &Trajectory| Trajectory {
        times: t.times[..n].to_vec(),
        states: t.states[..n].to_vec(),
        diverged: t.diverged,
    };
    let (pred_c, truth_c) = (clip(&pred), clip(&truth));
    let series = prediction_error_series(&truth_c, &pred_c)?;
    let eps_p = series.iter().sum::<f64>() / series.len() as f64;
    let h0 = system.value(&s0.q, &s0.p);
    let dev = hamiltonian_deviation(h0, &pred_c, &system);
    Ok(EvaluationReport {
        system: system.name().to_string(),
        dt,
        omega,
        horizon,
        initial_q: s0.q.clone(),
        initial_p: s0.p.clone(),
        prediction_error: eps_p,
        hamiltonian_deviation: dev.value,
        hamiltonian_deviation_relative: dev.relative,
        diverged: pred.diverged || truth.diverged,
        times: pred_c.times.clone(),
        prediction_error_series: series,
        energy_deviation_series: energy_deviation_series(h0, &pred_c, &system),
    })
}

/// One ω of the ω-study: full augmented trace plus the auxiliary deviation
/// series `ε(t) = ‖(q,p) − (x,y)‖₂`.
#[derive(Debug, Clone)]
pub struct OmegaTrace {
    pub omega: f64,
    pub trajectory: Trajectory,
    pub deviation: Vec<f64>,
}

/// The ω values compared in the binding-strength study.
pub const OMEGA_STUDY_VALUES: [f64; 4] = [0.0, 0.8, 0.9, 10.0];

/// Integrate the analytic Tao system from `s0` once per ω and record the
/// auxiliary deviation growth.
pub fn omega_study(omegas: &[f64], dt: f64, s0: &PhaseState, horizon: f64) -> Vec<OmegaTrace> {
    let tao = AnalyticSystem::TaoExample;
    omegas
        .iter()
        .map(|&omega| {
            let cfg = IntegratorConfig {
                dt,
                omega,
                steps: (horizon / dt).floor() as usize,
            };
            let trajectory = integrator::rollout(s0, &cfg, &tao);
            let deviation = trajectory.auxiliary_deviation();
            OmegaTrace { omega, trajectory, deviation }
        })
        .collect()
}
