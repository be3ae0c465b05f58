//! Unrolled symplectic rollouts recorded on the differentiation tape.
//!
//! The training loss is computed through `n` integrator steps whose
//! `phi1`/`phi2` sub-steps call the network's input gradient; recording the
//! whole computation on one tape gives exact parameter gradients of the
//! loss in a single reverse sweep per sample.

use crate::mlp::{MlpGradient, MlpParameters, TapeMlp};
use crate::provider::IntegratorConfig;
use crate::state::PhaseState;
use crate::tape::{NodeId, Tape};
use ndarray::Array1;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UnrollError {
    #[error("rollout diverged at sample {sample}, step {step}")]
    DivergedRollout { sample: usize, step: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Node ids of one augmented state on a tape.
#[derive(Debug, Clone, Copy)]
pub struct TapeState {
    pub q: NodeId,
    pub p: NodeId,
    pub x: NodeId,
    pub y: NodeId,
}

fn phi1_on_tape(tape: &mut Tape, net: &TapeMlp, s: TapeState, delta: f64, n: usize) -> TapeState {
    let input = tape.concat(s.q, s.y);
    let grad = net.input_gradient(tape, input);
    let gq = tape.slice(grad, 0, n);
    let gp = tape.slice(grad, n, n);
    TapeState {
        q: s.q,
        p: tape.add_scaled(s.p, gq, -delta),
        x: tape.add_scaled(s.x, gp, delta),
        y: s.y,
    }
}

fn phi2_on_tape(tape: &mut Tape, net: &TapeMlp, s: TapeState, delta: f64, n: usize) -> TapeState {
    let input = tape.concat(s.x, s.p);
    let grad = net.input_gradient(tape, input);
    let gq = tape.slice(grad, 0, n);
    let gp = tape.slice(grad, n, n);
    TapeState {
        q: tape.add_scaled(s.q, gp, delta),
        p: s.p,
        x: s.x,
        y: tape.add_scaled(s.y, gq, -delta),
    }
}

pub(crate) fn phi3_on_tape(tape: &mut Tape, s: TapeState, delta: f64, omega: f64) -> TapeState {
    let (sin, cos) = (2.0 * omega * delta).sin_cos();
    let u1 = tape.add(s.q, s.x);
    let u2 = tape.add(s.p, s.y);
    let v1 = tape.sub(s.q, s.x);
    let v2 = tape.sub(s.p, s.y);
    let cv1 = tape.scale(v1, cos);
    let rv1 = tape.add_scaled(cv1, v2, sin);
    let cv2 = tape.scale(v2, cos);
    let rv2 = tape.add_scaled(cv2, v1, -sin);
    let q = tape.add(u1, rv1);
    let p = tape.add(u2, rv2);
    let x = tape.sub(u1, rv1);
    let y = tape.sub(u2, rv2);
    TapeState {
        q: tape.scale(q, 0.5),
        p: tape.scale(p, 0.5),
        x: tape.scale(x, 0.5),
        y: tape.scale(y, 0.5),
    }
}

/// One recorded Strang step; same composition and gradient-call budget as
/// the plain integrator (four input-gradient evaluations).
pub fn strang_step_on_tape(
    tape: &mut Tape,
    net: &TapeMlp,
    s: TapeState,
    dt: f64,
    omega: f64,
    n: usize,
) -> TapeState {
    let half = dt / 2.0;
    let s = phi1_on_tape(tape, net, s, half, n);
    let s = phi2_on_tape(tape, net, s, half, n);
    let s = phi3_on_tape(tape, s, dt, omega);
    let s = phi2_on_tape(tape, net, s, half, n);
    phi1_on_tape(tape, net, s, half, n)
}

fn state_is_finite(tape: &Tape, s: &TapeState) -> bool {
    tape.value(s.q).is_finite()
        && tape.value(s.p).is_finite()
        && tape.value(s.x).is_finite()
        && tape.value(s.y).is_finite()
}

/// Record the rollout from a duplicated initial state and the four-term L1
/// loss against the target; returns the scalar loss node.
pub fn sample_loss_on_tape(
    tape: &mut Tape,
    net: &TapeMlp,
    initial: &PhaseState,
    target: &PhaseState,
    cfg: &IntegratorConfig,
) -> Result<NodeId, usize> {
    let n = initial.dim();
    let q0 = tape.leaf_vector(Array1::from(initial.q.clone()));
    let p0 = tape.leaf_vector(Array1::from(initial.p.clone()));
    // auxiliary copies start as the same tape nodes: x = q, p = y exactly
    let mut s = TapeState {
        q: q0,
        p: p0,
        x: q0,
        y: p0,
    };
    for step in 0..cfg.steps {
        s = strang_step_on_tape(tape, net, s, cfg.dt, cfg.omega, n);
        if !state_is_finite(tape, &s) {
            return Err(step);
        }
    }
    let tq = tape.leaf_vector(Array1::from(target.q.clone()));
    let tp = tape.leaf_vector(Array1::from(target.p.clone()));
    Ok(nssnn_loss_on_tape(tape, &s, tq, tp))
}

/// The four-term L1 loss on tape nodes:
/// `||q - q^||_1 + ||p - p^||_1 + ||x^ - q^||_1 + ||y^ - p^||_1`.
pub fn nssnn_loss_on_tape(
    tape: &mut Tape,
    predicted: &TapeState,
    target_q: NodeId,
    target_p: NodeId,
) -> NodeId {
    let dq = tape.sub(target_q, predicted.q);
    let dp = tape.sub(target_p, predicted.p);
    let dx = tape.sub(predicted.x, predicted.q);
    let dy = tape.sub(predicted.y, predicted.p);
    let adq = tape.abs(dq);
    let adp = tape.abs(dp);
    let adx = tape.abs(dx);
    let ady = tape.abs(dy);
    let s1 = tape.sum(adq);
    let s2 = tape.sum(adp);
    let s3 = tape.sum(adx);
    let s4 = tape.sum(ady);
    let a = tape.add(s1, s2);
    let b = tape.add(s3, s4);
    let total = tape.add(a, b);
    tape.sum(total)
}

/// Loss and parameter gradient of the summed loss over a batch of
/// `(initial, target)` pairs through the `cfg.steps`-step unrolled rollout.
///
/// Samples are processed in order and gradients reduced sequentially, so
/// repeated calls are bit-identical.
pub fn loss_parameter_gradient(
    params: &MlpParameters,
    batch: &[(PhaseState, PhaseState)],
    cfg: &IntegratorConfig,
) -> Result<(f64, MlpGradient), UnrollError> {
    let n = params.input_dim() / 2;
    let mut grad = MlpGradient::zeros_like(params);
    let mut total_loss = 0.0;
    for (sample, (initial, target)) in batch.iter().enumerate() {
        if initial.dim() != n || target.dim() != n {
            return Err(UnrollError::DimensionMismatch(format!(
                "sample {sample} has dim {} but network expects {n}",
                initial.dim()
            )));
        }
        let mut tape = Tape::new();
        let net = TapeMlp::insert(&mut tape, params);
        let loss_node = sample_loss_on_tape(&mut tape, &net, initial, target, cfg)
            .map_err(|step| UnrollError::DivergedRollout { sample, step })?;
        let loss = tape.scalar(loss_node);
        if !loss.is_finite() {
            return Err(UnrollError::DivergedRollout {
                sample,
                step: cfg.steps,
            });
        }
        total_loss += loss;
        let adjoints = tape.backward(loss_node);
        net.accumulate_gradient(&adjoints, &mut grad);
    }
    Ok((total_loss, grad))
}
