//! Second-order explicit symplectic integrator in the augmented phase space.
//!
//! The step is the Strang composition
//! `phi1(dt/2) . phi2(dt/2) . phi3(dt) . phi2(dt/2) . phi1(dt/2)`
//! where `phi1` and `phi2` are shear maps driven by the Hamiltonian gradient
//! evaluated at mixed original/auxiliary points, and `phi3` rotates the
//! deviation between the original and auxiliary copies at angular rate
//! `2 * omega`. Each of the three maps is an exact symplectomorphism, so the
//! composition is one as well.

use crate::provider::{HamiltonianProvider, IntegratorConfig, Trajectory};
use crate::state::{AugmentedState, PhaseState, StateError};

/// Shear map driven by the gradient at `(q, y)`:
/// `p -= delta * dH/dq(q, y)`, `x += delta * dH/dp(q, y)`.
pub fn phi1<H: HamiltonianProvider>(
    s: &AugmentedState,
    delta: f64,
    h: &H,
) -> Result<AugmentedState, StateError> {
    let (gq, gp) = h.gradient(&s.q, &s.y);
    check_gradient_finite(&gq, &gp)?;
    let n = s.dim();
    let mut out = s.clone();
    for i in 0..n {
        out.p[i] = s.p[i] - delta * gq[i];
        out.x[i] = s.x[i] + delta * gp[i];
    }
    Ok(out)
}

/// Shear map driven by the gradient at `(x, p)`:
/// `q += delta * dH/dp(x, p)`, `y -= delta * dH/dq(x, p)`.
pub fn phi2<H: HamiltonianProvider>(
    s: &AugmentedState,
    delta: f64,
    h: &H,
) -> Result<AugmentedState, StateError> {
    let (gq, gp) = h.gradient(&s.x, &s.p);
    check_gradient_finite(&gq, &gp)?;
    let n = s.dim();
    let mut out = s.clone();
    for i in 0..n {
        out.q[i] = s.q[i] + delta * gp[i];
        out.y[i] = s.y[i] - delta * gq[i];
    }
    Ok(out)
}

/// Exact rotation of the deviation `(q - x, p - y)` by angle `2*omega*delta`;
/// the mean `(q + x, p + y)` is untouched.
pub fn phi3(s: &AugmentedState, delta: f64, omega: f64) -> AugmentedState {
    let (sin, cos) = (2.0 * omega * delta).sin_cos();
    let n = s.dim();
    let mut out = s.clone();
    for i in 0..n {
        let u1 = s.q[i] + s.x[i];
        let u2 = s.p[i] + s.y[i];
        let v1 = s.q[i] - s.x[i];
        let v2 = s.p[i] - s.y[i];
        let rv1 = cos * v1 + sin * v2;
        let rv2 = -sin * v1 + cos * v2;
        out.q[i] = 0.5 * (u1 + rv1);
        out.p[i] = 0.5 * (u2 + rv2);
        out.x[i] = 0.5 * (u1 - rv1);
        out.y[i] = 0.5 * (u2 - rv2);
    }
    out
}

/// One full second-order step of size `dt`. Makes exactly four provider
/// gradient calls (two in `phi1`, two in `phi2`).
pub fn strang_step<H: HamiltonianProvider>(
    s: &AugmentedState,
    dt: f64,
    omega: f64,
    h: &H,
) -> Result<AugmentedState, StateError> {
    let half = dt / 2.0;
    let s = phi1(s, half, h)?;
    let s = phi2(&s, half, h)?;
    let s = phi3(&s, dt, omega);
    let s = phi2(&s, half, h)?;
    phi1(&s, half, h)
}

/// Iterate `strang_step` from the duplicated initial condition
/// `(q0, p0, q0, p0)`, recording every intermediate augmented state.
///
/// On the first non-finite state the trajectory is truncated and flagged
/// `diverged`; the finite prefix is returned.
pub fn rollout<H: HamiltonianProvider>(
    s0: &PhaseState,
    cfg: &IntegratorConfig,
    h: &H,
) -> Trajectory {
    rollout_augmented(&AugmentedState::from_phase(s0), 0.0, cfg, h)
}

/// As [`rollout`], but from an arbitrary augmented initial state and start
/// time.
pub fn rollout_augmented<H: HamiltonianProvider>(
    s0: &AugmentedState,
    t0: f64,
    cfg: &IntegratorConfig,
    h: &H,
) -> Trajectory {
    let mut times = Vec::with_capacity(cfg.steps + 1);
    let mut states = Vec::with_capacity(cfg.steps + 1);
    times.push(t0);
    states.push(s0.clone());
    let mut current = s0.clone();
    for i in 1..=cfg.steps {
        let next = match strang_step(&current, cfg.dt, cfg.omega, h) {
            Ok(s) => s,
            Err(_) => {
                return Trajectory {
                    times,
                    states,
                    diverged: true,
                }
            }
        };
        if !next.is_finite() {
            return Trajectory {
                times,
                states,
                diverged: true,
            };
        }
        times.push(t0 + i as f64 * cfg.dt);
        states.push(next.clone());
        current = next;
    }
    Trajectory {
        times,
        states,
        diverged: false,
    }
}

/// Per-sample deviation `||(q,p) - (x,y)||_2` along a trajectory.
pub fn auxiliary_deviation(traj: &Trajectory) -> Vec<f64> {
    traj.auxiliary_deviation()
}

fn check_gradient_finite(gq: &[f64], gp: &[f64]) -> Result<(), StateError> {
    for g in gq.iter().chain(gp.iter()) {
        if !g.is_finite() {
            return Err(StateError::NonFiniteEntry(format!(
                "provider gradient returned {g}"
            )));
        }
    }
    Ok(())
}
