//! 2D point-vortex dynamics: strength-weighted symplectic stepping in the
//! augmented phase space, pairwise kernels (analytic and learned), N-body
//! assembly of a two-body kernel, and desk-scale initial conditions.
//!
//! Convention: `Γ_j dx_j/dt = −∂H/∂y_j`, `Γ_j dy_j/dt = +∂H/∂x_j` with
//! `H = (1/2π) Σ_{j<k} Γ_j Γ_k log|X_j − X_k|`.

use crate::mlp::{MlpGradient, MlpParameters, TapeMlp};
use crate::provider::HamiltonianProvider;
use crate::state::PhaseState;
use crate::tape::{NodeId, Tape};
use crate::training::{
    adam_step, derive_seed, split_indices, AdamState, EpochStats, SamplePair, TrainError,
};
use crate::unroll::{self, TapeState, UnrollError};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum pairwise distance below which the log kernel is treated as
/// singular and stepping aborts.
pub const COINCIDENCE_LIMIT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VortexError {
    #[error("particles {j} and {k} coincide (distance {distance:.3e})")]
    CoincidentParticles { j: usize, k: usize, distance: f64 },
    #[error("particle {j} has zero strength")]
    ZeroStrength { j: usize },
    #[error("field lengths differ: x {x}, y {y}, gamma {gamma}")]
    MismatchedLengths { x: usize, y: usize, gamma: usize },
}

/// Particle positions and strengths of one vortex system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexConfiguration {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl VortexConfiguration {
    pub fn new(x: Vec<f64>, y: Vec<f64>, gamma: Vec<f64>) -> Result<Self, VortexError> {
        let cfg = Self { x, y, gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn validate(&self) -> Result<(), VortexError> {
        if self.x.len() != self.y.len() || self.x.len() != self.gamma.len() {
            return Err(VortexError::MismatchedLengths {
                x: self.x.len(),
                y: self.y.len(),
                gamma: self.gamma.len(),
            });
        }
        for (j, g) in self.gamma.iter().enumerate() {
            if *g == 0.0 || !g.is_finite() {
                return Err(VortexError::ZeroStrength { j });
            }
        }
        for j in 0..self.len() {
            for k in (j + 1)..self.len() {
                let d = ((self.x[j] - self.x[k]).powi(2) + (self.y[j] - self.y[k]).powi(2)).sqrt();
                if !(d > COINCIDENCE_LIMIT) {
                    return Err(VortexError::CoincidentParticles { j, k, distance: d });
                }
            }
        }
        Ok(())
    }

    /// Conserved linear impulse `(Σ Γ_j x_j, Σ Γ_j y_j)`.
    pub fn linear_impulse(&self) -> (f64, f64) {
        let px = self.gamma.iter().zip(&self.x).map(|(g, x)| g * x).sum();
        let py = self.gamma.iter().zip(&self.y).map(|(g, y)| g * y).sum();
        (px, py)
    }
}

/// `H = (1/2π) Σ_{j<k} Γ_j Γ_k log r_jk` (the double-sum form over j≠k
/// folded into unordered pairs).
pub fn vortex_hamiltonian(cfg: &VortexConfiguration) -> Result<f64, VortexError> {
    cfg.validate()?;
    let mut h = 0.0;
    for j in 0..cfg.len() {
        for k in (j + 1)..cfg.len() {
            let r = ((cfg.x[j] - cfg.x[k]).powi(2) + (cfg.y[j] - cfg.y[k]).powi(2)).sqrt();
            h += cfg.gamma[j] * cfg.gamma[k] * r.ln();
        }
    }
    Ok(h / (2.0 * std::f64::consts::PI))
}

/// A unit-strength two-body interaction `h(dx, dy)`; the N-body Hamiltonian
/// is `Σ_{j<k} Γ_j Γ_k h(x_j−x_k, y_j−y_k)`.
pub trait PairKernel {
    /// `h` for each separation.
    fn values(&self, dx: &[f64], dy: &[f64]) -> Vec<f64>;
    /// `(∂h/∂dx, ∂h/∂dy)` for each separation.
    fn gradients(&self, dx: &[f64], dy: &[f64]) -> (Vec<f64>, Vec<f64>);
}

/// The exact kernel `h = (1/2π) log r`.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticPairKernel;

impl PairKernel for AnalyticPairKernel {
    fn values(&self, dx: &[f64], dy: &[f64]) -> Vec<f64> {
        let c = 1.0 / (2.0 * std::f64::consts::PI);
        dx.iter()
            .zip(dy)
            .map(|(&a, &b)| c * 0.5 * (a * a + b * b).ln())
            .collect()
    }

    fn gradients(&self, dx: &[f64], dy: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let c = 1.0 / (2.0 * std::f64::consts::PI);
        let mut gx = Vec::with_capacity(dx.len());
        let mut gy = Vec::with_capacity(dx.len());
        for (&a, &b) in dx.iter().zip(dy) {
            let r2 = a * a + b * b;
            gx.push(c * a / r2);
            gy.push(c * b / r2);
        }
        (gx, gy)
    }
}

/// Batch rows fed to the surrogate kernel at once; bounds peak memory for
/// large pair counts.
const KERNEL_CHUNK: usize = 8192;

/// A trained surrogate `h_θ(dx, dy)`; evaluation is batched through the
/// network as matrix products.
#[derive(Debug, Clone)]
pub struct LearnedPairKernel {
    pub params: MlpParameters,
}

impl LearnedPairKernel {
    pub fn new(params: MlpParameters) -> Self {
        assert_eq!(params.input_dim(), 2, "pair kernel takes (dx, dy)");
        Self { params }
    }
}

impl PairKernel for LearnedPairKernel {
    fn values(&self, dx: &[f64], dy: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(dx.len());
        for start in (0..dx.len()).step_by(KERNEL_CHUNK) {
            let end = (start + KERNEL_CHUNK).min(dx.len());
            let mut inputs = Array2::zeros((end - start, 2));
            for i in start..end {
                inputs[[i - start, 0]] = dx[i];
                inputs[[i - start, 1]] = dy[i];
            }
            out.extend(self.params.batched_forward(&inputs).iter());
        }
        out
    }

    fn gradients(&self, dx: &[f64], dy: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut gx = Vec::with_capacity(dx.len());
        let mut gy = Vec::with_capacity(dx.len());
        for start in (0..dx.len()).step_by(KERNEL_CHUNK) {
            let end = (start + KERNEL_CHUNK).min(dx.len());
            let mut inputs = Array2::zeros((end - start, 2));
            for i in start..end {
                inputs[[i - start, 0]] = dx[i];
                inputs[[i - start, 1]] = dy[i];
            }
            let (_, grads) = self.params.batched_input_gradient(&inputs);
            for row in grads.rows() {
                gx.push(row[0]);
                gy.push(row[1]);
            }
        }
        (gx, gy)
    }
}

/// A [`PairKernel`] composed over all unordered pairs of an N-body system,
/// exposed as a `HamiltonianProvider` with `q` the x-coordinates and `p`
/// the y-coordinates. Pair ordering is fixed (j<k, row-major) and the
/// accumulation sequential, so repeated calls are bit-identical.
pub struct AssembledKernel<'a, K: PairKernel> {
    kernel: &'a K,
    gamma: Vec<f64>,
}

impl<'a, K: PairKernel> AssembledKernel<'a, K> {
    pub fn new(kernel: &'a K, gamma: Vec<f64>) -> Self {
        Self { kernel, gamma }
    }

    fn separations(&self, q: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.gamma.len();
        let m = n * (n - 1) / 2;
        let mut dx = Vec::with_capacity(m);
        let mut dy = Vec::with_capacity(m);
        for j in 0..n {
            for k in (j + 1)..n {
                dx.push(q[j] - q[k]);
                dy.push(p[j] - p[k]);
            }
        }
        (dx, dy)
    }
}

impl<K: PairKernel> HamiltonianProvider for AssembledKernel<'_, K> {
    fn dim(&self) -> usize {
        self.gamma.len()
    }

    fn value(&self, q: &[f64], p: &[f64]) -> f64 {
        let n = self.gamma.len();
        let (dx, dy) = self.separations(q, p);
        let h = self.kernel.values(&dx, &dy);
        let mut total = 0.0;
        let mut idx = 0;
        for j in 0..n {
            for k in (j + 1)..n {
                total += self.gamma[j] * self.gamma[k] * h[idx];
                idx += 1;
            }
        }
        total
    }

    fn gradient(&self, q: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.gamma.len();
        let (dx, dy) = self.separations(q, p);
        let (gx, gy) = self.kernel.gradients(&dx, &dy);
        let mut gq = vec![0.0; n];
        let mut gp = vec![0.0; n];
        let mut idx = 0;
        for j in 0..n {
            for k in (j + 1)..n {
                let w = self.gamma[j] * self.gamma[k];
                gq[j] += w * gx[idx];
                gq[k] -= w * gx[idx];
                gp[j] += w * gy[idx];
                gp[k] -= w * gy[idx];
                idx += 1;
            }
        }
        (gq, gp)
    }
}

/// Augmented vortex state: primary copy `(x, y)` and auxiliary `(xt, yt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VortexState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub xt: Vec<f64>,
    pub yt: Vec<f64>,
}

impl VortexState {
    pub fn from_configuration(cfg: &VortexConfiguration) -> Self {
        Self {
            x: cfg.x.clone(),
            y: cfg.y.clone(),
            xt: cfg.x.clone(),
            yt: cfg.y.clone(),
        }
    }

    pub fn primary(&self, gamma: &[f64]) -> VortexConfiguration {
        VortexConfiguration {
            x: self.x.clone(),
            y: self.y.clone(),
            gamma: gamma.to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite())
            && self.y.iter().all(|v| v.is_finite())
            && self.xt.iter().all(|v| v.is_finite())
            && self.yt.iter().all(|v| v.is_finite())
    }
}

/// `φ1`: exact flow of `H(X, Ỹ)` under the Γ-weighted structure;
/// `Y += (δ/Γ) ∂H/∂X`, `X̃ −= (δ/Γ) ∂H/∂Ỹ`.
pub fn weighted_phi1<H: HamiltonianProvider>(
    s: &VortexState,
    gamma: &[f64],
    delta: f64,
    h: &H,
) -> VortexState {
    let (gx, gyt) = h.gradient(&s.x, &s.yt);
    let mut out = s.clone();
    for j in 0..gamma.len() {
        out.y[j] += delta / gamma[j] * gx[j];
        out.xt[j] -= delta / gamma[j] * gyt[j];
    }
    out
}

/// `φ2`: exact flow of `H(X̃, Y)`;
/// `X −= (δ/Γ) ∂H/∂Y`, `Ỹ += (δ/Γ) ∂H/∂X̃`.
pub fn weighted_phi2<H: HamiltonianProvider>(
    s: &VortexState,
    gamma: &[f64],
    delta: f64,
    h: &H,
) -> VortexState {
    let (gxt, gy) = h.gradient(&s.xt, &s.y);
    let mut out = s.clone();
    for j in 0..gamma.len() {
        out.x[j] -= delta / gamma[j] * gy[j];
        out.yt[j] += delta / gamma[j] * gxt[j];
    }
    out
}

/// `φ3`: the binding rotation on the deviation between the copies, exactly
/// as in the unweighted integrator (strengths do not enter).
pub fn weighted_phi3(s: &VortexState, delta: f64, omega: f64) -> VortexState {
    let (sin, cos) = (2.0 * omega * delta).sin_cos();
    let n = s.x.len();
    let mut out = s.clone();
    for j in 0..n {
        let mx = (s.x[j] + s.xt[j]) / 2.0;
        let my = (s.y[j] + s.yt[j]) / 2.0;
        let dx = (s.x[j] - s.xt[j]) / 2.0;
        let dy = (s.y[j] - s.yt[j]) / 2.0;
        let rx = cos * dx + sin * dy;
        let ry = -sin * dx + cos * dy;
        out.x[j] = mx + rx;
        out.y[j] = my + ry;
        out.xt[j] = mx - rx;
        out.yt[j] = my - ry;
    }
    out
}

/// One Strang step of the weighted scheme; four gradient evaluations.
pub fn weighted_strang_step<H: HamiltonianProvider>(
    s: &VortexState,
    gamma: &[f64],
    dt: f64,
    omega: f64,
    h: &H,
) -> VortexState {
    let half = dt / 2.0;
    let s = weighted_phi1(s, gamma, half, h);
    let s = weighted_phi2(&s, gamma, half, h);
    let s = weighted_phi3(&s, dt, omega);
    let s = weighted_phi2(&s, gamma, half, h);
    weighted_phi1(&s, gamma, half, h)
}

/// Advance a configuration by one `dt` with the assembled kernel, starting
/// from the duplicated auxiliary copy.
pub fn vortex_step<K: PairKernel>(
    cfg: &VortexConfiguration,
    dt: f64,
    omega: f64,
    kernel: &K,
) -> Result<VortexConfiguration, VortexError> {
    cfg.validate()?;
    let h = AssembledKernel::new(kernel, cfg.gamma.clone());
    let s = VortexState::from_configuration(cfg);
    let s = weighted_strang_step(&s, &cfg.gamma, dt, omega, &h);
    let out = s.primary(&cfg.gamma);
    out.validate()?;
    Ok(out)
}

/// Frames of an N-body run, recorded every `stride` steps.
#[derive(Debug, Clone)]
pub struct VortexRollout {
    pub times: Vec<f64>,
    pub frames: Vec<VortexConfiguration>,
    pub diverged: bool,
}

/// Repeated weighted Strang steps with the assembled kernel. The augmented
/// state persists across steps; frames expose the primary copy. On
/// coincidence or non-finite state the run truncates with `diverged` set.
pub fn nbody_rollout<K: PairKernel>(
    cfg: &VortexConfiguration,
    kernel: &K,
    dt: f64,
    omega: f64,
    horizon: f64,
    stride: usize,
) -> Result<VortexRollout, VortexError> {
    cfg.validate()?;
    let stride = stride.max(1);
    let steps = (horizon / dt).floor() as usize;
    let h = AssembledKernel::new(kernel, cfg.gamma.clone());
    let mut s = VortexState::from_configuration(cfg);
    let mut times = vec![0.0];
    let mut frames = vec![cfg.clone()];
    let mut diverged = false;
    for step in 1..=steps {
        s = weighted_strang_step(&s, &cfg.gamma, dt, omega, &h);
        let frame = s.primary(&cfg.gamma);
        if !s.is_finite() || frame.validate().is_err() {
            diverged = true;
            break;
        }
        if step % stride == 0 || step == steps {
            times.push(step as f64 * dt);
            frames.push(frame);
        }
    }
    Ok(VortexRollout { times, frames, diverged })
}

// ---------------------------------------------------------------------------
// Initial-condition samplers (desk scale)
// ---------------------------------------------------------------------------

/// Shielded vorticity profile `ω(r) = (1 − r²/(2a²)) exp(−r²/(2a²))`;
/// integrates to zero circulation over the plane.
pub fn taylor_profile(r: f64, a: f64) -> f64 {
    let u = r * r / (2.0 * a * a);
    (1.0 - u) * (-u).exp()
}

const GOLDEN_ANGLE: f64 = 2.399963229728653;

fn taylor_lobe(
    n: usize,
    a: f64,
    scale: f64,
    center: (f64, f64),
    rng: &mut ChaCha8Rng,
    out: &mut VortexConfiguration,
) {
    // equal-area sunflower quadrature out to 4a, where the profile's tail
    // circulation is below 0.3% of the absolute circulation
    let radius = 4.0 * a;
    let cell = std::f64::consts::PI * radius * radius / n as f64;
    let rot: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    for i in 0..n {
        let r = radius * (((i as f64) + 0.5) / n as f64).sqrt();
        let theta = i as f64 * GOLDEN_ANGLE + rot;
        out.x.push(center.0 + r * theta.cos());
        out.y.push(center.1 + r * theta.sin());
        out.gamma.push(scale * taylor_profile(r, a) * cell);
    }
}

/// Two same-signed Taylor vortices side by side (centers at `x = ∓2.5a`),
/// `n_particles/2` particles each on an equal-area radial grid.
pub fn taylor_vortex_sample(
    n_particles: usize,
    core_radius: f64,
    strength_scale: f64,
    seed: u64,
) -> VortexConfiguration {
    assert!(n_particles >= 4, "need at least 4 particles");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "taylor", 0));
    let mut cfg = VortexConfiguration {
        x: Vec::new(),
        y: Vec::new(),
        gamma: Vec::new(),
    };
    let half = n_particles / 2;
    let sep = 2.5 * core_radius;
    taylor_lobe(half, core_radius, strength_scale, (-sep, 0.0), &mut rng, &mut cfg);
    taylor_lobe(
        n_particles - half,
        core_radius,
        strength_scale,
        (sep, 0.0),
        &mut rng,
        &mut cfg,
    );
    cfg
}

/// Geometry of the four-cluster leapfrog setup: two nested, coaxial
/// vortex pairs (top +Γ, bottom −Γ) that propagate along +x.
#[derive(Debug, Clone, Copy)]
pub struct LeapfrogGeometry {
    pub inner_half_spacing: f64,
    pub outer_half_spacing: f64,
    pub strength: f64,
    pub cluster_radius: f64,
}

impl Default for LeapfrogGeometry {
    fn default() -> Self {
        Self {
            inner_half_spacing: 0.5,
            outer_half_spacing: 1.0,
            strength: 1.0,
            cluster_radius: 0.08,
        }
    }
}

/// Four clusters of `n_particles/4` point vortices at `(0, ±inner)` and
/// `(0, ±outer)`, each cluster carrying `±strength` split evenly.
pub fn leapfrog_sample(
    n_particles: usize,
    geometry: LeapfrogGeometry,
    seed: u64,
) -> VortexConfiguration {
    assert!(n_particles >= 4, "need at least 4 particles");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "leapfrog", 0));
    let per = n_particles / 4;
    let centers = [
        (0.0, geometry.inner_half_spacing, geometry.strength),
        (0.0, -geometry.inner_half_spacing, -geometry.strength),
        (0.0, geometry.outer_half_spacing, geometry.strength),
        (0.0, -geometry.outer_half_spacing, -geometry.strength),
    ];
    let mut cfg = VortexConfiguration {
        x: Vec::new(),
        y: Vec::new(),
        gamma: Vec::new(),
    };
    for (ci, (cx, cy, g)) in centers.iter().enumerate() {
        let count = if ci == 3 { n_particles - 3 * per } else { per };
        for _ in 0..count {
            let (mut ox, mut oy) = (0.0, 0.0);
            if geometry.cluster_radius > 0.0 && count > 1 {
                // uniform over the cluster disk
                let r = geometry.cluster_radius * rng.gen_range(0.0f64..1.0).sqrt();
                let t = rng.gen_range(0.0..std::f64::consts::TAU);
                ox = r * t.cos();
                oy = r * t.sin();
            }
            cfg.x.push(cx + ox);
            cfg.y.push(cy + oy);
            cfg.gamma.push(g / count as f64);
        }
    }
    cfg
}

/// `|Γ|`-weighted centroid of a slice of particles.
pub fn weighted_centroid(cfg: &VortexConfiguration, indices: &[usize]) -> (f64, f64) {
    let mut wx = 0.0;
    let mut wy = 0.0;
    let mut w = 0.0;
    for &i in indices {
        let a = cfg.gamma[i].abs();
        wx += a * cfg.x[i];
        wy += a * cfg.y[i];
        w += a;
    }
    (wx / w, wy / w)
}

// ---------------------------------------------------------------------------
// Two-body kernel training
// ---------------------------------------------------------------------------

/// Hyperparameters of the two-body kernel fit; defaults mirror the main
/// training recipe with unit strengths and a wider sampling box so the
/// kernel sees the separations that occur in N-body runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairTrainingConfig {
    pub n_samples: usize,
    pub t_train: f64,
    pub dt: f64,
    pub omega: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// positions sampled uniformly from `[-box_half_width, box_half_width]²`
    pub box_half_width: f64,
    /// resample when the pair is closer than this
    pub min_separation: f64,
}

impl Default for PairTrainingConfig {
    fn default() -> Self {
        Self {
            n_samples: 2048,
            t_train: 0.01,
            dt: 0.01,
            omega: 2000.0,
            batch_size: 512,
            lr_decay: 0.8,
            lr_decay_every: 10,
            learning_rate: 0.05,
            max_epochs: 100,
            seed: 0,
            box_half_width: 2.0,
            min_separation: 0.2,
        }
    }
}

impl PairTrainingConfig {
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((epoch / self.lr_decay_every) as i32)
    }

    pub fn rollout_steps(&self) -> Result<usize, TrainError> {
        let ratio = self.t_train / self.dt;
        let steps = ratio.round();
        if !(steps >= 1.0 && (ratio - steps).abs() < 1e-9) {
            return Err(TrainError::InvalidConfig(format!(
                "t_train/dt = {ratio} is not a positive integer"
            )));
        }
        Ok(steps as usize)
    }
}

/// Two-body samples with unit strengths `Γ = (1, 1)`, packed as
/// `q = (x1, x2)`, `p = (y1, y2)`. Targets come from the weighted analytic
/// integrator at a 1000× finer step.
pub fn generate_pair_dataset(cfg: &PairTrainingConfig) -> Vec<SamplePair> {
    let gamma = [1.0, 1.0];
    let kernel = AnalyticPairKernel;
    let h = AssembledKernel::new(&kernel, gamma.to_vec());
    let fine = 1000;
    let fine_dt = cfg.dt / fine as f64;
    let steps_per_dt: usize = (cfg.t_train / cfg.dt).round() as usize * fine;
    (0..cfg.n_samples)
        .map(|i| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "pair-data", i as u64));
            let w = cfg.box_half_width;
            let (x1, y1, x2, y2) = loop {
                let x1 = rng.gen_range(-w..w);
                let y1 = rng.gen_range(-w..w);
                let x2 = rng.gen_range(-w..w);
                let y2 = rng.gen_range(-w..w);
                let r = ((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt();
                if r >= cfg.min_separation {
                    break (x1, y1, x2, y2);
                }
            };
            let initial = PhaseState {
                q: vec![x1, x2],
                p: vec![y1, y2],
            };
            let mut s = VortexState {
                x: initial.q.clone(),
                y: initial.p.clone(),
                xt: initial.q.clone(),
                yt: initial.p.clone(),
            };
            for _ in 0..steps_per_dt {
                s = weighted_strang_step(&s, &gamma, fine_dt, cfg.omega, &h);
            }
            let target = PhaseState { q: s.x, p: s.y };
            SamplePair { initial, target }
        })
        .collect()
}

fn pair_differences(tape: &mut Tape, v: NodeId) -> NodeId {
    let a = tape.slice(v, 0, 1);
    let b = tape.slice(v, 1, 1);
    tape.sub(a, b)
}

/// Gradient of `H = h_θ(x1−x2, y1−y2)` with respect to the stacked pair
/// coordinates: `(g, −g)` for each relative component.
fn pair_gradient_on_tape(
    tape: &mut Tape,
    net: &TapeMlp,
    coords_a: NodeId,
    coords_b: NodeId,
) -> (NodeId, NodeId) {
    let da = pair_differences(tape, coords_a);
    let db = pair_differences(tape, coords_b);
    let input = tape.concat(da, db);
    let g = net.input_gradient(tape, input);
    let ga = tape.slice(g, 0, 1);
    let gb = tape.slice(g, 1, 1);
    let nga = tape.scale(ga, -1.0);
    let ngb = tape.scale(gb, -1.0);
    (tape.concat(ga, nga), tape.concat(gb, ngb))
}

fn pair_phi1_on_tape(
    tape: &mut Tape,
    net: &TapeMlp,
    s: TapeState,
    delta: f64,
    inv_gamma: NodeId,
) -> TapeState {
    let (gx, gyt) = pair_gradient_on_tape(tape, net, s.q, s.y);
    let wx = tape.mul(gx, inv_gamma);
    let wyt = tape.mul(gyt, inv_gamma);
    TapeState {
        q: s.q,
        p: tape.add_scaled(s.p, wx, delta),
        x: tape.add_scaled(s.x, wyt, -delta),
        y: s.y,
    }
}

fn pair_phi2_on_tape(
    tape: &mut Tape,
    net: &TapeMlp,
    s: TapeState,
    delta: f64,
    inv_gamma: NodeId,
) -> TapeState {
    let (gxt, gy) = pair_gradient_on_tape(tape, net, s.x, s.p);
    let wxt = tape.mul(gxt, inv_gamma);
    let wy = tape.mul(gy, inv_gamma);
    TapeState {
        q: tape.add_scaled(s.q, wy, -delta),
        p: s.p,
        x: s.x,
        y: tape.add_scaled(s.y, wxt, delta),
    }
}

/// One recorded weighted Strang step of the two-body system.
pub fn pair_strang_step_on_tape(
    tape: &mut Tape,
    net: &TapeMlp,
    s: TapeState,
    dt: f64,
    omega: f64,
    inv_gamma: NodeId,
) -> TapeState {
    let half = dt / 2.0;
    let s = pair_phi1_on_tape(tape, net, s, half, inv_gamma);
    let s = pair_phi2_on_tape(tape, net, s, half, inv_gamma);
    let s = unroll::phi3_on_tape(tape, s, dt, omega);
    let s = pair_phi2_on_tape(tape, net, s, half, inv_gamma);
    pair_phi1_on_tape(tape, net, s, half, inv_gamma)
}

/// Loss and parameter gradient of the summed four-term loss over a batch of
/// two-body `(initial, target)` pairs, unit strengths.
pub fn pair_loss_parameter_gradient(
    params: &MlpParameters,
    batch: &[(PhaseState, PhaseState)],
    dt: f64,
    omega: f64,
    steps: usize,
) -> Result<(f64, MlpGradient), UnrollError> {
    let mut grad = MlpGradient::zeros_like(params);
    let mut total = 0.0;
    for (sample, (initial, target)) in batch.iter().enumerate() {
        let mut tape = Tape::new();
        let net = TapeMlp::insert(&mut tape, params);
        let inv_gamma = tape.leaf_vector(Array1::from(vec![1.0, 1.0]));
        let q0 = tape.leaf_vector(Array1::from(initial.q.clone()));
        let p0 = tape.leaf_vector(Array1::from(initial.p.clone()));
        let mut s = TapeState { q: q0, p: p0, x: q0, y: p0 };
        for step in 0..steps {
            s = pair_strang_step_on_tape(&mut tape, &net, s, dt, omega, inv_gamma);
            if !tape.value(s.q).is_finite() || !tape.value(s.p).is_finite() {
                return Err(UnrollError::DivergedRollout { sample, step });
            }
        }
        let tq = tape.leaf_vector(Array1::from(target.q.clone()));
        let tp = tape.leaf_vector(Array1::from(target.p.clone()));
        let loss_node = unroll::nssnn_loss_on_tape(&mut tape, &s, tq, tp);
        let loss = tape.scalar(loss_node);
        if !loss.is_finite() {
            return Err(UnrollError::DivergedRollout { sample, step: steps });
        }
        total += loss;
        let adjoints = tape.backward(loss_node);
        net.accumulate_gradient(&adjoints, &mut grad);
    }
    Ok((total, grad))
}

/// Result of the two-body kernel fit.
#[derive(Debug, Clone)]
pub struct PairTrainResult {
    pub kernel: LearnedPairKernel,
    pub history: Vec<EpochStats>,
    pub final_val_loss: f64,
}

fn pair_validation_loss(
    params: &MlpParameters,
    pairs: &[SamplePair],
    dt: f64,
    omega: f64,
    steps: usize,
) -> f64 {
    let gamma = [1.0, 1.0];
    let kernel = LearnedPairKernel::new(params.clone());
    let h = AssembledKernel::new(&kernel, gamma.to_vec());
    let mut total = 0.0;
    for pair in pairs {
        let mut s = VortexState {
            x: pair.initial.q.clone(),
            y: pair.initial.p.clone(),
            xt: pair.initial.q.clone(),
            yt: pair.initial.p.clone(),
        };
        for _ in 0..steps {
            s = weighted_strang_step(&s, &gamma, dt, omega, &h);
        }
        let l1 = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum()
        };
        total += l1(&pair.target.q, &s.x)
            + l1(&pair.target.p, &s.y)
            + l1(&s.xt, &s.x)
            + l1(&s.yt, &s.y);
    }
    total / pairs.len() as f64
}

/// Fit `h_θ` on two-body data: same loss, optimizer, and schedule as the
/// main trainer, but through the Γ-weighted step with the relative-
/// coordinate network.
pub fn train_pair_kernel(cfg: &PairTrainingConfig) -> Result<PairTrainResult, TrainError> {
    let steps = cfg.rollout_steps()?;
    if cfg.batch_size == 0 || cfg.batch_size > cfg.n_samples {
        return Err(TrainError::InvalidConfig(format!(
            "batch size {} incompatible with {} samples",
            cfg.batch_size, cfg.n_samples
        )));
    }
    let dataset = generate_pair_dataset(cfg);
    let (train_idx, val_idx) = split_indices(dataset.len(), cfg.seed);
    let train_pairs: Vec<SamplePair> = train_idx.iter().map(|&i| dataset[i].clone()).collect();
    let val_pairs: Vec<SamplePair> = val_idx.iter().map(|&i| dataset[i].clone()).collect();

    let sizes = crate::mlp::layer_sizes(2);
    let mut params = MlpParameters::init_xavier(&sizes, derive_seed(cfg.seed, "init", 0));
    let mut adam = AdamState::new(&params);
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr_at_epoch(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "shuffle", epoch as u64));
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(PhaseState, PhaseState)> = chunk
                .iter()
                .map(|&i| (train_pairs[i].initial.clone(), train_pairs[i].target.clone()))
                .collect();
            let (loss, mut grad) =
                pair_loss_parameter_gradient(&params, &batch, cfg.dt, cfg.omega, steps)
                    .map_err(|source| TrainError::Diverged { epoch, batch: batch_no, source })?;
            epoch_loss += loss;
            grad.scale(1.0 / batch.len() as f64);
            adam_step(&mut params, &grad, &mut adam, lr);
        }
        let train_loss = epoch_loss / train_pairs.len() as f64;
        let val_loss = pair_validation_loss(&params, &val_pairs, cfg.dt, cfg.omega, steps);
        history.push(EpochStats { epoch, lr, train_loss, val_loss });
    }
    let final_val_loss = if cfg.max_epochs == 0 {
        pair_validation_loss(&params, &val_pairs, cfg.dt, cfg.omega, steps)
    } else {
        history.last().map(|h| h.val_loss).unwrap_or(f64::NAN)
    };
    Ok(PairTrainResult {
        kernel: LearnedPairKernel::new(params),
        history,
        final_val_loss,
    })
}
