//! Dataset generation, the four-term L1 loss, Adam, and the training loop.

use crate::integrator;
use crate::mlp::{layer_sizes, MlpGradient, MlpParameters};
use crate::provider::IntegratorConfig;
use crate::state::{AugmentedState, PhaseState};
use crate::systems::{AnalyticSystem, UnknownSystem};
use crate::unroll::{loss_parameter_gradient, UnrollError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Derive an independent sub-stream seed from a global seed, a stream name
/// and a counter. SplitMix64-style mixing; adding a consumer never perturbs
/// existing streams.
pub fn derive_seed(global: u64, stream: &str, counter: u64) -> u64 {
    let mut h = global ^ 0x9e37_79b9_7f4a_7c15;
    for &b in stream.as_bytes() {
        h = (h ^ b as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 27;
    }
    h = h.wrapping_add(counter.wrapping_mul(0x94d0_49bb_1331_11eb));
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 31;
    h
}

/// Full training recipe. Defaults follow the published setup: 2048 samples,
/// `T_train = dt = 0.01`, `omega = 2000`, batches of 512, Adam at 0.05 with
/// a 0.8 decay every 10 epochs, 100 epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub system: String,
    pub n_samples: usize,
    pub t_train: f64,
    pub dt: f64,
    pub omega: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub max_epochs: usize,
    /// Uniform noise amplitude `a`: each state component gets `a * U(-1, 1)`.
    pub noise: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            system: "spring".to_string(),
            n_samples: 2048,
            t_train: 0.01,
            dt: 0.01,
            omega: 2000.0,
            batch_size: 512,
            learning_rate: 0.05,
            lr_decay: 0.8,
            lr_decay_every: 10,
            max_epochs: 100,
            noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    UnknownSystem(#[from] UnknownSystem),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("rollout diverged in epoch {epoch}, batch {batch}: {source}")]
    Diverged {
        epoch: usize,
        batch: usize,
        source: UnrollError,
    },
}

impl TrainingConfig {
    /// Number of unrolled integrator steps per training rollout.
    pub fn rollout_steps(&self) -> Result<usize, TrainError> {
        let ratio = self.t_train / self.dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 {
            return Err(TrainError::InvalidConfig(format!(
                "t_train/dt = {ratio} is not a positive integer"
            )));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.batch_size > self.n_samples {
            return Err(TrainError::InvalidConfig(format!(
                "batch size {} must be in 1..={}",
                self.batch_size, self.n_samples
            )));
        }
        if !(self.dt > 0.0) || !(self.t_train > 0.0) {
            return Err(TrainError::InvalidConfig(
                "dt and t_train must be positive".to_string(),
            ));
        }
        if self.noise < 0.0 {
            return Err(TrainError::InvalidConfig("noise must be >= 0".to_string()));
        }
        self.rollout_steps().map(|_| ())
    }

    /// Learning rate used in the given (0-based) epoch.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((epoch / self.lr_decay_every) as i32)
    }
}

/// One training example: initial state and target state at `t_train`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub initial: PhaseState,
    pub target: PhaseState,
}

/// Draw initial states from the catalog sampling box and integrate the
/// analytic system with a 1000x finer step for the targets, so oracle error
/// (~1e-10 on the spring) is negligible next to learned-model error. Noise,
/// when enabled, is applied to both states independently.
pub fn generate_dataset(cfg: &TrainingConfig) -> Result<Vec<SamplePair>, TrainError> {
    cfg.validate()?;
    let system = AnalyticSystem::from_name(&cfg.system)?;
    let sampling_box = system.sampling_box();
    let n = system.dim();
    let fine_steps = 1000 * cfg.rollout_steps()?;
    let fine_cfg = IntegratorConfig::new(cfg.dt / 1000.0, cfg.omega, fine_steps)
        .expect("validated dt");

    let mut pairs = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "data", i as u64));
        let coords: Vec<f64> = sampling_box
            .iter()
            .map(|(lo, hi)| rng.gen_range(*lo..*hi))
            .collect();
        let initial = PhaseState::new(coords[..n].to_vec(), coords[n..].to_vec())
            .expect("sampling box produces valid states");
        let traj = integrator::rollout(&initial, &fine_cfg, &system);
        debug_assert!(!traj.diverged);
        let target = traj.states.last().expect("non-empty trajectory").phase();
        let mut pair = SamplePair { initial, target };
        if cfg.noise > 0.0 {
            for v in pair
                .initial
                .q
                .iter_mut()
                .chain(pair.initial.p.iter_mut())
                .chain(pair.target.q.iter_mut())
                .chain(pair.target.p.iter_mut())
            {
                *v += cfg.noise * rng.gen_range(-1.0..1.0);
            }
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

/// The four-term L1 loss of one predicted augmented state against a target
/// phase state. The auxiliary terms compare the prediction's own copies.
pub fn nssnn_loss(predicted: &AugmentedState, target: &PhaseState) -> f64 {
    assert_eq!(
        predicted.dim(),
        target.dim(),
        "loss dimension mismatch: {} vs {}",
        predicted.dim(),
        target.dim()
    );
    let mut loss = 0.0;
    for i in 0..target.dim() {
        loss += (target.q[i] - predicted.q[i]).abs();
        loss += (target.p[i] - predicted.p[i]).abs();
        loss += (predicted.x[i] - predicted.q[i]).abs();
        loss += (predicted.y[i] - predicted.p[i]).abs();
    }
    loss
}

/// Adam first/second moment accumulators.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: MlpGradient,
    pub v: MlpGradient,
    pub step: usize,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

impl AdamState {
    pub fn new(params: &MlpParameters) -> Self {
        Self {
            m: MlpGradient::zeros_like(params),
            v: MlpGradient::zeros_like(params),
            step: 0,
        }
    }
}

/// Standard Adam update with bias correction.
pub fn adam_step(params: &mut MlpParameters, grad: &MlpGradient, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let mhat = *m / bc1;
        let vhat = *v / bc2;
        *p -= lr * mhat / (vhat.sqrt() + ADAM_EPSILON);
    };
    for k in 0..params.weights.len() {
        for ((p, &g), (m, v)) in params.weights[k]
            .iter_mut()
            .zip(grad.weights[k].iter())
            .zip(state.m.weights[k].iter_mut().zip(state.v.weights[k].iter_mut()))
        {
            update(p, g, m, v);
        }
        for ((p, &g), (m, v)) in params.biases[k]
            .iter_mut()
            .zip(grad.biases[k].iter())
            .zip(state.m.biases[k].iter_mut().zip(state.v.biases[k].iter_mut()))
        {
            update(p, g, m, v);
        }
    }
}

/// Per-epoch record emitted by [`train`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: MlpParameters,
    pub history: Vec<EpochStats>,
    /// Mean validation loss at the end of training.
    pub final_val_loss: f64,
}

/// Seed-stable 90/10 train/validation split: returns (train, val) index sets.
pub fn split_indices(n_samples: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n_samples).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "split", 0));
    // Fisher-Yates
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let n_val = (n_samples / 10).max(1).min(n_samples - 1);
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

/// Mean four-term loss of the current parameters over a set of pairs,
/// computed with the plain (non-tape) integrator.
pub fn evaluate_loss(
    params: &MlpParameters,
    pairs: &[SamplePair],
    cfg: &IntegratorConfig,
) -> f64 {
    let mut total = 0.0;
    for pair in pairs {
        let traj = integrator::rollout(&pair.initial, cfg, params);
        let last = traj.states.last().expect("non-empty");
        total += nssnn_loss(last, &pair.target);
    }
    total / pairs.len() as f64
}

/// End-to-end training: dataset generation, epoch loop with per-epoch
/// shuffling, Adam with the step-decay schedule, and per-epoch loss history.
/// Bit-reproducible given the same config.
pub fn train(cfg: &TrainingConfig) -> Result<TrainResult, TrainError> {
    let dataset = generate_dataset(cfg)?;
    train_on_dataset(cfg, &dataset)
}

/// As [`train`], but over a caller-provided dataset (used by the vortex
/// two-body trainer and by tests that need custom data).
pub fn train_on_dataset(
    cfg: &TrainingConfig,
    dataset: &[SamplePair],
) -> Result<TrainResult, TrainError> {
    cfg.validate()?;
    let steps = cfg.rollout_steps()?;
    let n = dataset
        .first()
        .map(|p| p.initial.dim())
        .ok_or_else(|| TrainError::InvalidConfig("empty dataset".to_string()))?;
    let rollout_cfg = IntegratorConfig::new(cfg.dt, cfg.omega, steps).expect("validated");

    let (train_idx, val_idx) = split_indices(dataset.len(), cfg.seed);
    let train_pairs: Vec<SamplePair> = train_idx.iter().map(|&i| dataset[i].clone()).collect();
    let val_pairs: Vec<SamplePair> = val_idx.iter().map(|&i| dataset[i].clone()).collect();

    let mut params =
        MlpParameters::init_xavier(&layer_sizes(2 * n), derive_seed(cfg.seed, "init", 0));
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
                .map(|&i| {
                    (
                        train_pairs[i].initial.clone(),
                        train_pairs[i].target.clone(),
                    )
                })
                .collect();
            let (loss, mut grad) =
                loss_parameter_gradient(&params, &batch, &rollout_cfg).map_err(|source| {
                    TrainError::Diverged {
                        epoch,
                        batch: batch_no,
                        source,
                    }
                })?;
            epoch_loss += loss;
            grad.scale(1.0 / batch.len() as f64);
            adam_step(&mut params, &grad, &mut adam, lr);
        }
        let train_loss = epoch_loss / train_pairs.len() as f64;
        let val_loss = evaluate_loss(&params, &val_pairs, &rollout_cfg);
        history.push(EpochStats {
            epoch,
            lr,
            train_loss,
            val_loss,
        });
    }
    let final_val_loss = if cfg.max_epochs == 0 {
        evaluate_loss(&params, &val_pairs, &rollout_cfg)
    } else {
        history.last().map(|h| h.val_loss).unwrap_or(f64::NAN)
    };
    Ok(TrainResult {
        params,
        history,
        final_val_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::exact_spring_solution;

    #[test]
    fn dataset_is_deterministic() {
        let cfg = TrainingConfig {
            n_samples: 16,
            batch_size: 8,
            ..Default::default()
        };
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        let other = generate_dataset(&TrainingConfig {
            seed: 1,
            ..cfg.clone()
        })
        .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn spring_targets_match_closed_form() {
        let cfg = TrainingConfig {
            n_samples: 32,
            batch_size: 8,
            ..Default::default()
        };
        let pairs = generate_dataset(&cfg).unwrap();
        for pair in &pairs {
            let exact =
                exact_spring_solution(pair.initial.q[0], pair.initial.p[0], cfg.t_train);
            assert!((pair.target.q[0] - exact.q[0]).abs() < 1e-8);
            assert!((pair.target.p[0] - exact.p[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn noise_stays_within_amplitude() {
        let clean = TrainingConfig {
            n_samples: 2048,
            ..Default::default()
        };
        let noisy = TrainingConfig {
            noise: 0.05,
            ..clean.clone()
        };
        let a = generate_dataset(&clean).unwrap();
        let b = generate_dataset(&noisy).unwrap();
        let mut abs_sum = 0.0;
        let mut count = 0usize;
        for (ca, cb) in a.iter().zip(&b) {
            for (va, vb) in ca
                .initial
                .q
                .iter()
                .chain(&ca.initial.p)
                .chain(&ca.target.q)
                .chain(&ca.target.p)
                .zip(
                    cb.initial
                        .q
                        .iter()
                        .chain(&cb.initial.p)
                        .chain(&cb.target.q)
                        .chain(&cb.target.p),
                )
            {
                let d = vb - va;
                assert!(d.abs() <= 0.05 + 1e-12, "noise out of range: {d}");
                abs_sum += d;
                count += 1;
            }
        }
        let mean = abs_sum / count as f64;
        assert!(mean.abs() <= 0.005, "noise mean {mean} too far from zero");
    }

    #[test]
    fn unknown_system_is_an_error() {
        let cfg = TrainingConfig {
            system: "kepler".to_string(),
            ..Default::default()
        };
        assert!(matches!(
            generate_dataset(&cfg),
            Err(TrainError::UnknownSystem(_))
        ));
    }

    #[test]
    fn loss_zero_on_perfect_prediction() {
        let target = PhaseState::new(vec![0.2], vec![-0.4]).unwrap();
        let pred = AugmentedState::from_phase(&target);
        assert_eq!(nssnn_loss(&pred, &target), 0.0);
    }

    #[test]
    fn loss_single_offset_term() {
        let target = PhaseState::new(vec![0.2], vec![-0.4]).unwrap();
        let mut pred = AugmentedState::from_phase(&target);
        pred.q[0] += 0.1;
        pred.x[0] = pred.q[0];
        assert!((nssnn_loss(&pred, &target) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut params = MlpParameters::init_xavier(&layer_sizes(2), 1);
        let before = params.clone();
        let grad = MlpGradient::zeros_like(&params);
        let mut adam = AdamState::new(&params);
        adam_step(&mut params, &grad, &mut adam, 0.05);
        assert_eq!(params, before);
    }

    #[test]
    fn adam_first_step_magnitude() {
        // scalar parameter, g = 1, lr = 0.05: bias-corrected update is
        // -lr * 1 / (1 + eps) ~ -0.05
        let mut params = MlpParameters::zeros(&[1, 1]);
        let mut grad = MlpGradient::zeros_like(&params);
        grad.weights[0][[0, 0]] = 1.0;
        let mut adam = AdamState::new(&params);
        adam_step(&mut params, &grad, &mut adam, 0.05);
        let got = params.weights[0][[0, 0]];
        assert!((got + 0.05).abs() < 1e-8, "update was {got}");
    }

    #[test]
    fn lr_schedule_decays_every_ten_epochs() {
        let cfg = TrainingConfig::default();
        assert_eq!(cfg.lr_at_epoch(0), 0.05);
        assert_eq!(cfg.lr_at_epoch(9), 0.05);
        assert!((cfg.lr_at_epoch(10) - 0.04).abs() < 1e-12);
        assert!((cfg.lr_at_epoch(25) - 0.05 * 0.8 * 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_epoch_run_returns_xavier_init() {
        let cfg = TrainingConfig {
            n_samples: 16,
            batch_size: 8,
            max_epochs: 0,
            ..Default::default()
        };
        let result = train(&cfg).unwrap();
        let expected = MlpParameters::init_xavier(
            &layer_sizes(2),
            derive_seed(cfg.seed, "init", 0),
        );
        assert_eq!(result.params, expected);
        assert!(result.history.is_empty());
    }

    #[test]
    fn training_is_bit_reproducible() {
        let cfg = TrainingConfig {
            n_samples: 32,
            batch_size: 16,
            max_epochs: 3,
            ..Default::default()
        };
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history.len(), 3);
        for (ha, hb) in a.history.iter().zip(&b.history) {
            assert_eq!(ha.train_loss, hb.train_loss);
            assert_eq!(ha.val_loss, hb.val_loss);
        }
    }

    #[test]
    fn invalid_ratio_rejected() {
        let cfg = TrainingConfig {
            t_train: 0.015,
            dt: 0.01,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(TrainError::InvalidConfig(_))));
    }

    #[test]
    fn split_is_seed_stable_and_disjoint() {
        let (train, val) = split_indices(100, 7);
        let (train2, val2) = split_indices(100, 7);
        assert_eq!(train, train2);
        assert_eq!(val, val2);
        assert_eq!(train.len() + val.len(), 100);
        assert_eq!(val.len(), 10);
        let mut all: Vec<usize> = train.iter().chain(val.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }
}
