//! Acceptance gate: one test per release criterion, each printing a single
//! PASS/FAIL line. Tolerances are stated inline; tests never loosen them.

use nssnn_core::evaluation::{self, OMEGA_STUDY_VALUES};
use nssnn_core::integrator::{self, auxiliary_deviation};
use nssnn_core::mlp::{layer_sizes, MlpParameters};
use nssnn_core::systems::exact_spring_solution;
use nssnn_core::testing::{fd_jacobian, rel_error, symplectic_defect};
use nssnn_core::training::{self, TrainingConfig};
use nssnn_core::unroll::loss_parameter_gradient;
use nssnn_core::vortex::{
    leapfrog_sample, nbody_rollout, taylor_vortex_sample, train_pair_kernel, vortex_hamiltonian,
    weighted_centroid, AnalyticPairKernel, LeapfrogGeometry, LearnedPairKernel,
    PairTrainingConfig, VortexConfiguration,
};
use nssnn_core::{AnalyticSystem, AugmentedState, IntegratorConfig, PhaseState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn report(criterion: usize, name: &str, failures: &[String]) {
    if failures.is_empty() {
        println!("acceptance criterion {criterion} ({name}): PASS");
    } else {
        println!(
            "acceptance criterion {criterion} ({name}): FAIL — {}",
            failures.join("; ")
        );
    }
    assert!(failures.is_empty(), "criterion {criterion} ({name}): {failures:#?}");
}

fn median3(mut v: Vec<f64>) -> f64 {
    assert_eq!(v.len(), 3);
    v.sort_by(|a, b| a.total_cmp(b));
    v[1]
}

/// Criterion 1: the three split maps and the composed step are
/// symplectomorphisms of the augmented phase space — the finite-difference
/// Jacobian satisfies ‖JᵀΩJ − Ω‖∞ ≤ 1e-5 for random network weights and
/// random states in dims 1 and 2.
#[test]
fn criterion_1_symplectomorphisms() {
    let mut failures = Vec::new();
    let (dt, omega) = (0.01, 2000.0);
    for n in [1usize, 2] {
        let params = MlpParameters::init_xavier(&layer_sizes(2 * n), 41 + n as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let unpack = |v: &[f64]| AugmentedState {
            q: v[..n].to_vec(),
            p: v[n..2 * n].to_vec(),
            x: v[2 * n..3 * n].to_vec(),
            y: v[3 * n..].to_vec(),
        };
        let pack = |s: &AugmentedState| -> Vec<f64> {
            s.q.iter().chain(&s.p).chain(&s.x).chain(&s.y).copied().collect()
        };
        let maps: [(&str, Box<dyn Fn(&[f64]) -> Vec<f64> + '_>); 4] = [
            ("phi1", Box::new(|v: &[f64]| pack(&integrator::phi1(&unpack(v), dt, &params).unwrap()))),
            ("phi2", Box::new(|v: &[f64]| pack(&integrator::phi2(&unpack(v), dt, &params).unwrap()))),
            ("phi3", Box::new(|v: &[f64]| pack(&integrator::phi3(&unpack(v), dt, omega)))),
            ("strang", Box::new(|v: &[f64]| {
                pack(&integrator::strang_step(&unpack(v), dt, omega, &params).unwrap())
            })),
        ];
        for trial in 0..20 {
            let state: Vec<f64> = (0..4 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for (name, map) in &maps {
                let jac = fd_jacobian(map, &state, 1e-4);
                let defect = symplectic_defect(&jac, n);
                if defect > 1e-5 {
                    failures.push(format!(
                        "{name} dim {n} trial {trial}: defect {defect:.3e} > 1e-5"
                    ));
                }
            }
        }
    }
    report(1, "symplectomorphisms", &failures);
}

/// Criterion 2: for the linear spring the augmented scheme follows the
/// closed form — ω=2000, dt=1e-3, t∈[0,10]: max state error ≤ 1e-4 and
/// auxiliary deviation ≤ 1e-3 throughout.
#[test]
fn criterion_2_exact_solution_equivalence() {
    let mut failures = Vec::new();
    let s0 = PhaseState { q: vec![0.6], p: vec![-0.4] };
    let cfg = IntegratorConfig::new(1e-3, 2000.0, 10_000).unwrap();
    let traj = integrator::rollout(&s0, &cfg, &AnalyticSystem::Spring);
    let mut max_err: f64 = 0.0;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let exact = exact_spring_solution(s0.q[0], s0.p[0], *t);
        max_err = max_err
            .max((s.q[0] - exact.q[0]).abs())
            .max((s.p[0] - exact.p[0]).abs());
    }
    if max_err > 1e-4 {
        failures.push(format!("max error vs closed form {max_err:.3e} > 1e-4"));
    }
    let max_dev = auxiliary_deviation(&traj).into_iter().fold(0.0f64, f64::max);
    if max_dev > 1e-3 {
        failures.push(format!("auxiliary deviation {max_dev:.3e} > 1e-3"));
    }
    report(2, "exact solution equivalence", &failures);
}

/// Criterion 3: binding-strength study on the quartic benchmark from
/// (−3, 0), dt=1e-3, t∈[0,100]: terminal auxiliary deviation strictly
/// decreases across ω ∈ {0.8, 0.9, 10}, and ε(ω=0) ≥ 100·ε(ω=10).
#[test]
fn criterion_3_omega_study() {
    let mut failures = Vec::new();
    let s0 = PhaseState { q: vec![-3.0], p: vec![0.0] };
    let traces = evaluation::omega_study(&OMEGA_STUDY_VALUES, 1e-3, &s0, 100.0);
    let terminal: Vec<f64> = traces
        .iter()
        .map(|t| *t.deviation.last().expect("nonempty"))
        .collect();
    // OMEGA_STUDY_VALUES = [0.0, 0.8, 0.9, 10.0]
    if !(terminal[1] > terminal[2] && terminal[2] > terminal[3]) {
        failures.push(format!(
            "terminal deviation not strictly decreasing: {:.3e}, {:.3e}, {:.3e}",
            terminal[1], terminal[2], terminal[3]
        ));
    }
    if terminal[0] < 100.0 * terminal[3] {
        failures.push(format!(
            "eps(0) = {:.3e} < 100 * eps(10) = {:.3e}",
            terminal[0],
            100.0 * terminal[3]
        ));
    }
    report(3, "omega study", &failures);
}

/// Criterion 4: differentiation engine vs central finite differences —
/// network input gradients and loss parameter-gradients through a 5-step
/// unrolled rollout, 100 random probes, rel. err ≤ 1e-4 (with an absolute
/// escape of 1e-7, the resolution floor of the finite-difference oracle).
#[test]
fn criterion_4_gradient_engine() {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = MlpParameters::init_xavier(&layer_sizes(2), 17);

    // 50 input-gradient probes: random point, random coordinate
    for probe in 0..50 {
        let point: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coord = rng.gen_range(0..2);
        let grad = params.input_gradient_flat(&point);
        let step = 1e-5;
        let mut plus = point.clone();
        let mut minus = point.clone();
        plus[coord] += step;
        minus[coord] -= step;
        let fd = (params.forward_flat(&plus) - params.forward_flat(&minus)) / (2.0 * step);
        let ad = grad[coord];
        if rel_error(ad, fd) > 1e-4 && (ad - fd).abs() >= 1e-7 {
            failures.push(format!(
                "input probe {probe}: ad {ad:.6e} vs fd {fd:.6e}"
            ));
        }
    }

    // 50 parameter-gradient probes through the unrolled loss
    let cfg = IntegratorConfig::new(0.01, 2000.0, 5).unwrap();
    for probe in 0..50 {
        let state = |rng: &mut ChaCha8Rng| PhaseState {
            q: vec![rng.gen_range(-1.0..1.0)],
            p: vec![rng.gen_range(-1.0..1.0)],
        };
        let batch = vec![(state(&mut rng), state(&mut rng))];
        let (_, grad) = loss_parameter_gradient(&params, &batch, &cfg).unwrap();
        let idx = rng.gen_range(0..params.param_count());
        let ad = grad.get_flat(idx);
        let step = 1e-4;
        let mut perturbed = params.clone();
        let base = params.get_flat(idx);
        perturbed.set_flat(idx, base + step);
        let (fp, _) = loss_parameter_gradient(&perturbed, &batch, &cfg).unwrap();
        perturbed.set_flat(idx, base - step);
        let (fm, _) = loss_parameter_gradient(&perturbed, &batch, &cfg).unwrap();
        let fd = (fp - fm) / (2.0 * step);
        if rel_error(ad, fd) > 1e-4 && (ad - fd).abs() >= 1e-7 {
            failures.push(format!(
                "param probe {probe} idx {idx}: ad {ad:.6e} vs fd {fd:.6e}"
            ));
        }
    }
    report(4, "gradient engine", &failures);
}

/// Criterion 5: end-to-end training quality on the three benchmarks with
/// the default recipe, clean data, median over seeds {0, 1, 2}, horizon
/// t∈[0,100] from a fixed mid-box initial condition: ε_p ≤ 5e-2,
/// ε_H ≤ 5e-2, and no blow-up.
#[test]
fn criterion_5_training_metrics() {
    let mut failures = Vec::new();
    let cases = [
        ("spring", (0.6, -0.4)),
        ("pendulum", (0.6, -0.4)),
        ("tao-example", (0.8, -0.6)),
    ];
    for (system, (q0, p0)) in cases {
        let sys = AnalyticSystem::from_name(system).unwrap();
        let s0 = PhaseState { q: vec![q0], p: vec![p0] };
        let mut eps_p = Vec::new();
        let mut eps_h = Vec::new();
        for seed in [0u64, 1, 2] {
            let cfg = TrainingConfig {
                system: system.to_string(),
                seed,
                ..TrainingConfig::default()
            };
            let result = training::train(&cfg).expect("training runs");
            let rep = evaluation::evaluate(&result.params, sys, &s0, 100.0, 0.01, 2000.0)
                .expect("evaluation runs");
            println!(
                "  {system} seed {seed}: val {:.3e} eps_p {:.3e} eps_H {:.3e} diverged {}",
                result.final_val_loss, rep.prediction_error, rep.hamiltonian_deviation,
                rep.diverged
            );
            if rep.diverged || !rep.prediction_error.is_finite() {
                failures.push(format!("{system} seed {seed}: prediction blew up"));
            }
            eps_p.push(rep.prediction_error);
            eps_h.push(rep.hamiltonian_deviation);
        }
        let (p_med, h_med) = (median3(eps_p), median3(eps_h));
        if p_med > 5e-2 {
            failures.push(format!("{system}: median eps_p {p_med:.3e} > 5e-2"));
        }
        if h_med > 5e-2 {
            failures.push(format!("{system}: median eps_H {h_med:.3e} > 5e-2"));
        }
    }
    report(5, "training metrics", &failures);
}

/// Criterion 6: training-window ablations on the quartic benchmark with a
/// half-size preset (1024 samples, batch 256, otherwise the default
/// recipe), median over seeds {0, 1, 2}: validation loss non-increasing
/// across dt ∈ {0.1, 0.05, 0.02, 0.01} at T_train = 0.1, and within one
/// order of magnitude across T_train ∈ {0.01, 0.05, 0.1} at dt = 0.01.
#[test]
fn criterion_6_ablations() {
    let mut failures = Vec::new();
    let val_loss = |t_train: f64, dt: f64, seed: u64| -> f64 {
        let cfg = TrainingConfig {
            system: "tao-example".to_string(),
            n_samples: 1024,
            batch_size: 256,
            t_train,
            dt,
            seed,
            ..TrainingConfig::default()
        };
        training::train(&cfg).expect("training runs").final_val_loss
    };
    let median_val = |t_train: f64, dt: f64| -> f64 {
        median3((0u64..3).map(|s| val_loss(t_train, dt, s)).collect())
    };

    let dt_sweep = [0.1, 0.05, 0.02, 0.01];
    let dt_medians: Vec<f64> = dt_sweep.iter().map(|&dt| median_val(0.1, dt)).collect();
    println!("  dt sweep at T_train=0.1: {dt_medians:?}");
    for w in dt_medians.windows(2) {
        if w[1] > w[0] {
            failures.push(format!(
                "validation loss increased when refining dt: {:.3e} -> {:.3e}",
                w[0], w[1]
            ));
        }
    }

    let t_sweep = [0.01, 0.05, 0.1];
    let mut t_medians: Vec<f64> = t_sweep[..2].iter().map(|&t| median_val(t, 0.01)).collect();
    t_medians.push(dt_medians[3]); // (T_train=0.1, dt=0.01) already measured
    println!("  T_train sweep at dt=0.01: {t_medians:?}");
    let (lo, hi) = t_medians
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi > 10.0 * lo {
        failures.push(format!(
            "T_train sweep spans more than one order: {lo:.3e} .. {hi:.3e}"
        ));
    }
    report(6, "ablations", &failures);
}

/// Shared learned two-body kernel (criteria 7 and 8), trained once with
/// the default two-body recipe, seed 0.
fn learned_pair_kernel() -> &'static LearnedPairKernel {
    static KERNEL: OnceLock<LearnedPairKernel> = OnceLock::new();
    KERNEL.get_or_init(|| {
        let result = train_pair_kernel(&PairTrainingConfig::default()).expect("kernel trains");
        println!("  pair kernel trained: val loss {:.3e}", result.final_val_loss);
        result.kernel
    })
}

/// Γ-weighted rollout of a configuration, returning frames every `stride`
/// steps (thin wrapper so both kernels share a call site).
fn held_out_pairs(count: usize) -> Vec<VortexConfiguration> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b97f4a7c15);
    (0..count)
        .map(|_| loop {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let d = ((x[0] - x[1]).powi(2) + (y[0] - y[1]).powi(2)).sqrt();
            if d >= 0.5 {
                break VortexConfiguration { x, y, gamma: vec![1.0, 1.0] };
            }
        })
        .collect()
}

/// Criterion 7: vortex closed forms and the learned two-body kernel —
/// co-rotation and dipole translation to 1% over one period, analytic
/// N-body conservation to 1e-4 relative over t∈[0,10], and learned-kernel
/// held-out pair trajectories with ε_p ≤ 5e-2 over t∈[0,10].
#[test]
fn criterion_7_vortex_oracles() {
    let mut failures = Vec::new();

    // (a) equal pair co-rotation: Omega = Gamma / (pi d^2), one full period
    {
        let d = 1.0;
        let cfg = VortexConfiguration {
            x: vec![-d / 2.0, d / 2.0],
            y: vec![0.0, 0.0],
            gamma: vec![1.0, 1.0],
        };
        let big_omega = 1.0 / (std::f64::consts::PI * d * d);
        let period = std::f64::consts::TAU / big_omega;
        let dt = 1e-3;
        let roll = nbody_rollout(&cfg, &AnalyticPairKernel, dt, 2000.0, period, usize::MAX)
            .expect("rollout runs");
        let last = roll.frames.last().unwrap();
        let err = ((last.x[0] - cfg.x[0]).powi(2) + (last.y[0] - cfg.y[0]).powi(2)).sqrt();
        if err > 0.01 * d {
            failures.push(format!("co-rotation return error {err:.3e} > 1% of d"));
        }
    }

    // (b) dipole translation: speed Gamma / (2 pi d) along +x
    {
        let d = 1.0;
        let cfg = VortexConfiguration {
            x: vec![0.0, 0.0],
            y: vec![d / 2.0, -d / 2.0],
            gamma: vec![1.0, -1.0],
        };
        let speed = 1.0 / (std::f64::consts::TAU * d / 2.0) / 2.0; // Gamma/(2 pi d)
        let t = 5.0;
        let roll = nbody_rollout(&cfg, &AnalyticPairKernel, 1e-3, 2000.0, t, usize::MAX)
            .expect("rollout runs");
        let last = roll.frames.last().unwrap();
        let expect = speed * t;
        for j in 0..2 {
            let dx = last.x[j] - cfg.x[j];
            let dy = last.y[j] - cfg.y[j];
            let err = ((dx - expect).powi(2) + dy.powi(2)).sqrt();
            if err > 0.01 * expect {
                failures.push(format!(
                    "dipole particle {j}: displacement error {err:.3e} > 1% of {expect:.3e}"
                ));
            }
        }
    }

    // (c) analytic-kernel N-body conservation over t in [0, 10]
    {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 8;
        let cfg = VortexConfiguration {
            x: (0..n).map(|j| 2.0 * (j as f64 % 3.0) + rng.gen_range(-0.3..0.3)).collect(),
            y: (0..n).map(|j| 2.0 * (j as f64 / 3.0).floor() + rng.gen_range(-0.3..0.3)).collect(),
            gamma: (0..n).map(|j| if j % 2 == 0 { 1.0 } else { -0.7 }).collect(),
        };
        let h0 = vortex_hamiltonian(&cfg).unwrap();
        let (ix0, iy0) = cfg.linear_impulse();
        let roll = nbody_rollout(&cfg, &AnalyticPairKernel, 1e-3, 2000.0, 10.0, 1000)
            .expect("rollout runs");
        for frame in &roll.frames {
            let h = vortex_hamiltonian(frame).unwrap();
            if rel_error(h, h0) > 1e-4 {
                failures.push(format!("H_p drift {:.3e} > 1e-4 relative", rel_error(h, h0)));
                break;
            }
        }
        let scale = (ix0.abs() + iy0.abs()).max(1.0);
        let last = roll.frames.last().unwrap();
        let (ix, iy) = last.linear_impulse();
        if ((ix - ix0).abs() + (iy - iy0).abs()) / scale > 1e-4 {
            failures.push(format!(
                "linear impulse drift {:.3e} > 1e-4 relative",
                ((ix - ix0).abs() + (iy - iy0).abs()) / scale
            ));
        }
    }

    // (d) learned kernel on held-out pairs: eps_p <= 5e-2 over t in [0, 10]
    {
        let kernel = learned_pair_kernel();
        let horizon = 10.0;
        let dt = 0.01;
        let mut worst: f64 = 0.0;
        let mut eps_sum = 0.0;
        let pairs = held_out_pairs(5);
        for cfg in &pairs {
            let pred = nbody_rollout(cfg, kernel, dt, 2000.0, horizon, 1).expect("rollout");
            let truth = nbody_rollout(cfg, &AnalyticPairKernel, dt / 10.0, 2000.0, horizon, 10)
                .expect("rollout");
            let n_frames = pred.frames.len().min(truth.frames.len());
            let mut acc = 0.0;
            for i in 0..n_frames {
                let (p, t) = (&pred.frames[i], &truth.frames[i]);
                acc += (0..2)
                    .map(|j| (p.x[j] - t.x[j]).abs() + (p.y[j] - t.y[j]).abs())
                    .sum::<f64>();
            }
            let eps = acc / n_frames as f64;
            eps_sum += eps;
            worst = worst.max(eps);
        }
        let eps_mean = eps_sum / pairs.len() as f64;
        println!("  learned pair kernel: mean eps_p {eps_mean:.3e}, worst {worst:.3e}");
        if eps_mean > 5e-2 {
            failures.push(format!("held-out pair eps_p {eps_mean:.3e} > 5e-2"));
        }
    }
    report(7, "vortex oracles", &failures);
}

/// Criterion 8: qualitative N-body behavior under the assembled learned
/// kernel — a 500-particle two-lobe sample keeps its lobes separated
/// (centroid distance ≥ 50% of initial over t∈[0,5]), and the four-cluster
/// leapfrog completes at least two exchange periods.
#[test]
fn criterion_8_nbody_qualitative() {
    let mut failures = Vec::new();
    let kernel = learned_pair_kernel();

    // (a) 500-particle two-lobe sample, dt = 0.02, t in [0, 5]
    {
        let n = 500;
        let cfg = taylor_vortex_sample(n, 0.5, 1.0, 0);
        let lobe1: Vec<usize> = (0..n / 2).collect();
        let lobe2: Vec<usize> = (n / 2..n).collect();
        let dist = |c: &VortexConfiguration| {
            let (ax, ay) = weighted_centroid(c, &lobe1);
            let (bx, by) = weighted_centroid(c, &lobe2);
            ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
        };
        let initial = dist(&cfg);
        let roll = nbody_rollout(&cfg, kernel, 0.02, 2000.0, 5.0, 50).expect("rollout runs");
        if roll.diverged {
            failures.push("two-lobe rollout diverged".to_string());
        }
        let terminal = dist(roll.frames.last().unwrap());
        println!("  two-lobe centroid distance: {initial:.3} -> {terminal:.3}");
        if terminal < 0.5 * initial {
            failures.push(format!(
                "lobes merged: centroid distance {terminal:.3e} < 50% of {initial:.3e}"
            ));
        }
    }

    // (b) four-cluster leapfrog: >= 2 exchange periods (4 crossings of the
    // inner/outer pair-width difference)
    {
        let n = 8;
        let cfg = leapfrog_sample(n, LeapfrogGeometry::default(), 0);
        let per = n / 4;
        let cluster: Vec<Vec<usize>> = (0..4)
            .map(|c| (c * per..(c + 1) * per).collect())
            .collect();
        let roll = nbody_rollout(&cfg, kernel, 0.02, 2000.0, 60.0, 5).expect("rollout runs");
        if roll.diverged {
            failures.push("leapfrog rollout diverged".to_string());
        }
        let mut crossings = 0usize;
        let mut prev = 0.0f64;
        for frame in &roll.frames {
            let width = |a: usize, b: usize| {
                let (ax, ay) = weighted_centroid(frame, &cluster[a]);
                let (bx, by) = weighted_centroid(frame, &cluster[b]);
                ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
            };
            let diff = width(0, 1) - width(2, 3);
            if prev != 0.0 && diff.signum() != prev.signum() {
                crossings += 1;
            }
            if diff != 0.0 {
                prev = diff;
            }
        }
        println!("  leapfrog width-difference crossings: {crossings}");
        if crossings < 4 {
            failures.push(format!(
                "only {crossings} exchange crossings (< 4, i.e. < 2 periods)"
            ));
        }
    }
    report(8, "n-body qualitative behavior", &failures);
}
