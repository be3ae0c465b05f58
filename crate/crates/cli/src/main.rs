//! `nssnn`: reproducibility shell around the core pipeline. Every command
//! writes its artifacts plus a `run_meta.json`, and is deterministic given
//! its config and seed (wall-time metadata aside).

use clap::{Args, Parser, Subcommand};
use nssnn_core::evaluation::{self, OMEGA_STUDY_VALUES};
use nssnn_core::io::{self, ExperimentConfig, RunMeta, TrainingMeta};
use nssnn_core::training::{self, TrainingConfig};
use nssnn_core::vortex::{
    leapfrog_sample, nbody_rollout, taylor_vortex_sample, AnalyticPairKernel, LearnedPairKernel,
    LeapfrogGeometry, PairKernel,
};
use nssnn_core::{AnalyticSystem, PhaseState};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

/// Errors carry a machine-parsable category and map onto the exit codes:
/// 2 for configuration problems, 3 for an unknown system, 1 otherwise.
#[derive(Debug)]
enum CliError {
    Config(String),
    UnknownSystem(String),
    Runtime(String),
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::UnknownSystem(_) => "unknown-system",
            CliError::Runtime(_) => "runtime",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::UnknownSystem(m) | CliError::Runtime(m) => m,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::UnknownSystem(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        match e {
            io::IoError::Version { .. } => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "nssnn", about = "Nonseparable-Hamiltonian learning pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RolloutOpts {
    /// Integration step
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Binding coefficient
    #[arg(long, default_value_t = 2000.0)]
    omega: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a ground-truth training dataset CSV
    GenData {
        #[arg(long)]
        system: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the energy surrogate on a dataset
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path; loss history goes next to it
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll a trained checkpoint out and dump the trajectory
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        system: String,
        /// Comma-separated initial positions
        #[arg(long, allow_hyphen_values = true)]
        q0: String,
        /// Comma-separated initial momenta
        #[arg(long, allow_hyphen_values = true)]
        p0: String,
        /// Horizon
        #[arg(long, default_value_t = 100.0)]
        t: f64,
        #[command(flatten)]
        rollout: RolloutOpts,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint against the analytic reference
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        system: String,
        #[arg(long, allow_hyphen_values = true)]
        q0: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        p0: Option<String>,
        #[arg(long, default_value_t = 100.0)]
        t: f64,
        #[command(flatten)]
        rollout: RolloutOpts,
        #[arg(long)]
        report: PathBuf,
    },
    /// Binding-strength study on the analytic benchmark
    OmegaStudy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100.0)]
        t: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
    /// N-body point-vortex rollout with the analytic or a learned kernel
    VortexSim {
        /// Pair-kernel checkpoint (mutually exclusive with --analytic)
        #[arg(long, conflicts_with = "analytic")]
        ckpt: Option<PathBuf>,
        /// Use the closed-form pair kernel
        #[arg(long)]
        analytic: bool,
        /// Initial configuration: taylor | leapfrog
        #[arg(long)]
        init: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 0.02)]
        dt: f64,
        #[arg(long, default_value_t = 2000.0)]
        omega: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Approximate number of frames to keep
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validation-loss sweep over the training step size
    AblateDt {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "spring")]
        system: String,
        #[arg(long, default_value_t = 512)]
        n_samples: usize,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "error: {}: {}",
                e.category(),
                e.message().replace('\n', " ")
            );
            ExitCode::from(e.exit_code())
        }
    }
}

fn parse_system(name: &str) -> Result<AnalyticSystem, CliError> {
    AnalyticSystem::from_name(name).map_err(|e| CliError::UnknownSystem(e.to_string()))
}

fn parse_vec(label: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|f| f.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Config(format!("{label} must be comma-separated floats, got {text:?}")))
}

fn parse_state(q0: &str, p0: &str) -> Result<PhaseState, CliError> {
    let state = PhaseState {
        q: parse_vec("--q0", q0)?,
        p: parse_vec("--p0", p0)?,
    };
    if state.q.len() != state.p.len() {
        return Err(CliError::Config("--q0 and --p0 must have equal length".into()));
    }
    Ok(state)
}

/// Documented mid-box initial condition used when `eval` gets no explicit one.
fn default_eval_state(system: AnalyticSystem) -> Option<PhaseState> {
    let (q, p) = match system {
        AnalyticSystem::Spring | AnalyticSystem::Pendulum => (0.6, -0.4),
        AnalyticSystem::TaoExample => (0.8, -0.6),
        _ => return None,
    };
    Some(PhaseState { q: vec![q], p: vec![p] })
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    io::load_experiment_config(path).map_err(|e| CliError::Config(e.to_string()))
}

fn out_dir(out: &Path) -> PathBuf {
    out.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write_meta(
    dir: &Path,
    command: &str,
    config: serde_json::Value,
    seed: u64,
    started: Instant,
) -> Result<(), CliError> {
    let meta = RunMeta {
        command: command.to_string(),
        config,
        seed,
        git_describe: git_describe(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    io::write_run_meta(dir, &meta)?;
    Ok(())
}

fn git_describe() -> Option<String> {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
}

fn run(command: Command) -> Result<(), CliError> {
    let started = Instant::now();
    match command {
        Command::GenData { system, config, out } => {
            parse_system(&system)?;
            let mut cfg = load_config(&config)?;
            cfg.training.system = system;
            let pairs = training::generate_dataset(&cfg.training)
                .map_err(|e| CliError::Config(e.to_string()))?;
            io::write_dataset_csv(&out, &pairs)?;
            println!(
                "wrote {} sample pairs: system={} n_samples={} t_train={} dt={} noise={} seed={}",
                pairs.len(),
                cfg.training.system,
                cfg.training.n_samples,
                cfg.training.t_train,
                cfg.training.dt,
                cfg.training.noise,
                cfg.training.seed
            );
            let doc = serde_json::to_value(&cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
            write_meta(&out_dir(&out), "gen-data", doc, cfg.training.seed, started)
        }
        Command::Train { config, data, out } => {
            let cfg = load_config(&config)?;
            parse_system(&cfg.training.system)?;
            let dataset = io::read_dataset_csv(&data)?;
            let result = training::train_on_dataset(&cfg.training, &dataset)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let meta = TrainingMeta {
                system: cfg.training.system.clone(),
                seed: cfg.training.seed,
                epochs: result.history.len(),
                final_loss: result.final_val_loss,
            };
            io::save_checkpoint(&out, &result.params, meta)?;
            io::write_history_csv(&out.with_extension("history.csv"), &result.history)?;
            println!(
                "trained {} epochs: final val loss {:.3e} -> {}",
                result.history.len(),
                result.final_val_loss,
                out.display()
            );
            let doc = serde_json::to_value(&cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
            write_meta(&out_dir(&out), "train", doc, cfg.training.seed, started)
        }
        Command::Predict { ckpt, system, q0, p0, t, rollout, out } => {
            parse_system(&system)?;
            let (params, file) = io::load_checkpoint(&ckpt)?;
            let s0 = parse_state(&q0, &p0)?;
            if 2 * s0.q.len() != file.input_dim {
                return Err(CliError::Config(format!(
                    "checkpoint expects {} components, got {}",
                    file.input_dim,
                    2 * s0.q.len()
                )));
            }
            let traj = evaluation::predict(&params, &s0, t, rollout.dt, rollout.omega);
            io::write_trajectory_csv(&out, &traj)?;
            println!("wrote {} states to {}", traj.len(), out.display());
            let doc = serde_json::json!({
                "ckpt": ckpt, "system": system, "q0": s0.q, "p0": s0.p,
                "t": t, "dt": rollout.dt, "omega": rollout.omega,
            });
            write_meta(&out_dir(&out), "predict", doc, file.training_meta.seed, started)
        }
        Command::Eval { ckpt, system, q0, p0, t, rollout, report } => {
            let sys = parse_system(&system)?;
            let (params, file) = io::load_checkpoint(&ckpt)?;
            let s0 = match (q0, p0) {
                (Some(q), Some(p)) => parse_state(&q, &p)?,
                (None, None) => default_eval_state(sys).ok_or_else(|| {
                    CliError::Config(format!("no default initial condition for {system}; pass --q0/--p0"))
                })?,
                _ => return Err(CliError::Config("--q0 and --p0 must be given together".into())),
            };
            let rep = evaluation::evaluate(&params, sys, &s0, t, rollout.dt, rollout.omega)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            io::write_report(&report, &rep)?;
            println!(
                "prediction_error {:.3e}  hamiltonian_deviation {:.3e}  diverged {}",
                rep.prediction_error, rep.hamiltonian_deviation, rep.diverged
            );
            let doc = serde_json::json!({
                "ckpt": ckpt, "system": system, "q0": s0.q, "p0": s0.p,
                "t": t, "dt": rollout.dt, "omega": rollout.omega,
            });
            write_meta(&out_dir(&report), "eval", doc, file.training_meta.seed, started)
        }
        Command::OmegaStudy { out, t, dt } => {
            std::fs::create_dir_all(&out).map_err(|e| CliError::Runtime(e.to_string()))?;
            let s0 = PhaseState { q: vec![-3.0], p: vec![0.0] };
            let traces = evaluation::omega_study(&OMEGA_STUDY_VALUES, dt, &s0, t);
            for trace in &traces {
                let name = format!("omega_{}.csv", trace.omega);
                let mut text = String::from("t,q_0,p_0,x_0,y_0,epsilon\n");
                for (i, (time, s)) in trace
                    .trajectory
                    .times
                    .iter()
                    .zip(&trace.trajectory.states)
                    .enumerate()
                {
                    text.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        io::format_f64(*time),
                        io::format_f64(s.q[0]),
                        io::format_f64(s.p[0]),
                        io::format_f64(s.x[0]),
                        io::format_f64(s.y[0]),
                        io::format_f64(trace.deviation[i])
                    ));
                }
                std::fs::write(out.join(&name), text)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                println!(
                    "omega {}: terminal deviation {:.3e} -> {name}",
                    trace.omega,
                    trace.deviation.last().copied().unwrap_or(f64::NAN)
                );
            }
            let doc = serde_json::json!({ "t": t, "dt": dt, "omegas": OMEGA_STUDY_VALUES });
            write_meta(&out, "omega-study", doc, 0, started)
        }
        Command::VortexSim { ckpt, analytic, init, n, t, dt, omega, seed, frames, out } => {
            if ckpt.is_none() && !analytic {
                return Err(CliError::Config("pass either --ckpt or --analytic".into()));
            }
            let cfg = match init.as_str() {
                "taylor" => taylor_vortex_sample(n, 0.5, 1.0, seed),
                "leapfrog" => leapfrog_sample(n, LeapfrogGeometry::default(), seed),
                other => {
                    return Err(CliError::Config(format!(
                        "unknown --init {other:?} (known: taylor, leapfrog)"
                    )))
                }
            };
            let steps = (t / dt).floor() as usize;
            let stride = (steps / frames.max(1)).max(1);
            let rollout = match &ckpt {
                Some(path) => {
                    let (params, _) = io::load_checkpoint(path)?;
                    if params.input_dim() != 2 {
                        return Err(CliError::Config(format!(
                            "pair-kernel checkpoint must have input_dim 2, got {}",
                            params.input_dim()
                        )));
                    }
                    run_vortex(&cfg, &LearnedPairKernel::new(params), dt, omega, t, stride)?
                }
                None => run_vortex(&cfg, &AnalyticPairKernel, dt, omega, t, stride)?,
            };
            io::write_vortex_rollout(&out, &rollout)?;
            println!(
                "wrote {} frames of {} particles to {} (diverged {})",
                rollout.frames.len(),
                n,
                out.display(),
                rollout.diverged
            );
            let doc = serde_json::json!({
                "ckpt": ckpt, "analytic": analytic, "init": init, "n": n,
                "t": t, "dt": dt, "omega": omega, "seed": seed, "frames": frames,
            });
            write_meta(&out, "vortex-sim", doc, seed, started)
        }
        Command::AblateDt { out, system, n_samples, epochs, seed } => {
            parse_system(&system)?;
            std::fs::create_dir_all(&out).map_err(|e| CliError::Runtime(e.to_string()))?;
            let sweep = [0.1, 0.05, 0.02, 0.01];
            let mut text = String::from("dt,val_loss\n");
            for dt in sweep {
                let cfg = TrainingConfig {
                    system: system.clone(),
                    n_samples,
                    t_train: 0.1,
                    dt,
                    max_epochs: epochs,
                    seed,
                    ..TrainingConfig::default()
                };
                let result =
                    training::train(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
                println!("dt {dt}: val loss {:.3e}", result.final_val_loss);
                text.push_str(&format!("{dt},{}\n", io::format_f64(result.final_val_loss)));
            }
            std::fs::write(out.join("ablate_dt.csv"), text)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let doc = serde_json::json!({
                "system": system, "n_samples": n_samples, "epochs": epochs,
                "seed": seed, "t_train": 0.1, "dt_sweep": sweep,
            });
            write_meta(&out, "ablate-dt", doc, seed, started)
        }
    }
}

fn run_vortex<K: PairKernel>(
    cfg: &nssnn_core::vortex::VortexConfiguration,
    kernel: &K,
    dt: f64,
    omega: f64,
    t: f64,
    stride: usize,
) -> Result<nssnn_core::vortex::VortexRollout, CliError> {
    nbody_rollout(cfg, kernel, dt, omega, t, stride)
        .map_err(|e| CliError::Runtime(e.to_string()))
}
