//! File formats: checkpoint JSON, dataset/trajectory/history CSV, report
//! JSON, vortex frame dumps, and the experiment config. All numeric CSV
//! output uses 17 significant digits so parsing recovers the exact bits.

use crate::evaluation::EvaluationReport;
use crate::mlp::MlpParameters;
use crate::provider::Trajectory;
use crate::state::AugmentedState;
use crate::training::{EpochStats, SamplePair, TrainingConfig};
use crate::vortex::VortexRollout;
use crate::PhaseState;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CHECKPOINT_VERSION: u32 = 1;
pub const EXPERIMENT_CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("malformed file: {0}")]
    Malformed(String),
}

/// Exact-round-trip decimal rendering of one f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LayerRecord {
    /// row-major `[out][in]`
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainingMeta {
    pub system: String,
    pub seed: u64,
    pub epochs: usize,
    pub final_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CheckpointFile {
    pub version: u32,
    pub input_dim: usize,
    pub layer_sizes: Vec<usize>,
    pub activation: String,
    pub layers: Vec<LayerRecord>,
    pub training_meta: TrainingMeta,
}

impl CheckpointFile {
    pub fn from_parameters(params: &MlpParameters, meta: TrainingMeta) -> Self {
        let layers = params
            .weights
            .iter()
            .zip(&params.biases)
            .map(|(w, b)| LayerRecord {
                weights: w.rows().into_iter().map(|r| r.to_vec()).collect(),
                bias: b.to_vec(),
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            input_dim: params.input_dim(),
            layer_sizes: params.layer_sizes(),
            activation: "sigmoid".to_string(),
            layers,
            training_meta: meta,
        }
    }

    /// Validate the shape chain and rebuild the parameter struct.
    pub fn to_parameters(&self) -> Result<MlpParameters, IoError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(IoError::Version {
                found: self.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if self.activation != "sigmoid" {
            return Err(IoError::Malformed(format!(
                "unsupported activation {:?}",
                self.activation
            )));
        }
        if self.layer_sizes.len() != self.layers.len() + 1 {
            return Err(IoError::Malformed(format!(
                "{} layer sizes for {} layers",
                self.layer_sizes.len(),
                self.layers.len()
            )));
        }
        if self.layer_sizes.first() != Some(&self.input_dim) {
            return Err(IoError::Malformed("input_dim does not match layer_sizes".into()));
        }
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let (n_in, n_out) = (self.layer_sizes[i], self.layer_sizes[i + 1]);
            if layer.weights.len() != n_out
                || layer.weights.iter().any(|row| row.len() != n_in)
                || layer.bias.len() != n_out
            {
                return Err(IoError::Malformed(format!(
                    "layer {i} shapes do not chain ({n_in} -> {n_out})"
                )));
            }
            let flat: Vec<f64> = layer.weights.iter().flatten().copied().collect();
            weights.push(
                Array2::from_shape_vec((n_out, n_in), flat)
                    .map_err(|e| IoError::Malformed(e.to_string()))?,
            );
            biases.push(Array1::from(layer.bias.clone()));
        }
        Ok(MlpParameters { weights, biases })
    }
}

pub fn save_checkpoint(
    path: &Path,
    params: &MlpParameters,
    meta: TrainingMeta,
) -> Result<(), IoError> {
    let file = CheckpointFile::from_parameters(params, meta);
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpParameters, CheckpointFile), IoError> {
    let file: CheckpointFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let params = file.to_parameters()?;
    Ok((params, file))
}

// ---------------------------------------------------------------------------
// Dataset CSV
// ---------------------------------------------------------------------------

/// Header `sample_id,role,comp_0..comp_{2N-1}`; one `initial` and one
/// `target` row per sample, components ordered `q` then `p`.
pub fn write_dataset_csv(path: &Path, pairs: &[SamplePair]) -> Result<(), IoError> {
    let n = pairs.first().map(|p| p.initial.dim()).unwrap_or(0);
    let mut out = String::new();
    out.push_str("sample_id,role");
    for i in 0..2 * n {
        out.push_str(&format!(",comp_{i}"));
    }
    out.push('\n');
    let row = |id: usize, role: &str, s: &PhaseState, out: &mut String| {
        out.push_str(&format!("{id},{role}"));
        for v in s.q.iter().chain(&s.p) {
            out.push(',');
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
    };
    for (id, pair) in pairs.iter().enumerate() {
        row(id, "initial", &pair.initial, &mut out);
        row(id, "target", &pair.target, &mut out);
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_dataset_csv(path: &Path) -> Result<Vec<SamplePair>, IoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| IoError::Malformed("empty dataset file".into()))?;
    let cols = header.split(',').count();
    if cols < 4 || (cols - 2) % 2 != 0 {
        return Err(IoError::Malformed(format!("bad dataset header {header:?}")));
    }
    let n = (cols - 2) / 2;
    let mut pairs: Vec<SamplePair> = Vec::new();
    let mut pending: Option<(usize, PhaseState)> = None;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(IoError::Malformed(format!("bad dataset row {line:?}")));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| IoError::Malformed(format!("bad sample_id {:?}", fields[0])))?;
        let role = fields[1];
        let values: Vec<f64> = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| IoError::Malformed(format!("bad float: {e}")))?;
        let state = PhaseState {
            q: values[..n].to_vec(),
            p: values[n..].to_vec(),
        };
        match (role, pending.take()) {
            ("initial", None) => pending = Some((id, state)),
            ("target", Some((pid, initial))) if pid == id => {
                pairs.push(SamplePair { initial, target: state });
            }
            _ => return Err(IoError::Malformed(format!("unpaired row for sample {id}"))),
        }
    }
    if pending.is_some() {
        return Err(IoError::Malformed("dangling initial row".into()));
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Trajectory CSV
// ---------------------------------------------------------------------------

/// Header `t,q_0..q_{N-1},p_0..,x_0..,y_0..`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<(), IoError> {
    let n = traj.dim();
    let mut out = String::from("t");
    for prefix in ["q", "p", "x", "y"] {
        for i in 0..n {
            out.push_str(&format!(",{prefix}_{i}"));
        }
    }
    out.push('\n');
    for (t, s) in traj.times.iter().zip(&traj.states) {
        out.push_str(&format_f64(*t));
        for v in s.q.iter().chain(&s.p).chain(&s.x).chain(&s.y) {
            out.push(',');
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory, IoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| IoError::Malformed("empty trajectory file".into()))?;
    let cols = header.split(',').count();
    if cols < 5 || (cols - 1) % 4 != 0 {
        return Err(IoError::Malformed(format!("bad trajectory header {header:?}")));
    }
    let n = (cols - 1) / 4;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for line in lines {
        let values: Vec<f64> = line
            .split(',')
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| IoError::Malformed(format!("bad float: {e}")))?;
        if values.len() != cols {
            return Err(IoError::Malformed(format!("bad trajectory row {line:?}")));
        }
        times.push(values[0]);
        states.push(AugmentedState {
            q: values[1..1 + n].to_vec(),
            p: values[1 + n..1 + 2 * n].to_vec(),
            x: values[1 + 2 * n..1 + 3 * n].to_vec(),
            y: values[1 + 3 * n..].to_vec(),
        });
    }
    Ok(Trajectory { times, states, diverged: false })
}

// ---------------------------------------------------------------------------
// Loss history CSV and report JSON
// ---------------------------------------------------------------------------

pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<(), IoError> {
    let mut out = String::from("epoch,lr,train_loss,val_loss\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            h.epoch,
            format_f64(h.lr),
            format_f64(h.train_loss),
            format_f64(h.val_loss)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_report(path: &Path, report: &EvaluationReport) -> Result<(), IoError> {
    fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Vortex frames
// ---------------------------------------------------------------------------

/// One CSV per frame (`j,x,y,gamma`) plus `frames.csv` (`frame,t,path`).
pub fn write_vortex_rollout(dir: &Path, rollout: &VortexRollout) -> Result<(), IoError> {
    fs::create_dir_all(dir)?;
    let mut index = String::from("frame,t,path\n");
    for (i, (t, frame)) in rollout.times.iter().zip(&rollout.frames).enumerate() {
        let name = format!("frame_{i:05}.csv");
        let mut out = String::from("j,x,y,gamma\n");
        for j in 0..frame.len() {
            out.push_str(&format!(
                "{j},{},{},{}\n",
                format_f64(frame.x[j]),
                format_f64(frame.y[j]),
                format_f64(frame.gamma[j])
            ));
        }
        fs::write(dir.join(&name), out)?;
        index.push_str(&format!("{i},{},{name}\n", format_f64(*t)));
    }
    fs::write(dir.join("frames.csv"), index)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Experiment config and run metadata
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub training: TrainingConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(training: TrainingConfig) -> Self {
        Self {
            version: EXPERIMENT_CONFIG_VERSION,
            training,
            output_dir: None,
        }
    }
}

pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig, IoError> {
    let cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
    if cfg.version != EXPERIMENT_CONFIG_VERSION {
        return Err(IoError::Version {
            found: cfg.version,
            expected: EXPERIMENT_CONFIG_VERSION,
        });
    }
    Ok(cfg)
}

pub fn save_experiment_config(path: &Path, cfg: &ExperimentConfig) -> Result<(), IoError> {
    fs::write(path, serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub git_describe: Option<String>,
    pub wall_time_seconds: f64,
}

pub fn write_run_meta(dir: &Path, meta: &RunMeta) -> Result<(), IoError> {
    fs::create_dir_all(dir)?;
    let mut file = fs::File::create(dir.join("run_meta.json"))?;
    file.write_all(serde_json::to_string_pretty(meta)?.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::layer_sizes;
    use crate::training::generate_dataset;
    use tempfile::tempdir;

    fn meta() -> TrainingMeta {
        TrainingMeta {
            system: "spring".into(),
            seed: 7,
            epochs: 100,
            final_loss: 1.25e-3,
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let params = MlpParameters::init_xavier(&layer_sizes(4), 13);
        save_checkpoint(&path, &params, meta()).unwrap();
        let (loaded, file) = load_checkpoint(&path).unwrap();
        assert_eq!(params, loaded);
        assert_eq!(file.activation, "sigmoid");
        assert_eq!(file.input_dim, 4);
        // second save is byte-identical
        let first = fs::read(&path).unwrap();
        save_checkpoint(&path, &loaded, file.training_meta.clone()).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
    }

    #[test]
    fn checkpoint_shape_mismatch_rejected() {
        let params = MlpParameters::init_xavier(&layer_sizes(2), 1);
        let mut file = CheckpointFile::from_parameters(&params, meta());
        file.layers[2].bias.push(0.0);
        assert!(matches!(file.to_parameters(), Err(IoError::Malformed(_))));
        let mut file = CheckpointFile::from_parameters(&params, meta());
        file.version = 99;
        assert!(matches!(file.to_parameters(), Err(IoError::Version { .. })));
    }

    #[test]
    fn dataset_csv_round_trips_bits() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let cfg = TrainingConfig {
            n_samples: 8,
            batch_size: 4,
            ..TrainingConfig::default()
        };
        let pairs = generate_dataset(&cfg).unwrap();
        write_dataset_csv(&path, &pairs).unwrap();
        let loaded = read_dataset_csv(&path).unwrap();
        assert_eq!(pairs.len(), loaded.len());
        for (a, b) in pairs.iter().zip(&loaded) {
            assert_eq!(a.initial.q, b.initial.q);
            assert_eq!(a.initial.p, b.initial.p);
            assert_eq!(a.target.q, b.target.q);
            assert_eq!(a.target.p, b.target.p);
        }
        // header shape: sample_id,role,comp_0,comp_1
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("sample_id,role,comp_0,comp_1\n"));
        assert_eq!(text.lines().count(), 1 + 2 * pairs.len());
    }

    #[test]
    fn trajectory_csv_round_trips_bits() {
        use crate::provider::IntegratorConfig;
        use crate::{integrator, AnalyticSystem};
        let dir = tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let s0 = PhaseState { q: vec![0.6], p: vec![-0.4] };
        let cfg = IntegratorConfig::new(0.01, 2000.0, 25).unwrap();
        let traj = integrator::rollout(&s0, &cfg, &AnalyticSystem::Spring);
        write_trajectory_csv(&path, &traj).unwrap();
        let loaded = read_trajectory_csv(&path).unwrap();
        assert_eq!(traj.times, loaded.times);
        assert_eq!(traj.states, loaded.states);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,q_0,p_0,x_0,y_0\n"));
    }

    #[test]
    fn experiment_config_rejects_unknown_keys_and_versions() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        let cfg = ExperimentConfig::new(TrainingConfig::default());
        save_experiment_config(&path, &cfg).unwrap();
        assert!(load_experiment_config(&path).is_ok());

        let mut doc: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        doc["surprise"] = serde_json::json!(1);
        fs::write(&path, doc.to_string()).unwrap();
        assert!(load_experiment_config(&path).is_err());

        let mut doc: serde_json::Value = doc;
        doc.as_object_mut().unwrap().remove("surprise");
        doc["version"] = serde_json::json!(42);
        fs::write(&path, doc.to_string()).unwrap();
        assert!(matches!(
            load_experiment_config(&path),
            Err(IoError::Version { found: 42, .. })
        ));
    }

    #[test]
    fn vortex_rollout_frames_written() {
        use crate::vortex::{nbody_rollout, taylor_vortex_sample, AnalyticPairKernel};
        let dir = tempdir().unwrap();
        let cfg = taylor_vortex_sample(8, 0.5, 1.0, 2);
        let roll = nbody_rollout(&cfg, &AnalyticPairKernel, 0.01, 2000.0, 0.05, 1).unwrap();
        write_vortex_rollout(dir.path(), &roll).unwrap();
        let index = fs::read_to_string(dir.path().join("frames.csv")).unwrap();
        assert_eq!(index.lines().count(), 1 + roll.frames.len());
        assert!(dir.path().join("frame_00000.csv").exists());
    }

    #[test]
    fn formatted_floats_round_trip() {
        for v in [
            0.1,
            -3.0,
            std::f64::consts::PI,
            1.0 / 3.0,
            f64::MIN_POSITIVE,
            1.7976931348623157e308,
        ] {
            let s = format_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }
}
