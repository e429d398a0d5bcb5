use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use flowlearn_core::flowmap::{Activation, TrainConfig};
use flowlearn_core::io::sha256_hex;
use flowlearn_core::sampler::LabelConfig;
use flowlearn_core::score::{DiffusionSchedule, DEFAULT_FRACTION, DEFAULT_NU};
use flowlearn_core::sde::{make_benchmark, preset, Param};
use flowlearn_core::{InitSampler, SdeSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Which set of preset counts to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Scale {
    /// Reduced counts that run on a workstation.
    Desk,
    /// Full experiment sizes.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkBlock {
    pub name: String,
    #[serde(default)]
    pub overrides: BTreeMap<String, Param>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    /// Number of trajectories `H`.
    pub trajectories: usize,
    /// Steps per trajectory `L`.
    pub steps: usize,
    pub dt: f64,
    pub init: InitSampler,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsBlock {
    /// Number of labels `J`.
    pub count: usize,
    /// Reverse Euler steps `K`.
    pub steps: usize,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_eps_tau")]
    pub eps_tau: f64,
    pub seed: u64,
    /// Thread count for this stage; never part of any digest.
    #[serde(default)]
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainBlock {
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_split")]
    pub split: f64,
    /// Mini-batch size; zero means full batch.
    #[serde(default)]
    pub batch: usize,
    pub seed: u64,
    #[serde(default = "default_activation")]
    pub activation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictBlock {
    pub x0: Vec<f64>,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
}

/// Grid of states on which effective coefficients are compared.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// Uniform over the central `coverage` quantile range of observed states.
    Central { coverage: f64, points: usize },
    /// Uniform over `[low, high]`.
    Range { low: f64, high: f64, points: usize },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Central {
            coverage: flowlearn_core::eval::DEFAULT_GRID_COVERAGE,
            points: flowlearn_core::eval::DEFAULT_GRID_POINTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateBlock {
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_n_z")]
    pub n_z: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    /// Time at which end-point moments are compared.
    pub time: f64,
    pub seed: u64,
    /// State at which one-step conditional laws are compared.
    #[serde(default)]
    pub pdf_state: Option<Vec<f64>>,
    /// Split point of the two-well occupancy count at `time`.
    #[serde(default)]
    pub occupancy_split: Option<f64>,
}

/// A full experiment: one block per pipeline stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkBlock,
    pub simulation: SimulationBlock,
    pub labels: LabelsBlock,
    pub train: TrainBlock,
    pub predict: PredictBlock,
    pub evaluate: EvaluateBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_fraction() -> f64 {
    DEFAULT_FRACTION
}
fn default_nu() -> f64 {
    DEFAULT_NU
}
fn default_eps_tau() -> f64 {
    DiffusionSchedule::default().eps_tau
}
fn default_widths() -> Vec<usize> {
    TrainConfig::default().widths
}
fn default_epochs() -> usize {
    TrainConfig::default().epochs
}
fn default_lr() -> f64 {
    TrainConfig::default().lr
}
fn default_split() -> f64 {
    TrainConfig::default().split
}
fn default_activation() -> String {
    Activation::Tanh.name().to_string()
}
fn default_n_z() -> usize {
    flowlearn_core::eval::DEFAULT_N_Z
}
fn default_bins() -> usize {
    flowlearn_core::eval::DEFAULT_BINS
}
fn default_min_count() -> usize {
    flowlearn_core::eval::DEFAULT_MIN_COUNT
}

/// Digest of each stage's inputs, chained so that changing any upstream
/// block invalidates everything downstream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageDigests {
    pub simulate: String,
    pub labels: String,
    pub train: String,
    pub predict: String,
    pub evaluate: String,
}

impl StageDigests {
    pub fn get(&self, stage: &str) -> Option<&str> {
        match stage {
            "simulate" => Some(&self.simulate),
            "labels" => Some(&self.labels),
            "train" => Some(&self.train),
            "predict" => Some(&self.predict),
            "evaluate" => Some(&self.evaluate),
            _ => None,
        }
    }
}

fn digest_of<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config blocks serialize"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The preset experiment for a benchmark at the requested scale.
    pub fn from_preset(name: &str, scale: Scale) -> Result<Self, CliError> {
        let p = preset(name)?;
        let desk = scale == Scale::Desk;
        let pick = |full: usize, d: usize| if desk { d } else { full };
        let horizon = if desk { p.desk_predict_horizon } else { p.predict_horizon };
        let grid = match p.name {
            "ou1d" => GridSpec::Range { low: 0.5, high: 2.0, points: 100 },
            _ => GridSpec::default(),
        };
        let widths = if desk { vec![16, 32, 64] } else { default_widths() };
        let cfg = Self {
            benchmark: BenchmarkBlock { name: p.name.to_string(), overrides: BTreeMap::new() },
            simulation: SimulationBlock {
                trajectories: pick(p.full_trajectories, p.desk_trajectories),
                steps: p.steps,
                dt: p.dt,
                init: p.init.clone(),
                seed: 1,
            },
            labels: LabelsBlock {
                count: pick(p.full_labels, p.desk_labels),
                steps: pick(p.full_reverse_steps, p.desk_reverse_steps),
                fraction: DEFAULT_FRACTION,
                nu: DEFAULT_NU,
                eps_tau: default_eps_tau(),
                seed: 2,
                workers: 0,
            },
            train: TrainBlock {
                widths,
                epochs: default_epochs(),
                lr: default_lr(),
                split: default_split(),
                batch: 0,
                seed: 3,
                activation: default_activation(),
            },
            predict: PredictBlock {
                x0: p.x0.clone(),
                steps: (horizon / p.dt).round() as usize,
                paths: pick(p.full_paths, p.desk_paths),
                seed: 4,
            },
            evaluate: EvaluateBlock {
                grid,
                n_z: default_n_z(),
                bins: default_bins(),
                min_count: default_min_count(),
                time: p.eval_time,
                seed: 5,
                pdf_state: Some(p.pdf_state.clone()),
                occupancy_split: (p.name == "double_well").then_some(0.0),
            },
            output_dir: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn spec(&self) -> Result<SdeSpec, CliError> {
        Ok(make_benchmark(&self.benchmark.name, &self.benchmark.overrides)?)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let spec = self.spec()?;
        let d = spec.dim;
        let s = &self.simulation;
        if s.trajectories == 0 || s.steps == 0 {
            return bad("simulation.trajectories and simulation.steps must be positive".into());
        }
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return bad(format!("simulation.dt must be positive, got {}", s.dt));
        }
        if s.init.dim() != d {
            return bad(format!("simulation.init has dimension {}, {} has {d}", s.init.dim(), spec.name));
        }
        let l = &self.labels;
        if l.count == 0 || l.steps < 2 {
            return bad("labels.count must be positive and labels.steps at least 2".into());
        }
        if !(l.fraction > 0.0 && l.fraction <= 1.0) || !(l.nu > 0.0) || !(l.eps_tau > 0.0 && l.eps_tau < 0.5) {
            return bad("labels.fraction must lie in (0, 1], labels.nu > 0, labels.eps_tau in (0, 0.5)".into());
        }
        let t = &self.train;
        if t.widths.is_empty() || t.widths.contains(&0) || t.epochs == 0 {
            return bad("train.widths must be non-empty and positive, train.epochs positive".into());
        }
        if !(t.lr > 0.0) || !(t.split > 0.0 && t.split <= 1.0) {
            return bad("train.lr must be positive and train.split in (0, 1]".into());
        }
        Activation::from_name(&t.activation).map_err(|e| CliError::Config(e.to_string()))?;
        let p = &self.predict;
        if p.x0.len() != d || p.steps == 0 || p.paths == 0 {
            return bad(format!("predict.x0 must have {d} entries, predict.steps and predict.paths positive"));
        }
        let e = &self.evaluate;
        let horizon = p.steps as f64 * s.dt;
        if !(e.time >= 0.0 && e.time <= horizon * (1.0 + 1e-12)) {
            return bad(format!("evaluate.time {} lies outside the prediction horizon {horizon}", e.time));
        }
        if e.n_z < 1000 || e.bins < 2 {
            return bad("evaluate.n_z must be at least 1000 and evaluate.bins at least 2".into());
        }
        match e.grid {
            GridSpec::Central { coverage, points } if !(coverage > 0.0 && coverage <= 1.0) || points < 2 => {
                return bad("evaluate.grid coverage must lie in (0, 1] with at least 2 points".into());
            }
            GridSpec::Range { low, high, points } if !(high > low) || points < 2 => {
                return bad("evaluate.grid needs low < high and at least 2 points".into());
            }
            _ => {}
        }
        if e.pdf_state.as_ref().is_some_and(|x| x.len() != d) {
            return bad(format!("evaluate.pdf_state must have {d} entries"));
        }
        Ok(())
    }

    pub fn label_config(&self, workers: usize) -> LabelConfig {
        let l = &self.labels;
        LabelConfig {
            count: l.count,
            steps: l.steps,
            fraction: l.fraction,
            nu: l.nu,
            eps_tau: l.eps_tau,
            seed: l.seed,
            workers,
        }
    }

    pub fn train_config(&self, workers: usize) -> Result<TrainConfig, CliError> {
        let t = &self.train;
        Ok(TrainConfig {
            widths: t.widths.clone(),
            epochs: t.epochs,
            lr: t.lr,
            split: t.split,
            batch: t.batch,
            seed: t.seed,
            workers,
            activation: Activation::from_name(&t.activation).map_err(|e| CliError::Config(e.to_string()))?,
        })
    }

    /// The config with everything that cannot change results cleared.
    fn canonical(&self) -> Self {
        let mut c = self.clone();
        c.labels.workers = 0;
        c.output_dir = None;
        c
    }

    pub fn digest(&self) -> String {
        digest_of(&self.canonical())
    }

    pub fn stage_digests(&self) -> StageDigests {
        let c = self.canonical();
        let simulate = digest_of(&("simulate", &c.benchmark, &c.simulation));
        let labels = digest_of(&("labels", &simulate, &c.labels));
        let train = digest_of(&("train", &labels, &c.train));
        let predict = digest_of(&("predict", &train, &c.predict));
        let evaluate = digest_of(&("evaluate", &predict, &c.evaluate));
        StageDigests { simulate, labels, train, predict, evaluate }
    }
}
