use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use flowlearn_core::flowmap::{simulate_surrogate, train};
use flowlearn_core::io::sha256_hex;
use flowlearn_core::sampler::generate_labels_indexed;
use flowlearn_core::sde::{build_observation_set, simulate};
use flowlearn_core::{FlowMapModel, LabeledSet, NeighborIndex, ObservationSet, TrajectoryBatch};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{ExperimentConfig, StageDigests};
use crate::error::CliError;
use crate::report::{
    evaluate_map, render_text, write_binned_csv, write_curves_csv, write_moments_csv, MetricsReport, ModelSummary,
};

pub const MANIFEST_SCHEMA: &str = "sde-flowlearn/manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "SDE_FLOWLEARN_OUT";
pub const DEFAULT_OUT: &str = "sde-flowlearn-out";

pub const STAGES: [&str; 5] = ["simulate", "labels", "train", "predict", "evaluate"];

pub const OBSERVATIONS: &str = "observations.bin";
pub const LABELS: &str = "labels.bin";
pub const MODEL: &str = "model.bin";
pub const ENSEMBLE: &str = "ensemble.bin";
pub const METRICS: &str = "metrics.json";
pub const CURVES: &str = "curves.csv";
pub const BINNED: &str = "binned.csv";
pub const MOMENTS: &str = "moments.csv";
pub const REPORT: &str = "report.txt";

/// Written next to every stage artifact; records what produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub version: u32,
    pub stage: String,
    pub stage_digest: String,
    pub config_digest: String,
    /// Stage digests of every upstream stage.
    pub upstream: BTreeMap<String, String>,
    pub artifact: String,
    pub artifact_sha256: String,
    pub summary: serde_json::Value,
}

/// Picks the output directory: the explicit flag, then the config's
/// `output_dir`, then the environment, then a default relative path.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

pub struct Pipeline {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    /// Thread count; zero uses all cores. Never changes any output.
    pub workers: usize,
    digests: StageDigests,
}

fn file_sha(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    Ok(sha256_hex(&bytes))
}

impl Pipeline {
    pub fn new(config: ExperimentConfig, out: impl Into<PathBuf>, workers: Option<usize>) -> Result<Self, CliError> {
        config.validate()?;
        let workers = workers.unwrap_or(config.labels.workers);
        let digests = config.stage_digests();
        Ok(Self { config, out: out.into(), workers, digests })
    }

    pub fn digests(&self) -> &StageDigests {
        &self.digests
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn manifest_path(&self, stage: &str) -> PathBuf {
        self.path(&format!("{stage}.manifest.json"))
    }

    pub fn read_manifest(&self, stage: &str) -> Result<Manifest, CliError> {
        let path = self.manifest_path(stage);
        let text = fs::read_to_string(&path)
            .map_err(|_| CliError::Stale(format!("{stage} has not been run: {} is missing", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Stale(format!("unreadable manifest {}: {e}", path.display())))
    }

    /// Checks that `stage` ran with the current config and that its artifact
    /// is unmodified; returns the artifact path.
    pub fn require(&self, stage: &str) -> Result<PathBuf, CliError> {
        let m = self.read_manifest(stage)?;
        let expect = self.digests.get(stage).expect("known stage");
        if m.stage_digest != expect {
            return Err(CliError::Stale(format!(
                "{stage} output was produced from a different config (digest {}, expected {expect}); rerun `{stage}`",
                &m.stage_digest[..12.min(m.stage_digest.len())]
            )));
        }
        let path = self.path(&m.artifact);
        if !path.exists() {
            return Err(CliError::Stale(format!("{} is missing; rerun `{stage}`", path.display())));
        }
        if file_sha(&path)? != m.artifact_sha256 {
            return Err(CliError::Stale(format!("{} changed since `{stage}` wrote it", path.display())));
        }
        Ok(path)
    }

    fn finish(&self, stage: &str, artifact: &str, summary: serde_json::Value) -> Result<Manifest, CliError> {
        let idx = STAGES.iter().position(|s| *s == stage).expect("known stage");
        let upstream = STAGES[..idx]
            .iter()
            .map(|s| (s.to_string(), self.digests.get(s).expect("known stage").to_string()))
            .collect();
        let m = Manifest {
            schema: MANIFEST_SCHEMA.to_string(),
            version: MANIFEST_VERSION,
            stage: stage.to_string(),
            stage_digest: self.digests.get(stage).expect("known stage").to_string(),
            config_digest: self.config.digest(),
            upstream,
            artifact: artifact.to_string(),
            artifact_sha256: file_sha(&self.path(artifact))?,
            summary,
        };
        let path = self.manifest_path(stage);
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        Ok(m)
    }

    fn prepare(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::io(format!("creating {}", self.out.display()), e))
    }

    fn io_err(path: &Path) -> impl FnOnce(flowlearn_core::Error) -> CliError + '_ {
        move |e| match e {
            flowlearn_core::Error::Io(io) => CliError::io(format!("{}", path.display()), io),
            other => CliError::Core(other),
        }
    }

    pub fn simulate(&self) -> Result<Manifest, CliError> {
        self.prepare()?;
        let s = &self.config.simulation;
        let spec = self.config.spec()?;
        let batch = simulate(&spec, &s.init, s.trajectories, s.steps, s.dt, s.seed, self.workers)?;
        let obs = build_observation_set(&batch)?;
        drop(batch);
        let path = self.path(OBSERVATIONS);
        obs.write_to(&path).map_err(Self::io_err(&path))?;
        self.finish("simulate", OBSERVATIONS, json!({ "M": obs.len(), "d": obs.dim, "dt": obs.dt }))
    }

    pub fn labels(&self) -> Result<Manifest, CliError> {
        let src = self.require("simulate")?;
        let obs = ObservationSet::read_from(&src).map_err(Self::io_err(&src))?;
        let index = NeighborIndex::new(&obs);
        let labels = generate_labels_indexed(&index, &obs.digest(), &self.config.label_config(self.workers))?;
        let path = self.path(LABELS);
        labels.write_to(&path).map_err(Self::io_err(&path))?;
        self.finish(
            "labels",
            LABELS,
            json!({ "J": labels.len(), "K": labels.meta.steps, "d": labels.dim, "source_digest": labels.meta.source_digest }),
        )
    }

    pub fn train(&self) -> Result<Manifest, CliError> {
        let src = self.require("labels")?;
        let labels = LabeledSet::read_from(&src).map_err(Self::io_err(&src))?;
        let model = train(&labels, &self.config.train_config(self.workers)?)?;
        let path = self.path(MODEL);
        model.write_to(&path).map_err(Self::io_err(&path))?;
        let summary = ModelSummary::of(&model);
        self.finish("train", MODEL, serde_json::to_value(summary).expect("summary serializes"))
    }

    pub fn predict(&self) -> Result<Manifest, CliError> {
        let src = self.require("train")?;
        let model = FlowMapModel::read_from(&src).map_err(Self::io_err(&src))?;
        let p = &self.config.predict;
        let batch = simulate_surrogate(&model, &p.x0, p.steps, p.paths, p.seed, self.workers)?;
        let path = self.path(ENSEMBLE);
        batch.write_to(&path).map_err(Self::io_err(&path))?;
        self.finish("predict", ENSEMBLE, json!({ "paths": batch.paths, "steps": batch.steps, "d": batch.dim }))
    }

    pub fn evaluate(&self) -> Result<Manifest, CliError> {
        let obs_path = self.require("simulate")?;
        let model_path = self.require("train")?;
        let ens_path = self.require("predict")?;
        let obs = ObservationSet::read_from(&obs_path).map_err(Self::io_err(&obs_path))?;
        let model = FlowMapModel::read_from(&model_path).map_err(Self::io_err(&model_path))?;
        let ensemble = TrajectoryBatch::read_from(&ens_path).map_err(Self::io_err(&ens_path))?;
        let states: Vec<f64> = if obs.dim == 1 { obs.x.clone() } else { Vec::new() };
        drop(obs);
        let (mut report, data) = evaluate_map(&self.config, &model, &ensemble, &states, self.workers)?;
        report.model = Some(ModelSummary::of(&model));
        report.stage_digests =
            STAGES.iter().map(|s| (s.to_string(), self.digests.get(s).unwrap().to_string())).collect();

        let write_csv = |name: &str, f: &dyn Fn(BufWriter<File>) -> std::io::Result<()>| -> Result<(), CliError> {
            let path = self.path(name);
            let file = File::create(&path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
            f(BufWriter::new(file)).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
        };
        write_csv(CURVES, &|w| write_curves_csv(&data, w))?;
        write_csv(BINNED, &|w| write_binned_csv(&data, w))?;
        write_csv(MOMENTS, &|w| write_moments_csv(&data, w))?;
        let path = self.path(METRICS);
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        let summary = json!({
            "E_a": report.coefficients.as_ref().map(|c| c.drift_error),
            "E_b": report.coefficients.as_ref().map(|c| c.diffusion_error),
            "E_T_m": report.endpoint.mean_error,
            "E_T_s": report.endpoint.std_error,
        });
        self.finish("evaluate", METRICS, summary)
    }

    /// Reads the metrics of the current config and renders them as text,
    /// also written to `report.txt`.
    pub fn report(&self) -> Result<String, CliError> {
        let path = self.require("evaluate")?;
        let report = self.metrics_at(&path)?;
        let text = render_text(&report);
        let out = self.path(REPORT);
        fs::write(&out, &text).map_err(|e| CliError::io(format!("writing {}", out.display()), e))?;
        Ok(text)
    }

    pub fn metrics(&self) -> Result<MetricsReport, CliError> {
        let path = self.require("evaluate")?;
        self.metrics_at(&path)
    }

    fn metrics_at(&self, path: &Path) -> Result<MetricsReport, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Stale(format!("unreadable metrics {}: {e}", path.display())))
    }

    pub fn run_stage(&self, stage: &str) -> Result<Manifest, CliError> {
        match stage {
            "simulate" => self.simulate(),
            "labels" => self.labels(),
            "train" => self.train(),
            "predict" => self.predict(),
            "evaluate" => self.evaluate(),
            other => Err(CliError::Config(format!("unknown stage `{other}`"))),
        }
    }

    /// Runs every stage in order.
    pub fn run_all(&self) -> Result<MetricsReport, CliError> {
        for stage in STAGES {
            self.run_stage(stage)?;
        }
        self.metrics()
    }
}
