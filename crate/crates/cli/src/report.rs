use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use flowlearn_core::eval::{
    central_grid, effective_coeffs_from_model, effective_coeffs_from_trajectories, endpoint_moment_errors,
    ensemble_moments, exact_effective_coeffs, ks_two_sample, relative_curve_error, tv_distance, uniform_grid,
    well_occupancy, CoeffVariant, CurveOnGrid, MomentSeries,
};
use flowlearn_core::rng;
use flowlearn_core::sde::{em_step, simulate};
use flowlearn_core::{FlowMap, FlowMapModel, InitSampler, SdeSpec, TrajectoryBatch};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, GridSpec};
use crate::error::CliError;

pub const METRICS_SCHEMA: &str = "sde-flowlearn/metrics";
pub const METRICS_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub rule: String,
    pub low: f64,
    pub high: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMetrics {
    pub variant: String,
    pub grid: GridReport,
    pub n_z: usize,
    /// `E_a = ‖a − â‖ / ‖a‖` over the grid.
    pub drift_error: f64,
    /// `E_b = ‖b − b̂‖ / ‖b‖` over the grid.
    pub diffusion_error: f64,
    /// Monte Carlo standard error of the model curve, in the units of the error.
    pub drift_error_se: f64,
    pub diffusion_error_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointMetrics {
    pub time: f64,
    /// `E_T^m`.
    pub mean_error: f64,
    /// `E_T^s`.
    pub std_error: f64,
    pub mean_by_coord: Vec<f64>,
    pub std_by_coord: Vec<f64>,
    pub mean_se: f64,
    pub std_se: f64,
    pub surrogate_paths: usize,
    pub reference_paths: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMetrics {
    pub state: Vec<f64>,
    pub samples: usize,
    pub ks_by_coord: Vec<f64>,
    pub tv_by_coord: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMetrics {
    pub split: f64,
    pub time: f64,
    /// Fractions of paths below and above the split.
    pub surrogate: [f64; 2],
    pub reference: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub hidden: usize,
    pub activation: String,
    pub best_val_mse: f64,
    pub best_epoch: usize,
    pub width_scores: Vec<(usize, f64)>,
}

impl ModelSummary {
    pub fn of(model: &FlowMapModel) -> Self {
        Self {
            hidden: model.hidden,
            activation: model.activation.name().to_string(),
            best_val_mse: model.meta.best_val_mse,
            best_epoch: model.meta.best_epoch,
            width_scores: model.meta.width_scores.clone(),
        }
    }
}

/// The evaluation stage's output document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema: String,
    pub version: u32,
    pub benchmark: String,
    pub dim: usize,
    pub config_digest: String,
    pub stage_digests: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub coefficients: Option<CoefficientMetrics>,
    pub endpoint: EndpointMetrics,
    pub conditional: Option<ConditionalMetrics>,
    pub occupancy: Option<OccupancyMetrics>,
    pub model: Option<ModelSummary>,
}

/// Curves and series computed alongside the report, for CSV export.
#[derive(Clone, Debug)]
pub struct EvaluationData {
    pub exact: Option<(CurveOnGrid, CurveOnGrid)>,
    pub model: Option<(CurveOnGrid, CurveOnGrid)>,
    pub binned: Option<(CurveOnGrid, CurveOnGrid)>,
    pub surrogate_moments: MomentSeries,
    pub reference_moments: MomentSeries,
}

fn variant_for(spec: &SdeSpec) -> CoeffVariant {
    if spec.name == "lognormal_noise" {
        CoeffVariant::LogNormal
    } else {
        CoeffVariant::Standard
    }
}

fn variant_name(v: CoeffVariant) -> &'static str {
    match v {
        CoeffVariant::Standard => "standard",
        CoeffVariant::LogNormal => "lognormal",
    }
}

fn curve_se(truth: &CurveOnGrid, est: &CurveOnGrid) -> f64 {
    let norm: f64 = truth.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    est.std_err.iter().map(|v| v * v).sum::<f64>().sqrt() / norm
}

fn grid_for(spec: &GridSpec, states: &[f64]) -> Result<(Vec<f64>, GridReport), CliError> {
    let (grid, rule) = match *spec {
        GridSpec::Central { coverage, points } => {
            (central_grid(states, coverage, points)?, format!("central {coverage}"))
        }
        GridSpec::Range { low, high, points } => (uniform_grid(low, high, points)?, "range".to_string()),
    };
    let report = GridReport { rule, low: grid[0], high: grid[grid.len() - 1], points: grid.len() };
    Ok((grid, report))
}

/// Samples of one coordinate of the increment of `map` at `x`.
fn map_increments<F: FlowMap + ?Sized>(map: &F, x: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = x.len();
    let mut rng = rng::stream(seed, 0);
    let mut cols = vec![Vec::with_capacity(n); d];
    let (mut z, mut out) = (vec![0.0; d], vec![0.0; d]);
    for _ in 0..n {
        z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
        map.increment(x, &z, &mut out);
        for (c, v) in cols.iter_mut().zip(&out) {
            c.push(*v);
        }
    }
    cols
}

fn exact_increments(spec: &SdeSpec, x: &[f64], dt: f64, n: usize, seed: u64) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rng = rng::stream(seed, 1);
    let mut cols = vec![Vec::with_capacity(n); x.len()];
    for _ in 0..n {
        let next = em_step(spec, x, dt, &mut rng)?;
        for ((c, a), b) in cols.iter_mut().zip(&next).zip(x) {
            c.push(a - b);
        }
    }
    Ok(cols)
}

/// Evaluates a one-step map against the benchmark it was learned from.
///
/// `surrogate` is the ensemble produced by rolling `map` forward from the
/// prediction block's initial state, and `states` are the observed states
/// used for a central grid. The reference ensemble is simulated here with
/// the evaluation seed. Digests, seeds and the model summary are left for
/// the caller to fill in.
pub fn evaluate_map<F: FlowMap + ?Sized>(
    cfg: &ExperimentConfig,
    map: &F,
    surrogate: &TrajectoryBatch,
    states: &[f64],
    workers: usize,
) -> Result<(MetricsReport, EvaluationData), CliError> {
    let spec = cfg.spec()?;
    let e = &cfg.evaluate;
    let dt = cfg.simulation.dt;
    if map.dim() != spec.dim || surrogate.dim != spec.dim {
        return Err(CliError::Config("model, ensemble and benchmark dimensions differ".into()));
    }

    let (mut exact, mut model, mut binned, mut coefficients) = (None, None, None, None);
    if spec.dim == 1 {
        let (grid, grid_report) = grid_for(&e.grid, states)?;
        let variant = variant_for(&spec);
        let truth = exact_effective_coeffs(&spec, &grid, dt)?;
        let est = effective_coeffs_from_model(map, &grid, e.n_z, variant, e.seed, workers)?;
        coefficients = Some(CoefficientMetrics {
            variant: variant_name(variant).to_string(),
            grid: grid_report,
            n_z: e.n_z,
            drift_error: relative_curve_error(&truth.0, &est.0)?,
            diffusion_error: relative_curve_error(&truth.1, &est.1)?,
            drift_error_se: curve_se(&truth.0, &est.0),
            diffusion_error_se: curve_se(&truth.1, &est.1),
        });
        binned = effective_coeffs_from_trajectories(surrogate, e.bins, e.min_count).ok();
        exact = Some(truth);
        model = Some(est);
    }

    let reference = simulate(
        &spec,
        &InitSampler::Point(cfg.predict.x0.clone()),
        cfg.predict.paths,
        cfg.predict.steps,
        dt,
        e.seed,
        workers,
    )?;
    let ends = endpoint_moment_errors(surrogate, &reference, e.time)?;
    let endpoint = EndpointMetrics {
        time: e.time,
        mean_error: ends.mean,
        std_error: ends.std,
        mean_by_coord: ends.mean_by_coord,
        std_by_coord: ends.std_by_coord,
        mean_se: ends.mean_se,
        std_se: ends.std_se,
        surrogate_paths: surrogate.paths,
        reference_paths: reference.paths,
    };

    let conditional = match &e.pdf_state {
        Some(state) => {
            let n = e.n_z;
            let learned = map_increments(map, state, n, e.seed);
            let truth = exact_increments(&spec, state, dt, n, e.seed)?;
            let mut tv_by_coord = Vec::with_capacity(state.len());
            for (a, b) in learned.iter().zip(&truth) {
                tv_by_coord.push(tv_distance(a, b, e.bins)?);
            }
            Some(ConditionalMetrics {
                state: state.clone(),
                samples: n,
                ks_by_coord: learned.iter().zip(&truth).map(|(a, b)| ks_two_sample(a, b)).collect(),
                tv_by_coord,
            })
        }
        None => None,
    };

    let occupancy = match e.occupancy_split {
        Some(split) => {
            let step = (e.time / dt).round() as usize;
            let coord0 = |b: &TrajectoryBatch| -> Vec<f64> { (0..b.paths).map(|p| b.state(p, step)[0]).collect() };
            let (sl, sr) = well_occupancy(&coord0(surrogate), split);
            let (rl, rr) = well_occupancy(&coord0(&reference), split);
            Some(OccupancyMetrics { split, time: e.time, surrogate: [sl, sr], reference: [rl, rr] })
        }
        None => None,
    };

    let report = MetricsReport {
        schema: METRICS_SCHEMA.to_string(),
        version: METRICS_VERSION,
        benchmark: spec.name.clone(),
        dim: spec.dim,
        config_digest: cfg.digest(),
        stage_digests: BTreeMap::new(),
        seeds: BTreeMap::from([
            ("simulate".to_string(), cfg.simulation.seed),
            ("labels".to_string(), cfg.labels.seed),
            ("train".to_string(), cfg.train.seed),
            ("predict".to_string(), cfg.predict.seed),
            ("evaluate".to_string(), e.seed),
        ]),
        coefficients,
        endpoint,
        conditional,
        occupancy,
        model: None,
    };
    let data = EvaluationData {
        exact,
        model,
        binned,
        surrogate_moments: ensemble_moments(surrogate),
        reference_moments: ensemble_moments(&reference),
    };
    Ok((report, data))
}

/// `x,drift_exact,drift_model,drift_model_se,diffusion_exact,diffusion_model,diffusion_model_se`.
pub fn write_curves_csv(data: &EvaluationData, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "x,drift_exact,drift_model,drift_model_se,diffusion_exact,diffusion_model,diffusion_model_se")?;
    if let (Some((ea, eb)), Some((ma, mb))) = (&data.exact, &data.model) {
        for i in 0..ea.len() {
            writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                ea.grid[i], ea.values[i], ma.values[i], ma.std_err[i], eb.values[i], mb.values[i], mb.std_err[i]
            )?;
        }
    }
    Ok(())
}

/// Trajectory-binned coefficients of the surrogate ensemble.
pub fn write_binned_csv(data: &EvaluationData, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "x,drift,drift_se,diffusion,diffusion_se,count")?;
    if let Some((a, b)) = &data.binned {
        for i in 0..a.len() {
            writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{}",
                a.grid[i], a.values[i], a.std_err[i], b.values[i], b.std_err[i], a.n_samples_per_point[i]
            )?;
        }
    }
    Ok(())
}

/// Per-time mean and std of both ensembles, one column per coordinate.
pub fn write_moments_csv(data: &EvaluationData, mut out: impl Write) -> std::io::Result<()> {
    let (s, r) = (&data.surrogate_moments, &data.reference_moments);
    let mut header = vec!["t".to_string()];
    for who in ["surrogate", "reference"] {
        for stat in ["mean", "std"] {
            header.extend((1..=s.dim).map(|i| format!("{who}_{stat}_{i}")));
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for k in 0..s.times.len().min(r.times.len()) {
        let mut row = vec![format!("{:e}", s.times[k])];
        for m in [s, r] {
            row.extend(m.mean_at(k).iter().map(|v| format!("{v:e}")));
            row.extend(m.std_at(k).iter().map(|v| format!("{v:e}")));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Plain-text summary of a metrics report.
pub fn render_text(r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "benchmark   {} (d = {})", r.benchmark, r.dim);
    let _ = writeln!(s, "config      {}", r.config_digest);
    if let Some(c) = &r.coefficients {
        let _ = writeln!(
            s,
            "grid        {} [{:.4}, {:.4}], {} points, n_z = {}, {} variant",
            c.grid.rule, c.grid.low, c.grid.high, c.grid.points, c.n_z, c.variant
        );
        let _ = writeln!(s, "E_a         {:.4e} (mc se {:.1e})", c.drift_error, c.drift_error_se);
        let _ = writeln!(s, "E_b         {:.4e} (mc se {:.1e})", c.diffusion_error, c.diffusion_error_se);
    }
    let p = &r.endpoint;
    let _ = writeln!(s, "E_T^m       {:.4e} (se {:.1e}) at T = {}", p.mean_error, p.mean_se, p.time);
    let _ = writeln!(s, "E_T^s       {:.4e} (se {:.1e})", p.std_error, p.std_se);
    if let Some(c) = &r.conditional {
        let _ = writeln!(s, "conditional x = {:?}: KS {:?}, TV {:?}", c.state, c.ks_by_coord, c.tv_by_coord);
    }
    if let Some(o) = &r.occupancy {
        let _ = writeln!(
            s,
            "occupancy   split {} at T = {}: surrogate {:.3}/{:.3}, reference {:.3}/{:.3}",
            o.split, o.time, o.surrogate[0], o.surrogate[1], o.reference[0], o.reference[1]
        );
    }
    if let Some(m) = &r.model {
        let _ = writeln!(
            s,
            "model       {} hidden {}, best val mse {:.4e} at epoch {}",
            m.activation, m.hidden, m.best_val_mse, m.best_epoch
        );
    }
    for (stage, d) in &r.stage_digests {
        let _ = writeln!(s, "{stage:<11} {d}");
    }
    s
}
