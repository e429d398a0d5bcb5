use crate::error::{Error, Result};
use crate::sde::TrajectoryBatch;

/// Per-step ensemble mean and standard deviation, `[step][coord]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSeries {
    pub dim: usize,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub n_paths: usize,
}

impl MomentSeries {
    pub fn mean_at(&self, step: usize) -> &[f64] {
        &self.mean[step * self.dim..(step + 1) * self.dim]
    }

    pub fn std_at(&self, step: usize) -> &[f64] {
        &self.std[step * self.dim..(step + 1) * self.dim]
    }

    /// Index of the step at time `t`, if present.
    pub fn step_at(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

fn step_moments(batch: &TrajectoryBatch, step: usize) -> (Vec<f64>, Vec<f64>) {
    let d = batch.dim;
    let n = batch.paths as f64;
    let mut mean = vec![0.0; d];
    for p in 0..batch.paths {
        for (m, v) in mean.iter_mut().zip(batch.state(p, step)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for p in 0..batch.paths {
        for ((s, v), m) in var.iter_mut().zip(batch.state(p, step)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let denom = if batch.paths > 1 { n - 1.0 } else { 1.0 };
    (mean, var.into_iter().map(|s| (s / denom).sqrt()).collect())
}

pub fn ensemble_moments(batch: &TrajectoryBatch) -> MomentSeries {
    let mut series = MomentSeries {
        dim: batch.dim,
        times: (0..=batch.steps).map(|k| batch.time(k)).collect(),
        mean: Vec::with_capacity((batch.steps + 1) * batch.dim),
        std: Vec::with_capacity((batch.steps + 1) * batch.dim),
        n_paths: batch.paths,
    };
    for k in 0..=batch.steps {
        let (m, s) = step_moments(batch, k);
        series.mean.extend(m);
        series.std.extend(s);
    }
    series
}

#[derive(Clone, Debug, PartialEq)]
pub struct EndpointErrors {
    /// `‖E x̂_T − E x_T‖₂`.
    pub mean: f64,
    /// `‖Std x̂_T − Std x_T‖₂`.
    pub std: f64,
    pub mean_by_coord: Vec<f64>,
    pub std_by_coord: Vec<f64>,
    /// Combined Monte Carlo standard errors of the two norms' components.
    pub mean_se: f64,
    pub std_se: f64,
}

fn find_step(batch: &TrajectoryBatch, t: f64) -> Result<usize> {
    (0..=batch.steps)
        .find(|&k| (batch.time(k) - t).abs() <= 1e-9 * t.abs().max(1.0))
        .ok_or_else(|| Error::invalid(format!("time {t} is not on the ensemble's time grid")))
}

/// End-time mean and standard deviation errors of `surrogate` against
/// `reference` at time `t`.
pub fn endpoint_moment_errors(
    surrogate: &TrajectoryBatch,
    reference: &TrajectoryBatch,
    t: f64,
) -> Result<EndpointErrors> {
    if surrogate.dim != reference.dim {
        return Err(Error::invalid("ensembles differ in dimension"));
    }
    let (ms, ss) = step_moments(surrogate, find_step(surrogate, t)?);
    let (mr, sr) = step_moments(reference, find_step(reference, t)?);
    let mean_by_coord: Vec<f64> = ms.iter().zip(&mr).map(|(a, b)| (a - b).abs()).collect();
    let std_by_coord: Vec<f64> = ss.iter().zip(&sr).map(|(a, b)| (a - b).abs()).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (ns, nr) = (surrogate.paths as f64, reference.paths as f64);
    let mean_se = ss.iter().zip(&sr).map(|(a, b)| a * a / ns + b * b / nr).sum::<f64>().sqrt();
    let std_se = ss.iter().zip(&sr).map(|(a, b)| a * a / (2.0 * ns) + b * b / (2.0 * nr)).sum::<f64>().sqrt();
    Ok(EndpointErrors {
        mean: norm(&mean_by_coord),
        std: norm(&std_by_coord),
        mean_by_coord,
        std_by_coord,
        mean_se,
        std_se,
    })
}
