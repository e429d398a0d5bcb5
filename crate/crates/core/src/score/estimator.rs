use super::kernel;
use super::{DiffusionSchedule, NeighborSubset};
use crate::error::{Error, Result};

/// Reusable scratch space for repeated score evaluations on one subset.
#[derive(Clone, Debug, Default)]
pub struct ScoreWorkspace {
    logw: Vec<f64>,
    mean: Vec<f64>,
}

impl ScoreWorkspace {
    pub fn new() -> Self {
        Self::default()
    }
}

fn check_query(z: &[f64], subset: &NeighborSubset) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::invalid("neighbor subset is empty"));
    }
    if z.len() != subset.dim {
        return Err(Error::invalid(format!("z has dimension {}, subset {}", z.len(), subset.dim)));
    }
    Ok(())
}

/// Log-weights into `ws.logw`; returns `(α, β², max log-weight)`.
fn log_weights(
    z: &[f64],
    tau: f64,
    subset: &NeighborSubset,
    sched: &DiffusionSchedule,
    ws: &mut ScoreWorkspace,
) -> Result<(f64, f64, f64)> {
    check_query(z, subset)?;
    let c = sched.at(tau);
    ws.logw.resize(subset.len(), 0.0);
    let max = kernel::log_weights(&subset.increments, &subset.spatial_logw, z, c.alpha, c.beta2, &mut ws.logw);
    if !max.is_finite() {
        return Err(Error::NonFinite(format!("score log-weights at tau={tau}, z={z:?} (max {max})")));
    }
    Ok((c.alpha, c.beta2, max))
}

/// Monte Carlo score `S(z, τ)` conditioned on the subset's query state,
/// written into `out`. `τ` is clamped by the schedule, not validated.
pub fn score_into(
    z: &[f64],
    tau: f64,
    subset: &NeighborSubset,
    sched: &DiffusionSchedule,
    ws: &mut ScoreWorkspace,
    out: &mut [f64],
) -> Result<()> {
    let (alpha, beta2, max) = log_weights(z, tau, subset, sched, ws)?;
    ws.mean.resize(subset.dim, 0.0);
    let total = kernel::weighted_sums(&ws.logw, max, &subset.increments, &mut ws.mean);
    for ((o, zc), m) in out.iter_mut().zip(z).zip(&ws.mean) {
        *o = -(zc - alpha * m / total) / beta2;
    }
    Ok(())
}

/// Monte Carlo score `S(z, τ)` for `τ ∈ [0, 1]`.
pub fn score(z: &[f64], tau: f64, subset: &NeighborSubset, sched: &DiffusionSchedule) -> Result<Vec<f64>> {
    sched.coefficients(tau)?;
    let mut out = vec![0.0; z.len()];
    score_into(z, tau, subset, sched, &mut ScoreWorkspace::new(), &mut out)?;
    Ok(out)
}

/// The normalized weights `ŵ_m`, in subset order.
pub fn weights(z: &[f64], tau: f64, subset: &NeighborSubset, sched: &DiffusionSchedule) -> Result<Vec<f64>> {
    sched.coefficients(tau)?;
    let mut ws = ScoreWorkspace::new();
    let (_, _, max) = log_weights(z, tau, subset, sched, &mut ws)?;
    let inv = 1.0 / kernel::exponentiate(&mut ws.logw, max);
    ws.logw.iter_mut().for_each(|w| *w *= inv);
    Ok(ws.logw)
}
