use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::score::{score_into, DiffusionSchedule, NeighborSubset, ScoreWorkspace};

#[derive(Clone, Debug, Default)]
pub struct ReverseWorkspace {
    score: ScoreWorkspace,
    s: Vec<f64>,
}

impl ReverseWorkspace {
    pub fn new() -> Self {
        Self::default()
    }
}

fn check(steps: usize, z1: &[f64], subset: &NeighborSubset) -> Result<()> {
    if steps < 2 {
        return Err(Error::invalid(format!("need at least 2 reverse steps, got {steps}")));
    }
    if z1.len() != subset.dim() {
        return Err(Error::invalid(format!("z has dimension {}, subset {}", z1.len(), subset.dim())));
    }
    if z1.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("initial noise {z1:?}")));
    }
    Ok(())
}

fn blowup(k: usize, steps: usize, z: &[f64]) -> Error {
    Error::NonFinite(format!("reverse integration at step k={k} (tau={}) reached {z:?}", k as f64 / steps as f64))
}

/// Integrates the reverse probability-flow ODE
/// `dz = [b(τ) z - ½ σ²(τ) S(z, τ)] dτ` from `τ = 1` (state `z1`) down to
/// `τ = 0` with `steps` explicit Euler steps on the uniform grid
/// `τ_k = k / steps`. The neighbor subset stays fixed for the whole solve.
pub fn reverse_ode_solve(
    z1: &[f64],
    steps: usize,
    subset: &NeighborSubset,
    sched: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    reverse_ode_solve_with(z1, steps, subset, sched, &mut ReverseWorkspace::new())
}

pub fn reverse_ode_solve_with(
    z1: &[f64],
    steps: usize,
    subset: &NeighborSubset,
    sched: &DiffusionSchedule,
    ws: &mut ReverseWorkspace,
) -> Result<Vec<f64>> {
    check(steps, z1, subset)?;
    let h = 1.0 / steps as f64;
    let mut z = z1.to_vec();
    ws.s.resize(z.len(), 0.0);
    for k in (1..=steps).rev() {
        let tau = k as f64 * h;
        let c = sched.at(tau);
        score_into(&z, tau, subset, sched, &mut ws.score, &mut ws.s).map_err(|_| blowup(k, steps, &z))?;
        for (zc, sc) in z.iter_mut().zip(&ws.s) {
            *zc -= (c.b * *zc - 0.5 * c.sigma2 * sc) * h;
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(blowup(k, steps, &z));
        }
    }
    Ok(z)
}

/// Euler–Maruyama on the reverse SDE
/// `dz = [b(τ) z - σ²(τ) S(z, τ)] dτ + σ(τ) dB̄` over the same grid as
/// [`reverse_ode_solve`]. Stochastic, so only useful for checking laws.
pub fn reverse_sde_solve<R: Rng + ?Sized>(
    z1: &[f64],
    steps: usize,
    subset: &NeighborSubset,
    sched: &DiffusionSchedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check(steps, z1, subset)?;
    let h = 1.0 / steps as f64;
    let mut z = z1.to_vec();
    let mut s = vec![0.0; z.len()];
    let mut ws = ScoreWorkspace::new();
    for k in (1..=steps).rev() {
        let tau = k as f64 * h;
        let c = sched.at(tau);
        score_into(&z, tau, subset, sched, &mut ws, &mut s).map_err(|_| blowup(k, steps, &z))?;
        let noise = (c.sigma2 * h).sqrt();
        for (zc, sc) in z.iter_mut().zip(&s) {
            let xi: f64 = rng.sample(StandardNormal);
            *zc += -(c.b * *zc - c.sigma2 * sc) * h + noise * xi;
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(blowup(k, steps, &z));
        }
    }
    Ok(z)
}
