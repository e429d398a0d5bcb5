use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flowmap::FlowMap;
use crate::rng;
use crate::sde::{Dynamics, SdeSpec, TrajectoryBatch};

/// A scalar function sampled on an increasing grid, with per-point
/// standard errors when the values are Monte Carlo estimates (zero when exact).
#[derive(Clone, Debug, PartialEq)]
pub struct CurveOnGrid {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub std_err: Vec<f64>,
    pub n_samples_per_point: Vec<usize>,
}

impl CurveOnGrid {
    pub fn exact(grid: Vec<f64>, values: Vec<f64>) -> Self {
        let n = grid.len();
        Self { grid, values, std_err: vec![0.0; n], n_samples_per_point: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoeffVariant {
    /// `â = E[G]/Δt`, `b̂ = Std[G]/√Δt`.
    Standard,
    /// `â = ln E[(G + x)/x] / Δt`, `b̂ = Std[G]`.
    LogNormal,
}

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!("bad grid [{lo}, {hi}] with {n} points")));
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

fn quantile_range(values: &[f64], coverage: f64) -> Result<(f64, f64)> {
    if values.is_empty() || !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::invalid("need samples and coverage in (0, 1]"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - coverage) / 2.0;
    let at = |q: f64| sorted[((q * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)];
    Ok((at(tail), at(1.0 - tail)))
}

/// Uniform grid over the central `coverage` fraction of `values`.
pub fn central_grid(values: &[f64], coverage: f64, n: usize) -> Result<Vec<f64>> {
    let (lo, hi) = quantile_range(values, coverage)?;
    uniform_grid(lo, hi, n)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Monte Carlo effective coefficients of a one-dimensional flow map with
/// `n_z` draws per grid point. Point `i` uses stream `i` of `seed`.
pub fn effective_coeffs_from_model<F: FlowMap + ?Sized>(
    map: &F,
    grid: &[f64],
    n_z: usize,
    variant: CoeffVariant,
    seed: u64,
    workers: usize,
) -> Result<(CurveOnGrid, CurveOnGrid)> {
    if map.dim() != 1 {
        return Err(Error::invalid("effective coefficients are defined for one-dimensional maps"));
    }
    if n_z < 1000 {
        return Err(Error::invalid(format!("n_z must be at least 1000, got {n_z}")));
    }
    if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("grid must be non-empty and finite"));
    }
    if variant == CoeffVariant::LogNormal && grid.iter().any(|x| *x <= 0.0) {
        return Err(Error::invalid("lognormal variant needs a positive grid"));
    }
    let dt = map.dt();
    let point = |i: usize| -> Result<[f64; 4]> {
        let x = grid[i];
        let mut rng = rng::stream(seed, i as u64);
        let mut g = vec![0.0; n_z];
        let mut out = [0.0];
        for gi in g.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            map.increment(&[x], &[z], &mut out);
            *gi = out[0];
        }
        let (mean, sd) = mean_std(&g);
        let n = n_z as f64;
        match variant {
            CoeffVariant::Standard => {
                Ok([mean / dt, sd / n.sqrt() / dt, sd / dt.sqrt(), sd / dt.sqrt() / (2.0 * (n - 1.0)).sqrt()])
            }
            CoeffVariant::LogNormal => {
                let ratio = mean / x + 1.0;
                if !(ratio > 0.0) {
                    return Err(Error::NonFinite(format!("E[(G + x)/x] = {ratio} at x = {x} is not positive")));
                }
                Ok([ratio.ln() / dt, sd / x / n.sqrt() / ratio / dt, sd, sd / (2.0 * (n - 1.0)).sqrt()])
            }
        }
    };
    let rows: Result<Vec<[f64; 4]>> =
        rng::with_workers(workers, || (0..grid.len()).into_par_iter().map(point).collect());
    let rows = rows?;
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("effective coefficient estimate".into()));
    }
    let curve = |v: usize, e: usize| CurveOnGrid {
        grid: grid.to_vec(),
        values: rows.iter().map(|r| r[v]).collect(),
        std_err: rows.iter().map(|r| r[e]).collect(),
        n_samples_per_point: vec![n_z; grid.len()],
    };
    Ok((curve(0, 1), curve(2, 3)))
}

/// Closed-form effective coefficients of a one-dimensional benchmark at
/// step `dt`, in the variant matching how the benchmark is evaluated.
pub fn exact_effective_coeffs(spec: &SdeSpec, grid: &[f64], dt: f64) -> Result<(CurveOnGrid, CurveOnGrid)> {
    if spec.dim != 1 {
        return Err(Error::invalid(format!("{} is not one-dimensional", spec.name)));
    }
    let mut a = Vec::with_capacity(grid.len());
    let mut b = Vec::with_capacity(grid.len());
    match &spec.dynamics {
        Dynamics::DriftDiffusion { drift, diffusion } => {
            for &x in grid {
                let (mut f, mut g) = ([0.0], [0.0]);
                drift(&[x], &mut f);
                diffusion(&[x], &mut g);
                a.push(f[0]);
                b.push(g[0].abs());
            }
        }
        Dynamics::CustomStep { .. } => {
            let p = |k: &str| spec.param(k).ok_or_else(|| Error::invalid(format!("{} lacks `{k}`", spec.name)));
            match spec.name.as_str() {
                "exp_noise" => {
                    let (mu, sigma) = (p("mu")?, p("sigma")?);
                    for &x in grid {
                        a.push(mu * x + sigma / dt.sqrt());
                        b.push(sigma);
                    }
                }
                "lognormal_noise" => {
                    let (m, theta, sigma) = (p("m")?, p("theta")?, p("sigma")?);
                    if grid.iter().any(|x| *x <= 0.0) {
                        return Err(Error::invalid("lognormal coefficients need a positive grid"));
                    }
                    let s2 = sigma * sigma;
                    for &x in grid {
                        a.push((m * x.powf(-theta)).ln() + s2 / 2.0);
                        b.push((s2 * dt).exp_m1().sqrt() * (m * (s2 / 2.0).exp()).powf(dt) * x.powf(1.0 - theta * dt));
                    }
                }
                other => return Err(Error::invalid(format!("no closed-form coefficients for `{other}`"))),
            }
        }
    }
    Ok((CurveOnGrid::exact(grid.to_vec(), a), CurveOnGrid::exact(grid.to_vec(), b)))
}

/// Binned conditional moments of one-dimensional pairs `(x, Δx)`: uniform
/// bins over the central 90% of `x`, `â = mean(Δx)/Δt` and
/// `b̂ = std(Δx)/√Δt` per bin. Bins with fewer than `min_count` samples
/// are dropped. Sums run over sorted bin contents, so pair order never
/// changes the result.
pub fn binned_coeffs(
    x: &[f64],
    dx: &[f64],
    dt: f64,
    bins: usize,
    min_count: usize,
) -> Result<(CurveOnGrid, CurveOnGrid)> {
    if bins < 2 || x.len() != dx.len() || x.is_empty() {
        return Err(Error::invalid("need matching non-empty samples and at least two bins"));
    }
    let (lo, hi) = quantile_range(x, 0.9)?;
    if !(hi > lo) {
        return Err(Error::invalid("states have no spread"));
    }
    let width = (hi - lo) / bins as f64;
    let mut content: Vec<Vec<f64>> = vec![Vec::new(); bins];
    for (xi, di) in x.iter().zip(dx) {
        if *xi >= lo && *xi <= hi {
            let k = (((xi - lo) / width) as usize).min(bins - 1);
            content[k].push(*di);
        }
    }
    let (mut grid, mut a, mut a_se, mut b, mut b_se, mut counts) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, mut c) in content.into_iter().enumerate() {
        if c.len() < min_count.max(2) {
            continue;
        }
        c.sort_by(f64::total_cmp);
        let (mean, sd) = mean_std(&c);
        let n = c.len() as f64;
        grid.push(lo + (k as f64 + 0.5) * width);
        a.push(mean / dt);
        a_se.push(sd / n.sqrt() / dt);
        b.push(sd / dt.sqrt());
        b_se.push(sd / dt.sqrt() / (2.0 * (n - 1.0)).sqrt());
        counts.push(c.len());
    }
    if grid.is_empty() {
        return Err(Error::invalid(format!("no bin holds {min_count} samples")));
    }
    Ok((
        CurveOnGrid { grid: grid.clone(), values: a, std_err: a_se, n_samples_per_point: counts.clone() },
        CurveOnGrid { grid, values: b, std_err: b_se, n_samples_per_point: counts },
    ))
}

/// Binned effective coefficients from all consecutive state pairs of a
/// one-dimensional ensemble.
pub fn effective_coeffs_from_trajectories(
    batch: &TrajectoryBatch,
    bins: usize,
    min_count: usize,
) -> Result<(CurveOnGrid, CurveOnGrid)> {
    if batch.dim != 1 {
        return Err(Error::invalid("trajectory-binned coefficients need a one-dimensional ensemble"));
    }
    let mut x = Vec::with_capacity(batch.paths * batch.steps);
    let mut dx = Vec::with_capacity(batch.paths * batch.steps);
    for p in 0..batch.paths {
        for w in batch.path(p).windows(2) {
            x.push(w[0]);
            dx.push(w[1] - w[0]);
        }
    }
    binned_coeffs(&x, &dx, batch.dt, bins, min_count)
}

/// `‖truth − est‖₂ / ‖truth‖₂` over a shared grid.
pub fn relative_curve_error(truth: &CurveOnGrid, est: &CurveOnGrid) -> Result<f64> {
    if truth.len() != est.len()
        || truth.grid.iter().zip(&est.grid).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
    {
        return Err(Error::invalid("curves are not on the same grid"));
    }
    let norm: f64 = truth.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::invalid("truth curve has zero norm"));
    }
    let diff: f64 = truth.values.iter().zip(&est.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(diff / norm)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::flowmap::{ExactFlowMap, FlowMapModel};
    use crate::sde::make_benchmark;

    fn ou_map() -> ExactFlowMap {
        ExactFlowMap::new(make_benchmark("ou1d", &BTreeMap::new()).unwrap(), 0.01)
    }

    #[test]
    fn oracle_ou_model_drift_and_diffusion() {
        let grid = uniform_grid(0.5, 2.0, 16).unwrap();
        let (a, b) = effective_coeffs_from_model(&ou_map(), &grid, 20_000, CoeffVariant::Standard, 4, 0).unwrap();
        // The simulator's one-step map is Euler-Maruyama: drift exactly θ(μ − x),
        // diffusion exactly σ.
        for (i, g) in grid.iter().enumerate() {
            let expect = 1.2 - g;
            assert!((a.values[i] - expect).abs() <= 3.5 * a.std_err[i], "{i}");
            assert!((b.values[i] - 0.3).abs() <= 3.5 * b.std_err[i]);
        }
    }

    #[test]
    fn zero_model_has_zero_coefficients() {
        let model = FlowMapModel::zeros(1, 3, 0.01);
        let (a, b) = effective_coeffs_from_model(&model, &[0.5, 1.0], 1000, CoeffVariant::Standard, 0, 0).unwrap();
        assert!(a.values.iter().chain(&b.values).all(|v| *v == 0.0));
        let (a, b) = effective_coeffs_from_model(&model, &[0.5, 1.0], 1000, CoeffVariant::LogNormal, 0, 0).unwrap();
        assert!(a.values.iter().chain(&b.values).all(|v| *v == 0.0));
    }

    #[test]
    fn lognormal_oracle_matches_closed_form() {
        let spec = make_benchmark("lognormal_noise", &BTreeMap::new()).unwrap();
        let grid = uniform_grid(0.3, 1.5, 7).unwrap();
        let (ea, eb) = exact_effective_coeffs(&spec, &grid, 0.01).unwrap();
        let map = ExactFlowMap::new(spec, 0.01);
        let (a, b) = effective_coeffs_from_model(&map, &grid, 50_000, CoeffVariant::LogNormal, 8, 0).unwrap();
        for i in 0..grid.len() {
            assert!((a.values[i] - ea.values[i]).abs() <= 4.0 * a.std_err[i], "a {i}");
            assert!((b.values[i] - eb.values[i]).abs() <= 4.0 * b.std_err[i], "b {i}");
        }
    }

    #[test]
    fn exp_noise_oracle_matches_closed_form() {
        let spec = make_benchmark("exp_noise", &BTreeMap::new()).unwrap();
        let grid = uniform_grid(0.2, 0.9, 5).unwrap();
        let (ea, eb) = exact_effective_coeffs(&spec, &grid, 0.01).unwrap();
        let map = ExactFlowMap::new(spec, 0.01);
        let (a, b) = effective_coeffs_from_model(&map, &grid, 50_000, CoeffVariant::Standard, 8, 0).unwrap();
        for i in 0..grid.len() {
            assert!((a.values[i] - ea.values[i]).abs() <= 4.0 * a.std_err[i]);
            // Exp(1) has excess kurtosis 6, widening the std's error by √4.
            assert!((b.values[i] - eb.values[i]).abs() <= 8.0 * b.std_err[i]);
        }
    }

    #[test]
    fn deterministic_pairs_bin_to_constant_drift() {
        let x: Vec<f64> = (0..10_000).map(|i| (i as f64 * 0.7123).sin()).collect();
        let dx = vec![0.5 * 0.01; x.len()];
        let (a, b) = binned_coeffs(&x, &dx, 0.01, 10, 50).unwrap();
        assert!(a.values.iter().all(|v| (v - 0.5).abs() < 1e-12));
        assert!(b.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn binned_estimate_is_order_invariant() {
        let x: Vec<f64> = (0..5000).map(|i| (i as f64 * 1.37).sin() * 2.0).collect();
        let dx: Vec<f64> = (0..5000).map(|i| (i as f64 * 0.91).cos() * 0.1).collect();
        let (a1, b1) = binned_coeffs(&x, &dx, 0.01, 8, 20).unwrap();
        let mut idx: Vec<usize> = (0..5000).collect();
        idx.reverse();
        idx.rotate_left(1234);
        let xp: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let dp: Vec<f64> = idx.iter().map(|&i| dx[i]).collect();
        let (a2, b2) = binned_coeffs(&xp, &dp, 0.01, 8, 20).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
    }

    #[test]
    fn relative_error_homogeneity() {
        let grid = vec![0.0, 1.0, 2.0];
        let truth = CurveOnGrid::exact(grid.clone(), vec![1.0, -2.0, 0.5]);
        assert_eq!(relative_curve_error(&truth, &truth).unwrap(), 0.0);
        let doubled = CurveOnGrid::exact(grid.clone(), vec![2.0, -4.0, 1.0]);
        assert!((relative_curve_error(&truth, &doubled).unwrap() - 1.0).abs() < 1e-15);
        let zero = CurveOnGrid::exact(grid, vec![0.0; 3]);
        assert!(relative_curve_error(&zero, &truth).is_err());
    }
}
