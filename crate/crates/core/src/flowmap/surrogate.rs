use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::FlowMap;
use crate::error::{Error, Result};
use crate::rng;
use crate::sde::TrajectoryBatch;

/// Rolls `map` forward autoregressively: `x_{k+1} = x_k + G(x_k, z_k)` with
/// fresh `z_k ~ N(0, I)`. Path `i` draws from stream `i` of `seed`.
pub fn simulate_surrogate<F: FlowMap + ?Sized>(
    map: &F,
    x0: &[f64],
    steps: usize,
    n_paths: usize,
    seed: u64,
    workers: usize,
) -> Result<TrajectoryBatch> {
    let d = map.dim();
    if steps == 0 || n_paths == 0 {
        return Err(Error::invalid("need at least one path and one step"));
    }
    if x0.len() != d || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("x0 must be a finite vector of length {d}")));
    }
    let run = |i: usize| -> Result<Vec<f64>> {
        let mut rng = rng::stream(seed, i as u64);
        let mut path = vec![0.0; (steps + 1) * d];
        path[..d].copy_from_slice(x0);
        let mut z = vec![0.0; d];
        let mut inc = vec![0.0; d];
        for k in 0..steps {
            z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
            let (head, tail) = path.split_at_mut((k + 1) * d);
            let x = &head[k * d..];
            map.increment(x, &z, &mut inc);
            for ((n, x), g) in tail[..d].iter_mut().zip(x).zip(&inc) {
                *n = x + g;
            }
            if tail[..d].iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("surrogate path {i} blew up at step {}", k + 1)));
            }
        }
        Ok(path)
    };
    let paths: Result<Vec<Vec<f64>>> = rng::with_workers(workers, || (0..n_paths).into_par_iter().map(run).collect());
    let mut batch = TrajectoryBatch::from_paths(paths?, d, map.dt(), seed)?;
    batch.steps = steps;
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::flowmap::{ExactFlowMap, FlowMapModel};
    use crate::sde::make_benchmark;

    #[test]
    fn zero_network_paths_are_constant() {
        let model = FlowMapModel::zeros(2, 4, 0.01);
        let batch = simulate_surrogate(&model, &[0.5, -2.0], 20, 5, 1, 0).unwrap();
        for p in 0..5 {
            for k in 0..=20 {
                assert_eq!(batch.state(p, k), &[0.5, -2.0]);
            }
        }
    }

    #[test]
    fn same_seed_same_ensemble() {
        let map = ExactFlowMap::new(make_benchmark("ou1d", &BTreeMap::new()).unwrap(), 0.01);
        let a = simulate_surrogate(&map, &[1.5], 30, 64, 9, 1).unwrap();
        let b = simulate_surrogate(&map, &[1.5], 30, 64, 9, 4).unwrap();
        assert_eq!(a, b);
        let c = simulate_surrogate(&map, &[1.5], 30, 64, 10, 1).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn exact_ou_map_tracks_analytic_mean() {
        let map = ExactFlowMap::new(make_benchmark("ou1d", &BTreeMap::new()).unwrap(), 0.01);
        let batch = simulate_surrogate(&map, &[1.5], 100, 20_000, 3, 0).unwrap();
        let end = batch.snapshot(100);
        let mean = end.iter().sum::<f64>() / end.len() as f64;
        // Euler-Maruyama mean of OU: mu + (x0 - mu)(1 - theta dt)^n.
        let expect = 1.2 + 0.3 * 0.99f64.powi(100);
        let var_bound: f64 = 0.09 / 2.0 / 20_000.0;
        assert!((mean - expect).abs() < 4.0 * var_bound.sqrt(), "{mean} vs {expect}");
    }

    #[test]
    fn blow_up_is_reported() {
        struct Doubling;
        impl FlowMap for Doubling {
            fn dim(&self) -> usize {
                1
            }
            fn dt(&self) -> f64 {
                1.0
            }
            fn increment(&self, x: &[f64], _z: &[f64], out: &mut [f64]) {
                out[0] = x[0] * 1e300;
            }
        }
        let err = simulate_surrogate(&Doubling, &[1.0], 5, 2, 0, 0).unwrap_err();
        assert!(err.is_numerical());
    }
}
