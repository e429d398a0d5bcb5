use std::collections::BTreeMap;

use flowlearn_core::flowmap::{gradient_check, Activation, FlowMapModel};
use flowlearn_core::score::{score, select_neighbors, weights, DiffusionSchedule, NeighborIndex};
use flowlearn_core::sde::{build_observation_set, make_benchmark, simulate, InitSampler};
use flowlearn_core::ObservationSet;
use proptest::prelude::*;

fn observations(dim: usize) -> impl Strategy<Value = ObservationSet> {
    (1usize..120).prop_flat_map(move |m| {
        (prop::collection::vec(-3.0f64..3.0, m * dim), prop::collection::vec(-1.0f64..1.0, m * dim))
            .prop_map(move |(x, dx)| ObservationSet::new(dim, 0.01, x, dx).unwrap())
    })
}

fn obs_and_point() -> impl Strategy<Value = (ObservationSet, Vec<f64>, Vec<f64>)> {
    (1usize..4).prop_flat_map(|d| {
        (observations(d), prop::collection::vec(-3.0f64..3.0, d), prop::collection::vec(-3.0f64..3.0, d))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_form_a_simplex((obs, x, z) in obs_and_point(), tau in 0.0f64..=1.0, fraction in 0.01f64..=1.0) {
        let subset = select_neighbors(&obs, &x, fraction, 1.0).unwrap();
        let w = weights(&z, tau, &subset, &DiffusionSchedule::default()).unwrap();
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn index_matches_brute_force((obs, x, _) in obs_and_point(), fraction in 0.01f64..=1.0, nu in 0.1f64..3.0) {
        let brute = select_neighbors(&obs, &x, fraction, nu).unwrap();
        let fast = NeighborIndex::new(&obs).select(&x, fraction, nu).unwrap();
        prop_assert_eq!(brute.indices, fast.indices);
        prop_assert_eq!(brute.spatial_logw, fast.spatial_logw);
    }

    #[test]
    fn score_is_permutation_invariant((obs, x, z) in obs_and_point(), tau in 0.05f64..0.95, seed in any::<u64>()) {
        let d = obs.dim;
        let mut order: Vec<usize> = (0..obs.len()).collect();
        let mut state = seed | 1;
        for i in (1..order.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            order.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let px = order.iter().flat_map(|&m| obs.state(m).to_vec()).collect();
        let pdx = order.iter().flat_map(|&m| obs.increment(m).to_vec()).collect();
        let permuted = ObservationSet::new(d, obs.dt, px, pdx).unwrap();
        let sched = DiffusionSchedule::default();
        let a = score(&z, tau, &select_neighbors(&obs, &x, 1.0, 1.0).unwrap(), &sched).unwrap();
        let b = score(&z, tau, &select_neighbors(&permuted, &x, 1.0, 1.0).unwrap(), &sched).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0), "{} vs {}", u, v);
        }
    }

    #[test]
    fn score_tends_to_standard_normal_near_one((obs, x, z) in obs_and_point()) {
        let subset = select_neighbors(&obs, &x, 0.5, 1.0).unwrap();
        let s = score(&z, 1.0 - 1e-4, &subset, &DiffusionSchedule::default()).unwrap();
        for (si, zi) in s.iter().zip(&z) {
            prop_assert!((si + zi).abs() <= 1e-2);
        }
    }

    #[test]
    fn pairs_chain_along_trajectories(h in 1usize..20, l in 1usize..20, seed in any::<u64>()) {
        let spec = make_benchmark("ou2d", &BTreeMap::new()).unwrap();
        let init = InitSampler::Uniform { low: vec![-1.0, -1.0], high: vec![1.0, 1.0] };
        let batch = simulate(&spec, &init, h, l, 0.01, seed, 1).unwrap();
        let obs = build_observation_set(&batch).unwrap();
        prop_assert_eq!(obs.len(), h * l);
        for m in 0..obs.len() - h {
            for k in 0..2 {
                let next = obs.state(m)[k] + obs.increment(m)[k];
                prop_assert!((next - obs.state(m + h)[k]).abs() <= 1e-12 * next.abs().max(1.0));
            }
        }
    }

    #[test]
    fn simulation_ignores_worker_count(seed in any::<u64>(), workers in 2usize..6) {
        let spec = make_benchmark("double_well", &BTreeMap::new()).unwrap();
        let init = InitSampler::Uniform { low: vec![-2.0], high: vec![2.0] };
        let a = simulate(&spec, &init, 17, 9, 0.01, seed, 1).unwrap();
        let b = simulate(&spec, &init, 17, 9, 0.01, seed, workers).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn observation_files_round_trip(obs in (1usize..4).prop_flat_map(observations)) {
        let back = ObservationSet::from_reader(&obs.to_bytes()[..]).unwrap();
        prop_assert_eq!(back.digest(), obs.digest());
        prop_assert_eq!(back, obs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mlp_gradients_match_central_differences(d in 1usize..=3, h in 1usize..=8, rows in 1usize..10, seed in any::<u64>()) {
        let err = gradient_check(d, h, rows, Activation::Tanh, seed).unwrap();
        prop_assert!(err <= 1e-5, "relative error {}", err);
    }

    #[test]
    fn model_files_round_trip(d in 1usize..=3, h in 1usize..=8, vals in prop::collection::vec(-2.0f64..2.0, 64)) {
        let mut m = FlowMapModel::zeros(d, h, 0.01);
        for (w, v) in m.w1.iter_mut().chain(m.w2.iter_mut()).zip(vals.iter().cycle()) {
            *w = *v;
        }
        m.meta.best_val_mse = 0.25;
        m.meta.final_val_mse = 0.5;
        prop_assert_eq!(FlowMapModel::from_reader(&m.to_bytes()[..]).unwrap(), m);
    }
}
