//! The benchmark zoo and per-benchmark experiment presets.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Dynamics, InitSampler, NoiseLaw, Param, SdeSpec};
use crate::error::{Error, Result};

pub const BENCHMARKS: &[&str] = &[
    "ou1d",
    "gbm",
    "exp_diffusion",
    "trig",
    "double_well",
    "exp_noise",
    "lognormal_noise",
    "ou2d",
    "oscillator2d",
    "ou5d_sigma1",
    "ou5d_sigma2",
    "ou5d_sigma3",
    "ou5d_sigma4",
    "ou5d_sigma5",
];

const B5: [[f64; 5]; 5] = [
    [0.2, 1.0, 0.2, 0.4, 0.2],
    [-1.0, 0.0, 0.2, 0.8, -1.0],
    [0.2, 0.2, -0.8, -1.2, 0.2],
    [-0.6, 0.0, 1.2, -0.2, 0.6],
    [0.2, 0.2, 0.6, 0.4, 0.0],
];

fn diag(v: &[f64]) -> Vec<Vec<f64>> {
    (0..v.len()).map(|i| (0..v.len()).map(|j| if i == j { v[i] } else { 0.0 }).collect()).collect()
}

fn rows<const N: usize>(m: &[[f64; N]]) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.to_vec()).collect()
}

fn sigma5(which: u32) -> Vec<Vec<f64>> {
    match which {
        1 => diag(&[0.0, 0.0, 1.0, 0.0, 0.0]),
        2 => diag(&[0.0, 0.8, 0.0, 0.0, -0.8]),
        3 => rows(&[
            [0.8, 0.2, 0.0, 0.0, 0.0],
            [-0.4, 0.6, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.7, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0],
        ]),
        4 => rows(&[
            [0.7, 0.0, -0.4, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0],
            [0.1, 0.0, 0.6, 0.2, -0.1],
            [0.0, 0.0, 0.1, -0.6, 0.2],
            [0.0, 0.0, 0.0, 0.3, 0.8],
        ]),
        _ => rows(&[
            [0.8, 0.2, 0.1, -0.3, 0.1],
            [-0.3, 0.6, 0.1, 0.0, -0.1],
            [0.2, -0.1, 0.9, 0.1, 0.2],
            [0.1, 0.1, -0.2, 0.7, 0.0],
            [-0.1, 0.1, 0.1, -0.1, 0.5],
        ]),
    }
}

fn default_params(name: &str) -> Option<BTreeMap<String, Param>> {
    let s = |pairs: &[(&str, f64)]| {
        pairs.iter().map(|(k, v)| (k.to_string(), Param::Scalar(*v))).collect::<BTreeMap<_, _>>()
    };
    let mats = |b: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>| {
        BTreeMap::from([("B".to_string(), Param::Matrix(b)), ("Sigma".to_string(), Param::Matrix(sigma))])
    };
    Some(match name {
        "ou1d" => s(&[("theta", 1.0), ("mu", 1.2), ("sigma", 0.3)]),
        "gbm" => s(&[("mu", 2.0), ("sigma", 1.0)]),
        "exp_diffusion" => s(&[("mu", 5.0), ("sigma", 0.5)]),
        "trig" => s(&[("k", 1.0), ("sigma", 0.5)]),
        "double_well" => s(&[("sigma", 0.5)]),
        "exp_noise" => s(&[("mu", -2.0), ("sigma", 0.1)]),
        "lognormal_noise" => s(&[("m", (-0.5f64).exp()), ("theta", 1.0), ("sigma", 0.3)]),
        "ou2d" => mats(rows(&[[-1.0, -0.5], [-1.0, -1.0]]), diag(&[1.0, 0.5])),
        "oscillator2d" => mats(rows(&[[0.0, 1.0], [-1.0, 0.0]]), diag(&[0.0, 0.1])),
        _ => {
            let which = name.strip_prefix("ou5d_sigma")?.parse::<u32>().ok().filter(|w| (1..=5).contains(w))?;
            mats(rows(&B5), sigma5(which))
        }
    })
}

fn scalar_field(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> super::VectorField {
    Arc::new(move |x: &[f64], out: &mut [f64]| out[0] = f(x[0]))
}

/// Builds the named benchmark with its default parameters, then applies
/// `overrides`.
pub fn make_benchmark(name: &str, overrides: &BTreeMap<String, Param>) -> Result<SdeSpec> {
    let mut params = default_params(name).ok_or_else(|| Error::UnknownBenchmark(name.to_string()))?;
    for (key, value) in overrides {
        let current = params
            .get(key)
            .ok_or_else(|| Error::UnknownParameter { benchmark: name.to_string(), param: key.clone() })?;
        if current.shape() != value.shape() {
            return Err(Error::invalid(format!(
                "override `{key}` of `{name}` must have shape {:?}, got {:?}",
                current.shape(),
                value.shape()
            )));
        }
        params.insert(key.clone(), value.clone());
    }
    let p = |k: &str| params[k].scalar().expect("scalar parameter");

    let (dim, dynamics) = match name {
        "ou1d" => {
            let (theta, mu, sigma) = (p("theta"), p("mu"), p("sigma"));
            (1, dd(scalar_field(move |x| theta * (mu - x)), scalar_field(move |_| sigma)))
        }
        "gbm" => {
            let (mu, sigma) = (p("mu"), p("sigma"));
            (1, dd(scalar_field(move |x| mu * x), scalar_field(move |x| sigma * x)))
        }
        "exp_diffusion" => {
            let (mu, sigma) = (p("mu"), p("sigma"));
            (1, dd(scalar_field(move |x| -mu * x), scalar_field(move |x| sigma * (-x * x).exp())))
        }
        "trig" => {
            let (k, sigma) = (p("k"), p("sigma"));
            let w = 2.0 * k * std::f64::consts::PI;
            (1, dd(scalar_field(move |x| (w * x).sin()), scalar_field(move |x| sigma * (w * x).cos())))
        }
        "double_well" => {
            let sigma = p("sigma");
            (1, dd(scalar_field(|x| x - x * x * x), scalar_field(move |_| sigma)))
        }
        "exp_noise" => {
            let (mu, sigma) = (p("mu"), p("sigma"));
            let step = move |x: &[f64], dt: f64, eta: &[f64], out: &mut [f64]| {
                out[0] = x[0] + mu * x[0] * dt + sigma * dt.sqrt() * eta[0];
            };
            (1, Dynamics::CustomStep { noise: NoiseLaw::Exponential, step: Arc::new(step) })
        }
        "lognormal_noise" => {
            let (m, theta, sigma) = (p("m"), p("theta"), p("sigma"));
            let step = move |x: &[f64], dt: f64, eta: &[f64], out: &mut [f64]| {
                out[0] = m.powf(dt) * x[0].powf(1.0 - theta * dt) * eta[0].powf(sigma * dt.sqrt());
            };
            (1, Dynamics::CustomStep { noise: NoiseLaw::LogNormal, step: Arc::new(step) })
        }
        _ => {
            let (Param::Matrix(b), Param::Matrix(sigma)) = (&params["B"], &params["Sigma"]) else {
                unreachable!("linear benchmarks carry matrix parameters")
            };
            let d = b.len();
            let b_flat: Vec<f64> = b.concat();
            let s_flat: Vec<f64> = sigma.concat();
            let drift = move |x: &[f64], out: &mut [f64]| {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = b_flat[i * d..(i + 1) * d].iter().zip(x).map(|(a, v)| a * v).sum();
                }
            };
            let diffusion = move |_: &[f64], out: &mut [f64]| out.copy_from_slice(&s_flat);
            (d, dd(Arc::new(drift), Arc::new(diffusion)))
        }
    };
    SdeSpec::new(name, dim, dim, dynamics, params)
}

fn dd(drift: super::VectorField, diffusion: super::VectorField) -> Dynamics {
    Dynamics::DriftDiffusion { drift, diffusion }
}

/// Experiment constants for one benchmark, at full scale with a desk-scale
/// alternative for the expensive counts.
#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub init: InitSampler,
    pub dt: f64,
    /// Steps per training trajectory; the data horizon is `steps · dt`.
    pub steps: usize,
    pub full_trajectories: usize,
    pub desk_trajectories: usize,
    pub full_labels: usize,
    pub desk_labels: usize,
    pub full_reverse_steps: usize,
    pub desk_reverse_steps: usize,
    pub full_paths: usize,
    pub desk_paths: usize,
    /// Initial state of the prediction ensemble.
    pub x0: Vec<f64>,
    pub predict_horizon: f64,
    pub desk_predict_horizon: f64,
    /// End time used for the moment errors.
    pub eval_time: f64,
    /// Conditioning state of the one-step conditional density comparison.
    pub pdf_state: Vec<f64>,
}

pub fn preset(name: &str) -> Result<Preset> {
    let uniform = |low: &[f64], high: &[f64]| InitSampler::Uniform { low: low.to_vec(), high: high.to_vec() };
    #[allow(clippy::type_complexity)]
    let (init, steps, full_h, full_j, x0, horizon, eval_time, pdf_state): (
        InitSampler,
        usize,
        usize,
        usize,
        Vec<f64>,
        f64,
        f64,
        Vec<f64>,
    ) = match name {
        "ou1d" => (uniform(&[0.0], &[2.5]), 100, 15_000, 50_000, vec![1.5], 5.0, 4.0, vec![1.5]),
        "gbm" => (uniform(&[0.0], &[2.0]), 50, 100_000, 120_000, vec![0.5], 1.0, 1.0, vec![5.0]),
        "exp_diffusion" => (uniform(&[-1.0], &[1.0]), 100, 150_000, 60_000, vec![-0.4], 10.0, 10.0, vec![-0.3]),
        "trig" => (uniform(&[0.35], &[0.7]), 100, 200_000, 60_000, vec![0.6], 10.0, 10.0, vec![0.5]),
        "double_well" => (uniform(&[-2.5], &[2.5]), 100, 100_000, 60_000, vec![1.5], 500.0, 300.0, vec![1.5]),
        "exp_noise" => (uniform(&[0.2], &[0.9]), 100, 150_000, 60_000, vec![0.34], 5.0, 5.0, vec![0.34]),
        "lognormal_noise" => (uniform(&[0.1], &[2.0]), 100, 200_000, 60_000, vec![0.4], 5.0, 5.0, vec![0.4]),
        "ou2d" => {
            (uniform(&[-4.0, -3.0], &[4.0, 3.0]), 100, 350_000, 120_000, vec![0.3, 0.4], 5.0, 5.0, vec![0.0, 0.0])
        }
        "oscillator2d" => {
            (uniform(&[-1.5, -1.5], &[1.5, 1.5]), 100, 3_000_000, 50_000, vec![0.3, 0.4], 6.5, 6.5, vec![-0.5, -0.5])
        }
        n if n.starts_with("ou5d_sigma") && default_params(n).is_some() => (
            uniform(&[-1.0; 5], &[1.0; 5]),
            100,
            3_000_000,
            50_000,
            vec![0.3, -0.2, -0.7, 0.5, 0.6],
            5.0,
            5.0,
            vec![0.3, -0.2, -0.7, 0.5, 0.6],
        ),
        _ => return Err(Error::UnknownBenchmark(name.to_string())),
    };
    let name = BENCHMARKS.iter().copied().find(|b| *b == name).expect("registered");
    let desk_trajectories = if name == "gbm" { 20_000 } else { 10_000 };
    let desk_predict_horizon = if name == "double_well" { 100.0 } else { horizon };
    Ok(Preset {
        name,
        init,
        dt: 0.01,
        steps,
        full_trajectories: full_h,
        desk_trajectories,
        full_labels: full_j,
        desk_labels: 20_000,
        full_reverse_steps: 10_000,
        desk_reverse_steps: 2_000,
        full_paths: 500_000,
        desk_paths: if name == "double_well" { 1_000 } else { 20_000 },
        x0,
        predict_horizon: horizon,
        desk_predict_horizon,
        eval_time: eval_time.min(desk_predict_horizon),
        pdf_state,
    })
}
