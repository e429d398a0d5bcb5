//! Benchmark SDEs, ground-truth simulation and observation pairs.

mod observation;
mod simulate;
pub mod zoo;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

pub use observation::{build_observation_set, ObservationSet};
pub use simulate::{em_step, simulate, InitSampler, TrajectoryBatch};
pub use zoo::{make_benchmark, preset, Preset, BENCHMARKS};

use crate::error::{Error, Result};

/// Writes `f(x)` into the output slice.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// One step of a custom update rule: `(x, dt, noise, x_next)`.
pub type StepRule = Arc<dyn Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync>;

/// A named model parameter. Matrices are stored as rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Param {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            Param::Scalar(v) => Some(*v),
            Param::Matrix(_) => None,
        }
    }

    fn shape(&self) -> Option<(usize, usize)> {
        match self {
            Param::Scalar(_) => None,
            Param::Matrix(rows) => Some((rows.len(), rows.first().map_or(0, Vec::len))),
        }
    }
}

/// Distribution of the per-step noise draw of a custom update rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseLaw {
    Gaussian,
    /// `Exp(1)`, not centered.
    Exponential,
    /// `Lognormal(0, 1)`.
    LogNormal,
}

impl NoiseLaw {
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            NoiseLaw::Gaussian => rng.sample(StandardNormal),
            NoiseLaw::Exponential => rng.sample(Exp1),
            NoiseLaw::LogNormal => rng.sample::<f64, _>(StandardNormal).exp(),
        }
    }

    /// Maps a standard normal draw onto this law monotonically (quantile
    /// transform), so `draw` and `from_gaussian(N(0,1))` agree in law.
    pub fn from_gaussian(self, z: f64) -> f64 {
        match self {
            NoiseLaw::Gaussian => z,
            // Φ(-z) = erfc(z/√2)/2 keeps precision in the upper tail.
            NoiseLaw::Exponential => -(0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)).ln(),
            NoiseLaw::LogNormal => z.exp(),
        }
    }
}

#[derive(Clone)]
pub enum Dynamics {
    /// `dX = a(X) dt + b(X) dW`; `diffusion` fills a row-major `d × m` matrix.
    DriftDiffusion { drift: VectorField, diffusion: VectorField },
    /// An explicit one-step rule driven by `noise_dim` draws from `noise`.
    CustomStep { noise: NoiseLaw, step: StepRule },
}

/// A benchmark SDE.
#[derive(Clone)]
pub struct SdeSpec {
    pub name: String,
    pub dim: usize,
    pub noise_dim: usize,
    pub dynamics: Dynamics,
    pub params: BTreeMap<String, Param>,
}

impl fmt::Debug for SdeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.dynamics {
            Dynamics::DriftDiffusion { .. } => "drift_diffusion",
            Dynamics::CustomStep { .. } => "custom_step",
        };
        f.debug_struct("SdeSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("kind", &kind)
            .field("params", &self.params)
            .finish()
    }
}

impl SdeSpec {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        noise_dim: usize,
        dynamics: Dynamics,
        params: BTreeMap<String, Param>,
    ) -> Result<Self> {
        if dim == 0 || noise_dim == 0 || noise_dim > dim {
            return Err(Error::invalid(format!("need 1 <= noise_dim <= dim, got dim={dim}, noise_dim={noise_dim}")));
        }
        Ok(Self { name: name.into(), dim, noise_dim, dynamics, params })
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).and_then(Param::scalar)
    }

    /// `a(x)`, or `None` for custom update rules.
    pub fn drift(&self, x: &[f64]) -> Option<Vec<f64>> {
        match &self.dynamics {
            Dynamics::DriftDiffusion { drift, .. } => {
                let mut out = vec![0.0; self.dim];
                drift(x, &mut out);
                Some(out)
            }
            Dynamics::CustomStep { .. } => None,
        }
    }

    /// `b(x)` as a row-major `d × m` matrix, or `None` for custom rules.
    pub fn diffusion(&self, x: &[f64]) -> Option<Vec<f64>> {
        match &self.dynamics {
            Dynamics::DriftDiffusion { diffusion, .. } => {
                let mut out = vec![0.0; self.dim * self.noise_dim];
                diffusion(x, &mut out);
                Some(out)
            }
            Dynamics::CustomStep { .. } => None,
        }
    }

    pub fn noise_law(&self) -> NoiseLaw {
        match &self.dynamics {
            Dynamics::DriftDiffusion { .. } => NoiseLaw::Gaussian,
            Dynamics::CustomStep { noise, .. } => *noise,
        }
    }

    /// One step with an explicit noise draw (in the units of
    /// [`noise_law`](Self::noise_law)). `scratch` must hold `d·m` values.
    pub fn step_with_noise(&self, x: &[f64], dt: f64, noise: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
        match &self.dynamics {
            Dynamics::DriftDiffusion { drift, diffusion } => {
                let (d, m) = (self.dim, self.noise_dim);
                drift(x, out);
                scratch.resize(d * m, 0.0);
                diffusion(x, scratch);
                let sdt = dt.sqrt();
                for i in 0..d {
                    let row = &scratch[i * m..(i + 1) * m];
                    let shock: f64 = row.iter().zip(noise).map(|(b, xi)| b * xi).sum();
                    out[i] = x[i] + out[i] * dt + shock * sdt;
                }
            }
            Dynamics::CustomStep { step, .. } => step(x, dt, noise, out),
        }
    }
}
