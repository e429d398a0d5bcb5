//! The learned flow map `G(x, z) ≈ X_{t+Δt} - x`, its training, and
//! autoregressive simulation with any one-step map.

mod mlp;
mod surrogate;
mod train;

pub use mlp::{Activation, FlowMapModel, Scaler, TrainMeta};
pub use surrogate::simulate_surrogate;
pub use train::{gradient_check, train, TrainConfig};

use crate::sde::SdeSpec;

/// A one-step increment map driven by a standard normal draw `z ∈ ℝᵈ`.
pub trait FlowMap: Sync {
    fn dim(&self) -> usize;

    /// Time step the map advances by.
    fn dt(&self) -> f64;

    /// Writes the increment for state `x` and draw `z` into `out`.
    fn increment(&self, x: &[f64], z: &[f64], out: &mut [f64]);
}

/// The ground-truth one-step map of a benchmark: the simulator's update
/// with its noise obtained from `z` by a quantile transform. Used as an
/// oracle in place of a trained model.
#[derive(Clone, Debug)]
pub struct ExactFlowMap {
    pub spec: SdeSpec,
    pub dt: f64,
}

impl ExactFlowMap {
    pub fn new(spec: SdeSpec, dt: f64) -> Self {
        Self { spec, dt }
    }
}

impl FlowMap for ExactFlowMap {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn increment(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        let law = self.spec.noise_law();
        let noise: Vec<f64> = z[..self.spec.noise_dim].iter().map(|v| law.from_gaussian(*v)).collect();
        self.spec.step_with_noise(x, self.dt, &noise, out, &mut Vec::new());
        for (o, xi) in out.iter_mut().zip(x) {
            *o -= xi;
        }
    }
}
