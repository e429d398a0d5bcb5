//! Learning the one-step stochastic flow map of an SDE from trajectory data.
//!
//! The pipeline has four stages, each in its own module:
//!
//! 1. [`sde`] simulates benchmark SDEs and regroups trajectories into
//!    `(x, Δx)` observation pairs.
//! 2. [`score`] estimates the conditional score of the diffused increment
//!    directly from those pairs by a weighted Monte Carlo average, with no
//!    network training.
//! 3. [`sampler`] integrates the reverse probability-flow ODE with that score
//!    to turn Gaussian draws `z` into labeled increments `y`.
//! 4. [`flowmap`] fits a one-hidden-layer network `G(x, z) ≈ y` by supervised
//!    MSE and rolls it forward as a surrogate simulator.
//!
//! [`eval`] holds the metrics used to compare surrogate and exact dynamics.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN.

pub mod error;
pub mod eval;
pub mod flowmap;
pub mod io;
pub mod rng;
pub mod sampler;
pub mod score;
pub mod sde;

pub use error::{Error, Result};
pub use flowmap::{ExactFlowMap, FlowMap, FlowMapModel};
pub use sampler::LabeledSet;
pub use score::{DiffusionSchedule, NeighborIndex, NeighborSubset};
pub use sde::{InitSampler, ObservationSet, SdeSpec, TrajectoryBatch};
