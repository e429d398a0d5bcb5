//! Training-free Monte Carlo estimation of the conditional score.
//!
//! For a conditioning state `x`, the diffused increment `z_τ` has score
//!
//! ```text
//! S(z, τ) = -Σ_m ŵ_m (z - α_τ Δx_m) / β²_τ
//! ŵ_m ∝ exp(-|z - α_τ Δx_m|² / 2β²_τ) · exp(-|x - x_m|² / 2ν²)
//! ```
//!
//! with the weights normalized over the `k` observation pairs nearest to `x`.

mod estimator;
mod kernel;
mod neighbors;
mod schedule;

pub use estimator::{score, score_into, weights, ScoreWorkspace};
pub use kernel::exp_nonpositive;
pub use neighbors::{select_neighbors, subset_size, NeighborIndex, NeighborSubset};
pub use schedule::{Coefficients, DiffusionSchedule};

/// Default fraction of the observation set used as the neighbor subset.
pub const DEFAULT_FRACTION: f64 = 0.01;
/// Default bandwidth of the spatial weights.
pub const DEFAULT_NU: f64 = 1.0;
