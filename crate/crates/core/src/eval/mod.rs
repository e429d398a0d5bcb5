//! Evaluation: effective drift/diffusion curves, ensemble moments, and
//! distribution comparisons.

mod coeffs;
mod density;
mod moments;

pub use coeffs::{
    binned_coeffs, central_grid, effective_coeffs_from_model, effective_coeffs_from_trajectories,
    exact_effective_coeffs, relative_curve_error, uniform_grid, CoeffVariant, CurveOnGrid,
};
pub use density::{
    kde_density, ks_statistic, ks_two_sample, normal_cdf, silverman_bandwidth, tv_distance, well_occupancy,
};
pub use moments::{endpoint_moment_errors, ensemble_moments, EndpointErrors, MomentSeries};

/// Defaults used by the evaluation stage.
pub const DEFAULT_GRID_POINTS: usize = 100;
pub const DEFAULT_GRID_COVERAGE: f64 = 0.9;
pub const DEFAULT_N_Z: usize = 100_000;
pub const DEFAULT_BINS: usize = 40;
pub const DEFAULT_MIN_COUNT: usize = 200;
