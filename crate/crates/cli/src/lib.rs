//! Config-driven pipeline around `flowlearn-core`: simulate, label, train,
//! predict and evaluate, each stage writing an artifact and a manifest that
//! ties it to the config digest of everything upstream.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use config::{ExperimentConfig, GridSpec, Scale, StageDigests};
pub use error::CliError;
pub use pipeline::{resolve_out_dir, Manifest, Pipeline, STAGES};
pub use report::{evaluate_map, MetricsReport};
