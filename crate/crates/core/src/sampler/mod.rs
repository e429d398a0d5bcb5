//! Reverse-time integration from Gaussian noise to generated increments, and
//! the labeled-data generation loop built on it.

mod labels;
mod ode;

pub use labels::{generate_labels, generate_labels_indexed, LabelConfig, LabelMeta, LabeledSet};
pub use ode::{reverse_ode_solve, reverse_ode_solve_with, reverse_sde_solve, ReverseWorkspace};
