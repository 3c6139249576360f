//! Gradient-field PCA for accelerating sequential linear programming on
//! band-gap maximization problems.
//!
//! The pipeline samples admissible parameter vectors from a Halton sequence,
//! evaluates the objective gradient on them, fits a centered PCA to that
//! gradient field, and then runs a multi-start trust-region SLP optimizer in
//! which every gradient is replaced by directional derivatives along the
//! mean gradient and the leading principal directions.

pub mod error;
pub mod lattice;
pub mod problem;
pub mod pca;
pub mod pipeline;
pub mod sampling;
pub mod slp;
pub mod subspace;

pub use error::{Error, Result};
pub use problem::{LinearConstraint, ParameterVector, PhysicalBox, ProblemDefinition};
