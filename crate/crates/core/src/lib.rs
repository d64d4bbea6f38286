//! Constrained matrix product states for sampling and optimizing over
//! bitstrings that satisfy linear equality and inequality constraints.

pub mod cmps;
pub mod indexing;
pub mod optimizer;
pub mod problems;
pub mod qregion;

pub use nalgebra;

pub use cmps::{constraints_to_mps, Bits, Center, ConstrainedMPS, MpsError, Truncation};
pub use indexing::{constraints_to_indices, ConstraintSystem, IndexError, IndexFamilies, LinkIndex};
pub use optimizer::{solve, try_solve, OptimizerConfig, OptimizerError, SolveOutcome};
pub use problems::{Instance, ProblemError};
pub use qregion::{IntBox, QRegion, Qn};
