//! Numerical verification of weighted and fractional Poincaré inequalities
//! on discretized Euclidean balls.
//!
//! The crate discretizes the unit ball of `R^d` (`d ∈ {1, 2}`), represents
//! radially decreasing weights through their layer-cake measures, evaluates
//! local and nonlocal energies, checks each inequality against its explicit
//! constant, and estimates the sharp constants for comparison.

pub mod cli;
pub mod constants;
pub mod error;
pub mod forms;
pub mod grid;
pub mod inequalities;
pub mod linalg;
pub mod sharp;
pub mod suite;
pub mod sum;
pub mod weights;

pub use error::{Error, Result};
pub use forms::KernelSpec;
pub use grid::{CellSet, Grid, GridFunction};
pub use inequalities::InequalityReport;
pub use weights::{LayerCakeMeasure, ProfileSpec, RadialProfile};
