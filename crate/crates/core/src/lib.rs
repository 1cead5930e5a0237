//! Rule-constrained molecular property regression.
//!
//! The crate mines substructure-substitution rules from matched molecular
//! pairs, trains a small feed-forward regressor whose loss penalises
//! disagreement between the model's response to a substitution and the
//! rule's mean property change, and ships the split regimes, benchmark
//! generator and bound checks used to evaluate it.

pub mod chem;
pub mod loss;
pub mod error;
pub mod mmpa;
pub mod mw;
pub mod nn;
pub mod rng;
pub mod splits;
pub mod synth;
pub mod theory;
pub mod train;

pub use error::{Error, Result, SmilesError};
pub use rng::{Purpose, RandomStream};
