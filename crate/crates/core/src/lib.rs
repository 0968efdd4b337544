//! Scaling-law toolkit for iteratively magnitude-pruned network families.
//!
//! The crate evaluates, fits and inverts a five-constant law that predicts the test error
//! of a pruned network from its density, depth, width and (through the unpruned error)
//! training-set size. Around the law sit a fit-stability harness, baseline functional
//! forms for comparison, a parameter-count minimizer, a synthetic ground-truth generator
//! and a small iterative-magnitude-pruning harness that produces real pruning curves.

pub mod baseline;
pub mod dataset;
pub mod error;
pub mod fit;
pub mod frontier;
pub mod imp;
pub mod law;
pub mod stability;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
