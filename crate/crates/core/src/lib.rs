//! Evaluation toolkit for factor-based 3-ply legal arguments.
//!
//! Synthetic case triples go in, model-written arguments come back, and each
//! argument is scored on the factors it asserts for each case.

pub mod arguer;
pub mod backend;
pub mod case;
pub mod catalog;
pub mod extract;
pub mod fixtures;
pub mod generator;
pub mod harness;
pub mod metrics;
pub mod prompt;
pub mod report;
