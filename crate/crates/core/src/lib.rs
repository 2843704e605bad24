//! Bayesian additive regression trees for borrowing external control data
//! in randomized trials, with hierarchical-model comparators, effect
//! estimands, a simulation harness and a permutation diagnostic.

// Negated float comparisons deliberately treat NaN as invalid input.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bart;
pub mod cli;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod effects;
pub mod error;
pub mod models;
pub mod posterior;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
