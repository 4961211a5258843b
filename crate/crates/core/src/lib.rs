//! Decentralized stochastic first-order optimization over directed graphs.
//!
//! The crate simulates push-sum gradient tracking (S-ADDOPT) and its
//! baselines (ADDOPT, SGP, GP) on column-stochastic digraphs, and evaluates
//! the associated convergence theory: pi-weighted norms, the contraction
//! factor `sigma_B`, the three-state linear error system, step-size bounds
//! and residual-ball estimates.

pub mod analysis;
pub mod digraph;
pub mod engine;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod objective;
pub mod spectral;

pub use error::{Error, Result};
