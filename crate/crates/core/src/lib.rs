//! Decentralised nonconvex consensus optimisation over subgraph covers:
//! an asynchronous ADMM engine, its block-coordinate splitting counterpart,
//! and the analysis and experiment tooling around them.

pub mod admm;
pub mod analysis;
pub mod error;
pub mod graph;
pub mod harness;
pub mod par;
pub mod problems;
pub mod rng;
pub mod splitting;

pub use error::{Error, Result};
