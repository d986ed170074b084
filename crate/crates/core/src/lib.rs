//! Chance-constrained design optimization with optimal polynomial kinship bounds.
//!
//! The pipeline fits joint polynomial-chaos surrogates over design variables and
//! process variations, turns each probabilistic constraint into a deterministic
//! polynomial risk integral, and solves the result with a multi-start local solver
//! checked against a brute-force grid.

pub mod basis;
pub mod bench;
pub mod dist;
pub mod error;
pub mod gauss;
pub mod kinship;
pub mod multi_index;
pub mod nnls;
pub mod optimizer;
pub mod photonics;
pub mod polynomial;
pub mod quadrature;
pub mod sobol;
pub mod surrogate;

pub use error::{Error, Result};
