//! Nash equilibria of a multi-retailer, multi-market cybersecurity investment
//! game with nonlinear budget constraints.
//!
//! The game's equilibrium conditions are stacked into a box-constrained
//! variational inequality ([`vi`]) and solved with a self-adaptive
//! projection-contraction method ([`pc`]). [`best_response`] gives an
//! independent Gauss-Seidel cross-check, [`verify`] certifies the Nash
//! property by brute-force search, and [`scenarios`] holds the built-in
//! experiments and parameter sweeps.

// `!(a <= b)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod best_response;
pub mod cli;
pub mod config;
pub mod error;
pub mod model;
pub mod pc;
pub mod scenarios;
pub mod verify;
pub mod vi;

pub use error::{Error, Result};
