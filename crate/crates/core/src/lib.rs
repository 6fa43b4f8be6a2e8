//! Simulation and verification tools for a repulsive chemotaxis system with
//! logarithmic sensitivity on boxes with Neumann boundary conditions.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod checkpoint;
pub mod config;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod grid;
pub mod initial;
pub mod ineq;
pub mod linearized;
pub mod manifest;
pub mod norms;
mod par;
pub mod plot;
pub mod random;
pub mod rates;
pub mod spectral;
pub mod stationary;
pub mod sweep;
pub mod table;

pub use error::{Error, Result};
