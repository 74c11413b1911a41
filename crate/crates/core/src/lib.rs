//! Horizontal harmonic map heat flow with potential on sub-Riemannian
//! nilmanifolds: discrete operators, targets, flow integrators, heat kernel
//! diagnostics and the energy ledger.

pub mod error;
pub mod model;
pub mod operators;
pub mod target;
pub mod flow;
pub mod heatkernel;
pub mod diagnostics;
pub mod initial;
pub mod config;
pub mod scenario;

pub use error::{Error, Result};
