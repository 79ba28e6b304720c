//! Simulation and numerical verification toolkit for interacting particle
//! systems with critical, singular pair interactions.

mod error;
pub mod analysis;
pub mod kernels;
pub mod lift;
pub mod quadrature;
pub mod sde;

pub use error::{Error, Result};
