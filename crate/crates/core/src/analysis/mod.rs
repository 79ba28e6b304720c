//! Numerical verification: Rayleigh quotients, the two-body Bessel oracle,
//! phase scans, integrability tests, heat-kernel, Feynman–Kac and Krylov checks.

pub mod bessel;
pub mod feynman_kac;
pub mod heat_kernel;
pub mod krylov;
pub mod lyapunov;
pub mod multiparticle;
pub mod phase;
pub mod psi;
pub mod trial;

pub use bessel::{bessel_dimension, bessel_hit_probability, BesselOracle};
