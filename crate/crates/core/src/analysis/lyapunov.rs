//! Audit of the stationarity identity for psi at random configurations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::lift::{lyapunov_residual, ParticleConfiguration};

/// Sampled configurations with a pair closer than this are redrawn.
pub const MIN_SEPARATION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovSample {
    pub min_pair_distance: f64,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovAudit {
    pub kappa: f64,
    pub dim: usize,
    pub n_particles: usize,
    pub points: usize,
    /// Draws discarded for a pair closer than MIN_SEPARATION.
    pub rejected: usize,
    pub max_relative_residual: f64,
    pub mean_relative_residual: f64,
    pub samples: Vec<LyapunovSample>,
}

/// Evaluates the relative residual at `points` configurations with i.i.d.
/// standard normal coordinates scaled by `spread`.
pub fn lyapunov_audit(kappa: f64, dim: usize, n_particles: usize, points: usize, spread: f64, seed: u64) -> Result<LyapunovAudit> {
    if points == 0 || !(spread > 0.0) {
        return Err(invalid("the audit needs points > 0 and spread > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(points);
    let mut rejected = 0;
    while samples.len() < points {
        let pos: Vec<f64> = (0..n_particles * dim).map(|_| spread * rng.sample::<f64, _>(StandardNormal)).collect();
        let x = ParticleConfiguration::new(n_particles, dim, pos)?;
        let (rho, _, _) = x.min_pair_distance();
        if rho < MIN_SEPARATION {
            rejected += 1;
            continue;
        }
        let r = lyapunov_residual(kappa, &x)?;
        samples.push(LyapunovSample { min_pair_distance: rho, relative_residual: r.relative() });
    }
    let max = samples.iter().map(|s| s.relative_residual).fold(0.0, f64::max);
    let mean = samples.iter().map(|s| s.relative_residual).sum::<f64>() / points as f64;
    Ok(LyapunovAudit {
        kappa,
        dim,
        n_particles,
        points,
        rejected,
        max_relative_residual: max,
        mean_relative_residual: mean,
        samples,
    })
}
