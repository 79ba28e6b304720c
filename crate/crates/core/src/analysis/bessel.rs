//! Two-body reduction: for N = 2 and an odd kernel, Z = X1 - X2 solves
//! dZ = -K(Z) dt + 2 dW, and |Z|/2 is a Bessel process of dimension
//! nu = d - sqrt(kappa)(d-2)/4 with generator f''/2 + (nu-1)/(2r) f'.

use serde::{Deserialize, Serialize};
use statrs::function::{erf::erfc, gamma::{gamma_ur, ln_gamma}};

use crate::error::{invalid, Error, Result};

/// Default radial grid size of the first-passage solver.
pub const DEFAULT_GRID_NODES: usize = 2000;
/// Largest coarse/fine disagreement accepted by the Richardson check.
pub const RICHARDSON_TOL: f64 = 1e-3;

/// Bessel dimension of half the pair distance under a Hardy attraction of strength kappa.
pub fn bessel_dimension(kappa: f64, dim: usize) -> f64 {
    dim as f64 - kappa.sqrt() * (dim as f64 - 2.0) / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselOracle {
    pub nu: f64,
    pub kappa: f64,
    pub dim: usize,
}

impl BesselOracle {
    pub fn new(kappa: f64, dim: usize) -> Result<Self> {
        if dim < 3 {
            return Err(Error::UnsupportedDim(dim));
        }
        if !(kappa >= 0.0) {
            return Err(invalid("kappa must be >= 0"));
        }
        Ok(Self { nu: bessel_dimension(kappa, dim), kappa, dim })
    }

    /// True iff the pair distance reaches zero with positive probability.
    pub fn hits_zero(&self) -> bool {
        self.nu < 2.0
    }

    /// Probability that the pair distance, started at `distance`, falls below
    /// `collision_radius` before `horizon`.
    pub fn collision_probability(&self, distance: f64, collision_radius: f64, horizon: f64) -> Result<f64> {
        bessel_hit_probability(self.nu, distance / 2.0, collision_radius / 2.0, horizon)
    }
}

/// P(Bessel(nu) from r0 reaches `threshold` before `horizon`), from a
/// Crank–Nicolson first-passage solve in x = ln r, checked by Richardson
/// extrapolation against a grid of half the resolution.
pub fn bessel_hit_probability(nu: f64, r0: f64, threshold: f64, horizon: f64) -> Result<f64> {
    bessel_hit_probability_with(nu, r0, threshold, horizon, DEFAULT_GRID_NODES)
}

pub fn bessel_hit_probability_with(nu: f64, r0: f64, threshold: f64, horizon: f64, nodes: usize) -> Result<f64> {
    if !(r0 > threshold && threshold >= 0.0 && horizon > 0.0 && nu.is_finite()) {
        return Err(invalid(format!("need r0 > threshold >= 0 and horizon > 0 (r0={r0}, a={threshold}, T={horizon})")));
    }
    if nodes < 50 {
        return Err(invalid("first-passage grid needs at least 50 nodes"));
    }
    let a = if threshold > 0.0 {
        threshold
    } else if nu >= 2.0 {
        return Ok(0.0);
    } else {
        1e-8 * r0
    };
    let coarse = first_passage(nu, r0, a, horizon, nodes / 2)?;
    let fine = first_passage(nu, r0, a, horizon, nodes)?;
    if (fine - coarse).abs() > RICHARDSON_TOL {
        return Err(Error::GridUnderresolved { coarse, fine });
    }
    Ok((fine + (fine - coarse) / 3.0).clamp(0.0, 1.0))
}

/// Crank–Nicolson with Rannacher start for u_t = e^{-2x}/2 (u_xx + (nu-2) u_x),
/// u = 1 at x = ln a, u = 0 at the far boundary, u(0) = 0; u(T, ln r0) is the
/// hitting probability. Time steps are graded quadratically toward t = 0.
fn first_passage(nu: f64, r0: f64, a: f64, horizon: f64, nodes: usize) -> Result<f64> {
    let r_max = (r0 + 12.0 * horizon.sqrt()).max(4.0 * r0);
    let (xa, x0, xm) = (a.ln(), r0.ln(), r_max.ln());
    let inner = ((nodes as f64) * (x0 - xa) / (xm - xa)).round().max(10.0) as usize;
    let h = (x0 - xa) / inner as f64;
    let m = inner + ((xm - x0) / h).ceil().max(1.0) as usize;
    // interior unknowns 1..m-1, coefficients of L u_i = lo u_{i-1} + di u_i + up u_{i+1}
    let mut lo = vec![0.0; m + 1];
    let mut di = vec![0.0; m + 1];
    let mut up = vec![0.0; m + 1];
    for i in 1..m {
        let c = 0.5 * (-2.0 * (xa + i as f64 * h)).exp();
        let diff = c / (h * h);
        let conv = c * (nu - 2.0) / (2.0 * h);
        lo[i] = diff - conv;
        di[i] = -2.0 * diff;
        up[i] = diff + conv;
    }
    let steps = (nodes).max(200);
    let time = |k: usize| horizon * (k as f64 / steps as f64).powi(2);
    let mut u = vec![0.0; m + 1];
    u[0] = 1.0;
    let mut rhs = vec![0.0; m + 1];
    let mut cp = vec![0.0; m + 1];
    // theta = 1 for the first four half steps, then 1/2
    let mut substeps: Vec<(f64, f64)> = Vec::with_capacity(steps + 4);
    for k in 0..steps {
        let dt = time(k + 1) - time(k);
        if k < 2 {
            substeps.push((dt / 2.0, 1.0));
            substeps.push((dt / 2.0, 1.0));
        } else {
            substeps.push((dt, 0.5));
        }
    }
    for (dt, theta) in substeps {
        let ex = (1.0 - theta) * dt;
        let im = theta * dt;
        for i in 1..m {
            rhs[i] = u[i] + ex * (lo[i] * u[i - 1] + di[i] * u[i] + up[i] * u[i + 1]);
        }
        // boundary u0 = 1 enters the first row
        rhs[1] += im * lo[1] * 1.0;
        // Thomas algorithm on (1 - im L)
        let mut prev_c = 0.0;
        let mut prev_d = 0.0;
        for i in 1..m {
            let a_i = if i > 1 { -im * lo[i] } else { 0.0 };
            let b_i = 1.0 - im * di[i];
            let c_i = if i + 1 < m { -im * up[i] } else { 0.0 };
            let denom = b_i - a_i * prev_c;
            cp[i] = c_i / denom;
            rhs[i] = (rhs[i] - a_i * prev_d) / denom;
            prev_c = cp[i];
            prev_d = rhs[i];
        }
        u[m - 1] = rhs[m - 1];
        for i in (1..m - 1).rev() {
            u[i] = rhs[i] - cp[i] * u[i + 1];
        }
        u[0] = 1.0;
        u[m] = 0.0;
    }
    let p = u[inner];
    if !p.is_finite() {
        return Err(Error::GridUnderresolved { coarse: f64::NAN, fine: p });
    }
    Ok(p)
}

/// P(T_0 <= T) for nu < 2 started at r0: Q(1 - nu/2, r0^2/(2T)).
pub fn hit_zero_probability(nu: f64, r0: f64, horizon: f64) -> f64 {
    if nu >= 2.0 {
        0.0
    } else {
        gamma_ur(1.0 - nu / 2.0, r0 * r0 / (2.0 * horizon))
    }
}

/// Infinite-horizon probability of reaching a < r0: (a/r0)^{nu-2} for nu > 2, else 1.
pub fn eventual_hit_probability(nu: f64, r0: f64, a: f64) -> f64 {
    if nu > 2.0 {
        (a / r0).powf(nu - 2.0)
    } else {
        1.0
    }
}

/// Exact finite-horizon hitting probability for nu = 3 (|3-d Brownian motion|).
pub fn hit_probability_nu3(r0: f64, a: f64, horizon: f64) -> f64 {
    a / r0 * erfc((r0 - a) / (2.0 * horizon).sqrt())
}

/// Modified Bessel function I_mu(z) e^{-z} by its power series, summed in log space.
pub fn scaled_bessel_i(mu: f64, z: f64) -> f64 {
    if z == 0.0 {
        return if mu == 0.0 { 1.0 } else { 0.0 };
    }
    let lz = (z / 2.0).ln();
    let mut sum = 0.0;
    let mut k = 0usize;
    loop {
        let kf = k as f64;
        let lt = (2.0 * kf + mu) * lz - ln_gamma(kf + 1.0) - ln_gamma(kf + mu + 1.0) - z;
        let t = lt.exp();
        sum += t;
        if kf > z && t < 1e-17 * sum {
            break;
        }
        k += 1;
        if k > 100_000 {
            break;
        }
    }
    sum
}

/// Transition density of Bessel(nu) in the radial variable:
/// p(t, r0, r) = (r/t)(r/r0)^mu exp(-(r0^2 + r^2)/(2t)) I_mu(r r0/t), mu = nu/2 - 1.
pub fn bessel_transition_density(nu: f64, t: f64, r0: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let mu = nu / 2.0 - 1.0;
    let z = r * r0 / t;
    let ln = (r / t).ln() + mu * (r / r0).ln() - (r0 - r).powi(2) / (2.0 * t);
    ln.exp() * scaled_bessel_i(mu, z)
}
