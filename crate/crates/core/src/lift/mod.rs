//! Lifting of pair kernels to the drift on R^{Nd}, the invariant density and
//! its Lyapunov identity, the heat-kernel envelope profile and the
//! many-particle Hardy functional.

mod hardy;

pub use hardy::{multiparticle_hardy_ratio, pair_product_oracle_ratio, HardyRatio, PairProductTrial};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{self, KernelSpec, MollifiedKernel, SINGULARITY_GUARD};

/// N particle positions in R^d stored as one flat vector of length N*d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConfigurationRecord")]
pub struct ParticleConfiguration {
    n_particles: usize,
    dim: usize,
    positions: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigurationRecord {
    n_particles: usize,
    dim: usize,
    positions: Vec<f64>,
}

impl TryFrom<ConfigurationRecord> for ParticleConfiguration {
    type Error = Error;
    fn try_from(r: ConfigurationRecord) -> Result<Self> {
        Self::new(r.n_particles, r.dim, r.positions)
    }
}

impl ParticleConfiguration {
    pub fn new(n_particles: usize, dim: usize, positions: Vec<f64>) -> Result<Self> {
        if dim < 3 {
            return Err(Error::UnsupportedDim(dim));
        }
        if n_particles < 2 {
            return Err(invalid(format!("need at least two particles, got {n_particles}")));
        }
        if positions.len() != n_particles * dim {
            return Err(invalid(format!(
                "{} coordinates given for {n_particles} particles in dimension {dim}",
                positions.len()
            )));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        Ok(Self { n_particles, dim, positions })
    }

    /// Builds a configuration from per-particle blocks.
    pub fn from_blocks(blocks: &[Vec<f64>]) -> Result<Self> {
        let dim = blocks.first().map(Vec::len).unwrap_or(0);
        if blocks.iter().any(|b| b.len() != dim) {
            return Err(invalid("particle blocks differ in length"));
        }
        Self::new(blocks.len(), dim, blocks.concat())
    }

    /// Two particles at distance `distance` on the first axis, symmetric about 0.
    pub fn pair(dim: usize, distance: f64) -> Result<Self> {
        let mut p = vec![0.0; 2 * dim];
        p[0] = distance / 2.0;
        p[dim] = -distance / 2.0;
        Self::new(2, dim, p)
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn pair_distance(&self, i: usize, j: usize) -> f64 {
        pair_distance(&self.positions, self.dim, i, j)
    }

    /// Smallest pair distance and the pair attaining it.
    pub fn min_pair_distance(&self) -> (f64, usize, usize) {
        min_pair_distance(&self.positions, self.n_particles, self.dim)
    }

    /// Center of mass of the particles.
    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for i in 0..self.n_particles {
            for (ck, xk) in c.iter_mut().zip(self.block(i)) {
                *ck += xk / self.n_particles as f64;
            }
        }
        c
    }
}

pub(crate) fn pair_distance(x: &[f64], dim: usize, i: usize, j: usize) -> f64 {
    let (a, b) = (&x[i * dim..(i + 1) * dim], &x[j * dim..(j + 1) * dim]);
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

pub(crate) fn min_pair_distance(x: &[f64], n: usize, dim: usize) -> (f64, usize, usize) {
    let mut best = (f64::INFINITY, 0, 1);
    for i in 0..n {
        for j in i + 1..n {
            let r = pair_distance(x, dim, i, j);
            if r < best.0 {
                best = (r, i, j);
            }
        }
    }
    best
}

/// A pair kernel used by the lifted drift: either the raw kernel or its mollification.
#[derive(Debug, Clone, PartialEq)]
pub enum PairKernel {
    Raw(KernelSpec),
    Mollified(MollifiedKernel),
}

impl PairKernel {
    pub fn dim(&self) -> usize {
        match self {
            PairKernel::Raw(k) => k.dim(),
            PairKernel::Mollified(m) => m.dim(),
        }
    }

    /// Raw singular kernels need the collision guard; mollified ones are bounded.
    pub fn needs_guard(&self) -> bool {
        matches!(self, PairKernel::Raw(k) if k.is_singular())
    }

    pub fn is_odd(&self) -> bool {
        match self {
            PairKernel::Raw(k) => k.is_odd(),
            PairKernel::Mollified(m) => m.base().is_odd(),
        }
    }

    pub fn accumulate(&self, y: &[f64], scale: f64, out: &mut [f64]) -> Result<()> {
        match self {
            PairKernel::Raw(k) => k.accumulate(y, scale, out),
            PairKernel::Mollified(m) => m.accumulate(y, scale, out),
        }
    }
}

impl From<KernelSpec> for PairKernel {
    fn from(k: KernelSpec) -> Self {
        PairKernel::Raw(k)
    }
}

impl From<MollifiedKernel> for PairKernel {
    fn from(m: MollifiedKernel) -> Self {
        PairKernel::Mollified(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Interactions {
    Uniform(PairKernel),
    /// Row-major N x N table, diagonal entries ignored.
    Matrix(Vec<PairKernel>),
}

/// Drift b on R^{Nd}: b_i(x) = (1/N) sum_{j != i} K_ij(x_i - x_j) + M_i(x_i).
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedDrift {
    n_particles: usize,
    dim: usize,
    interactions: Interactions,
    particle_drifts: Option<Vec<PairKernel>>,
}

impl LiftedDrift {
    /// All pairs interact through the same kernel.
    pub fn uniform(kernel: impl Into<PairKernel>, n_particles: usize) -> Result<Self> {
        let kernel = kernel.into();
        if n_particles < 2 {
            return Err(invalid("need at least two particles"));
        }
        Ok(Self { n_particles, dim: kernel.dim(), interactions: Interactions::Uniform(kernel), particle_drifts: None })
    }

    /// Full kernel table, row-major, with `n*n` entries (diagonal unused).
    pub fn from_matrix(kernels: Vec<PairKernel>, n_particles: usize) -> Result<Self> {
        if n_particles < 2 || kernels.len() != n_particles * n_particles {
            return Err(invalid("kernel matrix must be N x N with N >= 2"));
        }
        let dim = kernels[1].dim();
        if kernels.iter().any(|k| k.dim() != dim) {
            return Err(invalid("kernel matrix entries differ in dimension"));
        }
        Ok(Self { n_particles, dim, interactions: Interactions::Matrix(kernels), particle_drifts: None })
    }

    /// Adds per-particle drifts M_i(x_i).
    pub fn with_particle_drifts(mut self, drifts: Vec<PairKernel>) -> Result<Self> {
        if drifts.len() != self.n_particles || drifts.iter().any(|k| k.dim() != self.dim) {
            return Err(invalid("need one particle drift of matching dimension per particle"));
        }
        self.particle_drifts = Some(drifts);
        Ok(self)
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn kernel(&self, i: usize, j: usize) -> &PairKernel {
        match &self.interactions {
            Interactions::Uniform(k) => k,
            Interactions::Matrix(m) => &m[i * self.n_particles + j],
        }
    }

    /// Writes b(x) into `out` (length N*d) for a flat coordinate vector.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let (n, d) = (self.n_particles, self.dim);
        debug_assert_eq!(x.len(), n * d);
        out.iter_mut().for_each(|v| *v = 0.0);
        let inv_n = 1.0 / n as f64;
        let mut buf = [0.0f64; 32];
        let mut heap;
        let (y, kv): (&mut [f64], &mut [f64]) = if d <= 16 {
            buf[..2 * d].split_at_mut(d)
        } else {
            heap = vec![0.0; 2 * d];
            heap.split_at_mut(d)
        };
        let shared_odd = matches!(&self.interactions, Interactions::Uniform(k) if k.is_odd());
        for i in 0..n {
            for j in i + 1..n {
                let mut r2 = 0.0;
                for k in 0..d {
                    y[k] = x[i * d + k] - x[j * d + k];
                    r2 += y[k] * y[k];
                }
                let collision = || Error::CollisionState { i, j, distance: r2.sqrt() };
                let kij = self.kernel(i, j);
                let kji = self.kernel(j, i);
                if (kij.needs_guard() || kji.needs_guard()) && r2 < SINGULARITY_GUARD * SINGULARITY_GUARD {
                    return Err(collision());
                }
                if shared_odd {
                    // K(-y) = -K(y): one evaluation serves both particles
                    kv.iter_mut().for_each(|v| *v = 0.0);
                    kij.accumulate(y, inv_n, kv).map_err(|e| map_singular(e, collision))?;
                    for k in 0..d {
                        out[i * d + k] += kv[k];
                        out[j * d + k] -= kv[k];
                    }
                    continue;
                }
                kij.accumulate(y, inv_n, &mut out[i * d..(i + 1) * d]).map_err(|e| map_singular(e, collision))?;
                y.iter_mut().for_each(|v| *v = -*v);
                kji.accumulate(y, inv_n, &mut out[j * d..(j + 1) * d]).map_err(|e| map_singular(e, collision))?;
            }
        }
        if let Some(m) = &self.particle_drifts {
            for (i, mi) in m.iter().enumerate() {
                mi.accumulate(&x[i * d..(i + 1) * d], 1.0, &mut out[i * d..(i + 1) * d])?;
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &ParticleConfiguration) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut out = vec![0.0; x.positions.len()];
        self.eval_into(&x.positions, &mut out)?;
        Ok(out)
    }

    fn check(&self, x: &ParticleConfiguration) -> Result<()> {
        if x.n_particles != self.n_particles || x.dim != self.dim {
            return Err(invalid("configuration does not match the drift's N and d"));
        }
        Ok(())
    }
}

fn map_singular(e: Error, collision: impl FnOnce() -> Error) -> Error {
    match e {
        Error::SingularPoint => collision(),
        other => other,
    }
}

/// Evaluates the lifted drift b(x).
pub fn eval_drift(drift: &LiftedDrift, x: &ParticleConfiguration) -> Result<Vec<f64>> {
    drift.eval(x)
}

/// Form-bound of the lifted drift from pair form-bounds: (((N-1)/N)^2 kappa, (N-1)^2/N c).
pub fn lifted_form_bound(kappa: f64, c_kappa: f64, n_particles: usize) -> (f64, f64) {
    let n = n_particles as f64;
    let m = n - 1.0;
    ((m / n).powi(2) * kappa, m * m / n * c_kappa)
}

/// Divergence form-bound of the lifted drift: ((N-1)/N kappa_+, (N-1) c).
pub fn lifted_div_bound(kappa_plus: f64, c_kappa_plus: f64, n_particles: usize) -> (f64, f64) {
    let n = n_particles as f64;
    ((n - 1.0) / n * kappa_plus, (n - 1.0) * c_kappa_plus)
}

/// Multiplicative form-bound of the lifted drift: ((N-1)/sqrt(N) kappa, (N-1) c).
pub fn lifted_mf_bound(kappa: f64, c_kappa: f64, n_particles: usize) -> (f64, f64) {
    let n = n_particles as f64;
    ((n - 1.0) / n.sqrt() * kappa, (n - 1.0) * c_kappa)
}

/// Form-bound of |b|^{(1+alpha)/2} given that of |K|^{(1+alpha)/2}, alpha in [0, 1].
pub fn lifted_power_bound(sigma: f64, c_sigma: f64, alpha: f64, n_particles: usize) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("alpha = {alpha} outside [0, 1]")));
    }
    let n = n_particles as f64;
    let m = n - 1.0;
    Ok(((m / n).powf(1.0 + alpha) * sigma, m.powf(1.0 + alpha) / n.powf(alpha) * c_sigma))
}

/// Exponent of the invariant density per pair: sqrt(kappa)(d-2)/(2N).
pub fn density_exponent(kappa: f64, dim: usize, n_particles: usize) -> f64 {
    kappa.sqrt() * (dim as f64 - 2.0) / (2.0 * n_particles as f64)
}

fn guarded_pairs(x: &ParticleConfiguration) -> Result<()> {
    let (r, i, j) = x.min_pair_distance();
    if r < SINGULARITY_GUARD {
        return Err(Error::CollisionState { i, j, distance: r });
    }
    Ok(())
}

/// ln psi(x) = -a sum_{i<j} ln|x_i - x_j|.
pub fn log_invariant_density(kappa: f64, x: &ParticleConfiguration) -> Result<f64> {
    guarded_pairs(x)?;
    let a = density_exponent(kappa, x.dim, x.n_particles);
    let mut s = 0.0;
    for i in 0..x.n_particles {
        for j in i + 1..x.n_particles {
            s += x.pair_distance(i, j).ln();
        }
    }
    Ok(-a * s)
}

/// psi(x) = prod_{i<j} |x_i - x_j|^{-sqrt(kappa)(d-2)/(2N)}.
pub fn invariant_density(kappa: f64, x: &ParticleConfiguration) -> Result<f64> {
    log_invariant_density(kappa, x).map(f64::exp)
}

/// Analytic Laplacian of psi on R^{Nd}.
pub fn laplacian_invariant_density(kappa: f64, x: &ParticleConfiguration) -> Result<f64> {
    guarded_pairs(x)?;
    let (n, d) = (x.n_particles, x.dim);
    let a = density_exponent(kappa, d, n);
    let psi = invariant_density(kappa, x)?;
    // grad_i ln psi = -a V_i, V_i = sum_j (x_i - x_j)/r_ij^2; Laplacian of ln psi = -2a(d-2) sum_{i<j} r^-2
    let mut grad_sq = 0.0;
    let mut inv_r2 = 0.0;
    for i in 0..n {
        let mut v = vec![0.0; d];
        for j in 0..n {
            if j == i {
                continue;
            }
            let r2 = x.pair_distance(i, j).powi(2);
            if j > i {
                inv_r2 += 1.0 / r2;
            }
            for k in 0..d {
                v[k] += (x.positions[i * d + k] - x.positions[j * d + k]) / r2;
            }
        }
        grad_sq += a * a * kernels::norm_sq(&v);
    }
    Ok(psi * (grad_sq - 2.0 * a * (d as f64 - 2.0) * inv_r2))
}

/// Terms of the identity -Laplacian(psi) - sum_i div_i(b_i psi) = 0, the
/// stationarity of psi under the system dX = -b dt + sqrt(2) dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovResidual {
    /// -Laplacian(psi)
    pub diffusion_term: f64,
    /// -sum_i div_{x_i}(b_i psi)
    pub drift_term: f64,
    /// diffusion_term + drift_term
    pub residual: f64,
    /// largest absolute value among the constituent terms
    pub scale: f64,
}

impl LyapunovResidual {
    /// Residual relative to the largest constituent term.
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.residual.abs()
        } else {
            self.residual.abs() / self.scale
        }
    }
}

/// Evaluates the adjoint-generator identity for psi with the attracting Hardy drift.
/// The drift part is built from `eval_drift` and the kernel's analytic divergence,
/// the diffusion part from the closed-form Laplacian of psi.
pub fn lyapunov_residual(kappa: f64, x: &ParticleConfiguration) -> Result<LyapunovResidual> {
    guarded_pairs(x)?;
    let (n, d) = (x.n_particles, x.dim);
    let kernel = KernelSpec::hardy_attracting(kappa, d)?;
    let drift = LiftedDrift::uniform(kernel.clone(), n)?;
    let b = drift.eval(x)?;
    let psi = invariant_density(kappa, x)?;
    let a = density_exponent(kappa, d, n);

    // div_i(b_i psi) = psi (div_i b_i + b_i . grad_i ln psi)
    let mut div_part = 0.0;
    let mut transport_part = 0.0;
    let mut y = vec![0.0; d];
    for i in 0..n {
        let mut grad_ln = vec![0.0; d];
        for j in 0..n {
            if j == i {
                continue;
            }
            for k in 0..d {
                y[k] = x.positions[i * d + k] - x.positions[j * d + k];
            }
            let r2 = kernels::norm_sq(&y);
            div_part += kernels::divergence(&kernel, &y)? / n as f64;
            for k in 0..d {
                grad_ln[k] -= a * y[k] / r2;
            }
        }
        transport_part += (0..d).map(|k| b[i * d + k] * grad_ln[k]).sum::<f64>();
    }
    let drift_term = -psi * (div_part + transport_part);
    let diffusion_term = -laplacian_invariant_density(kappa, x)?;
    let scale = [psi * div_part, psi * transport_part, diffusion_term, drift_term]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(LyapunovResidual { diffusion_term, drift_term, residual: diffusion_term + drift_term, scale })
}

/// C^2 profile eta: r^{-gamma} below 1, 2 above 2, quintic Hermite blend between.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaProfile {
    kappa: f64,
    dim: usize,
    n_particles: usize,
    exponent: f64,
    /// Coefficients of the blend as a polynomial in t = r - 1.
    blend: [f64; 6],
}

impl EtaProfile {
    pub fn new(kappa: f64, dim: usize, n_particles: usize) -> Result<Self> {
        if dim < 3 {
            return Err(Error::UnsupportedDim(dim));
        }
        if n_particles < 2 || !(kappa >= 0.0) {
            return Err(invalid("eta profile needs N >= 2 and kappa >= 0"));
        }
        let g = density_exponent(kappa, dim, n_particles);
        // endpoint data (value, first, second derivative)
        let (y0, d0, s0) = (1.0, -g, g * (g + 1.0));
        let (y1, d1, s1) = (2.0, 0.0, 0.0);
        // quintic Hermite basis on [0, 1] in monomial form
        const H: [[f64; 6]; 6] = [
            [1.0, 0.0, 0.0, -10.0, 15.0, -6.0],
            [0.0, 1.0, 0.0, -6.0, 8.0, -3.0],
            [0.0, 0.0, 0.5, -1.5, 1.5, -0.5],
            [0.0, 0.0, 0.0, 10.0, -15.0, 6.0],
            [0.0, 0.0, 0.0, -4.0, 7.0, -3.0],
            [0.0, 0.0, 0.0, 0.5, -1.0, 0.5],
        ];
        let data = [y0, d0, s0, y1, d1, s1];
        let mut blend = [0.0; 6];
        for (row, w) in H.iter().zip(data) {
            for (b, h) in blend.iter_mut().zip(row) {
                *b += w * h;
            }
        }
        Ok(Self { kappa, dim, n_particles, exponent: g, blend })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Value and first two derivatives at r > 0.
    pub fn eval_with_derivatives(&self, r: f64) -> (f64, f64, f64) {
        let g = self.exponent;
        if r < 1.0 {
            let v = r.powf(-g);
            (v, -g * v / r, g * (g + 1.0) * v / (r * r))
        } else if r > 2.0 {
            (2.0, 0.0, 0.0)
        } else {
            let t = r - 1.0;
            let c = &self.blend;
            let v = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
            let d1 = c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
            let d2 = 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]));
            (v, d1, d2)
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval_with_derivatives(r).0
    }

    /// Minimum of eta over the blend interval, sampled on a fine grid.
    pub fn minimum(&self) -> f64 {
        (0..=2000).map(|k| self.value(1.0 + k as f64 / 2000.0)).fold(f64::INFINITY, f64::min)
    }
}

/// eta(r) for the given profile.
pub fn eta_value(profile: &EtaProfile, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid(format!("eta needs r > 0, got {r}")));
    }
    Ok(profile.value(r))
}

/// t^{-Nd/2} prod_{i<j} eta(|z_i - z_j| / sqrt t).
pub fn heat_kernel_envelope(profile: &EtaProfile, t: f64, z: &ParticleConfiguration) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid("envelope needs t > 0"));
    }
    if z.n_particles != profile.n_particles || z.dim != profile.dim {
        return Err(invalid("configuration does not match the profile"));
    }
    guarded_pairs(z)?;
    let s = t.sqrt();
    let mut v = t.powf(-((z.n_particles * z.dim) as f64) / 2.0);
    for i in 0..z.n_particles {
        for j in i + 1..z.n_particles {
            v *= profile.value(z.pair_distance(i, j) / s);
        }
    }
    Ok(v)
}

/// Lower bound C_{d,N} for the many-particle Hardy inequality.
pub fn paper_hardy_constant(dim: usize, n_particles: usize) -> f64 {
    let d = dim as f64;
    let n = n_particles as f64;
    let root = (1.0 + 3.0 * (d - 2.0).powi(2) * (n - 1.0) * (n - 2.0) / (2.0 * (d - 1.0).powi(2))).sqrt();
    (d - 2.0).powi(2) * (1.0 / n).max(1.0 / (1.0 + root))
}

#[cfg(test)]
mod tests;
