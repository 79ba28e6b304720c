//! Many-particle Hardy ratio sum_{i<j} int phi^2/|x_i-x_j|^2 / int |grad phi|^2
//! by importance sampling on R^{Nd}.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate_real_line, unit_sphere_area};

/// phi(x) = exp(-N|xbar|^2/(2S^2)) exp(-sum_i |x_i - xbar|^2/(2 sigma^2)) prod_{i<j} (r_ij^2 + a^2)^{-p/2}
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairProductTrial {
    pub n_particles: usize,
    pub dim: usize,
    /// width of the Gaussian envelope on the relative coordinates
    pub sigma: f64,
    /// width of the Gaussian envelope on the center of mass
    pub center_width: f64,
    /// core radius a of the pair factors
    pub core: f64,
    /// power p of the pair factors
    pub power: f64,
}

impl PairProductTrial {
    pub fn new(n_particles: usize, dim: usize, sigma: f64, center_width: f64, core: f64, power: f64) -> Result<Self> {
        if dim < 3 {
            return Err(Error::UnsupportedDim(dim));
        }
        if n_particles < 2 {
            return Err(invalid("need N >= 2"));
        }
        for (name, v) in [("sigma", sigma), ("center_width", center_width), ("core", core)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::DegenerateTrial(format!("{name} must be positive, got {v}")));
            }
        }
        if !(power >= 0.0 && power.is_finite()) {
            return Err(Error::DegenerateTrial(format!("power must be >= 0, got {power}")));
        }
        Ok(Self { n_particles, dim, sigma, center_width, core, power })
    }

    /// The same trial with every length multiplied by `s`, i.e. x -> phi(x/s).
    pub fn dilated(&self, s: f64) -> Result<Self> {
        Self::new(self.n_particles, self.dim, self.sigma * s, self.center_width * s, self.core * s, self.power)
    }

    /// ln phi and |grad ln phi|^2, plus sum_{i<j} 1/r_ij^2.
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> (f64, f64, f64) {
        let (n, d) = (self.n_particles, self.dim);
        let nf = n as f64;
        let s2 = self.center_width * self.center_width;
        let g2 = self.sigma * self.sigma;
        let a2 = self.core * self.core;
        let p = self.power;
        let mut xbar = [0.0f64; 16];
        let xbar = &mut xbar[..d];
        for i in 0..n {
            for k in 0..d {
                xbar[k] += x[i * d + k] / nf;
            }
        }
        let mut ln_phi = -nf * xbar.iter().map(|v| v * v).sum::<f64>() / (2.0 * s2);
        for i in 0..n {
            for k in 0..d {
                let dev = x[i * d + k] - xbar[k];
                ln_phi -= dev * dev / (2.0 * g2);
                grad[i * d + k] = -xbar[k] / s2 - dev / g2;
            }
        }
        let mut inv_r2 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let mut r2 = 0.0;
                for k in 0..d {
                    let y = x[i * d + k] - x[j * d + k];
                    r2 += y * y;
                }
                inv_r2 += 1.0 / r2;
                ln_phi -= 0.5 * p * (r2 + a2).ln();
                let c = p / (r2 + a2);
                for k in 0..d {
                    let y = x[i * d + k] - x[j * d + k];
                    grad[i * d + k] -= c * y;
                    grad[j * d + k] += c * y;
                }
            }
        }
        let g = grad.iter().map(|v| v * v).sum();
        (ln_phi, g, inv_r2)
    }
}

/// Importance-sampled Hardy ratio with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HardyRatio {
    pub value: f64,
    pub std_err: f64,
    pub samples: usize,
}

const BASE_WEIGHT: f64 = 0.3;
const INFLATION: f64 = 1.5;

/// Mixture proposal: a Gaussian for all particles plus, for each pair, a
/// component whose relative vector follows a radial law concentrated near 0.
struct Proposal {
    n: usize,
    d: usize,
    v_u: f64,
    v_m: f64,
    core: f64,
    r_hi: f64,
    v_z: f64,
    radial_weights: [f64; 3],
    ln_sphere: f64,
    ln_chi_norm: f64,
}

impl Proposal {
    fn new(t: &PairProductTrial) -> Self {
        let nf = t.n_particles as f64;
        let v_u = INFLATION * t.sigma * t.sigma / 2.0;
        let target_center = INFLATION * t.center_width * t.center_width / (2.0 * nf);
        let v_m = (target_center - v_u / nf).max(0.05 * v_u);
        let r_hi = 4.0 * t.sigma;
        let v_z = 2.0 * v_u;
        let radial_weights = if t.core < r_hi { [0.25, 0.35, 0.4] } else { [0.4, 0.0, 0.6] };
        let d = t.dim as f64;
        let ln_chi_norm = -((d / 2.0 - 1.0) * 2f64.ln() + statrs::function::gamma::ln_gamma(d / 2.0) + d / 2.0 * v_z.ln());
        Self {
            n: t.n_particles,
            d: t.dim,
            v_u,
            v_m,
            core: t.core,
            r_hi,
            v_z,
            radial_weights,
            ln_sphere: unit_sphere_area(t.dim).ln(),
            ln_chi_norm,
        }
    }

    fn n_pairs(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    fn pair_index(&self, mut k: usize) -> (usize, usize) {
        for i in 0..self.n {
            let row = self.n - 1 - i;
            if k < row {
                return (i, i + 1 + k);
            }
            k -= row;
        }
        unreachable!()
    }

    fn sample(&self, rng: &mut ChaCha8Rng, x: &mut [f64]) {
        let (n, d) = (self.n, self.d);
        let mut m = [0.0f64; 16];
        for mk in m[..d].iter_mut() {
            *mk = self.v_m.sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
        for i in 0..n {
            for k in 0..d {
                x[i * d + k] = m[k] + self.v_u.sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let u: f64 = rng.random();
        if u < BASE_WEIGHT {
            return;
        }
        let pair = ((u - BASE_WEIGHT) / (1.0 - BASE_WEIGHT) * self.n_pairs() as f64) as usize;
        let (i, j) = self.pair_index(pair.min(self.n_pairs() - 1));
        let mut z = [0.0f64; 16];
        let z = &mut z[..d];
        let v: f64 = rng.random();
        let w = self.radial_weights;
        if v < w[0] + w[1] {
            let r = if v < w[0] {
                self.core * rng.random::<f64>().powf(1.0 / d as f64)
            } else {
                self.core * (self.r_hi / self.core).powf(rng.random::<f64>())
            };
            let mut norm = 0.0;
            for zk in z.iter_mut() {
                *zk = rng.sample(StandardNormal);
                norm += *zk * *zk;
            }
            let s = r / norm.sqrt();
            z.iter_mut().for_each(|zk| *zk *= s);
        } else {
            for zk in z.iter_mut() {
                *zk = self.v_z.sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
        }
        for k in 0..d {
            let c = 0.5 * (x[i * d + k] + x[j * d + k]);
            x[i * d + k] = c + 0.5 * z[k];
            x[j * d + k] = c - 0.5 * z[k];
        }
    }

    fn ln_radial(&self, r: f64) -> f64 {
        let d = self.d as f64;
        let w = self.radial_weights;
        let mut dens = 0.0;
        if r <= self.core {
            dens += w[0] * d * r.powf(d - 1.0) / self.core.powf(d);
        }
        if w[1] > 0.0 && r >= self.core && r <= self.r_hi {
            dens += w[1] / (r * (self.r_hi / self.core).ln());
        }
        dens += w[2] * (self.ln_chi_norm + (d - 1.0) * r.ln() - r * r / (2.0 * self.v_z)).exp();
        dens.ln() - self.ln_sphere - (d - 1.0) * r.ln()
    }

    fn ln_density(&self, x: &[f64]) -> f64 {
        let (n, d) = (self.n, self.d);
        let nf = n as f64;
        let ln2pi = (2.0 * PI).ln();
        // base: deviations iid with variance v_u, centroid with variance v_m + v_u/N
        let mut xbar = [0.0f64; 16];
        for i in 0..n {
            for k in 0..d {
                xbar[k] += x[i * d + k] / nf;
            }
        }
        let vc = self.v_m + self.v_u / nf;
        let mut dev2 = 0.0;
        for i in 0..n {
            for k in 0..d {
                dev2 += (x[i * d + k] - xbar[k]).powi(2);
            }
        }
        let xb2: f64 = xbar[..d].iter().map(|v| v * v).sum();
        let ln_base = -(((n - 1) * d) as f64) / 2.0 * (ln2pi + self.v_u.ln()) - d as f64 / 2.0 * nf.ln() - dev2 / (2.0 * self.v_u)
            - d as f64 / 2.0 * (ln2pi + vc.ln())
            - xb2 / (2.0 * vc);

        // pair components: y = (midpoint, others) has covariance v_u diag(1/2, 1, ..) + v_m 11^T
        let dinv_sum = nf / self.v_u;
        let sm = self.v_m / (1.0 + self.v_m * dinv_sum);
        let ln_det = (n - 1) as f64 * self.v_u.ln() - 2f64.ln() + (1.0 + self.v_m * dinv_sum).ln();
        let ln_norm_y = -(d as f64) / 2.0 * ((n - 1) as f64 * ln2pi + ln_det);
        let mut terms = Vec::with_capacity(1 + self.n_pairs());
        terms.push(BASE_WEIGHT.ln() + ln_base);
        let pair_w = ((1.0 - BASE_WEIGHT) / self.n_pairs() as f64).ln();
        for i in 0..n {
            for j in i + 1..n {
                let mut quad = 0.0;
                let mut r2 = 0.0;
                for k in 0..d {
                    let c = 0.5 * (x[i * d + k] + x[j * d + k]);
                    let z = x[i * d + k] - x[j * d + k];
                    r2 += z * z;
                    let mut q = 2.0 * c * c / self.v_u;
                    let mut lin = 2.0 * c / self.v_u;
                    for o in 0..n {
                        if o != i && o != j {
                            let y = x[o * d + k];
                            q += y * y / self.v_u;
                            lin += y / self.v_u;
                        }
                    }
                    quad += q - sm * lin * lin;
                }
                terms.push(pair_w + self.ln_radial(r2.sqrt()) + ln_norm_y - 0.5 * quad);
            }
        }
        let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln()
    }
}

/// Estimates sum_{i<j} int phi^2/|x_i - x_j|^2 / int |grad phi|^2 with `samples`
/// importance samples drawn from a stream seeded by `seed`.
pub fn multiparticle_hardy_ratio(trial: &PairProductTrial, samples: usize, seed: u64) -> Result<HardyRatio> {
    if samples < 2 {
        return Err(invalid("need at least two samples"));
    }
    if trial.dim > 16 {
        return Err(invalid("dimension above 16 not supported by the sampler"));
    }
    let proposal = Proposal::new(trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nd = trial.n_particles * trial.dim;
    let mut x = vec![0.0; nd];
    let mut grad = vec![0.0; nd];
    let mut a_vals = Vec::with_capacity(samples);
    let mut b_vals = Vec::with_capacity(samples);
    for _ in 0..samples {
        proposal.sample(&mut rng, &mut x);
        let (ln_phi, g2, inv_r2) = trial.evaluate(&x, &mut grad);
        let w = (2.0 * ln_phi - proposal.ln_density(&x)).exp();
        a_vals.push(w * inv_r2);
        b_vals.push(w * g2);
    }
    let m = samples as f64;
    let a = a_vals.iter().sum::<f64>() / m;
    let b = b_vals.iter().sum::<f64>() / m;
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::DegenerateTrial("vanishing or non-finite Dirichlet energy".into()));
    }
    let r = a / b;
    let var = a_vals.iter().zip(&b_vals).map(|(ai, bi)| (ai - r * bi).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(HardyRatio { value: r, std_err: (var / m).sqrt() / b, samples })
}

/// Exact ratio for N = 2 by separating center of mass and relative coordinate:
/// int F^2/|z|^2 / (2 int |grad F|^2 + (d / (2 S^2)) int F^2), F the relative factor.
pub fn pair_product_oracle_ratio(trial: &PairProductTrial) -> Result<f64> {
    if trial.n_particles != 2 {
        return Err(invalid("the radial oracle covers two particles only"));
    }
    let d = trial.dim as f64;
    let (g2, a2, p) = (trial.sigma * trial.sigma, trial.core * trial.core, trial.power);
    let s2 = trial.center_width * trial.center_width;
    let mut i_f = 0.0;
    let mut i_num = 0.0;
    let mut i_grad = 0.0;
    // r = e^u; dr r^{d-1} = e^{d u} du
    let step = 0.004;
    let reach = 120.0;
    i_f += integrate_real_line(reach, step, |u| {
        let r = u.exp();
        let f2 = (-r * r / (2.0 * g2) - p * (r * r + a2).ln()).exp();
        (d * u).exp() * f2
    });
    i_num += integrate_real_line(reach, step, |u| {
        let r = u.exp();
        let f2 = (-r * r / (2.0 * g2) - p * (r * r + a2).ln()).exp();
        ((d - 2.0) * u).exp() * f2
    });
    i_grad += integrate_real_line(reach, step, |u| {
        let r = u.exp();
        let f2 = (-r * r / (2.0 * g2) - p * (r * r + a2).ln()).exp();
        let dl = -r / (2.0 * g2) - p * r / (r * r + a2);
        (d * u).exp() * f2 * dl * dl
    });
    Ok(i_num / (2.0 * i_grad + 0.5 * d / s2 * i_f))
}
