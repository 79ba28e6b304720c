//! Empirical law of the configuration at fixed times versus the
//! non-Gaussian envelope t^{-Nd/2} prod eta(|z_i - z_j|/sqrt t).

use serde::Serialize;
use std::f64::consts::PI;

use crate::analysis::bessel::{bessel_dimension, bessel_transition_density};
use crate::error::{invalid, Error, Result};
use crate::kernels::KernelSpec;
use crate::lift::{density_exponent, EtaProfile, LiftedDrift};
use crate::quadrature::unit_sphere_area;
use crate::sde::{run_ensemble, SimPlan};

/// Largest slope change under bandwidth halving before the fit is rejected.
pub const BANDWIDTH_TOL: f64 = 0.1;
/// Envelope constants count as stable when max/min stays within 1.2/0.8.
pub const STABILITY_RATIO: f64 = 1.5;
const FIT_POINTS: usize = 21;
const ENVELOPE_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatKernelTimeReport {
    pub t: f64,
    pub samples: usize,
    /// Log-log slope of the pair-difference density on the decade ending at the 5th percentile.
    pub slope: f64,
    /// Same fit with the Silverman bandwidth instead of its half.
    pub slope_silverman: f64,
    pub bandwidth: f64,
    pub fit_window: (f64, f64),
    /// Same weighted fit applied to the exact pair law on the same window (N = 2).
    pub reference_slope: Option<f64>,
    /// sup of density / envelope over the central 98% of sampled pair distances (N = 2).
    pub envelope_constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatKernelReport {
    pub kappa: f64,
    pub dim: usize,
    pub n_particles: usize,
    /// -sqrt(kappa)(d-2)/(2N)
    pub predicted_slope: f64,
    pub times: Vec<HeatKernelTimeReport>,
    pub collided: usize,
    /// max/min of the envelope constants across times.
    pub envelope_spread: Option<f64>,
    pub envelope_stable: Option<bool>,
}

/// Gaussian KDE of ln r with sorted data and windowed sums.
struct LogKde {
    u: Vec<f64>,
    h: f64,
}

impl LogKde {
    fn new(r: &[f64]) -> Self {
        let mut u: Vec<f64> = r.iter().map(|x| x.ln()).collect();
        u.sort_by(f64::total_cmp);
        Self { h: silverman(&u), u }
    }

    fn density(&self, x: f64, h: f64) -> f64 {
        let lo = self.u.partition_point(|v| *v < x - 8.0 * h);
        let hi = self.u.partition_point(|v| *v <= x + 8.0 * h);
        let s: f64 = self.u[lo..hi].iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum();
        s / (self.u.len() as f64 * h * (2.0 * PI).sqrt())
    }

    fn quantile(&self, p: f64) -> f64 {
        let k = ((self.u.len() - 1) as f64 * p).round() as usize;
        self.u[k]
    }
}

/// 0.9 min(sd, IQR/1.34) n^{-1/5} for sorted data.
fn silverman(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
    let iqr = q(0.75) - q(0.25);
    0.9 * sd.min(iqr / 1.34) * n.powf(-0.2)
}

/// Weighted least-squares slope of ln f(r) = ln q(ln r) - d ln r over [lo, hi] in ln r,
/// where q is the density of ln r. Weights are q itself.
fn weighted_slope(q: impl Fn(f64) -> f64, lo: f64, hi: f64, d: f64) -> f64 {
    let pts: Vec<(f64, f64, f64)> = (0..FIT_POINTS)
        .map(|k| {
            let u = lo + (hi - lo) * k as f64 / (FIT_POINTS - 1) as f64;
            let q = q(u);
            (u, q.ln() - d * u, q)
        })
        .filter(|p| p.2 > 0.0)
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn fit_slope(kde: &LogKde, h: f64, lo: f64, hi: f64, d: f64) -> f64 {
    weighted_slope(|u| kde.density(u, h), lo, hi, d)
}

/// Simulates the Hardy-attracting system from the plan's initial configuration,
/// records the law at each time in `t_grid` and compares it with the envelope.
/// The plan's drift, snapshots and horizon are replaced.
pub fn heat_kernel_envelope_check(kappa: f64, dim: usize, n_particles: usize, t_grid: &[f64], plan: &SimPlan) -> Result<HeatKernelReport> {
    if dim < 3 {
        return Err(Error::UnsupportedDim(dim));
    }
    if !(kappa >= 0.0 && kappa < 16.0) {
        return Err(invalid("the envelope check needs 0 <= kappa < 16"));
    }
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t > 0.0)) {
        return Err(invalid("times must be positive"));
    }
    if plan.x0.n_particles() != n_particles || plan.x0.dim() != dim {
        return Err(invalid("plan configuration does not match (N, d)"));
    }
    let mut p = plan.clone();
    p.drift = LiftedDrift::uniform(KernelSpec::hardy_attracting(kappa, dim)?, n_particles)?;
    p.snapshots = t_grid.to_vec();
    p.horizon = t_grid.iter().cloned().fold(0.0, f64::max).max(p.horizon);
    p.dt = p.dt.min(p.horizon);
    let result = run_ensemble(&p)?;
    let profile = EtaProfile::new(kappa, dim, n_particles)?;
    let d = dim as f64;
    let collided = result.outcomes.iter().filter(|o| o.collided).count();
    let mut times = Vec::with_capacity(t_grid.len());
    for (k, &t) in t_grid.iter().enumerate() {
        let r: Vec<f64> = result
            .outcomes
            .iter()
            .filter_map(|o| o.snapshots[k].as_ref())
            .map(|x| (0..dim).map(|c| (x[c] - x[dim + c]).powi(2)).sum::<f64>().sqrt())
            .collect();
        if r.len() < 100 {
            return Err(invalid(format!("only {} samples reached t = {t}", r.len())));
        }
        let kde = LogKde::new(&r);
        let h = kde.h / 2.0;
        let hi = kde.quantile(0.05);
        let lo = hi - 10f64.ln();
        let slope = fit_slope(&kde, h, lo, hi, d);
        let slope_silverman = fit_slope(&kde, kde.h, lo, hi, d);
        if (slope - slope_silverman).abs() > BANDWIDTH_TOL {
            return Err(Error::BandwidthUnderresolved { coarse: slope_silverman, fine: slope });
        }
        let envelope_constant = (n_particles == 2).then(|| {
            // pair-difference density times the peak of the N(0, t) center-of-mass law
            let (a, b) = (kde.quantile(0.01), kde.quantile(0.99));
            let area = unit_sphere_area(dim);
            (0..ENVELOPE_POINTS)
                .map(|i| {
                    let u = a + (b - a) * i as f64 / (ENVELOPE_POINTS - 1) as f64;
                    let rr = u.exp();
                    let f = kde.density(u, h) / (area * rr.powf(d));
                    let density = f * (2.0 * PI * t).powf(-d / 2.0);
                    let envelope = t.powf(-d) * profile.value(rr / t.sqrt());
                    density / envelope
                })
                .fold(0.0, f64::max)
        });
        let reference_slope = (n_particles == 2).then(|| {
            let r0 = plan.x0.pair_distance(0, 1);
            let nu = bessel_dimension(kappa, dim);
            // |z|/2 is a Bessel process, so ln|z| has density 2 rho p(t, rho0, rho) at rho = |z|/2
            weighted_slope(
                |u| {
                    let rho = u.exp() / 2.0;
                    rho * bessel_transition_density(nu, t, r0 / 2.0, rho)
                },
                lo,
                hi,
                d,
            )
        });
        times.push(HeatKernelTimeReport {
            t,
            samples: r.len(),
            slope,
            slope_silverman,
            bandwidth: h,
            fit_window: (lo.exp(), hi.exp()),
            reference_slope,
            envelope_constant,
        });
    }
    let cs: Vec<f64> = times.iter().filter_map(|t| t.envelope_constant).collect();
    let spread = (!cs.is_empty()).then(|| cs.iter().cloned().fold(0.0, f64::max) / cs.iter().cloned().fold(f64::INFINITY, f64::min));
    Ok(HeatKernelReport {
        kappa,
        dim,
        n_particles,
        predicted_slope: -density_exponent(kappa, dim, n_particles),
        times,
        collided,
        envelope_spread: spread,
        envelope_stable: spread.map(|s| s.is_finite() && s <= STABILITY_RATIO),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
        use crate::lift::ParticleConfiguration;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    /// Density of z = x1 - x2 at |z| = r for two Hardy-coupled particles: |z|/2 is Bessel(nu).
    fn exact_pair_density(kappa: f64, d: usize, t: f64, r0: f64, r: f64) -> f64 {
        let nu = bessel_dimension(kappa, d);
        0.5 * bessel_transition_density(nu, t, r0 / 2.0, r / 2.0) / (unit_sphere_area(d) * r.powi(d as i32 - 1))
    }

    #[test]
    fn slope_identity_for_pairs() {
        for (kappa, d) in [(4.0, 3), (9.0, 5), (1.0, 4)] {
            assert!((bessel_dimension(kappa, d) - d as f64 + density_exponent(kappa, d, 2)).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_density_has_predicted_slope_near_zero() {
        let f = |r: f64| exact_pair_density(4.0, 3, 0.5, 0.5, r);
        let (a, b) = (1e-5, 1e-4);
        let slope = (f(b) / f(a)).ln() / (b / a).ln();
        assert!((slope + 0.5).abs() < 1e-3, "{slope}");
    }

    /// Density of ln|z| for z ~ N(z0, s2 I_d) with |z0| = r0.
    fn gaussian_log_radius_density(d: usize, s2: f64, r0: f64, u: f64) -> f64 {
        let r = u.exp();
        let x = r * r0 / s2;
        assert_eq!(d, 3);
        let radial = if x < 1e-8 { 1.0 } else { x.sinh() / x };
        let f = (-(r * r + r0 * r0) / (2.0 * s2)).exp() * radial / (2.0 * PI * s2).powf(d as f64 / 2.0);
        unit_sphere_area(d) * r.powi(d as i32) * f
    }

    #[test]
    fn kde_slope_recovers_power_law() {
        // density r^{-alpha} on the unit ball in d = 3: radius = U^{1/(3 - alpha)}
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for alpha in [0.0, 0.5, 1.0] {
            let r: Vec<f64> = (0..100_000).map(|_| rand::Rng::random::<f64>(&mut rng).powf(1.0 / (3.0 - alpha))).collect();
            let kde = LogKde::new(&r);
            let hi = kde.quantile(0.05);
            let s = fit_slope(&kde, kde.h / 2.0, hi - 10f64.ln(), hi, 3.0);
            assert!((s + alpha).abs() < 0.15, "{alpha} {s}");
        }
    }

    #[test]
    fn kde_slope_matches_exact_gaussian_fit() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let r: Vec<f64> = (0..100_000)
            .map(|_| {
                let v: [f64; 3] = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
                (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
            })
            .collect();
        let kde = LogKde::new(&r);
        let hi = kde.quantile(0.05);
        let lo = hi - 10f64.ln();
        let s = fit_slope(&kde, kde.h / 2.0, lo, hi, 3.0);
        let exact = weighted_slope(|u| gaussian_log_radius_density(3, 1.0, 0.0, u), lo, hi, 3.0);
        assert!((s - exact).abs() < 0.15, "{s} {exact}");
    }

    #[test]
    fn free_pair_slope_matches_gaussian() {
        let drift = LiftedDrift::uniform(KernelSpec::zero(3).unwrap(), 2).unwrap();
        let mut plan = SimPlan::new(drift, ParticleConfiguration::pair(3, 0.5).unwrap(), 2e-3, 1.0);
        plan.ensemble = 20_000;
        plan.collision_radius = 1e-5;
        let rep = heat_kernel_envelope_check(0.0, 3, 2, &[0.5, 1.0], &plan).unwrap();
        assert_eq!(rep.predicted_slope, 0.0);
        for t in &rep.times {
            assert!(t.envelope_constant.unwrap().is_finite());
            let (lo, hi) = (t.fit_window.0.ln(), t.fit_window.1.ln());
            let exact = weighted_slope(|u| gaussian_log_radius_density(3, 4.0 * t.t, 0.5, u), lo, hi, 3.0);
            assert!((t.slope - exact).abs() < 0.35, "{t:?} {exact}");
        }
        assert!(heat_kernel_envelope_check(20.0, 3, 2, &[0.5], &plan).is_err());
    }
}
