//! Krylov-type functional: E int_0^inf e^{-lambda s} |g f|(omega_s) ds against
//! ||g |f|^{q/2}||_2^{2/q} for a pair, with f compact in both the relative
//! coordinate and the center of mass.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernels::{eval_kernel, norm_sq, KernelSpec};
use crate::quadrature::{composite_gauss, sphere_rule, unit_sphere_area};
use crate::sde::{run_ensemble, Estimate, Integrand, PathFunctional, RadialProfile, SimPlan};

/// f(x) = amplitude * pair(|x_1 - x_2|) * center(|(x_1 + x_2)/2|).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrylovTestFunction {
    pub amplitude: f64,
    pub pair: RadialProfile,
    pub center: RadialProfile,
}

impl KrylovTestFunction {
    pub fn scaled(&self, c: f64) -> Self {
        Self { amplitude: self.amplitude * c, ..self.clone() }
    }

    fn is_zero(&self) -> bool {
        self.amplitude == 0.0 || self.pair == RadialProfile::Zero || self.center == RadialProfile::Zero
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KrylovReport {
    pub lambda: f64,
    pub q: f64,
    pub lhs: Estimate,
    pub rhs: f64,
    /// lhs / rhs, zero when both vanish.
    pub ratio: f64,
    pub collided: usize,
    pub budget_exhausted: usize,
    pub errors: usize,
}

/// Smallest admissible q for N particles in dimension d (exclusive).
pub fn krylov_exponent_floor(dim: usize, n_particles: usize) -> f64 {
    ((dim * n_particles) as f64 - 2.0).max(2.0)
}

/// (int |g|^2 |f|^q)^{1/q} over R^{2d}, factored into the relative and center integrals.
pub fn krylov_rhs(g: &KernelSpec, f: &KrylovTestFunction, q: f64) -> Result<f64> {
    if f.is_zero() {
        return Ok(0.0);
    }
    let d = g.dim();
    let (dirs, dw) = sphere_rule(d, 20);
    let radial = |profile: &RadialProfile, weight: &dyn Fn(f64) -> f64| -> f64 {
        let (x, w) = composite_gauss(0.0, profile.extent(), 200, 8);
        x.iter().zip(&w).map(|(r, w)| w * r.powi(d as i32 - 1) * profile.eval(*r).powf(q) * weight(*r)).sum()
    };
    // sphere average of |g|^2 at radius r, times the sphere area
    let g2 = |r: f64| -> f64 {
        dirs.iter()
            .zip(&dw)
            .map(|(u, w)| {
                let y: Vec<f64> = u.iter().map(|c| c * r).collect();
                eval_kernel(g, &y).map(|v| w * norm_sq(&v)).unwrap_or(0.0)
            })
            .sum()
    };
    let pair = radial(&f.pair, &g2);
    let area = unit_sphere_area(d);
    let center = radial(&f.center, &|_| area);
    Ok(f.amplitude.abs() * (pair * center).powf(1.0 / q))
}

/// Monte-Carlo lhs under the plan's own drift and the quadrature rhs.
/// The horizon truncates the time integral; trajectories stopped at the
/// collision radius keep what they accumulated.
pub fn krylov_functional(plan: &SimPlan, g: &KernelSpec, f: &KrylovTestFunction, lambda: f64, q: f64) -> Result<KrylovReport> {
    let (n, d) = (plan.x0.n_particles(), plan.x0.dim());
    if n != 2 {
        return Err(invalid("the Krylov functional is implemented for pairs"));
    }
    if g.dim() != d {
        return Err(invalid("kernel dimension does not match the plan"));
    }
    if !(q > krylov_exponent_floor(d, n)) {
        return Err(invalid(format!("q must exceed {}", krylov_exponent_floor(d, n))));
    }
    if !(lambda > 0.0) {
        return Err(invalid("lambda must be positive"));
    }
    let rhs = krylov_rhs(g, f, q)?;
    let mut p = plan.clone();
    let integrand = Integrand::Product {
        factors: vec![
            Integrand::PairRadial { i: 0, j: 1, profile: f.pair.clone() },
            Integrand::CenterRadial { profile: f.center.clone() },
            Integrand::PairKernelNorm { i: 0, j: 1, kernel: g.clone() },
        ],
    };
    p.functionals = vec![("krylov".into(), PathFunctional::Discounted { lambda, integrand })];
    let (lhs, collided, budget_exhausted, errors) = if f.is_zero() {
        (Estimate { mean: 0.0, std_err: 0.0 }, 0, 0, 0)
    } else {
        let result = run_ensemble(&p)?;
        let samples: Vec<f64> = result
            .outcomes
            .iter()
            .filter(|o| o.error.is_none() && !o.budget_exhausted)
            .map(|o| f.amplitude.abs() * o.path_functionals[0])
            .collect();
        let collided = result.outcomes.iter().filter(|o| o.collided && o.error.is_none()).count();
        (Estimate::from_samples(&samples), collided, result.budget_exhausted, result.errors)
    };
    let ratio = if rhs == 0.0 && lhs.mean == 0.0 { 0.0 } else { lhs.mean / rhs };
    Ok(KrylovReport { lambda, q, lhs, rhs, ratio, collided, budget_exhausted, errors })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KrylovSweep {
    pub reports: Vec<KrylovReport>,
    /// max/min of lhs/rhs across the sweep.
    pub ratio_spread: f64,
    pub ratio_nonincreasing: bool,
}

impl KrylovSweep {
    /// Summarizes reports computed at arbitrary lambdas.
    pub fn from_reports(reports: Vec<KrylovReport>) -> Self {
        let max = reports.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
        let min = reports.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        let mut order: Vec<&KrylovReport> = reports.iter().collect();
        order.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        let ratio_nonincreasing = order.windows(2).all(|w| w[1].ratio <= w[0].ratio);
        Self { ratio_spread: max / min, ratio_nonincreasing, reports }
    }
}

/// Runs the functional over a lambda grid with a shared seed.
pub fn krylov_lambda_sweep(plan: &SimPlan, g: &KernelSpec, f: &KrylovTestFunction, lambdas: &[f64], q: f64) -> Result<KrylovSweep> {
    let reports = lambdas.iter().map(|&l| krylov_functional(plan, g, f, l, q)).collect::<Result<Vec<_>>>()?;
    Ok(KrylovSweep::from_reports(reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::{LiftedDrift, ParticleConfiguration};

    fn setup(ensemble: usize) -> (SimPlan, KernelSpec, KrylovTestFunction) {
        let g = KernelSpec::hardy_attracting(1.0, 3).unwrap();
        let drift = LiftedDrift::uniform(g.clone(), 2).unwrap();
        let mut plan = SimPlan::new(drift, ParticleConfiguration::pair(3, 1.0).unwrap(), 2e-3, 3.0);
        plan.ensemble = ensemble;
        let f = KrylovTestFunction {
            amplitude: 1.0,
            pair: RadialProfile::Bump { center: 1.0, half_width: 0.5 },
            center: RadialProfile::Bump { center: 0.0, half_width: 2.0 },
        };
        (plan, g, f)
    }

    #[test]
    fn zero_function_gives_zero_pair() {
        let (plan, g, f) = setup(10);
        let r = krylov_functional(&plan, &g, &f.scaled(0.0), 5.0, 4.5).unwrap();
        assert_eq!((r.lhs.mean, r.rhs, r.ratio), (0.0, 0.0, 0.0));
    }

    #[test]
    fn both_sides_are_homogeneous() {
        let (plan, g, f) = setup(200);
        let a = krylov_functional(&plan, &g, &f, 5.0, 4.5).unwrap();
        let b = krylov_functional(&plan, &g, &f.scaled(2.0), 5.0, 4.5).unwrap();
        assert_eq!(b.lhs.mean, 2.0 * a.lhs.mean);
        assert!((b.rhs / a.rhs - 2.0).abs() < 1e-12);
        assert!(a.lhs.mean > 0.0 && a.rhs > 0.0);
    }

    #[test]
    fn rhs_matches_closed_form_for_hardy() {
        // |g|^2 = kappa (d-2)^2 / (4 r^2); indicator-like profiles replaced by q = 4 moments of bumps
        let (_, g, f) = setup(0);
        let q = 4.5;
        let (x, w) = composite_gauss(0.0, 2.0, 400, 8);
        let pair: f64 = x.iter().zip(&w).map(|(r, w)| w * r * r * 0.25 / (r * r) * f.pair.eval(*r).powf(q)).sum::<f64>() * unit_sphere_area(3);
        let center: f64 = x.iter().zip(&w).map(|(r, w)| w * r * r * f.center.eval(*r).powf(q)).sum::<f64>() * unit_sphere_area(3);
        let exact = (pair * center).powf(1.0 / q);
        assert!((krylov_rhs(&g, &f, q).unwrap() / exact - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exponent_floor_is_enforced() {
        let (plan, g, f) = setup(10);
        assert_eq!(krylov_exponent_floor(3, 2), 4.0);
        assert!(krylov_functional(&plan, &g, &f, 5.0, 4.0).is_err());
    }

    #[test]
    fn lambda_sweep_is_bounded_and_decreasing() {
        let (plan, g, f) = setup(1000);
        let s = krylov_lambda_sweep(&plan, &g, &f, &[5.0, 10.0, 20.0], 4.5).unwrap();
        assert!(s.ratio_nonincreasing, "{s:?}");
        assert!(s.ratio_spread.is_finite() && s.ratio_spread > 1.0);
        for r in &s.reports {
            assert!(r.ratio > 0.0 && r.ratio.is_finite());
            // lambda * lhs stays below sup |g f| = |g(0.5)| on the pair support
            assert!(r.lambda * r.lhs.mean <= 1.0 + 3.0 * r.lambda * r.lhs.std_err, "{r:?}");
        }
    }
}
