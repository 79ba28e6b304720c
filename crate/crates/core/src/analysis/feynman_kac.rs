//! Resolvent u(x) = E int_0^inf e^{-lambda s} f(|z_s|) ds for a Hardy-coupled
//! pair, by Monte Carlo and by the radial boundary-value problem
//! lambda u - 2(u'' + (nu - 1)/r u') = f in r = |z|.

use serde::Serialize;

use crate::analysis::bessel::bessel_dimension;
use crate::error::{invalid, Error, Result};
use crate::kernels::KernelSpec;
use crate::lift::LiftedDrift;
use crate::sde::{run_ensemble, Estimate, Integrand, PathFunctional, RadialProfile, SimPlan};

/// Default relative tolerance between the two estimates.
pub const DEFAULT_TOLERANCE: f64 = 0.05;
/// Grid cells between the inner boundary and the starting radius target.
const BVP_CELLS: usize = 4000;
/// Accepted relative change under grid halving.
const BVP_GRID_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BvpSolution {
    pub value: f64,
    /// |u_h - u_{h/2}| before extrapolation.
    pub grid_error: f64,
    pub absorbing: bool,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeynmanKacReport {
    pub kappa: f64,
    pub dim: usize,
    pub lambda: f64,
    pub profile: RadialProfile,
    pub start_distance: f64,
    pub bessel_dimension: f64,
    pub monte_carlo: Estimate,
    pub bvp: BvpSolution,
    pub tail_bound: f64,
    pub relative_error: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
    pub collided: usize,
    pub budget_exhausted: usize,
    pub errors: usize,
}

/// Solves lambda u - 2 r^{1-nu}(r^{nu-1} u')' = f on [r_in, R] with u(R) = 0 and
/// u(r_in) = 0 (absorbing) or regularity at r_in = 0. Finite volumes on the
/// grid r = r_in + s sinh(x), with r0 on a node, Richardson over one halving.
pub fn solve_radial_bvp(nu: f64, lambda: f64, profile: &RadialProfile, r0: f64, absorbing_radius: Option<f64>) -> Result<BvpSolution> {
    if !(lambda > 0.0) || !nu.is_finite() {
        return Err(invalid("the radial problem needs lambda > 0 and finite nu"));
    }
    let r_in = absorbing_radius.unwrap_or(0.0);
    if absorbing_radius.is_none() && nu < 2.0 {
        return Err(invalid("a regular inner boundary needs nu >= 2"));
    }
    if !(r0 > r_in) || !r0.is_finite() {
        return Err(invalid("the start radius must lie above the inner boundary"));
    }
    let decay = (2.0 / lambda).sqrt();
    let r_max = r0.max(profile.extent()) + 40.0 * decay;
    let s = match absorbing_radius {
        Some(a) => a,
        None => 0.05 * r0.min(decay),
    };
    let x0 = ((r0 - r_in) / s).asinh();
    let x_max = ((r_max - r_in) / s).asinh();
    let m = ((BVP_CELLS as f64 * x0 / x_max).ceil() as usize).max(8);
    let dx = x0 / m as f64;
    let cells = (x_max / dx).ceil() as usize;
    let coarse = solve_on_grid(nu, lambda, profile, r_in, s, dx, cells, absorbing_radius.is_some())[m];
    let fine = solve_on_grid(nu, lambda, profile, r_in, s, dx / 2.0, 2 * cells, absorbing_radius.is_some())[2 * m];
    let grid_error = (fine - coarse).abs();
    if grid_error > BVP_GRID_TOL * fine.abs().max(f64::MIN_POSITIVE) && grid_error > 1e-300 {
        return Err(Error::GridUnderresolved { coarse, fine });
    }
    Ok(BvpSolution {
        value: (4.0 * fine - coarse) / 3.0,
        grid_error,
        absorbing: absorbing_radius.is_some(),
        inner_radius: r_in,
        outer_radius: r_in + s * (cells as f64 * dx).sinh(),
        nodes: 2 * cells + 1,
    })
}

/// Nodes x_i = i dx, i = 0..=cells; returns u at every node.
#[allow(clippy::too_many_arguments)]
fn solve_on_grid(nu: f64, lambda: f64, profile: &RadialProfile, r_in: f64, s: f64, dx: f64, cells: usize, absorbing: bool) -> Vec<f64> {
    let r = |x: f64| r_in + s * x.sinh();
    let dr = |x: f64| s * x.cosh();
    let w = |x: f64| r(x).powf(nu - 1.0);
    // flux coefficient r^{nu-1}/r' at half nodes
    let p = |x: f64| w(x) / dr(x);
    let n = cells + 1;
    let (mut lower, mut diag, mut upper, mut rhs) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let x = i as f64 * dx;
        if i == cells || (i == 0 && absorbing) {
            diag[i] = 1.0;
            continue;
        }
        let pr = 2.0 * p(x + 0.5 * dx) / dx;
        if i == 0 {
            // half cell [0, r(dx/2)] around the regular center
            let vol = r(0.5 * dx).powf(nu) / nu;
            diag[0] = lambda * vol + pr;
            upper[0] = -pr;
            rhs[0] = profile.eval(0.0) * vol;
            continue;
        }
        let pl = 2.0 * p(x - 0.5 * dx) / dx;
        let vol = w(x) * dr(x) * dx;
        lower[i] = -pl;
        diag[i] = lambda * vol + pl + pr;
        upper[i] = -pr;
        rhs[i] = profile.eval(r(x)) * vol;
    }
    thomas(&lower, &diag, &upper, &rhs)
}

fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// Compares the Monte-Carlo resolvent of a Hardy-attracting pair started from
/// `plan.x0` with the radial BVP. The plan supplies x0, dt, horizon, ensemble
/// and seed; its drift and functionals are replaced. Trajectories stopped at
/// the collision radius contribute their accumulated integral, matching the
/// absorbing boundary used when kappa > 16.
pub fn feynman_kac_check(kappa: f64, dim: usize, profile: RadialProfile, lambda: f64, plan: &SimPlan, tolerance: f64) -> Result<FeynmanKacReport> {
    if dim < 3 {
        return Err(Error::UnsupportedDim(dim));
    }
    if !(lambda >= 1.0) {
        return Err(invalid("lambda must be at least 1"));
    }
    if !(tolerance > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    if plan.x0.n_particles() != 2 || plan.x0.dim() != dim {
        return Err(invalid("the resolvent check runs on a pair in dimension d"));
    }
    let nu = bessel_dimension(kappa, dim);
    let r0 = plan.x0.pair_distance(0, 1);
    let absorbing = (kappa > 16.0).then_some(plan.collision_radius);
    let bvp = solve_radial_bvp(nu, lambda, &profile, r0, absorbing)?;
    let tail = profile.sup() * (-lambda * plan.horizon).exp() / lambda;
    let scale = tolerance * bvp.value.abs();
    if tail > 0.5 * scale {
        return Err(Error::TailBoundTooLarge { tail, tolerance: scale });
    }
    let mut p = plan.clone();
    p.drift = LiftedDrift::uniform(KernelSpec::hardy_attracting(kappa, dim)?, 2)?;
    p.functionals = vec![("u".into(), PathFunctional::Discounted { lambda, integrand: Integrand::PairRadial { i: 0, j: 1, profile } })];
    let result = run_ensemble(&p)?;
    let samples: Vec<f64> = result
        .outcomes
        .iter()
        .filter(|o| o.error.is_none() && !o.budget_exhausted)
        .map(|o| o.path_functionals[0])
        .collect();
    let mc = Estimate::from_samples(&samples);
    let relative_error = if bvp.value == 0.0 && mc.mean == 0.0 { 0.0 } else { (mc.mean - bvp.value).abs() / bvp.value.abs() };
    Ok(FeynmanKacReport {
        kappa,
        dim,
        lambda,
        profile,
        start_distance: r0,
        bessel_dimension: nu,
        monte_carlo: mc,
        bvp,
        tail_bound: tail,
        relative_error,
        tolerance,
        within_tolerance: relative_error <= tolerance,
        collided: result.outcomes.iter().filter(|o| o.collided && o.error.is_none()).count(),
        budget_exhausted: result.budget_exhausted,
        errors: result.errors,
    })
}
