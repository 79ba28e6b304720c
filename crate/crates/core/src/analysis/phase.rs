//! Collision probability as a function of the interaction strength.

use serde::{Deserialize, Serialize};

use crate::analysis::bessel::BesselOracle;
use crate::error::{invalid, Result};
use crate::kernels::KernelSpec;
use crate::lift::LiftedDrift;
use crate::sde::{run_ensemble, SimPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub kappa: f64,
    pub p: f64,
    pub stderr: f64,
    /// Two-body Bessel prediction, present for N = 2.
    pub oracle_p: Option<f64>,
    /// |p - oracle| / stderr, with stderr floored at 1/(2M) so that p = 0 rows stay meaningful.
    pub z_score: Option<f64>,
    pub budget_exhausted: usize,
    pub errors: usize,
}

/// Runs the template plan once per kappa with a Hardy attraction of that
/// strength as the uniform pair kernel. Row k uses master seed `seed + k`, so
/// rows are statistically independent.
pub fn collision_phase_scan(kappa_grid: &[f64], plan_template: &SimPlan) -> Result<Vec<PhaseRow>> {
    if kappa_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("kappa grid must be sorted"));
    }
    let n = plan_template.x0.n_particles();
    let d = plan_template.x0.dim();
    let mut rows = Vec::with_capacity(kappa_grid.len());
    for (k, &kappa) in kappa_grid.iter().enumerate() {
        let kernel = KernelSpec::hardy_attracting(kappa, d)?;
        let mut plan = plan_template.clone();
        plan.seed = plan_template.seed.wrapping_add(k as u64);
        plan.drift = LiftedDrift::uniform(kernel, n)?;
        let result = run_ensemble(&plan)?;
        let cp = result.collision_probability;
        let oracle_p = if n == 2 {
            let oracle = BesselOracle::new(kappa, d)?;
            Some(oracle.collision_probability(plan.x0.pair_distance(0, 1), plan.collision_radius, plan.horizon)?)
        } else {
            None
        };
        let floor = 0.5 / plan.ensemble as f64;
        rows.push(PhaseRow {
            kappa,
            p: cp.mean,
            stderr: cp.std_err,
            oracle_p,
            z_score: oracle_p.map(|q| {
                // combined error: MC error at the oracle value (the oracle itself is exact to 1e-3 or better)
                let se = (q * (1.0 - q) / plan.ensemble as f64).sqrt().max(cp.std_err).max(floor);
                (cp.mean - q).abs() / se
            }),
            budget_exhausted: result.budget_exhausted,
            errors: result.errors,
        });
    }
    Ok(rows)
}
