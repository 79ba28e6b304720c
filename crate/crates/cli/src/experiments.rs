//! Experiment runners. Each keeps whatever finished before a failure so that
//! partial results can still be written.

use serde::Serialize;
use serde_json::{json, Map, Value};

use ipslab::analysis::feynman_kac::feynman_kac_check;
use ipslab::analysis::heat_kernel::heat_kernel_envelope_check;
use ipslab::analysis::krylov::{krylov_functional, KrylovSweep};
use ipslab::analysis::lyapunov::lyapunov_audit;
use ipslab::analysis::multiparticle::estimate_multiparticle_hardy;
use ipslab::analysis::phase::collision_phase_scan;
use ipslab::analysis::psi::{psi_integrability, PsiReport};
use ipslab::analysis::trial::estimate_form_bound;
use ipslab::analysis::bessel_dimension;
use ipslab::kernels::{mollify, nominal_form_bounds};
use ipslab::lift::{paper_hardy_constant, LiftedDrift, PairKernel};
use ipslab::sde::{run_ensemble, EnsembleResult, SimPlan};

use crate::config::{Config, ConfigFile, RawEnsembleAnalysis, SimConfig};
use crate::output::{Cell, RunOutput, Status, Table};

type Outcome<T> = std::result::Result<T, String>;

#[derive(Default)]
struct Builder {
    results: Map<String, Value>,
    tables: Vec<Table>,
}

impl Builder {
    fn set(&mut self, key: &str, v: impl Serialize) {
        self.results.insert(key.into(), serde_json::to_value(v).expect("results serialize"));
    }

    fn finish(self, outcome: Outcome<()>) -> RunOutput {
        let (status, error) = match outcome {
            Ok(()) => (Status::Ok, None),
            Err(e) => (Status::Failed, Some(e)),
        };
        RunOutput { status, error, results: Value::Object(self.results), tables: self.tables }
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn sim(section: &Option<SimConfig>) -> Outcome<&SimConfig> {
    section.as_ref().ok_or_else(|| "missing sim section".to_string())
}

/// Runs the configured experiment. `workers` sizes the simulation pool.
pub fn run_experiment(config: &Config, workers: Option<usize>) -> RunOutput {
    let mut b = Builder::default();
    let outcome = match config {
        Config::PhaseScan(c) => phase_scan(&mut b, c, workers),
        Config::HardyEstimate(c) => hardy_estimate(&mut b, c),
        Config::MultiparticleHardy(c) => multiparticle(&mut b, c),
        Config::PsiTest(c) => psi_test(&mut b, c),
        Config::LyapunovAudit(c) => lyapunov(&mut b, c),
        Config::HeatKernelCheck(c) => heat_kernel(&mut b, c, workers),
        Config::FeynmanKac(c) => feynman_kac(&mut b, c, workers),
        Config::Krylov(c) => krylov(&mut b, c, workers),
        Config::RawEnsemble(c) => raw_ensemble(&mut b, c, workers),
    };
    b.finish(outcome)
}

fn phase_scan(b: &mut Builder, c: &ConfigFile<crate::config::PhaseScanAnalysis>, workers: Option<usize>) -> Outcome<()> {
    let sim = sim(&c.sim)?;
    let mut table = Table::new(
        "phase_scan",
        &[
            ("kappa", "1"),
            ("bessel_dimension", "1"),
            ("p", "probability"),
            ("stderr", "probability"),
            ("oracle_p", "probability"),
            ("z_score", "1"),
            ("budget_exhausted", "trajectories"),
            ("errors", "trajectories"),
        ],
    );
    let mut rows = Vec::new();
    let mut outcome = Ok(());
    for (k, &kappa) in c.analysis.kappa_grid.iter().enumerate() {
        // one call per row keeps finished rows on failure; row k uses seed + k either way
        let step = sim.plan_without_drift(c.seed.wrapping_add(k as u64), workers).and_then(|p| collision_phase_scan(&[kappa], &p));
        match step {
            Ok(mut r) => {
                let row = r.remove(0);
                table.push(vec![
                    row.kappa.into(),
                    bessel_dimension(kappa, sim.dim).into(),
                    row.p.into(),
                    row.stderr.into(),
                    row.oracle_p.into(),
                    row.z_score.into(),
                    row.budget_exhausted.into(),
                    row.errors.into(),
                ]);
                rows.push(row);
            }
            Err(e) => {
                outcome = Err(format!("kappa = {kappa}: {e}"));
                break;
            }
        }
    }
    b.set("rows", &rows);
    b.tables.push(table);
    outcome
}

fn hardy_estimate(b: &mut Builder, c: &ConfigFile<crate::config::HardyEstimateAnalysis>) -> Outcome<()> {
    let kernel = c.kernel.as_ref().ok_or("missing kernel section")?;
    let a = &c.analysis;
    let analytic = nominal_form_bounds(kernel).ok().and_then(|v| v.into_iter().find(|r| r.flavor == a.flavor));
    b.set("flavor", a.flavor);
    b.set("family", a.family);
    b.set("analytic", analytic);
    let est = estimate_form_bound(kernel, a.flavor, a.family).map_err(err)?;
    let mut table = Table::new("history", &[("level", "1"), ("value", "1"), ("analytic", "1")]);
    for (k, v) in est.history.iter().enumerate() {
        table.push(vec![k.into(), (*v).into(), analytic.map(|r| r.kappa).into()]);
    }
    b.set("ratio_to_analytic", analytic.filter(|r| r.kappa > 0.0).map(|r| est.value / r.kappa));
    b.set("estimate", &est);
    b.tables.push(table);
    Ok(())
}

fn multiparticle(b: &mut Builder, c: &ConfigFile<crate::config::MultiparticleAnalysis>) -> Outcome<()> {
    let a = &c.analysis;
    let constant = paper_hardy_constant(a.dim, a.n_particles);
    b.set("closed_form_constant", constant);
    let est = estimate_multiparticle_hardy(a.dim, a.n_particles, a.budget, c.seed).map_err(err)?;
    let mut table = Table::new(
        "summary",
        &[
            ("dim", "1"),
            ("n_particles", "1"),
            ("ratio", "1"),
            ("ratio_stderr", "1"),
            ("inverse_ratio", "1"),
            ("inverse_ratio_stderr", "1"),
            ("floor", "1"),
            ("floor_respected", "bool"),
            ("exact_ratio", "1"),
            ("evaluations", "integrand evaluations"),
        ],
    );
    table.push(vec![
        a.dim.into(),
        a.n_particles.into(),
        est.ratio.into(),
        est.ratio_std_err.into(),
        est.estimate.value.into(),
        (est.ratio_std_err / (est.ratio * est.ratio)).into(),
        est.floor.into(),
        est.floor_respected.into(),
        est.exact_ratio.into(),
        est.evaluations.into(),
    ]);
    b.set("estimate", &est);
    b.tables.push(table);
    Ok(())
}

fn psi_row(table: &mut Table, kappa: f64, r: &PsiReport) {
    let variant = serde_json::to_value(r.variant).expect("variant serializes");
    let verdict = serde_json::to_value(r.verdict).expect("verdict serializes");
    table.push(vec![
        kappa.into(),
        variant.as_str().unwrap_or_default().into(),
        verdict.as_str().unwrap_or_default().into(),
        r.fitted_exponent.into(),
        r.predicted_exponent.into(),
        r.tail_estimate.into(),
    ]);
}

fn psi_test(b: &mut Builder, c: &ConfigFile<crate::config::PsiAnalysis>) -> Outcome<()> {
    let a = &c.analysis;
    let mut table = Table::new(
        "psi",
        &[
            ("kappa", "1"),
            ("variant", ""),
            ("verdict", ""),
            ("fitted_exponent", "1"),
            ("predicted_exponent", "1"),
            ("tail_estimate", "1"),
        ],
    );
    let mut reports = Vec::new();
    let mut outcome = Ok(());
    for &kappa in &a.kappa_grid {
        match psi_integrability(kappa, a.dim, a.n_particles, &a.probe) {
            Ok(r) => {
                psi_row(&mut table, kappa, &r.summability);
                psi_row(&mut table, kappa, &r.second_derivatives);
                reports.push(r);
            }
            Err(e) => {
                outcome = Err(format!("kappa = {kappa}: {e}"));
                break;
            }
        }
    }
    b.set("reports", &reports);
    b.tables.push(table);
    outcome
}

fn lyapunov(b: &mut Builder, c: &ConfigFile<crate::config::LyapunovAnalysis>) -> Outcome<()> {
    let a = &c.analysis;
    let mut audit = lyapunov_audit(a.kappa, a.dim, a.n_particles, a.points, a.spread, c.seed).map_err(err)?;
    let mut table = Table::new("samples", &[("index", "1"), ("min_pair_distance", "length"), ("relative_residual", "1")]);
    for (k, s) in audit.samples.iter().enumerate() {
        table.push(vec![k.into(), s.min_pair_distance.into(), s.relative_residual.into()]);
    }
    audit.samples.clear();
    b.set("audit", json!({
        "kappa": audit.kappa,
        "dim": audit.dim,
        "n_particles": audit.n_particles,
        "points": audit.points,
        "spread": a.spread,
        "rejected": audit.rejected,
        "max_relative_residual": audit.max_relative_residual,
        "mean_relative_residual": audit.mean_relative_residual,
    }));
    b.tables.push(table);
    Ok(())
}

fn heat_kernel(b: &mut Builder, c: &ConfigFile<crate::config::HeatKernelAnalysis>, workers: Option<usize>) -> Outcome<()> {
    let sim = sim(&c.sim)?;
    let a = &c.analysis;
    let plan = sim.plan_without_drift(c.seed, workers).map_err(err)?;
    let report = heat_kernel_envelope_check(a.kappa, sim.dim, sim.n_particles, &a.t_grid, &plan).map_err(err)?;
    let mut table = Table::new(
        "heat_kernel",
        &[
            ("t", "time"),
            ("samples", "trajectories"),
            ("slope", "1"),
            ("slope_silverman", "1"),
            ("bandwidth", "ln length"),
            ("window_lo", "length"),
            ("window_hi", "length"),
            ("reference_slope", "1"),
            ("envelope_constant", "1"),
        ],
    );
    for t in &report.times {
        table.push(vec![
            t.t.into(),
            t.samples.into(),
            t.slope.into(),
            t.slope_silverman.into(),
            t.bandwidth.into(),
            t.fit_window.0.into(),
            t.fit_window.1.into(),
            t.reference_slope.into(),
            t.envelope_constant.into(),
        ]);
    }
    b.set("report", &report);
    b.tables.push(table);
    Ok(())
}

fn feynman_kac(b: &mut Builder, c: &ConfigFile<crate::config::FeynmanKacAnalysis>, workers: Option<usize>) -> Outcome<()> {
    let sim = sim(&c.sim)?;
    let a = &c.analysis;
    let plan = sim.plan_without_drift(c.seed, workers).map_err(err)?;
    let r = feynman_kac_check(a.kappa, sim.dim, a.profile, a.lambda, &plan, a.tolerance).map_err(err)?;
    let mut table = Table::new(
        "feynman_kac",
        &[
            ("kappa", "1"),
            ("lambda", "1/time"),
            ("start_distance", "length"),
            ("bessel_dimension", "1"),
            ("monte_carlo", "time"),
            ("monte_carlo_stderr", "time"),
            ("bvp", "time"),
            ("bvp_grid_error", "1"),
            ("tail_bound", "time"),
            ("relative_error", "1"),
            ("tolerance", "1"),
            ("within_tolerance", "bool"),
        ],
    );
    table.push(vec![
        r.kappa.into(),
        r.lambda.into(),
        r.start_distance.into(),
        r.bessel_dimension.into(),
        r.monte_carlo.mean.into(),
        r.monte_carlo.std_err.into(),
        r.bvp.value.into(),
        r.bvp.grid_error.into(),
        r.tail_bound.into(),
        r.relative_error.into(),
        r.tolerance.into(),
        r.within_tolerance.into(),
    ]);
    b.set("report", &r);
    b.tables.push(table);
    Ok(())
}

fn krylov(b: &mut Builder, c: &ConfigFile<crate::config::KrylovAnalysis>, workers: Option<usize>) -> Outcome<()> {
    let sim = sim(&c.sim)?;
    let g = c.kernel.as_ref().ok_or("missing kernel section")?;
    let a = &c.analysis;
    let plan = sim.drift().and_then(|d| sim.plan(d, c.seed, workers)).map_err(err)?;
    let mut table = Table::new(
        "krylov",
        &[
            ("lambda", "1/time"),
            ("q", "1"),
            ("lhs", "time"),
            ("lhs_stderr", "time"),
            ("rhs", "1"),
            ("ratio", "time"),
            ("collided", "trajectories"),
            ("budget_exhausted", "trajectories"),
            ("errors", "trajectories"),
        ],
    );
    let mut reports = Vec::new();
    let mut outcome = Ok(());
    for &lambda in &a.lambdas {
        match krylov_functional(&plan, g, &a.test_function, lambda, a.q) {
            Ok(r) => {
                table.push(vec![
                    r.lambda.into(),
                    r.q.into(),
                    r.lhs.mean.into(),
                    r.lhs.std_err.into(),
                    r.rhs.into(),
                    r.ratio.into(),
                    r.collided.into(),
                    r.budget_exhausted.into(),
                    r.errors.into(),
                ]);
                reports.push(r);
            }
            Err(e) => {
                outcome = Err(format!("lambda = {lambda}: {e}"));
                break;
            }
        }
    }
    b.set("sweep", KrylovSweep::from_reports(reports));
    b.tables.push(table);
    outcome
}

fn ensemble_summary(eps: Option<f64>, r: &EnsembleResult) -> Value {
    json!({
        "epsilon": eps,
        "collision_probability": r.collision_probability,
        "functional_means": r.functional_means.iter().map(|(n, e)| json!({"name": n, "mean": e.mean, "std_err": e.std_err})).collect::<Vec<_>>(),
        "budget_exhausted": r.budget_exhausted,
        "errors": r.errors,
        "collided": r.outcomes.iter().filter(|o| o.collided).count(),
        "mean_steps": r.outcomes.iter().map(|o| o.steps as f64).sum::<f64>() / r.outcomes.len().max(1) as f64,
    })
}

fn raw_ensemble(b: &mut Builder, c: &ConfigFile<RawEnsembleAnalysis>, workers: Option<usize>) -> Outcome<()> {
    let sim = sim(&c.sim)?;
    let kernel = sim.drift.clone().ok_or("sim.drift is required")?;
    let base = sim.drift().and_then(|d| sim.plan(d, c.seed, workers)).map_err(err)?;
    let (n, d) = (sim.n_particles, sim.dim);
    let names: Vec<&str> = sim.functionals.iter().map(|f| f.name.as_str()).collect();

    let mut summary_cols: Vec<(String, String)> = [
        ("epsilon", "length"),
        ("collision_probability", "probability"),
        ("stderr", "probability"),
        ("budget_exhausted", "trajectories"),
        ("errors", "trajectories"),
    ]
    .iter()
    .map(|(a, u)| (a.to_string(), u.to_string()))
    .collect();
    for name in &names {
        summary_cols.push((format!("mean_{name}"), "functional".into()));
        summary_cols.push((format!("stderr_{name}"), "functional".into()));
    }
    let mut summary = Table { name: "summary".into(), columns: summary_cols, rows: Vec::new() };

    let mut traj_cols: Vec<(String, String)> = [
        ("epsilon", "length"),
        ("index", "1"),
        ("collided", "bool"),
        ("collision_time", "time"),
        ("budget_exhausted", "bool"),
        ("error", ""),
        ("min_pair_distance_seen", "length"),
        ("steps", "substeps"),
    ]
    .iter()
    .map(|(a, u)| (a.to_string(), u.to_string()))
    .collect();
    traj_cols.extend(names.iter().map(|n| (n.to_string(), "functional".to_string())));
    traj_cols.extend((0..n).flat_map(|i| (0..d).map(move |k| (format!("x{i}_{k}"), "length".to_string()))));
    let mut trajectories = Table { name: "trajectories".into(), columns: traj_cols, rows: Vec::new() };

    let mut snap_cols: Vec<(String, String)> =
        [("epsilon", "length"), ("index", "1"), ("time", "time")].iter().map(|(a, u)| (a.to_string(), u.to_string())).collect();
    snap_cols.extend((0..n).flat_map(|i| (0..d).map(move |k| (format!("x{i}_{k}"), "length".to_string()))));
    let mut snapshots = Table { name: "snapshots".into(), columns: snap_cols, rows: Vec::new() };

    let levels: Vec<Option<f64>> = if sim.epsilon_schedule.is_empty() { vec![sim.epsilon] } else { sim.epsilon_schedule.iter().map(|e| Some(*e)).collect() };
    let mut runs = Vec::new();
    let mut outcome = Ok(());
    for eps in levels {
        let step = || -> ipslab::Result<EnsembleResult> {
            let mut plan: SimPlan = base.clone();
            if !sim.epsilon_schedule.is_empty() {
                let m = mollify(&kernel, eps.expect("schedule entries are set"))?;
                plan.drift = LiftedDrift::uniform(PairKernel::Mollified(m), n)?;
            }
            run_ensemble(&plan)
        };
        let r = match step() {
            Ok(r) => r,
            Err(e) => {
                outcome = Err(match eps {
                    Some(e2) => format!("epsilon = {e2}: {e}"),
                    None => e.to_string(),
                });
                break;
            }
        };
        let mut row: Vec<Cell> = vec![
            eps.into(),
            r.collision_probability.mean.into(),
            r.collision_probability.std_err.into(),
            r.budget_exhausted.into(),
            r.errors.into(),
        ];
        for (_, e) in &r.functional_means {
            row.push(e.mean.into());
            row.push(e.std_err.into());
        }
        summary.push(row);
        for o in &r.outcomes {
            if c.analysis.write_trajectories {
                let mut row: Vec<Cell> = vec![
                    eps.into(),
                    o.index.into(),
                    o.collided.into(),
                    o.collision_time.into(),
                    o.budget_exhausted.into(),
                    o.error.clone().into(),
                    o.min_pair_distance_seen.into(),
                    o.steps.into(),
                ];
                row.extend(o.path_functionals.iter().map(|v| Cell::from(*v)));
                row.extend(o.terminal.iter().map(|v| Cell::from(*v)));
                trajectories.push(row);
            }
            for (t, s) in sim.snapshots.iter().zip(&o.snapshots) {
                if let Some(x) = s {
                    let mut row: Vec<Cell> = vec![eps.into(), o.index.into(), (*t).into()];
                    row.extend(x.iter().map(|v| Cell::from(*v)));
                    snapshots.push(row);
                }
            }
        }
        runs.push(ensemble_summary(eps, &r));
    }
    b.set("runs", runs);
    b.tables.push(summary);
    if c.analysis.write_trajectories {
        b.tables.push(trajectories);
    }
    if !sim.snapshots.is_empty() {
        b.tables.push(snapshots);
    }
    outcome
}
