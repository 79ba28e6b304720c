//! Cross-field checks on a parsed configuration.

use std::fmt;

use serde::Serialize;

use ipslab::analysis::bessel_dimension;
use ipslab::analysis::krylov::krylov_exponent_floor;
use ipslab::kernels::{KernelSpec, SINGULARITY_GUARD};

use crate::config::{Config, ExperimentKind, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag}: {}: {}", self.field, self.message)
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

/// Relative distance to a threshold below which kappa is flagged.
pub const THRESHOLD_BAND: f64 = 0.05;

#[derive(Default)]
struct Sink(Vec<Diagnostic>);

impl Sink {
    fn push(&mut self, severity: Severity, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic { severity, field: field.into(), message: message.into() });
    }
    fn error(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Error, field, message)
    }
    fn warning(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Warning, field, message)
    }
    fn info(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Info, field, message)
    }

    fn dim(&mut self, field: &str, d: usize) -> bool {
        if d < 3 {
            self.error(field, format!("dimension {d} unsupported: the theory and every estimator require d >= 3"));
            false
        } else {
            true
        }
    }

    /// Flags kappa near the collision threshold 16 and near the
    /// summability threshold 16 (d/(d-2))^2.
    fn kappa(&mut self, field: &str, kappa: f64, d: usize) {
        if !(kappa.is_finite() && kappa >= 0.0) {
            self.error(field, format!("kappa must be finite and >= 0, got {kappa}"));
            return;
        }
        if d < 3 {
            return;
        }
        let dd = d as f64;
        let summability = 16.0 * (dd / (dd - 2.0)).powi(2);
        for (t, what) in [(16.0, "collision threshold (Bessel dimension 2)"), (summability, "local summability threshold of the invariant density")] {
            if (kappa - t).abs() <= THRESHOLD_BAND * t {
                self.info(
                    field,
                    format!("kappa = {kappa} is within 5% of the {what} {t}; Bessel dimension {:.4}", bessel_dimension(kappa, d)),
                );
            }
        }
    }

    fn positive(&mut self, field: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.error(field, format!("must be positive, got {v}"));
        }
    }

    fn kernel(&mut self, field: &str, k: &KernelSpec) {
        if self.dim(&format!("{field}.dim"), k.dim()) {
            self.kappa(&format!("{field}.kappa"), k.kappa(), k.dim());
        }
    }
}

fn check_sim(s: &mut Sink, sim: &SimConfig, kind: ExperimentKind) {
    s.dim("sim.dim", sim.dim);
    if sim.n_particles < 2 {
        s.error("sim.n_particles", "at least two particles are needed");
    }
    s.positive("sim.dt", sim.dt);
    s.positive("sim.horizon", sim.horizon);
    if sim.dt > sim.horizon {
        s.error("sim.dt", format!("dt = {} exceeds the horizon {}", sim.dt, sim.horizon));
    }
    if sim.ensemble == 0 {
        s.error("sim.ensemble", "ensemble must contain at least one trajectory");
    }
    if !(sim.collision_radius > SINGULARITY_GUARD) {
        s.error("sim.collision_radius", format!("must exceed the singularity guard {SINGULARITY_GUARD:e}"));
    }
    if sim.max_substeps == 0 {
        s.error("sim.max_substeps", "must be positive");
    }
    s.positive("sim.diffusion_fraction", sim.diffusion_fraction);
    match sim.initial() {
        Ok(x) => {
            let (rho, i, j) = x.min_pair_distance();
            if rho < sim.collision_radius {
                s.error("sim", format!("particles {i} and {j} start at distance {rho:e}, inside the collision radius"));
            }
        }
        Err(e) => s.error("sim", e.to_string()),
    }
    for (k, t) in sim.snapshots.iter().enumerate() {
        if !(*t >= 0.0 && *t <= sim.horizon) {
            s.error(format!("sim.snapshots[{k}]"), format!("time {t} outside [0, horizon]"));
        }
    }
    let quarter = sim.collision_radius / 4.0;
    let eps_fields = sim.epsilon.iter().map(|e| ("sim.epsilon".to_string(), *e)).chain(
        sim.epsilon_schedule.iter().enumerate().map(|(k, e)| (format!("sim.epsilon_schedule[{k}]"), *e)),
    );
    for (field, eps) in eps_fields {
        if !(eps > 0.0) {
            s.error(field, format!("mollification radius must be positive, got {eps}"));
        } else if eps > quarter {
            s.warning(
                field,
                format!("mollification radius {eps} exceeds r_coll/4 = {quarter}; the smoothed drift is felt before the collision radius"),
            );
        }
    }
    match &sim.drift {
        Some(k) if kind.uses_sim_drift() => {
            s.kernel("sim.drift", k);
            if k.dim() != sim.dim {
                s.error("sim.drift.dim", format!("kernel dimension {} differs from sim.dim {}", k.dim(), sim.dim));
            }
        }
        Some(_) => s.warning("sim.drift", format!("ignored: {kind} fixes the drift to the Hardy attraction of analysis.kappa")),
        None if kind.uses_sim_drift() => s.error("sim.drift", format!("{kind} needs a drift kernel")),
        None => {}
    }
    if !kind.uses_sim_drift() && (sim.epsilon.is_some() || !sim.epsilon_schedule.is_empty()) {
        s.warning("sim.epsilon", format!("ignored: {kind} runs the unmollified drift"));
    }
    if kind != ExperimentKind::RawEnsemble && !sim.epsilon_schedule.is_empty() {
        s.warning("sim.epsilon_schedule", format!("ignored by {kind}"));
    }
    if sim.epsilon.is_some() && !sim.epsilon_schedule.is_empty() {
        s.warning("sim.epsilon", "ignored when sim.epsilon_schedule is given");
    }
    if kind != ExperimentKind::RawEnsemble && !sim.functionals.is_empty() {
        s.warning("sim.functionals", format!("ignored: {kind} sets its own path functionals"));
    }
}

fn check_grid(s: &mut Sink, field: &str, grid: &[f64]) {
    if grid.is_empty() {
        s.error(field, "must not be empty");
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        s.error(field, "must be strictly increasing");
    }
}

/// Schema-level and cross-field diagnostics, most severe first.
pub fn validate(config: &Config) -> Vec<Diagnostic> {
    let mut s = Sink::default();
    let kind = config.kind();
    match (config.kernel(), kind.uses_kernel()) {
        (Some(k), true) => s.kernel("kernel", k),
        (Some(_), false) => s.warning("kernel", format!("unused by {kind}")),
        (None, true) => s.error("kernel", format!("{kind} needs a kernel section")),
        (None, false) => {}
    }
    match (config.sim(), kind.uses_sim()) {
        (Some(sim), true) => check_sim(&mut s, sim, kind),
        (Some(_), false) => s.warning("sim", format!("unused by {kind}")),
        (None, true) => s.error("sim", format!("{kind} needs a sim section")),
        (None, false) => {}
    }
    let sim_nd = config.sim().map(|c| (c.n_particles, c.dim));
    match config {
        Config::PhaseScan(c) => {
            check_grid(&mut s, "analysis.kappa_grid", &c.analysis.kappa_grid);
            if let Some((_, d)) = sim_nd {
                for (k, kappa) in c.analysis.kappa_grid.iter().enumerate() {
                    s.kappa(&format!("analysis.kappa_grid[{k}]"), *kappa, d);
                }
            }
            if matches!(sim_nd, Some((n, _)) if n != 2) {
                s.info("sim.n_particles", "no closed-form oracle for N > 2; oracle_p is left empty");
            }
        }
        Config::HardyEstimate(_) => {}
        Config::MultiparticleHardy(c) => {
            s.dim("analysis.dim", c.analysis.dim);
            if c.analysis.n_particles < 2 {
                s.error("analysis.n_particles", "at least two particles are needed");
            }
            if c.analysis.budget == 0 {
                s.error("analysis.budget", "must be positive");
            }
        }
        Config::PsiTest(c) => {
            let a = &c.analysis;
            if s.dim("analysis.dim", a.dim) {
                for (k, kappa) in a.kappa_grid.iter().enumerate() {
                    s.kappa(&format!("analysis.kappa_grid[{k}]"), *kappa, a.dim);
                }
            }
            if a.n_particles < 2 {
                s.error("analysis.n_particles", "at least two particles are needed");
            }
            if a.kappa_grid.is_empty() {
                s.error("analysis.kappa_grid", "must not be empty");
            }
            if !(a.probe.ln_first < 0.0 && a.probe.ln_ratio < 0.0 && a.probe.count >= 8) {
                s.error("analysis.probe", "needs ln_first < 0, ln_ratio < 0 and count >= 8");
            }
        }
        Config::LyapunovAudit(c) => {
            let a = &c.analysis;
            if s.dim("analysis.dim", a.dim) {
                s.kappa("analysis.kappa", a.kappa, a.dim);
            }
            if a.n_particles < 2 {
                s.error("analysis.n_particles", "at least two particles are needed");
            }
            if a.points == 0 {
                s.error("analysis.points", "must be positive");
            }
            s.positive("analysis.spread", a.spread);
        }
        Config::HeatKernelCheck(c) => {
            let a = &c.analysis;
            if let Some((_, d)) = sim_nd {
                s.kappa("analysis.kappa", a.kappa, d);
            }
            if !(a.kappa >= 0.0 && a.kappa < 16.0) {
                s.error("analysis.kappa", "the envelope check needs 0 <= kappa < 16");
            }
            check_grid(&mut s, "analysis.t_grid", &a.t_grid);
            for (k, t) in a.t_grid.iter().enumerate() {
                s.positive(&format!("analysis.t_grid[{k}]"), *t);
            }
            if matches!(sim_nd, Some((n, _)) if n != 2) {
                s.info("sim.n_particles", "slopes and the envelope constant are reported for N = 2 only");
            }
        }
        Config::FeynmanKac(c) => {
            let a = &c.analysis;
            if let Some((n, d)) = sim_nd {
                s.kappa("analysis.kappa", a.kappa, d);
                if n != 2 {
                    s.error("sim.n_particles", "the resolvent cross-check runs on a pair (N = 2)");
                }
            }
            if !(a.lambda >= 1.0) {
                s.error("analysis.lambda", format!("must be at least 1, got {}", a.lambda));
            }
            s.positive("analysis.tolerance", a.tolerance);
        }
        Config::Krylov(c) => {
            let a = &c.analysis;
            if let Some((n, d)) = sim_nd {
                if n != 2 {
                    s.error("sim.n_particles", "the Krylov functional is implemented for pairs (N = 2)");
                }
                if let Some(k) = config.kernel() {
                    if k.dim() != d {
                        s.error("kernel.dim", format!("kernel dimension {} differs from sim.dim {d}", k.dim()));
                    }
                }
                let floor = krylov_exponent_floor(d, n);
                if !(a.q > floor) {
                    s.error("analysis.q", format!("must exceed (dN - 2) v 2 = {floor}, got {}", a.q));
                }
            }
            if a.lambdas.is_empty() {
                s.error("analysis.lambdas", "must not be empty");
            }
            for (k, l) in a.lambdas.iter().enumerate() {
                s.positive(&format!("analysis.lambdas[{k}]"), *l);
            }
        }
        Config::RawEnsemble(_) => {}
    }
    let mut diags = s.0;
    diags.sort_by(|a, b| b.severity.cmp(&a.severity));
    diags
}
