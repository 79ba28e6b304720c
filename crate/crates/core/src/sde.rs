//! Seeded, parallel Euler–Maruyama simulation of dX = -b(X) dt + sqrt(2) dB
//! with collision detection and path-functional recording.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{self, KernelSpec, SINGULARITY_GUARD};
use crate::lift::{min_pair_distance, pair_distance, LiftedDrift, PairKernel, ParticleConfiguration};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    EulerMaruyama,
    /// b dt replaced by b dt / (1 + dt |b|)
    TamedEuler,
}

/// Radial profile used by path-functional integrands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialProfile {
    /// exp(-r^2 / (2 width^2))
    Gaussian { width: f64 },
    /// exp(1 - 1/(1 - s^2)) with s = (r - center)/half_width, zero for |s| >= 1
    Bump { center: f64, half_width: f64 },
    /// f = 0
    Zero,
}

impl RadialProfile {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            RadialProfile::Gaussian { width } => (-r * r / (2.0 * width * width)).exp(),
            RadialProfile::Bump { center, half_width } => {
                let s = (r - center) / half_width;
                if s.abs() < 1.0 {
                    (1.0 - 1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
            RadialProfile::Zero => 0.0,
        }
    }

    /// Largest value on [0, inf).
    pub fn sup(&self) -> f64 {
        match self {
            RadialProfile::Zero => 0.0,
            _ => 1.0,
        }
    }

    /// Radius beyond which the profile is zero or below e^{-32}.
    pub fn extent(&self) -> f64 {
        match *self {
            RadialProfile::Gaussian { width } => 8.0 * width,
            RadialProfile::Bump { center, half_width } => center + half_width,
            RadialProfile::Zero => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RadialProfile::Gaussian { width } => width > 0.0,
            RadialProfile::Bump { center, half_width } => half_width > 0.0 && center.is_finite(),
            RadialProfile::Zero => true,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid radial profile {self:?}")))
        }
    }
}

/// Integrand f(x) of a discounted path functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Integrand {
    One,
    /// profile(|x_i - x_j|)
    PairRadial { i: usize, j: usize, profile: RadialProfile },
    /// profile(|centroid|)
    CenterRadial { profile: RadialProfile },
    /// |g(x_i - x_j)|
    PairKernelNorm { i: usize, j: usize, kernel: KernelSpec },
    Product { factors: Vec<Integrand> },
}

impl Integrand {
    pub fn eval(&self, x: &[f64], n: usize, d: usize) -> f64 {
        match self {
            Integrand::One => 1.0,
            Integrand::PairRadial { i, j, profile } => profile.eval(pair_distance(x, d, *i, *j)),
            Integrand::CenterRadial { profile } => {
                let mut c2 = 0.0;
                for k in 0..d {
                    let c = (0..n).map(|i| x[i * d + k]).sum::<f64>() / n as f64;
                    c2 += c * c;
                }
                profile.eval(c2.sqrt())
            }
            Integrand::PairKernelNorm { i, j, kernel } => {
                let y: Vec<f64> = (0..d).map(|k| x[i * d + k] - x[j * d + k]).collect();
                match kernels::eval_kernel(kernel, &y) {
                    Ok(v) => kernels::norm_sq(&v).sqrt(),
                    Err(_) => f64::INFINITY,
                }
            }
            Integrand::Product { factors } => {
                let mut v = 1.0;
                for f in factors {
                    v *= f.eval(x, n, d);
                    if v == 0.0 {
                        break;
                    }
                }
                v
            }
        }
    }

    fn validate(&self, n: usize, d: usize) -> Result<()> {
        let pair_ok = |i: usize, j: usize| {
            if i < n && j < n && i != j {
                Ok(())
            } else {
                Err(invalid(format!("pair ({i}, {j}) invalid for {n} particles")))
            }
        };
        match self {
            Integrand::One => Ok(()),
            Integrand::PairRadial { i, j, profile } => {
                pair_ok(*i, *j)?;
                profile.validate()
            }
            Integrand::CenterRadial { profile } => profile.validate(),
            Integrand::PairKernelNorm { i, j, kernel } => {
                pair_ok(*i, *j)?;
                if kernel.dim() != d {
                    return Err(invalid("integrand kernel dimension mismatch"));
                }
                Ok(())
            }
            Integrand::Product { factors } => factors.iter().try_for_each(|f| f.validate(n, d)),
        }
    }
}

/// A named accumulator along each trajectory, integrated by left-endpoint quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathFunctional {
    /// int_0^T |b(X_s)| ds
    DriftNorm,
    /// int_0^T e^{-lambda s} f(X_s) ds
    Discounted { lambda: f64, integrand: Integrand },
}

/// Everything that determines an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPlan {
    pub drift: LiftedDrift,
    pub x0: ParticleConfiguration,
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    /// Mollification radii for epsilon studies; see [`run_epsilon_schedule`].
    pub epsilon_schedule: Vec<f64>,
    pub collision_radius: f64,
    /// Cap on adaptive substeps within one base step.
    pub max_substeps: usize,
    pub seed: u64,
    pub ensemble: usize,
    pub functionals: Vec<(String, PathFunctional)>,
    /// Times at which the configuration is recorded.
    pub snapshots: Vec<f64>,
    /// Substep control: Brownian displacement per substep at most this fraction of the closest pair distance.
    pub diffusion_fraction: f64,
    /// Use the Brownian-bridge crossing probability between substeps.
    pub bridge_correction: bool,
    /// Worker threads; `None` uses all logical cores.
    pub workers: Option<usize>,
}

impl SimPlan {
    pub fn new(drift: LiftedDrift, x0: ParticleConfiguration, dt: f64, horizon: f64) -> Self {
        Self {
            drift,
            x0,
            dt,
            horizon,
            scheme: Scheme::EulerMaruyama,
            epsilon_schedule: Vec::new(),
            collision_radius: 1e-3,
            max_substeps: 100_000,
            seed: 0,
            ensemble: 1,
            functionals: Vec::new(),
            snapshots: Vec::new(),
            diffusion_fraction: 0.1,
            bridge_correction: true,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.horizon > 0.0 && self.dt <= self.horizon) {
            return Err(invalid(format!("need 0 < dt <= horizon, got dt={} T={}", self.dt, self.horizon)));
        }
        if !(self.collision_radius > SINGULARITY_GUARD) {
            return Err(invalid("collision radius must exceed the singularity guard"));
        }
        if self.ensemble == 0 {
            return Err(invalid("ensemble must contain at least one trajectory"));
        }
        if self.max_substeps == 0 {
            return Err(invalid("max_substeps must be positive"));
        }
        if !(self.diffusion_fraction > 0.0) {
            return Err(invalid("diffusion_fraction must be positive"));
        }
        if self.x0.n_particles() != self.drift.n_particles() || self.x0.dim() != self.drift.dim() {
            return Err(invalid("initial configuration does not match the drift"));
        }
        if self.x0.min_pair_distance().0 < self.collision_radius {
            return Err(invalid("initial configuration already within the collision radius"));
        }
        if self.snapshots.iter().any(|t| !(*t >= 0.0 && *t <= self.horizon)) {
            return Err(invalid("snapshot times must lie in [0, horizon]"));
        }
        if self.epsilon_schedule.iter().any(|e| !(*e > 0.0)) {
            return Err(invalid("mollification radii must be positive"));
        }
        for (name, f) in &self.functionals {
            if let PathFunctional::Discounted { lambda, integrand } = f {
                if !(*lambda >= 0.0) {
                    return Err(invalid(format!("functional {name}: lambda must be >= 0")));
                }
                integrand.validate(self.x0.n_particles(), self.x0.dim())?;
            }
        }
        Ok(())
    }
}

/// Result of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryOutcome {
    pub index: usize,
    pub collided: bool,
    pub collision_time: Option<f64>,
    /// Substep budget exhaustion, counted as a collision.
    pub budget_exhausted: bool,
    /// Error raised during the trajectory, if any (also counted as a collision).
    pub error: Option<String>,
    /// Configuration at the horizon or at the collision time.
    pub terminal: Vec<f64>,
    pub path_functionals: Vec<f64>,
    pub min_pair_distance_seen: f64,
    /// Configuration at each requested snapshot time, if reached.
    pub snapshots: Vec<Option<Vec<f64>>>,
    pub steps: u64,
}

/// One Euler–Maruyama (or tamed) step with a given standard-normal increment.
pub fn step(drift: &LiftedDrift, x: &ParticleConfiguration, dt: f64, xi: &[f64], scheme: Scheme) -> Result<ParticleConfiguration> {
    let b = drift.eval(x)?;
    if xi.len() != b.len() {
        return Err(invalid("increment has the wrong length"));
    }
    let mut y = x.clone();
    let scale = drift_scale(&b, dt, scheme);
    let s = (2.0 * dt).sqrt();
    for ((p, bk), z) in y.positions_mut().iter_mut().zip(&b).zip(xi) {
        *p += -scale * bk + s * z;
    }
    Ok(y)
}

fn drift_scale(b: &[f64], dt: f64, scheme: Scheme) -> f64 {
    match scheme {
        Scheme::EulerMaruyama => dt,
        Scheme::TamedEuler => dt / (1.0 + dt * kernels::norm_sq(b).sqrt()),
    }
}

/// RNG stream for trajectory `index` under master seed `seed`.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Integrates one trajectory from x0 to the horizon or the first collision.
pub fn simulate(plan: &SimPlan, trajectory_index: usize) -> TrajectoryOutcome {
    let n = plan.x0.n_particles();
    let d = plan.x0.dim();
    let nd = n * d;
    let mut rng = trajectory_rng(plan.seed, trajectory_index);
    let mut x = plan.x0.positions().to_vec();
    let mut b = vec![0.0; nd];
    let mut x_new = vec![0.0; nd];
    let mut functionals = vec![0.0; plan.functionals.len()];
    let mut snapshots: Vec<Option<Vec<f64>>> = vec![None; plan.snapshots.len()];
    let mut order: Vec<usize> = (0..plan.snapshots.len()).collect();
    order.sort_by(|a, b| plan.snapshots[*a].total_cmp(&plan.snapshots[*b]));
    let mut next_snap = 0;
    let r_coll = plan.collision_radius;
    let mut rho_seen = f64::INFINITY;
    let mut t = 0.0;
    let mut steps = 0u64;
    let outcome = |collided: bool, time: Option<f64>, exhausted: bool, err: Option<String>, x: &[f64], f: Vec<f64>, s, rho, steps| {
        TrajectoryOutcome {
            index: trajectory_index,
            collided,
            collision_time: time,
            budget_exhausted: exhausted,
            error: err,
            terminal: x.to_vec(),
            path_functionals: f,
            min_pair_distance_seen: rho,
            snapshots: s,
            steps,
        }
    };
    let n_base = (plan.horizon / plan.dt - 1e-9).ceil().max(1.0) as u64;
    let sigma_rel2 = 4.0; // variance rate of a pair difference per coordinate
    let alpha = plan.diffusion_fraction;
    'base: for base in 0..n_base {
        let t_base_end = ((base + 1) as f64 * plan.dt).min(plan.horizon);
        let mut substeps = 0usize;
        while t < t_base_end - 1e-15 {
            while next_snap < order.len() && plan.snapshots[order[next_snap]] <= t + 1e-12 {
                snapshots[order[next_snap]] = Some(x.clone());
                next_snap += 1;
            }
            let (rho, _, _) = min_pair_distance(&x, n, d);
            rho_seen = rho_seen.min(rho);
            if let Err(e) = plan.drift.eval_into(&x, &mut b) {
                let collided = matches!(e, Error::CollisionState { .. });
                return outcome(true, Some(t), false, (!collided).then(|| e.to_string()), &x, functionals, snapshots, rho_seen, steps);
            }
            let bnorm = kernels::norm_sq(&b).sqrt();
            let mut h = t_base_end - t;
            if rho < 10.0 * r_coll && bnorm > 0.0 {
                h = h.min(0.1 * rho / bnorm);
            }
            h = h.min((alpha * rho).powi(2) / sigma_rel2);
            if let Some(&k) = order.get(next_snap) {
                let ts = plan.snapshots[k];
                if ts > t {
                    h = h.min(ts - t);
                }
            }
            substeps += 1;
            if substeps > plan.max_substeps {
                return outcome(true, Some(t), true, None, &x, functionals, snapshots, rho_seen, steps);
            }
            for (k, (_, f)) in plan.functionals.iter().enumerate() {
                functionals[k] += h * match f {
                    PathFunctional::DriftNorm => bnorm,
                    PathFunctional::Discounted { lambda, integrand } => (-lambda * t).exp() * integrand.eval(&x, n, d),
                };
            }
            let scale = match plan.scheme {
                Scheme::EulerMaruyama => h,
                Scheme::TamedEuler => h / (1.0 + h * bnorm),
            };
            let s = (2.0 * h).sqrt();
            for k in 0..nd {
                let z: f64 = rng.sample(StandardNormal);
                x_new[k] = x[k] - scale * b[k] + s * z;
            }
            steps += 1;
            t += h;
            let (rho_new, _, _) = min_pair_distance(&x_new, n, d);
            let mut hit = rho_new < r_coll;
            if !hit && plan.bridge_correction {
                hit = bridge_crossing(&x, &x_new, n, d, r_coll, sigma_rel2 * h, &mut rng);
            }
            std::mem::swap(&mut x, &mut x_new);
            if hit {
                rho_seen = rho_seen.min(rho_new.min(r_coll));
                return outcome(true, Some(t), false, None, &x, functionals, snapshots, rho_seen, steps);
            }
            if t >= plan.horizon - 1e-15 {
                break 'base;
            }
        }
    }
    while next_snap < order.len() {
        snapshots[order[next_snap]] = Some(x.clone());
        next_snap += 1;
    }
    let (rho, _, _) = min_pair_distance(&x, n, d);
    rho_seen = rho_seen.min(rho);
    outcome(false, None, false, None, &x, functionals, snapshots, rho_seen, steps)
}

/// Probability that a pair distance crossed the collision radius between two
/// recorded points, from the half-space Brownian-bridge formula. Consumes one
/// uniform draw only when some pair is close enough for the crossing to matter.
fn bridge_crossing(x0: &[f64], x1: &[f64], n: usize, d: usize, r_coll: f64, var: f64, rng: &mut ChaCha8Rng) -> bool {
    let mut survive = 1.0;
    let reach = 6.0 * var.sqrt();
    for i in 0..n {
        for j in i + 1..n {
            let a = pair_distance(x0, d, i, j) - r_coll;
            let b = pair_distance(x1, d, i, j) - r_coll;
            if a < reach && b < reach {
                survive *= 1.0 - (-2.0 * a * b / var).exp();
            }
        }
    }
    if survive < 1.0 {
        rng.random::<f64>() > survive
    } else {
        false
    }
}

/// Mean with Monte-Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn from_samples(v: &[f64]) -> Self {
        let m = v.len() as f64;
        if v.is_empty() {
            return Self { mean: f64::NAN, std_err: f64::NAN };
        }
        let mean = v.iter().sum::<f64>() / m;
        let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
        Self { mean, std_err: (var / m).sqrt() }
    }

    /// Binomial proportion with standard error sqrt(p(1-p)/M).
    pub fn proportion(successes: usize, trials: usize) -> Self {
        let m = trials as f64;
        let p = successes as f64 / m;
        Self { mean: p, std_err: (p * (1.0 - p) / m).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub outcomes: Vec<TrajectoryOutcome>,
    pub collision_probability: Estimate,
    /// Mean of each functional over completed (non-collided) trajectories.
    pub functional_means: Vec<(String, Estimate)>,
    pub budget_exhausted: usize,
    pub errors: usize,
}

impl EnsembleResult {
    fn aggregate(plan: &SimPlan, outcomes: Vec<TrajectoryOutcome>) -> Self {
        let collided = outcomes.iter().filter(|o| o.collided).count();
        let functional_means = plan
            .functionals
            .iter()
            .enumerate()
            .map(|(k, (name, _))| {
                let v: Vec<f64> = outcomes.iter().filter(|o| !o.collided).map(|o| o.path_functionals[k]).collect();
                (name.clone(), Estimate::from_samples(&v))
            })
            .collect();
        Self {
            collision_probability: Estimate::proportion(collided, outcomes.len()),
            functional_means,
            budget_exhausted: outcomes.iter().filter(|o| o.budget_exhausted).count(),
            errors: outcomes.iter().filter(|o| o.error.is_some()).count(),
            outcomes,
        }
    }
}

/// Runs the plan's ensemble in parallel. Each trajectory draws from its own
/// stream derived from (seed, index) and results are gathered in index order,
/// so the output does not depend on the number of workers.
pub fn run_ensemble(plan: &SimPlan) -> Result<EnsembleResult> {
    plan.validate()?;
    let run = || (0..plan.ensemble).into_par_iter().map(|i| simulate(plan, i)).collect::<Vec<_>>();
    let outcomes = match plan.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| invalid(format!("worker pool: {e}")))?
            .install(run),
        None => run(),
    };
    Ok(EnsembleResult::aggregate(plan, outcomes))
}

/// Runs the plan once per mollification radius, replacing every pair kernel of
/// a uniform drift by its mollification.
pub fn run_epsilon_schedule(plan: &SimPlan, kernel: &KernelSpec) -> Result<Vec<(f64, EnsembleResult)>> {
    plan.epsilon_schedule
        .iter()
        .map(|&eps| {
            let m = kernels::mollify(kernel, eps)?;
            let mut p = plan.clone();
            p.drift = LiftedDrift::uniform(PairKernel::Mollified(m), plan.x0.n_particles())?;
            Ok((eps, run_ensemble(&p)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_plan(kernel: KernelSpec, distance: f64) -> SimPlan {
        let drift = LiftedDrift::uniform(kernel, 2).unwrap();
        SimPlan::new(drift, ParticleConfiguration::pair(3, distance).unwrap(), 1e-3, 1.0)
    }

    #[test]
    fn zero_increment_zero_drift_is_identity() {
        let drift = LiftedDrift::uniform(KernelSpec::zero(3).unwrap(), 2).unwrap();
        let x = ParticleConfiguration::pair(3, 1.0).unwrap();
        let y = step(&drift, &x, 0.01, &[0.0; 6], Scheme::EulerMaruyama).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn repulsion_increases_distance() {
        let drift = LiftedDrift::uniform(KernelSpec::hardy_repulsing(4.0, 3).unwrap(), 2).unwrap();
        let x = ParticleConfiguration::pair(3, 1.0).unwrap();
        for scheme in [Scheme::EulerMaruyama, Scheme::TamedEuler] {
            let y = step(&drift, &x, 0.01, &[0.0; 6], scheme).unwrap();
            assert!(y.pair_distance(0, 1) > 1.0);
        }
        let tame = step(&drift, &x, 0.5, &[0.0; 6], Scheme::TamedEuler).unwrap();
        let raw = step(&drift, &x, 0.5, &[0.0; 6], Scheme::EulerMaruyama).unwrap();
        assert!(tame.pair_distance(0, 1) < raw.pair_distance(0, 1));
    }

    #[test]
    fn discounted_one_integrates_to_one() {
        let mut plan = pair_plan(KernelSpec::zero(3).unwrap(), 1.0);
        plan.horizon = 20.0;
        plan.dt = 0.01;
        plan.ensemble = 4;
        plan.bridge_correction = false;
        plan.collision_radius = 1e-9;
        plan.functionals = vec![("disc".into(), PathFunctional::Discounted { lambda: 1.0, integrand: Integrand::One })];
        let r = run_ensemble(&plan).unwrap();
        for o in r.outcomes.iter().filter(|o| !o.collided) {
            // left-endpoint rule: sum h e^{-kh} = h/(1 - e^{-h}) (1 - e^{-20})
            assert!((o.path_functionals[0] - 1.0).abs() < 6e-3, "{}", o.path_functionals[0]);
        }
    }

    #[test]
    fn deterministic_across_workers() {
        let mut plan = pair_plan(KernelSpec::hardy_attracting(25.0, 3).unwrap(), 0.5);
        plan.ensemble = 40;
        plan.functionals = vec![("drift".into(), PathFunctional::DriftNorm)];
        plan.snapshots = vec![0.5];
        plan.workers = Some(1);
        let a = run_ensemble(&plan).unwrap();
        plan.workers = Some(4);
        let b = run_ensemble(&plan).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn snapshots_and_collisions_are_consistent() {
        let mut plan = pair_plan(KernelSpec::hardy_attracting(36.0, 3).unwrap(), 0.3);
        plan.ensemble = 50;
        plan.snapshots = vec![0.25, 1.0, 0.0];
        let r = run_ensemble(&plan).unwrap();
        assert!(r.collision_probability.mean > 0.3);
        for o in &r.outcomes {
            assert_eq!(o.snapshots[2].as_deref(), Some(plan.x0.positions()));
            if o.collided {
                let t = o.collision_time.unwrap();
                assert!(t <= plan.horizon);
                assert_eq!(o.snapshots[1].is_some(), false);
                assert_eq!(o.snapshots[0].is_some(), t >= 0.25);
            } else {
                assert!(o.snapshots.iter().all(Option::is_some));
                assert!(o.min_pair_distance_seen >= plan.collision_radius);
            }
        }
    }

    #[test]
    fn substep_budget_exhaustion_counts_as_collision() {
        let mut plan = pair_plan(KernelSpec::hardy_attracting(36.0, 3).unwrap(), 0.3);
        plan.max_substeps = 1;
        plan.diffusion_fraction = 1e-3;
        plan.ensemble = 3;
        let r = run_ensemble(&plan).unwrap();
        assert_eq!(r.budget_exhausted, 3);
        assert_eq!(r.collision_probability.mean, 1.0);
    }

    #[test]
    fn plan_validation() {
        let mut plan = pair_plan(KernelSpec::zero(3).unwrap(), 1.0);
        plan.dt = 2.0;
        assert!(plan.validate().is_err());
        let mut plan = pair_plan(KernelSpec::zero(3).unwrap(), 1.0);
        plan.collision_radius = 0.0;
        assert!(plan.validate().is_err());
        let mut plan = pair_plan(KernelSpec::zero(3).unwrap(), 1.0);
        plan.ensemble = 0;
        assert!(plan.validate().is_err());
        let mut plan = pair_plan(KernelSpec::zero(3).unwrap(), 1.0);
        plan.functionals = vec![(
            "bad".into(),
            PathFunctional::Discounted {
                lambda: 1.0,
                integrand: Integrand::PairRadial { i: 0, j: 0, profile: RadialProfile::Gaussian { width: 1.0 } },
            },
        )];
        assert!(plan.validate().is_err());
    }

    #[test]
    fn profiles() {
        let b = RadialProfile::Bump { center: 1.5, half_width: 0.5 };
        assert_eq!(b.eval(1.5), 1.0);
        assert_eq!(b.eval(1.0), 0.0);
        assert_eq!(b.eval(2.2), 0.0);
        let g = RadialProfile::Gaussian { width: 2.0 };
        assert!((g.eval(2.0) - (-0.5f64).exp()).abs() < 1e-15);
    }
}
