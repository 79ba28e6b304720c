//! Rayleigh-quotient estimates of form-bounds from explicit trial functions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{self, BoundFlavor, KernelKind, KernelSpec};
use crate::lift::{lifted_div_bound, lifted_form_bound, PairProductTrial};
use crate::quadrature::{composite_gauss, gauss_hermite, real_line_rule, sphere_rule};
use crate::sde::trajectory_rng;

/// Shape of a trial function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrialFamily {
    /// s^{-exponent + eps_reg} (1 + s^2)^{-eps_reg} with s = |x| / cutoff_radius.
    RadialPower { eps_reg: f64, exponent: f64, cutoff_radius: f64 },
    /// exp(-|x - center|^2 / (2 width^2))
    GaussianBump { center: Vec<f64>, width: f64 },
    /// Product of factors acting on consecutive coordinate blocks.
    TensorProduct { factors: Vec<TrialFunction> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFunction {
    pub family: TrialFamily,
    pub domain_dim: usize,
}

impl TrialFunction {
    /// Finite Dirichlet energy needs eps_reg > |exponent - (d-2)/2|.
    pub fn radial_power(dim: usize, eps_reg: f64, exponent: f64, cutoff_radius: f64) -> Result<Self> {
        if dim < 3 {
            return Err(Error::UnsupportedDim(dim));
        }
        let crit = (dim as f64 - 2.0) / 2.0;
        if !(cutoff_radius > 0.0 && eps_reg.is_finite() && exponent.is_finite()) {
            return Err(Error::DegenerateTrial("radial power needs a positive cutoff radius".into()));
        }
        if !(eps_reg > (exponent - crit).abs()) {
            return Err(Error::DegenerateTrial(format!(
                "infinite Dirichlet energy: eps_reg = {eps_reg} <= |exponent - {crit}|"
            )));
        }
        Ok(Self { family: TrialFamily::RadialPower { eps_reg, exponent, cutoff_radius }, domain_dim: dim })
    }

    pub fn gaussian_bump(center: Vec<f64>, width: f64) -> Result<Self> {
        if center.is_empty() || !(width > 0.0 && width.is_finite()) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::DegenerateTrial(format!("gaussian bump needs a finite center and width > 0, got {width}")));
        }
        let d = center.len();
        Ok(Self { family: TrialFamily::GaussianBump { center, width }, domain_dim: d })
    }

    pub fn tensor_product(factors: Vec<TrialFunction>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::DegenerateTrial("empty tensor product".into()));
        }
        let d = factors.iter().map(|f| f.domain_dim).sum();
        Ok(Self { family: TrialFamily::TensorProduct { factors }, domain_dim: d })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.family {
            TrialFamily::RadialPower { eps_reg, exponent, cutoff_radius } => {
                let s = kernels::norm_sq(x).sqrt() / cutoff_radius;
                s.powf(eps_reg - exponent) * (1.0 + s * s).powf(-eps_reg)
            }
            TrialFamily::GaussianBump { center, width } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum();
                (-r2 / (2.0 * width * width)).exp()
            }
            TrialFamily::TensorProduct { factors } => {
                let mut off = 0;
                let mut v = 1.0;
                for f in factors {
                    v *= f.eval(&x[off..off + f.domain_dim]);
                    off += f.domain_dim;
                }
                v
            }
        }
    }

    /// ln phi and d ln phi / d ln r as functions of u = ln r, for radial trials.
    fn radial_log(&self) -> Option<impl Fn(f64) -> (f64, f64) + '_> {
        let kind = match &self.family {
            TrialFamily::RadialPower { eps_reg, exponent, cutoff_radius } => (0, *eps_reg, *exponent, cutoff_radius.ln()),
            TrialFamily::GaussianBump { center, width } if center.iter().all(|c| *c == 0.0) => (1, 0.0, 0.0, width.ln()),
            _ => return None,
        };
        Some(move |u: f64| {
            let (tag, eps, beta, lc) = kind;
            let v = u - lc;
            if tag == 0 {
                let sp = softplus(2.0 * v);
                let sig = 1.0 / (1.0 + (-2.0 * v).exp());
                ((eps - beta) * v - eps * sp, (eps - beta) - 2.0 * eps * sig)
            } else {
                let e = (2.0 * v).exp();
                (-0.5 * e, -e)
            }
        })
    }

    /// Log of the natural length scale, around which radial quadrature is centered.
    fn log_scale(&self) -> f64 {
        match &self.family {
            TrialFamily::RadialPower { cutoff_radius, .. } => cutoff_radius.ln(),
            TrialFamily::GaussianBump { width, .. } => width.ln(),
            TrialFamily::TensorProduct { .. } => 0.0,
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerBoundOfSup,
    UpperBoundOfInf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayleighEstimate {
    pub value: f64,
    pub direction: Direction,
    pub trial_meta: TrialMeta,
    pub mc_error: Option<f64>,
    /// Best value at each sharpening level, coarse to fine.
    pub history: Vec<f64>,
    /// The evaluation budget ran out before the schedule completed.
    pub budget_exhausted: bool,
}

/// Parameters of the extremizing trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TrialMeta {
    Trial(TrialFunction),
    PairProduct(PairProductTrial),
}

/// Which trial family a sharpening schedule walks through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    RadialPower,
    GaussianBump,
}

/// Regularization offsets of the radial-power sharpening schedule.
pub const SHARPENING_EPS: [f64; 4] = [0.2, 0.1, 0.05, 0.02];
/// Widths / cutoff radii of the concentration schedule.
pub const CONCENTRATION: [f64; 4] = [1.0, 0.1, 0.01, 0.001];

const TABLE_LN_R: (f64, f64) = (-25.0, 25.0);
const TABLE_STEP: f64 = 0.25;
/// Angular rule for the tables. In d = 3 a composite rule in the first
/// coordinate keeps discontinuities such as cap edges at the 1e-3 level.
fn angular_rule(d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    if d != 3 {
        return sphere_rule(d, 20);
    }
    let (ts, tw) = composite_gauss(-1.0, 1.0, 128, 8);
    let m = 32;
    let mut pts = Vec::with_capacity(ts.len() * m);
    let mut w = Vec::with_capacity(ts.len() * m);
    for (t, wt) in ts.iter().zip(&tw) {
        let s = (1.0 - t * t).max(0.0).sqrt();
        for k in 0..m {
            let a = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / m as f64;
            pts.push(vec![*t, s * a.cos(), s * a.sin()]);
            w.push(wt * 2.0 * std::f64::consts::PI / m as f64);
        }
    }
    (pts, w)
}
const REACH: f64 = 4000.0;
const STEP: f64 = 0.002;
const HERMITE_ORDER: usize = 16;

/// Sphere average of the flavor's integrand, tabulated against ln r and
/// scaled by r^2 (F, DivPlus) or r (MF) so that Hardy-type kernels give constants.
struct AngularTable {
    logs: Vec<f64>,
}

impl AngularTable {
    fn new(kernel: &KernelSpec, flavor: BoundFlavor) -> Result<Self> {
        let d = kernel.dim();
        let (pts, w) = angular_rule(d);
        let wsum: f64 = w.iter().sum();
        let n = ((TABLE_LN_R.1 - TABLE_LN_R.0) / TABLE_STEP).round() as usize + 1;
        let mut values = Vec::with_capacity(n);
        let mut y = vec![0.0; d];
        for k in 0..n {
            let lr = TABLE_LN_R.0 + k as f64 * TABLE_STEP;
            let r = lr.exp();
            let mut acc = 0.0;
            for (p, wk) in pts.iter().zip(&w) {
                for (yi, pi) in y.iter_mut().zip(p) {
                    *yi = r * pi;
                }
                let v = match flavor {
                    BoundFlavor::F => kernels::norm_sq(&kernels::eval_kernel(kernel, &y)?) * r * r,
                    BoundFlavor::MF => kernels::norm_sq(&kernels::eval_kernel(kernel, &y)?).sqrt() * r,
                    BoundFlavor::DivPlus => kernels::divergence(kernel, &y)?.max(0.0) * r * r,
                };
                acc += wk * v;
            }
            values.push((acc / wsum).ln());
        }
        Ok(Self { logs: values })
    }

    /// ln of the tabulated value at ln r; power-law continuation beyond the table.
    fn ln_at(&self, ln_r: f64) -> f64 {
        let last = self.logs.len() - 1;
        let (i, t) = if ln_r < TABLE_LN_R.0 {
            (0, (ln_r - TABLE_LN_R.0) / TABLE_STEP)
        } else if ln_r > TABLE_LN_R.1 {
            (last - 1, (ln_r - TABLE_LN_R.0) / TABLE_STEP - (last - 1) as f64)
        } else {
            let x = (ln_r - TABLE_LN_R.0) / TABLE_STEP;
            let i = (x.floor() as usize).min(last - 1);
            (i, x - i as f64)
        };
        let (a, b) = (self.logs[i], self.logs[i + 1]);
        if a.is_finite() && b.is_finite() {
            a * (1.0 - t) + b * t
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Rayleigh quotient of one trial: ||K phi||^2/||grad phi||^2 (F),
/// <(div K)_+ phi, phi>/||grad phi||^2 (DivPlus) or <|K| phi, phi>/(||grad phi|| ||phi||) (MF).
pub fn rayleigh_quotient(kernel: &KernelSpec, flavor: BoundFlavor, trial: &TrialFunction) -> Result<f64> {
    if trial.domain_dim != kernel.dim() {
        return Err(invalid("trial and kernel dimensions differ"));
    }
    if trial.radial_log().is_some() {
        let table = AngularTable::new(kernel, flavor)?;
        radial_quotient(&table, flavor, trial)
    } else {
        hermite_quotient(kernel, flavor, trial)
    }
}

fn radial_quotient(table: &AngularTable, flavor: BoundFlavor, trial: &TrialFunction) -> Result<f64> {
    let d = trial.domain_dim as f64;
    let log_phi = trial.radial_log().ok_or_else(|| invalid("trial is not radial"))?;
    let (us, ws) = real_line_rule(REACH, STEP);
    let c = trial.log_scale();
    // log-integrands of ||grad phi||^2, ||phi||^2 and the numerator, all divided by |S^{d-1}|
    let mut logs = Vec::with_capacity(us.len());
    let mut lmax = [f64::NEG_INFINITY; 3];
    for &v in &us {
        let u = v + c;
        let (lp, dl) = log_phi(u);
        if !lp.is_finite() {
            logs.push((f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY));
            continue;
        }
        let base = 2.0 * lp + (d - 2.0) * u;
        let lg = base + 2.0 * dl.abs().max(1e-300).ln();
        let lm = match flavor {
            BoundFlavor::MF => base + u,
            _ => base,
        };
        let ln = lm + table.ln_at(u);
        let lphi = base + 2.0 * u;
        for (m, l) in lmax.iter_mut().zip([lg, ln, lphi]) {
            if l.is_finite() {
                *m = m.max(l);
            }
        }
        logs.push((lg, ln, lphi));
    }
    let mut sums = [0.0f64; 3];
    let mut ends = [0.0f64; 3];
    let last = us.len() - 1;
    for (k, ((lg, ln, lphi), w)) in logs.iter().zip(&ws).enumerate() {
        for (j, l) in [*lg, *ln, *lphi].into_iter().enumerate() {
            let e = (l - lmax[j]).exp();
            sums[j] += w * e;
            if k == 0 || k == last {
                ends[j] += e;
            }
        }
    }
    let needed: &[usize] = match flavor {
        BoundFlavor::MF => &[0, 1, 2],
        _ => &[0, 1],
    };
    for &j in needed {
        if !(sums[j] > 0.0) || ends[j] > 1e-12 * sums[j] {
            return Err(Error::DegenerateTrial("trial integrals do not converge for this kernel".into()));
        }
    }
    let ratio = |a: usize, b: usize| sums[a] / sums[b] * (lmax[a] - lmax[b]).exp();
    Ok(match flavor {
        BoundFlavor::MF => sums[1] / (sums[0] * sums[2]).sqrt() * (lmax[1] - 0.5 * (lmax[0] + lmax[2])).exp(),
        _ => ratio(1, 0),
    })
}

fn hermite_quotient(kernel: &KernelSpec, flavor: BoundFlavor, trial: &TrialFunction) -> Result<f64> {
    let (center, width) = match &trial.family {
        TrialFamily::GaussianBump { center, width } => (center, *width),
        _ => return Err(invalid("non-radial quotients are implemented for Gaussian bumps")),
    };
    let d = center.len();
    let (t, w) = gauss_hermite(HERMITE_ORDER);
    let norm = std::f64::consts::PI.powf(-(d as f64) / 2.0);
    // under phi^2 / ||phi||^2 the point is N(center, width^2/2)
    let mut idx = vec![0usize; d];
    let mut y = vec![0.0; d];
    let mut acc = 0.0;
    loop {
        let mut wt = norm;
        for k in 0..d {
            y[k] = center[k] + width * t[idx[k]];
            wt *= w[idx[k]];
        }
        let v = match flavor {
            BoundFlavor::F => kernels::norm_sq(&kernels::eval_kernel(kernel, &y)?),
            BoundFlavor::MF => kernels::norm_sq(&kernels::eval_kernel(kernel, &y)?).sqrt(),
            BoundFlavor::DivPlus => kernels::divergence(kernel, &y)?.max(0.0),
        };
        acc += wt * v;
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] < HERMITE_ORDER {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    let grad = d as f64 / (2.0 * width * width);
    Ok(match flavor {
        BoundFlavor::MF => acc / grad.sqrt(),
        _ => acc / grad,
    })
}

/// Golden-section maximization of f on [a, b].
fn golden_max(mut a: f64, mut b: f64, iters: usize, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Maximizes the Rayleigh quotient over the family by coordinate search along
/// a sharpening/concentration schedule. The reported value is the best quotient
/// of the finest level, so it is a lower bound of the form-bound up to quadrature error.
pub fn estimate_form_bound(kernel: &KernelSpec, flavor: BoundFlavor, family: FamilyKind) -> Result<RayleighEstimate> {
    let d = kernel.dim();
    if d < 3 {
        return Err(Error::UnsupportedDim(d));
    }
    let mut history = Vec::new();
    let mut best_trial = None;
    match family {
        FamilyKind::RadialPower => {
            let table = AngularTable::new(kernel, flavor)?;
            let crit = (d as f64 - 2.0) / 2.0;
            for (eps, scale) in SHARPENING_EPS.iter().zip(CONCENTRATION) {
                let eval = |beta: f64, lc: f64| {
                    TrialFunction::radial_power(d, *eps, beta, lc.exp())
                        .and_then(|t| radial_quotient(&table, flavor, &t))
                        .unwrap_or(f64::NEG_INFINITY)
                };
                let (mut beta, mut lc) = (crit, scale.ln());
                let mut val = eval(beta, lc);
                for _ in 0..2 {
                    let (b, v) = golden_max(crit - 0.95 * eps, crit + 0.95 * eps, 30, |b| eval(b, lc));
                    if v > val {
                        beta = b;
                        val = v;
                    }
                    let (l, v) = golden_max(scale.ln() - 10f64.ln(), scale.ln(), 20, |l| eval(beta, l));
                    if v > val {
                        lc = l;
                        val = v;
                    }
                }
                if !val.is_finite() {
                    return Err(Error::DegenerateTrial(format!(
                        "no radial-power trial has finite integrals for {} (try gaussian_bump)",
                        kernel.kind().name()
                    )));
                }
                history.push(val);
                best_trial = Some(TrialFunction::radial_power(d, *eps, beta, lc.exp())?);
            }
        }
        FamilyKind::GaussianBump => {
            for width in CONCENTRATION {
                let eval = |c: &[f64]| {
                    TrialFunction::gaussian_bump(c.to_vec(), width)
                        .and_then(|t| rayleigh_quotient(kernel, flavor, &t))
                        .unwrap_or(f64::NEG_INFINITY)
                };
                let mut center = vec![0.0; d];
                let mut val = eval(&center);
                for k in 0..d {
                    let (x, v) = golden_max(-2.0 * width, 2.0 * width, 12, |x| {
                        let mut c = center.clone();
                        c[k] = x;
                        eval(&c)
                    });
                    if v > val {
                        center[k] = x;
                        val = v;
                    }
                }
                if !val.is_finite() {
                    return Err(Error::DegenerateTrial("gaussian trials failed to evaluate".into()));
                }
                history.push(val);
                best_trial = Some(TrialFunction::gaussian_bump(center, width)?);
            }
        }
    }
    Ok(RayleighEstimate {
        value: *history.last().expect("non-empty schedule"),
        direction: Direction::LowerBoundOfSup,
        trial_meta: TrialMeta::Trial(best_trial.expect("non-empty schedule")),
        mc_error: None,
        history,
        budget_exhausted: false,
    })
}

/// E[1/|Y|^2] for Y ~ N(m, s^2 I) in R^d, d >= 3.
pub fn gaussian_inverse_square(m2: f64, s2: f64, d: usize) -> f64 {
    let alpha = m2 / (2.0 * s2);
    unit_interval_integral(alpha, |v| 2.0 * v.powi(d as i32 - 3)) / (2.0 * s2)
}

/// E[Y/|Y|^2] = m * gaussian_field_factor(|m|^2, s^2, d) for Y ~ N(m, s^2 I).
pub fn gaussian_field_factor(m2: f64, s2: f64, d: usize) -> f64 {
    let alpha = m2 / (2.0 * s2);
    unit_interval_integral(alpha, |v| 2.0 * v.powi(d as i32 - 1)) / (2.0 * s2)
}

/// int_0^1 g(v) exp(-alpha (1 - v^2)) dv with panels graded toward v = 1.
fn unit_interval_integral(alpha: f64, g: impl Fn(f64) -> f64) -> f64 {
    let mut breaks = vec![0.0];
    let mut tau = 1.0 / alpha.max(1.0);
    let mut inner = Vec::new();
    while tau < 1.0 {
        inner.push(tau);
        tau *= 4.0;
    }
    inner.reverse();
    breaks.extend(inner.iter().map(|t| 1.0 - t));
    breaks.push(1.0);
    let mut acc = 0.0;
    for p in breaks.windows(2) {
        let (x, w) = composite_gauss(p[0], p[1], 1, 16);
        acc += x.iter().zip(&w).map(|(v, w)| w * g(*v) * (-alpha * (1.0 - v * v)).exp()).sum::<f64>();
    }
    acc
}

/// Outcome of the lifted Rayleigh check over random separable Gaussian trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftedRayleighCheck {
    pub n_particles: usize,
    pub dim: usize,
    pub flavor: BoundFlavor,
    pub delta: f64,
    pub c_delta: f64,
    pub trials: usize,
    /// max over trials of (lhs - delta ||grad phi||^2 - c_delta ||phi||^2) / ||phi||^2
    pub max_excess: f64,
    /// max over trials of lhs / (delta ||grad phi||^2 + c_delta ||phi||^2)
    pub max_ratio: f64,
    pub worst: TrialFunction,
}

/// Checks the lifted form-bound (F) or divergence bound (DivPlus) of a Hardy
/// pair kernel against separable trials prod_i exp(-|x_i - c_i|^2/(2 w_i^2)),
/// evaluating both sides by deterministic quadrature.
pub fn lifted_rayleigh_check(kernel: &KernelSpec, flavor: BoundFlavor, n_particles: usize, trials: usize, seed: u64) -> Result<LiftedRayleighCheck> {
    let d = kernel.dim();
    let sign = match kernel.kind() {
        KernelKind::HardyAttracting => 1.0,
        KernelKind::HardyRepulsing => -1.0,
        _ => return Err(invalid("lifted Rayleigh check is implemented for Hardy kernels")),
    };
    if n_particles < 2 || trials == 0 {
        return Err(invalid("need N >= 2 and at least one trial"));
    }
    let amp = kernel.hardy_amplitude();
    let kappa = kernel.kappa();
    let (delta, c_delta) = match flavor {
        BoundFlavor::F => lifted_form_bound(kappa, 0.0, n_particles),
        BoundFlavor::DivPlus => lifted_div_bound(if sign > 0.0 { 2.0 * kappa.sqrt() } else { 0.0 }, 0.0, n_particles),
        BoundFlavor::MF => return Err(invalid("lifted check covers the F and DivPlus flavors")),
    };
    let mut rng = trajectory_rng(seed, 0);
    let n = n_particles;
    let nf = n as f64;
    let (gt, gw) = gauss_hermite(12);
    let mut max_excess = f64::NEG_INFINITY;
    let mut max_ratio = 0.0f64;
    let mut worst = None;
    for _ in 0..trials {
        let centers: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let widths: Vec<f64> = (0..n).map(|_| (rng.random_range(0.2f64.ln()..1.0f64.ln())).exp()).collect();
        let grad: f64 = widths.iter().map(|w| d as f64 / (2.0 * w * w)).sum();
        let var = |i: usize| widths[i] * widths[i] / 2.0;
        let inv_sq = |i: usize, j: usize| {
            let m2: f64 = centers[i].iter().zip(&centers[j]).map(|(a, b)| (a - b).powi(2)).sum();
            gaussian_inverse_square(m2, var(i) + var(j), d)
        };
        let lhs = match flavor {
            BoundFlavor::DivPlus => {
                let mut s = 0.0;
                for i in 0..n {
                    for j in i + 1..n {
                        s += inv_sq(i, j);
                    }
                }
                (2.0 / nf) * (sign * amp * (d as f64 - 2.0)).max(0.0) * s
            }
            _ => {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        if j != i {
                            s += amp * amp * inv_sq(i, j);
                        }
                    }
                    if n > 2 {
                        s += amp * amp * cross_term(&centers, &widths, i, d, &gt, &gw);
                    }
                }
                s / (nf * nf)
            }
        };
        let rhs = delta * grad + c_delta;
        let excess = lhs - rhs;
        max_ratio = max_ratio.max(lhs / rhs);
        if excess > max_excess {
            max_excess = excess;
            let factors = centers
                .iter()
                .zip(&widths)
                .map(|(c, w)| TrialFunction::gaussian_bump(c.clone(), *w))
                .collect::<Result<Vec<_>>>()?;
            worst = Some(TrialFunction::tensor_product(factors)?);
        }
    }
    Ok(LiftedRayleighCheck {
        n_particles,
        dim: d,
        flavor,
        delta,
        c_delta,
        trials,
        max_excess,
        max_ratio,
        worst: worst.expect("at least one trial"),
    })
}

/// sum_{j != k, both != i} E <F_j(x_i), F_k(x_i)> with F_j(x) = E[(x - x_j)/|x - x_j|^2],
/// the outer expectation over x_i by tensor Gauss–Hermite.
fn cross_term(centers: &[Vec<f64>], widths: &[f64], i: usize, d: usize, gt: &[f64], gw: &[f64]) -> f64 {
    let n = centers.len();
    let q = gt.len();
    let norm = std::f64::consts::PI.powf(-(d as f64) / 2.0);
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut fields = vec![vec![0.0; d]; n];
    let mut acc = 0.0;
    loop {
        let mut wt = norm;
        for k in 0..d {
            x[k] = centers[i][k] + widths[i] * gt[idx[k]];
            wt *= gw[idx[k]];
        }
        let mut total = vec![0.0; d];
        let mut self_sq = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let m: Vec<f64> = x.iter().zip(&centers[j]).map(|(a, b)| a - b).collect();
            let f = gaussian_field_factor(kernels::norm_sq(&m), widths[j] * widths[j] / 2.0, d);
            for k in 0..d {
                fields[j][k] = f * m[k];
                total[k] += fields[j][k];
            }
            self_sq += kernels::norm_sq(&fields[j]);
        }
        acc += wt * (kernels::norm_sq(&total) - self_sq);
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] < q {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::unit_sphere_area;

    fn hardy_factor(d: usize, eps: f64) -> f64 {
        let b2 = ((d as f64 - 2.0) / 2.0).powi(2);
        b2 / (b2 + eps * eps / (2.0 * eps + 1.0))
    }

    #[test]
    fn radial_power_quotient_matches_closed_form() {
        for (d, kappa) in [(3, 4.0), (4, 9.0), (5, 2.0)] {
            let k = KernelSpec::hardy_attracting(kappa, d).unwrap();
            for eps in [0.3, 0.05] {
                let t = TrialFunction::radial_power(d, eps, (d as f64 - 2.0) / 2.0, 0.7).unwrap();
                let f = rayleigh_quotient(&k, BoundFlavor::F, &t).unwrap();
                let dp = rayleigh_quotient(&k, BoundFlavor::DivPlus, &t).unwrap();
                let exact = hardy_factor(d, eps);
                assert!((f / kappa - exact).abs() < 1e-9, "d {d} eps {eps}: {} vs {exact}", f / kappa);
                assert!((dp / (2.0 * kappa.sqrt()) - exact).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gaussian_quotient_radial_and_hermite_agree_for_bounded_field() {
        let k = KernelSpec::constant(vec![0.3, -0.4, 1.2]).unwrap();
        let w = 0.6;
        let exact = 1.69 / (3.0 / (2.0 * w * w));
        let radial = rayleigh_quotient(&k, BoundFlavor::F, &TrialFunction::gaussian_bump(vec![0.0; 3], w).unwrap()).unwrap();
        let shifted = rayleigh_quotient(&k, BoundFlavor::F, &TrialFunction::gaussian_bump(vec![0.1, 0.0, 0.2], w).unwrap()).unwrap();
        assert!((radial - exact).abs() < 1e-9, "{radial} vs {exact}");
        assert!((shifted - exact).abs() < 1e-12);
    }

    #[test]
    fn hardy_gaussian_quotient_is_known_fraction() {
        // E|K|^2 = A^2 E[1/r^2] = A^2 * 2/(w^2 (d-2)), grad = d/(2 w^2)  =>  kappa (d-2)/d
        let k = KernelSpec::hardy_attracting(4.0, 3).unwrap();
        let v = rayleigh_quotient(&k, BoundFlavor::F, &TrialFunction::gaussian_bump(vec![0.0; 3], 0.3).unwrap()).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn estimates_approach_sharp_constants_from_below() {
        for (d, kappa) in [(3, 4.0), (4, 9.0)] {
            let k = KernelSpec::hardy_attracting(kappa, d).unwrap();
            let f = estimate_form_bound(&k, BoundFlavor::F, FamilyKind::RadialPower).unwrap();
            assert!(f.value >= 0.98 * kappa && f.value <= kappa * (1.0 + 1e-9), "{f:?}");
            assert!(f.history.windows(2).all(|w| w[1] >= w[0]));
            let dp = estimate_form_bound(&k, BoundFlavor::DivPlus, FamilyKind::RadialPower).unwrap();
            let target = 2.0 * kappa.sqrt();
            assert!(dp.value >= 0.98 * target && dp.value <= target * (1.0 + 1e-9));
        }
    }

    #[test]
    fn bounded_field_estimate_vanishes_under_concentration() {
        let k = KernelSpec::constant(vec![2.0, 0.0, 0.0]).unwrap();
        let e = estimate_form_bound(&k, BoundFlavor::F, FamilyKind::GaussianBump).unwrap();
        assert!(e.value < 1e-5, "{e:?}");
        assert!(e.history.windows(2).all(|w| w[1] < w[0]));
        assert!(matches!(estimate_form_bound(&k, BoundFlavor::F, FamilyKind::RadialPower), Err(Error::DegenerateTrial(_))));
    }

    #[test]
    fn weighted_hardy_matches_angular_mean() {
        // on radial trials only the angular mean of |K|^2 matters: kappa * fraction^{1 - 1/q}
        let k = KernelSpec::weighted_hardy(4.0, 3, 0.3).unwrap();
        let KernelKind::WeightedHardy(mask) = k.kind() else { unreachable!() };
        let e = estimate_form_bound(&k, BoundFlavor::F, FamilyKind::RadialPower).unwrap();
        let expected = 4.0 * 0.3f64.powf(1.0 - 1.0 / mask.integrability()) * hardy_factor(3, 0.02);
        assert!((e.value / expected - 1.0).abs() < 3e-3, "{} vs {expected}", e.value);
    }

    #[test]
    fn degenerate_trials_rejected() {
        assert!(TrialFunction::radial_power(3, 0.1, 0.8, 1.0).is_err());
        assert!(TrialFunction::gaussian_bump(vec![0.0; 3], 0.0).is_err());
        assert!(TrialFunction::tensor_product(vec![]).is_err());
    }

    /// Direct spherical quadrature of E f(Y), Y ~ N(m, s^2 I) in R^3.
    fn gaussian_expectation(m: &[f64], s2: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
        let (pts, w) = sphere_rule(3, 40);
        let (rs, rw) = composite_gauss(0.0, m.iter().map(|x| x.abs()).sum::<f64>() + 12.0 * s2.sqrt(), 200, 8);
        let c = (2.0 * std::f64::consts::PI * s2).powf(-1.5);
        let mut acc = 0.0;
        for (r, wr) in rs.iter().zip(&rw) {
            for (p, wp) in pts.iter().zip(&w) {
                let y: Vec<f64> = p.iter().map(|x| r * x).collect();
                let e: f64 = y.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum();
                acc += wr * wp * r * r * c * (-e / (2.0 * s2)).exp() * f(&y);
            }
        }
        acc
    }

    #[test]
    fn smoothed_hardy_moments_match_direct_quadrature() {
        let m = [0.4, -0.2, 0.3];
        let s2 = 0.09;
        let m2 = kernels::norm_sq(&m);
        let inv = gaussian_expectation(&m, s2, |y| 1.0 / kernels::norm_sq(y));
        assert!((gaussian_inverse_square(m2, s2, 3) - inv).abs() < 1e-6 * inv);
        let fx = gaussian_expectation(&m, s2, |y| y[0] / kernels::norm_sq(y));
        assert!((gaussian_field_factor(m2, s2, 3) * m[0] - fx).abs() < 1e-6 * fx.abs());
        // centered case: E[1/|Y|^2] = 1/(s^2 (d-2))
        assert!((gaussian_inverse_square(0.0, 0.5, 5) - 1.0 / 1.5).abs() < 1e-13);
        let _ = unit_sphere_area(3);
    }

    #[test]
    fn lifted_check_holds_for_hardy_pairs_and_triples() {
        for n in [2, 3] {
            let k = KernelSpec::hardy_attracting(4.0, 3).unwrap();
            for flavor in [BoundFlavor::F, BoundFlavor::DivPlus] {
                let c = lifted_rayleigh_check(&k, flavor, n, 20, 11).unwrap();
                assert!(c.max_excess <= 1e-6, "{c:?}");
                assert!(c.max_ratio > 0.05);
            }
        }
    }
}
