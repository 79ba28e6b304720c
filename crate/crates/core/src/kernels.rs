//! Catalog of singular pair-interaction kernels K: R^d -> R^d.
//!
//! Every kernel is immutable once built and evaluation is a pure function, so
//! kernels can be shared freely between simulation workers.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{composite_gauss, gauss_legendre, unit_sphere_area};

/// Points closer than this to the singular set of a kernel are rejected.
pub const SINGULARITY_GUARD: f64 = 1e-12;

/// Default Gauss–Legendre nodes per axis for mollification.
/// The smallest count that certifies the bump mass to 1e-6 in d = 3.
pub const DEFAULT_MOLLIFIER_NODES: usize = 24;

/// Relative accuracy the mollifier quadrature must reach on the bump mass.
pub const MOLLIFIER_NORMALIZATION_TOL: f64 = 1e-6;

/// Spherical cap mask used by [`KernelKind::WeightedHardy`].
#[derive(Debug, Clone, PartialEq)]
pub struct CapMask {
    fraction: f64,
    integrability: f64,
    cos_threshold: f64,
}

impl CapMask {
    /// Cap around the first coordinate axis covering `fraction` of the sphere.
    /// `integrability` is the L^q exponent used to normalize the weight.
    pub fn new(dim: usize, fraction: f64, integrability: Option<f64>) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(invalid(format!("cap fraction {fraction} outside (0, 1]")));
        }
        let q_min = Self::min_integrability(dim);
        let q = integrability.unwrap_or(q_min);
        if q < q_min {
            return Err(invalid(format!("cap exponent q = {q} below the admissible minimum {q_min}")));
        }
        // On S^{d-1}, (1 + omega_1)/2 is Beta((d-1)/2, (d-1)/2).
        let cos_threshold = if fraction >= 1.0 {
            -1.0
        } else {
            use statrs::distribution::{Beta, ContinuousCDF};
            let a = (dim as f64 - 1.0) / 2.0;
            let beta = Beta::new(a, a).map_err(|e| invalid(e.to_string()))?;
            2.0 * beta.inverse_cdf(1.0 - fraction) - 1.0
        };
        Ok(Self { fraction, integrability: q, cos_threshold })
    }

    /// Smallest admissible q for the weighted Hardy inequality in dimension d.
    pub fn min_integrability(dim: usize) -> f64 {
        let d = dim as f64;
        2.0 * (d - 2.0).powi(2) / (2.0 * (d - 1.0)) + 1.0
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn integrability(&self) -> f64 {
        self.integrability
    }

    /// Normalization c = |S|^{1/q} / ||Phi||_q, which is fraction^{-1/q} for an indicator.
    pub fn normalization(&self) -> f64 {
        self.fraction.powf(-1.0 / self.integrability)
    }

    fn contains(&self, y: &[f64], norm: f64) -> bool {
        y[0] >= self.cos_threshold * norm
    }
}

/// Kind of a kernel together with its kind-specific parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    HardyAttracting,
    HardyRepulsing,
    /// Attracting Hardy kernel restricted to a spherical cap.
    WeightedHardy(CapMask),
    /// |K|^2 = 1 / (||y| - 1| (-ln||y| - 1|)^beta) on 1/2 <= |y| <= 3/2, radial direction.
    Hypersurface { beta: f64 },
    /// Constant vector field.
    BoundedSmooth { field: Vec<f64> },
    Sum(Vec<KernelSpec>),
    Scaled { factor: f64, inner: Box<KernelSpec> },
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::HardyAttracting => "hardy_attracting",
            KernelKind::HardyRepulsing => "hardy_repulsing",
            KernelKind::WeightedHardy(_) => "weighted_hardy",
            KernelKind::Hypersurface { .. } => "hypersurface",
            KernelKind::BoundedSmooth { .. } => "bounded_smooth",
            KernelKind::Sum(_) => "sum",
            KernelKind::Scaled { .. } => "scaled",
        }
    }
}

/// A singular interaction kernel with strength `kappa` on R^dim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRecord", into = "KernelRecord")]
pub struct KernelSpec {
    kind: KernelKind,
    kappa: f64,
    dim: usize,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 3 {
        Err(Error::UnsupportedDim(dim))
    } else {
        Ok(())
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa.is_finite() && kappa >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("kappa must be finite and >= 0, got {kappa}")))
    }
}

impl KernelSpec {
    pub fn new(kind: KernelKind, kappa: f64, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        check_kappa(kappa)?;
        match &kind {
            KernelKind::Hypersurface { beta } if !(*beta > 1.0) => {
                return Err(invalid(format!("hypersurface kernel needs beta > 1, got {beta}")));
            }
            KernelKind::BoundedSmooth { field } if field.len() != dim => {
                return Err(invalid(format!("constant field has {} components, expected {dim}", field.len())));
            }
            KernelKind::Sum(parts) => {
                if parts.is_empty() {
                    return Err(invalid("sum kernel needs at least one component"));
                }
                if parts.iter().any(|p| p.dim != dim) {
                    return Err(invalid("sum components must share the dimension"));
                }
            }
            KernelKind::Scaled { factor, inner } => {
                if !factor.is_finite() {
                    return Err(invalid("scale factor must be finite"));
                }
                if inner.dim != dim {
                    return Err(invalid("scaled kernel dimension mismatch"));
                }
            }
            _ => {}
        }
        Ok(Self { kind, kappa, dim })
    }

    pub fn hardy_attracting(kappa: f64, dim: usize) -> Result<Self> {
        Self::new(KernelKind::HardyAttracting, kappa, dim)
    }

    pub fn hardy_repulsing(kappa: f64, dim: usize) -> Result<Self> {
        Self::new(KernelKind::HardyRepulsing, kappa, dim)
    }

    pub fn weighted_hardy(kappa: f64, dim: usize, cap_fraction: f64) -> Result<Self> {
        Self::new(KernelKind::WeightedHardy(CapMask::new(dim, cap_fraction, None)?), kappa, dim)
    }

    pub fn hypersurface(beta: f64, dim: usize) -> Result<Self> {
        Self::new(KernelKind::Hypersurface { beta }, 0.0, dim)
    }

    pub fn constant(field: Vec<f64>) -> Result<Self> {
        let dim = field.len();
        Self::new(KernelKind::BoundedSmooth { field }, 0.0, dim)
    }

    pub fn zero(dim: usize) -> Result<Self> {
        Self::constant(vec![0.0; dim])
    }

    pub fn sum(parts: Vec<KernelSpec>) -> Result<Self> {
        let dim = parts.first().map(|p| p.dim).ok_or_else(|| invalid("empty sum"))?;
        Self::new(KernelKind::Sum(parts), 0.0, dim)
    }

    pub fn scaled(factor: f64, inner: KernelSpec) -> Result<Self> {
        let dim = inner.dim;
        Self::new(KernelKind::Scaled { factor, inner: Box::new(inner) }, 0.0, dim)
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// sqrt(kappa) (d - 2) / 2, the Hardy amplitude.
    pub fn hardy_amplitude(&self) -> f64 {
        self.kappa.sqrt() * (self.dim as f64 - 2.0) / 2.0
    }

    /// Whether the kernel has a point or hypersurface singularity.
    pub fn is_singular(&self) -> bool {
        match &self.kind {
            KernelKind::BoundedSmooth { .. } => false,
            KernelKind::Sum(parts) => parts.iter().any(|p| p.is_singular()),
            KernelKind::Scaled { factor, inner } => *factor != 0.0 && inner.is_singular(),
            KernelKind::HardyAttracting | KernelKind::HardyRepulsing | KernelKind::WeightedHardy(_) => {
                self.kappa > 0.0
            }
            KernelKind::Hypersurface { .. } => true,
        }
    }

    /// Whether K(-y) = -K(y).
    pub fn is_odd(&self) -> bool {
        match &self.kind {
            KernelKind::HardyAttracting | KernelKind::HardyRepulsing | KernelKind::Hypersurface { .. } => true,
            KernelKind::WeightedHardy(m) => m.fraction >= 1.0,
            KernelKind::BoundedSmooth { field } => field.iter().all(|c| *c == 0.0),
            KernelKind::Sum(parts) => parts.iter().all(|p| p.is_odd()),
            KernelKind::Scaled { inner, .. } => inner.is_odd(),
        }
    }

    /// Adds `scale * K(y)` to `out`.
    pub fn accumulate(&self, y: &[f64], scale: f64, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(y.len(), self.dim);
        match &self.kind {
            KernelKind::HardyAttracting | KernelKind::HardyRepulsing => {
                if self.kappa == 0.0 {
                    return Ok(());
                }
                let r2 = norm_sq(y);
                if r2 < SINGULARITY_GUARD * SINGULARITY_GUARD {
                    return Err(Error::SingularPoint);
                }
                let sign = if matches!(self.kind, KernelKind::HardyAttracting) { 1.0 } else { -1.0 };
                let c = scale * sign * self.hardy_amplitude() / r2;
                for (o, yi) in out.iter_mut().zip(y) {
                    *o += c * yi;
                }
            }
            KernelKind::WeightedHardy(mask) => {
                if self.kappa == 0.0 {
                    return Ok(());
                }
                let r2 = norm_sq(y);
                if r2 < SINGULARITY_GUARD * SINGULARITY_GUARD {
                    return Err(Error::SingularPoint);
                }
                if mask.contains(y, r2.sqrt()) {
                    let c = scale * mask.normalization().sqrt() * self.hardy_amplitude() / r2;
                    for (o, yi) in out.iter_mut().zip(y) {
                        *o += c * yi;
                    }
                }
            }
            KernelKind::Hypersurface { beta } => {
                let r = norm_sq(y).sqrt();
                if !(0.5..=1.5).contains(&r) {
                    return Ok(());
                }
                let gap = (r - 1.0).abs();
                if gap < SINGULARITY_GUARD {
                    return Err(Error::SingularPoint);
                }
                let mag = (1.0 / (gap * (-gap.ln()).powf(*beta))).sqrt();
                let c = scale * mag / r;
                for (o, yi) in out.iter_mut().zip(y) {
                    *o += c * yi;
                }
            }
            KernelKind::BoundedSmooth { field } => {
                for (o, f) in out.iter_mut().zip(field) {
                    *o += scale * f;
                }
            }
            KernelKind::Sum(parts) => {
                for p in parts {
                    p.accumulate(y, scale, out)?;
                }
            }
            KernelKind::Scaled { factor, inner } => inner.accumulate(y, scale * factor, out)?,
        }
        Ok(())
    }

    /// Divergence with a closed form, where one exists.
    pub fn analytic_divergence(&self, y: &[f64]) -> Result<f64> {
        let d = self.dim as f64;
        match &self.kind {
            KernelKind::HardyAttracting | KernelKind::HardyRepulsing => {
                if self.kappa == 0.0 {
                    return Ok(0.0);
                }
                let r2 = norm_sq(y);
                if r2 < SINGULARITY_GUARD * SINGULARITY_GUARD {
                    return Err(Error::SingularPoint);
                }
                let sign = if matches!(self.kind, KernelKind::HardyAttracting) { 1.0 } else { -1.0 };
                Ok(sign * self.hardy_amplitude() * (d - 2.0) / r2)
            }
            KernelKind::BoundedSmooth { .. } => Ok(0.0),
            KernelKind::Sum(parts) => parts.iter().map(|p| p.analytic_divergence(y)).sum(),
            KernelKind::Scaled { factor, inner } => Ok(factor * inner.analytic_divergence(y)?),
            KernelKind::WeightedHardy(_) | KernelKind::Hypersurface { .. } => {
                Err(Error::NoAnalyticDivergence(self.kind.name()))
            }
        }
    }
}

/// Evaluates K(y).
pub fn eval_kernel(spec: &KernelSpec, y: &[f64]) -> Result<Vec<f64>> {
    check_dim(y.len())?;
    if y.len() != spec.dim {
        return Err(invalid(format!("point has dimension {}, kernel {}", y.len(), spec.dim)));
    }
    let mut out = vec![0.0; spec.dim];
    spec.accumulate(y, 1.0, &mut out)?;
    Ok(out)
}

/// div K(y) from the closed form; kinds without one return `NoAnalyticDivergence`.
pub fn divergence(spec: &KernelSpec, y: &[f64]) -> Result<f64> {
    if y.len() != spec.dim {
        return Err(invalid("dimension mismatch"));
    }
    spec.analytic_divergence(y)
}

/// Central finite-difference divergence of any vector field evaluator.
pub fn fd_divergence<F>(field: F, y: &[f64], h: f64) -> Result<f64>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    let d = y.len();
    let mut p = y.to_vec();
    let mut fp = vec![0.0; d];
    let mut fm = vec![0.0; d];
    let mut div = 0.0;
    for k in 0..d {
        fp.iter_mut().for_each(|v| *v = 0.0);
        fm.iter_mut().for_each(|v| *v = 0.0);
        p[k] = y[k] + h;
        field(&p, &mut fp)?;
        p[k] = y[k] - h;
        field(&p, &mut fm)?;
        p[k] = y[k];
        div += (fp[k] - fm[k]) / (2.0 * h);
    }
    Ok(div)
}

pub(crate) fn norm_sq(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum()
}

/// Friedrichs mollification gamma_eps * K evaluated by tensor Gauss–Legendre quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifiedKernel {
    base: KernelSpec,
    epsilon: f64,
    nodes_per_axis: usize,
    offsets: Vec<f64>,
    weights: Vec<f64>,
    normalization_error: f64,
}

fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (1.0 / (r2 - 1.0)).exp()
    } else {
        0.0
    }
}

/// Mass of the unnormalized bump exp(1/(|x|^2 - 1)) over the unit ball of R^d.
pub fn bump_mass(dim: usize) -> f64 {
    let (r, w) = composite_gauss(0.0, 1.0, 64, 12);
    let radial: f64 = r.iter().zip(&w).map(|(r, w)| w * r.powi(dim as i32 - 1) * bump(r * r)).sum();
    unit_sphere_area(dim) * radial
}

impl MollifiedKernel {
    pub fn new(base: KernelSpec, epsilon: f64, nodes_per_axis: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid(format!("mollification radius must be positive, got {epsilon}")));
        }
        if nodes_per_axis == 0 {
            return Err(invalid("mollifier needs at least one node per axis"));
        }
        let d = base.dim;
        let (x, w) = gauss_legendre(nodes_per_axis);
        let total = nodes_per_axis.pow(d as u32);
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            let mut r2 = 0.0;
            let mut wt = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                r2 += x[i] * x[i];
                wt *= w[i];
                let _ = k;
            }
            let g = bump(r2);
            if g > 0.0 {
                offsets.extend(idx.iter().map(|&i| epsilon * x[i]));
                weights.push(wt * g);
            }
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < nodes_per_axis {
                    break;
                }
                *slot = 0;
            }
        }
        let mass: f64 = weights.iter().sum();
        let reference = bump_mass(d);
        let normalization_error = (mass / reference - 1.0).abs();
        if !(normalization_error <= MOLLIFIER_NORMALIZATION_TOL) {
            return Err(Error::QuadratureUnderresolved { nodes: nodes_per_axis, error: normalization_error });
        }
        // the discrete weights are normalized to one so constants are preserved exactly
        weights.iter_mut().for_each(|w| *w /= mass);
        Ok(Self { base, epsilon, nodes_per_axis, offsets, weights, normalization_error })
    }

    pub fn base(&self) -> &KernelSpec {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn dim(&self) -> usize {
        self.base.dim
    }

    /// Relative error of the quadrature on the bump mass.
    pub fn normalization_error(&self) -> f64 {
        self.normalization_error
    }

    /// Adds `scale * (gamma_eps * K)(y)` to `out`. Nodes that land inside the
    /// singularity guard contribute nothing.
    pub fn accumulate(&self, y: &[f64], scale: f64, out: &mut [f64]) -> Result<()> {
        let d = self.base.dim;
        let mut p = [0.0f64; 16];
        let mut scratch;
        let p: &mut [f64] = if d <= 16 {
            &mut p[..d]
        } else {
            scratch = vec![0.0; d];
            &mut scratch
        };
        for (k, w) in self.weights.iter().enumerate() {
            let off = &self.offsets[k * d..(k + 1) * d];
            for i in 0..d {
                p[i] = y[i] - off[i];
            }
            match self.base.accumulate(p, scale * w, out) {
                Ok(()) | Err(Error::SingularPoint) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    pub fn eval(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.base.dim {
            return Err(invalid("dimension mismatch"));
        }
        let mut out = vec![0.0; y.len()];
        self.accumulate(y, 1.0, &mut out)?;
        Ok(out)
    }
}

/// Mollifies `base` at radius `epsilon` with the default node count.
pub fn mollify(base: &KernelSpec, epsilon: f64) -> Result<MollifiedKernel> {
    MollifiedKernel::new(base.clone(), epsilon, DEFAULT_MOLLIFIER_NODES)
}

/// Which quadratic-form inequality a bound refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundFlavor {
    /// ||K phi||^2 <= kappa ||grad phi||^2 + c ||phi||^2
    F,
    /// <|K| phi, phi> <= kappa ||grad phi|| ||phi|| + c ||phi||^2
    #[serde(rename = "mf")]
    MF,
    /// <(div K)_+ phi, phi> <= kappa ||grad phi||^2 + c ||phi||^2
    DivPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormBoundRecord {
    pub kappa: f64,
    pub c_kappa: f64,
    pub flavor: BoundFlavor,
    pub provenance: Provenance,
}

impl FormBoundRecord {
    fn analytic(flavor: BoundFlavor, kappa: f64, c_kappa: f64) -> Self {
        Self { kappa, c_kappa, flavor, provenance: Provenance::Analytic }
    }
}

#[derive(Debug, Clone, Copy)]
struct Bounds {
    f: (f64, f64),
    div_plus: (f64, f64),
    div_minus: (f64, f64),
}

/// Share of the Cauchy–Schwarz weight given to components with zero form-bound in sums.
const BOUNDED_SHARE: f64 = 0.1;

fn bounds(spec: &KernelSpec) -> Result<Bounds> {
    match &spec.kind {
        KernelKind::HardyAttracting => {
            let k = spec.kappa;
            Ok(Bounds { f: (k, 0.0), div_plus: (2.0 * k.sqrt(), 0.0), div_minus: (0.0, 0.0) })
        }
        KernelKind::HardyRepulsing => {
            let k = spec.kappa;
            Ok(Bounds { f: (k, 0.0), div_plus: (0.0, 0.0), div_minus: (2.0 * k.sqrt(), 0.0) })
        }
        KernelKind::BoundedSmooth { field } => {
            Ok(Bounds { f: (0.0, norm_sq(field)), div_plus: (0.0, 0.0), div_minus: (0.0, 0.0) })
        }
        KernelKind::Scaled { factor, inner } => {
            let b = bounds(inner)?;
            let s = *factor;
            let (plus, minus) = if s >= 0.0 { (b.div_plus, b.div_minus) } else { (b.div_minus, b.div_plus) };
            let a = s.abs();
            Ok(Bounds {
                f: (s * s * b.f.0, s * s * b.f.1),
                div_plus: (a * plus.0, a * plus.1),
                div_minus: (a * minus.0, a * minus.1),
            })
        }
        KernelKind::Sum(parts) => {
            let bs = parts.iter().map(bounds).collect::<Result<Vec<_>>>()?;
            // ||sum K_i phi||^2 <= sum_i lambda_i^{-1} ||K_i phi||^2 with sum lambda_i = 1
            let root_sum: f64 = bs.iter().map(|b| b.f.0.sqrt()).sum();
            let n_zero = bs.iter().filter(|b| b.f.0 == 0.0 && b.f.1 > 0.0).count();
            let share = if n_zero > 0 && root_sum > 0.0 { BOUNDED_SHARE } else { 0.0 };
            let mut kappa = 0.0;
            let mut c = 0.0;
            for b in &bs {
                let lambda = if b.f.0 > 0.0 {
                    (1.0 - share) * b.f.0.sqrt() / root_sum
                } else if b.f.1 > 0.0 {
                    if root_sum > 0.0 {
                        share / n_zero as f64
                    } else {
                        1.0 / n_zero as f64
                    }
                } else {
                    continue;
                };
                kappa += b.f.0 / lambda;
                c += b.f.1 / lambda;
            }
            let add = |sel: fn(&Bounds) -> (f64, f64)| {
                bs.iter().fold((0.0, 0.0), |acc, b| (acc.0 + sel(b).0, acc.1 + sel(b).1))
            };
            Ok(Bounds { f: (kappa, c), div_plus: add(|b| b.div_plus), div_minus: add(|b| b.div_minus) })
        }
        KernelKind::WeightedHardy(_) | KernelKind::Hypersurface { .. } => {
            Err(Error::NoAnalyticBound(spec.kind.name()))
        }
    }
}

/// Closed-form form-bounds (F and DivPlus flavors) via the Hardy inequality and
/// the closure rules for sums and scalar multiples.
pub fn nominal_form_bounds(spec: &KernelSpec) -> Result<Vec<FormBoundRecord>> {
    let b = bounds(spec)?;
    Ok(vec![
        FormBoundRecord::analytic(BoundFlavor::F, b.f.0, b.f.1),
        FormBoundRecord::analytic(BoundFlavor::DivPlus, b.div_plus.0, b.div_plus.1),
    ])
}

/// Config-file representation `{kind, kappa, dim, params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelRecord {
    pub kind: KindTag,
    #[serde(default)]
    pub kappa: f64,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "KernelParams::is_empty")]
    pub params: KernelParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindTag {
    HardyAttracting,
    HardyRepulsing,
    WeightedHardy,
    Hypersurface,
    BoundedSmooth,
    Sum,
    Scaled,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<KernelRecord>>,
}

impl KernelParams {
    fn is_empty(&self) -> bool {
        *self == KernelParams::default()
    }
}

impl TryFrom<KernelRecord> for KernelSpec {
    type Error = Error;

    fn try_from(rec: KernelRecord) -> Result<Self> {
        check_dim(rec.dim)?;
        let p = rec.params;
        let need = |name: &str| invalid(format!("kernel kind {:?} requires params.{name}", rec.kind));
        let kind = match rec.kind {
            KindTag::HardyAttracting => KernelKind::HardyAttracting,
            KindTag::HardyRepulsing => KernelKind::HardyRepulsing,
            KindTag::WeightedHardy => KernelKind::WeightedHardy(CapMask::new(
                rec.dim,
                p.cap_fraction.ok_or_else(|| need("cap_fraction"))?,
                p.cap_exponent,
            )?),
            KindTag::Hypersurface => KernelKind::Hypersurface { beta: p.beta.ok_or_else(|| need("beta"))? },
            KindTag::BoundedSmooth => KernelKind::BoundedSmooth { field: p.field.ok_or_else(|| need("field"))? },
            KindTag::Sum => KernelKind::Sum(
                p.components
                    .ok_or_else(|| need("components"))?
                    .into_iter()
                    .map(KernelSpec::try_from)
                    .collect::<Result<_>>()?,
            ),
            KindTag::Scaled => {
                let mut comps = p.components.ok_or_else(|| need("components"))?;
                if comps.len() != 1 {
                    return Err(invalid("scaled kernel takes exactly one component"));
                }
                KernelKind::Scaled {
                    factor: p.factor.ok_or_else(|| need("factor"))?,
                    inner: Box::new(KernelSpec::try_from(comps.remove(0))?),
                }
            }
        };
        KernelSpec::new(kind, rec.kappa, rec.dim)
    }
}

impl From<KernelSpec> for KernelRecord {
    fn from(spec: KernelSpec) -> Self {
        let mut params = KernelParams::default();
        let kind = match spec.kind {
            KernelKind::HardyAttracting => KindTag::HardyAttracting,
            KernelKind::HardyRepulsing => KindTag::HardyRepulsing,
            KernelKind::WeightedHardy(m) => {
                params.cap_fraction = Some(m.fraction);
                params.cap_exponent = Some(m.integrability);
                KindTag::WeightedHardy
            }
            KernelKind::Hypersurface { beta } => {
                params.beta = Some(beta);
                KindTag::Hypersurface
            }
            KernelKind::BoundedSmooth { field } => {
                params.field = Some(field);
                KindTag::BoundedSmooth
            }
            KernelKind::Sum(parts) => {
                params.components = Some(parts.into_iter().map(Into::into).collect());
                KindTag::Sum
            }
            KernelKind::Scaled { factor, inner } => {
                params.factor = Some(factor);
                params.components = Some(vec![(*inner).into()]);
                KindTag::Scaled
            }
        };
        KernelRecord { kind, kappa: spec.kappa, dim: spec.dim, params }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn hardy_attracting_unit_point() {
        let k = KernelSpec::hardy_attracting(4.0, 3).unwrap();
        let v = eval_kernel(&k, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
        let v = eval_kernel(&k, &[2.0, 0.0, 0.0]).unwrap();
        assert!(close(v[0], 0.5, 1e-15) && v[1] == 0.0 && v[2] == 0.0);
    }

    #[test]
    fn repulsing_is_negation() {
        let a = KernelSpec::hardy_attracting(2.5, 4).unwrap();
        let r = KernelSpec::hardy_repulsing(2.5, 4).unwrap();
        let y = [0.3, -1.2, 0.7, 0.1];
        let va = eval_kernel(&a, &y).unwrap();
        let vr = eval_kernel(&r, &y).unwrap();
        for (x, z) in va.iter().zip(&vr) {
            assert_eq!(*x, -*z);
        }
    }

    #[test]
    fn hypersurface_magnitude() {
        let k = KernelSpec::hypersurface(2.0, 3).unwrap();
        let y = [1.25 / 3f64.sqrt(); 3];
        let v = eval_kernel(&k, &y).unwrap();
        let m2 = norm_sq(&v);
        let expected = 1.0 / (0.25 * (-(0.25f64).ln()).powi(2));
        assert!(close(m2, expected, 1e-12), "{m2} vs {expected}");
        // radial direction
        for c in &v {
            assert!(close(*c, v[0], 1e-14));
        }
        // outside the shell the field vanishes
        assert_eq!(eval_kernel(&k, &[2.0, 0.0, 0.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(eval_kernel(&k, &[0.0, 0.0, 0.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn singular_points_rejected() {
        let k = KernelSpec::hardy_attracting(1.0, 3).unwrap();
        assert_eq!(eval_kernel(&k, &[0.0; 3]), Err(Error::SingularPoint));
        let h = KernelSpec::hypersurface(1.5, 3).unwrap();
        assert_eq!(eval_kernel(&h, &[1.0, 0.0, 0.0]), Err(Error::SingularPoint));
        assert_eq!(divergence(&k, &[0.0; 3]), Err(Error::SingularPoint));
    }

    #[test]
    fn construction_errors() {
        assert_eq!(KernelSpec::hardy_attracting(1.0, 2), Err(Error::UnsupportedDim(2)));
        assert!(KernelSpec::hypersurface(1.0, 3).is_err());
        assert!(KernelSpec::hardy_attracting(-1.0, 3).is_err());
        assert!(KernelSpec::weighted_hardy(1.0, 3, 0.0).is_err());
        assert!(KernelSpec::sum(vec![]).is_err());
        let a = KernelSpec::hardy_attracting(1.0, 3).unwrap();
        let b = KernelSpec::hardy_attracting(1.0, 4).unwrap();
        assert!(KernelSpec::sum(vec![a, b]).is_err());
    }

    #[test]
    fn divergence_examples() {
        let a = KernelSpec::hardy_attracting(1.0, 3).unwrap();
        assert!(close(divergence(&a, &[1.0, 0.0, 0.0]).unwrap(), 0.5, 1e-15));
        let r = KernelSpec::hardy_repulsing(1.0, 3).unwrap();
        assert!(close(divergence(&r, &[0.0, 1.0, 0.0]).unwrap(), -0.5, 1e-15));
        let h = KernelSpec::hypersurface(2.0, 3).unwrap();
        assert_eq!(divergence(&h, &[1.2, 0.0, 0.0]), Err(Error::NoAnalyticDivergence("hypersurface")));
        let w = KernelSpec::weighted_hardy(1.0, 3, 0.5).unwrap();
        assert!(matches!(divergence(&w, &[1.0, 0.0, 0.0]), Err(Error::NoAnalyticDivergence(_))));
    }

    #[test]
    fn divergence_d4_matches_finite_differences() {
        // oracle: central differences of eval_kernel
        let k = KernelSpec::hardy_attracting(4.0, 4).unwrap();
        let y = [2.0, 0.0, 0.0, 0.0];
        let fd = fd_divergence(|p, o| k.accumulate(p, 1.0, o), &y, 1e-5).unwrap();
        assert!(close(fd, 1.0, 1e-8), "fd = {fd}");
        assert!(close(divergence(&k, &y).unwrap(), fd, 1e-8));
    }

    #[test]
    fn weighted_hardy_cap() {
        let w = KernelSpec::weighted_hardy(4.0, 3, 0.5).unwrap();
        let KernelKind::WeightedHardy(m) = w.kind() else { unreachable!() };
        // half sphere: threshold at the equator; q_min = 1.5 in d = 3
        assert!(m.cos_threshold.abs() < 1e-10);
        assert!(close(m.integrability(), 1.5, 1e-15));
        let inside = eval_kernel(&w, &[1.0, 0.0, 0.0]).unwrap();
        assert!(close(inside[0], 0.5f64.powf(-1.0 / 3.0), 1e-12));
        let outside = eval_kernel(&w, &[-1.0, 0.0, 0.0]).unwrap();
        assert_eq!(outside, vec![0.0; 3]);
        // in d = 3 the cap fraction is linear in the polar cosine
        let m = CapMask::new(3, 0.25, None).unwrap();
        assert!(close(m.cos_threshold, 0.5, 1e-9));
    }

    #[test]
    fn nominal_bounds_examples() {
        let a = KernelSpec::hardy_attracting(4.0, 3).unwrap();
        let b = nominal_form_bounds(&a).unwrap();
        assert_eq!(b[0], FormBoundRecord::analytic(BoundFlavor::F, 4.0, 0.0));
        assert_eq!(b[1], FormBoundRecord::analytic(BoundFlavor::DivPlus, 4.0, 0.0));

        let r = KernelSpec::hardy_repulsing(9.0, 3).unwrap();
        let b = nominal_form_bounds(&r).unwrap();
        assert_eq!((b[0].kappa, b[0].c_kappa), (9.0, 0.0));
        assert_eq!((b[1].kappa, b[1].c_kappa), (0.0, 0.0));

        let one = KernelSpec::hardy_attracting(1.0, 3).unwrap();
        let s = KernelSpec::sum(vec![one.clone(), one]).unwrap();
        let b = nominal_form_bounds(&s).unwrap();
        assert!(close(b[0].kappa, 4.0, 1e-15));
        assert_eq!(b[0].c_kappa, 0.0);
        assert!(close(b[1].kappa, 4.0, 1e-15));

        let h = KernelSpec::hypersurface(2.0, 3).unwrap();
        assert_eq!(nominal_form_bounds(&h), Err(Error::NoAnalyticBound("hypersurface")));
    }

    #[test]
    fn scaled_negative_swaps_divergence_sign() {
        let a = KernelSpec::hardy_attracting(4.0, 3).unwrap();
        let s = KernelSpec::scaled(-1.0, a).unwrap();
        let b = nominal_form_bounds(&s).unwrap();
        assert_eq!((b[0].kappa, b[1].kappa), (4.0, 0.0));
    }

    #[test]
    fn sum_with_bounded_part_is_a_valid_bound() {
        let a = KernelSpec::hardy_attracting(4.0, 3).unwrap();
        let c = KernelSpec::constant(vec![1.0, 0.0, 0.0]).unwrap();
        let b = nominal_form_bounds(&KernelSpec::sum(vec![a, c]).unwrap()).unwrap();
        assert!(close(b[0].kappa, 4.0 / 0.9, 1e-14));
        assert!(close(b[0].c_kappa, 10.0, 1e-14));
    }

    #[test]
    fn record_round_trip() {
        let a = KernelSpec::hardy_attracting(1.0, 3).unwrap();
        let w = KernelSpec::weighted_hardy(2.0, 3, 0.3).unwrap();
        let s = KernelSpec::scaled(0.5, KernelSpec::sum(vec![a, w]).unwrap()).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: KernelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"kind":"hardy_attracting","kappa":1.0,"dim":3,"colour":1}"#;
        assert!(serde_json::from_str::<KernelSpec>(bad).is_err());
        let two_d = r#"{"kind":"hardy_attracting","kappa":1.0,"dim":2}"#;
        assert!(serde_json::from_str::<KernelSpec>(two_d).is_err());
    }

    #[test]
    fn mollifier_preserves_constants() {
        let c = KernelSpec::constant(vec![0.3, -1.0, 2.0]).unwrap();
        for eps in [0.01, 0.5, 3.0] {
            let m = mollify(&c, eps).unwrap();
            let v = m.eval(&[0.1, 5.0, -2.0]).unwrap();
            for (a, b) in v.iter().zip([0.3, -1.0, 2.0]) {
                assert!(close(*a, b, 1e-12));
            }
        }
    }

    #[test]
    fn mollifier_rejects_bad_radius() {
        let c = KernelSpec::hardy_attracting(1.0, 3).unwrap();
        assert!(mollify(&c, 0.0).is_err());
        assert!(mollify(&c, -1.0).is_err());
    }

    #[test]
    fn coarse_mollifier_quadrature_is_rejected() {
        let c = KernelSpec::hardy_attracting(1.0, 3).unwrap();
        assert!(matches!(
            MollifiedKernel::new(c, 0.1, 3),
            Err(Error::QuadratureUnderresolved { nodes: 3, .. })
        ));
    }

    /// gamma_eps * K(y) in spherical coordinates around y, independent of the tensor rule.
    fn spherical_convolution(k: &KernelSpec, y: &[f64], eps: f64) -> Vec<f64> {
        use crate::quadrature::sphere_rule;
        let d = y.len();
        let (r, wr) = composite_gauss(0.0, 1.0, 40, 10);
        let (dirs, wd) = sphere_rule(d, 24);
        let mut acc = vec![0.0; d];
        let mut mass = 0.0;
        for (ri, wri) in r.iter().zip(&wr) {
            let g = bump(ri * ri) * ri.powi(d as i32 - 1) * wri;
            for (u, wu) in dirs.iter().zip(&wd) {
                let p: Vec<f64> = y.iter().zip(u).map(|(a, b)| a - eps * ri * b).collect();
                k.accumulate(&p, g * wu, &mut acc).unwrap();
                mass += g * wu;
            }
        }
        acc.iter().map(|v| v / mass).collect()
    }

    #[test]
    fn mollified_hardy_matches_spherical_oracle() {
        let k = KernelSpec::hardy_attracting(4.0, 3).unwrap();
        let m = mollify(&k, 0.1).unwrap();
        let y = [1.0, 0.0, 0.0];
        let v = m.eval(&y).unwrap();
        let oracle = spherical_convolution(&k, &y, 0.1);
        for (a, b) in v.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-3, "{v:?} vs {oracle:?}");
        }
        // the convolution itself sits close to the raw kernel 10 eps from the singularity
        assert!((v[0] - 1.0).abs() < 2e-3);
    }

    #[test]
    fn mollified_error_shrinks_with_epsilon() {
        let k = KernelSpec::hardy_attracting(4.0, 3).unwrap();
        let y = [0.6, 0.3, -0.2];
        let exact = eval_kernel(&k, &y).unwrap();
        let errs: Vec<f64> = [0.2, 0.1, 0.05, 0.025]
            .iter()
            .map(|&e| {
                let v = mollify(&k, e).unwrap().eval(&y).unwrap();
                norm_sq(&[v[0] - exact[0], v[1] - exact[1], v[2] - exact[2]]).sqrt()
            })
            .collect();
        for w in errs.windows(2) {
            // observed order >= 1
            assert!(w[1] <= 0.5 * w[0] * 1.05, "{errs:?}");
        }
    }

    #[test]
    fn mollified_sup_grows_like_inverse_epsilon() {
        let k = KernelSpec::hardy_attracting(4.0, 3).unwrap();
        let mut sups = vec![];
        for eps in [0.2, 0.1, 0.05, 0.025] {
            let m = mollify(&k, eps).unwrap();
            let sup = (1..=60)
                .map(|i| {
                    let r = eps * i as f64 / 20.0;
                    norm_sq(&m.eval(&[r * 0.6, r * 0.8, 0.0]).unwrap()).sqrt()
                })
                .fold(0.0, f64::max);
            sups.push(sup * eps);
        }
        let (lo, hi) = sups.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
        assert!(hi / lo < 1.1, "{sups:?}");
    }
}
