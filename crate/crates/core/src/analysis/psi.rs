//! Local integrability of the invariant density near a binary collision:
//! psi ~ r^{-alpha} with alpha = sqrt(kappa)(d-2)/(2N), tested through partial
//! integrals over shrinking inner cutoffs.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lift::density_exponent;
use crate::quadrature::gauss_legendre;

/// Fitted exponents this close to the critical one are not classified.
pub const INCONCLUSIVE_BAND: f64 = 1e-3;
/// Cauchy tolerance on the remaining tail.
pub const CAUCHY_TOL: f64 = 1e-8;

/// Inner cutoffs a_k = first * ratio^k, handled in log space so that very
/// small cutoffs do not underflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricProbe {
    pub ln_first: f64,
    pub ln_ratio: f64,
    pub count: usize,
}

impl Default for GeometricProbe {
    fn default() -> Self {
        Self { ln_first: 0.5f64.ln(), ln_ratio: -50.0, count: 400 }
    }
}

impl GeometricProbe {
    fn validate(&self) -> Result<()> {
        if !(self.ln_first < 0.0 && self.ln_ratio < 0.0 && self.count >= 8) {
            return Err(invalid("probe needs first < 1, ratio < 1 and at least 8 cutoffs"));
        }
        Ok(())
    }

    fn ln_cutoff(&self, k: usize) -> f64 {
        self.ln_first + k as f64 * self.ln_ratio
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converges,
    Diverges,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiVariant {
    /// int psi: radial integrand r^{d-1-alpha}
    Summability,
    /// int |Laplacian psi|: radial integrand r^{d-3-alpha}
    SecondDerivatives,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiReport {
    pub variant: PsiVariant,
    pub verdict: Verdict,
    /// Fitted growth exponent e of the increments, I(a_k) - I(a_{k+1}) ~ a_k^e; critical value 0.
    pub fitted_exponent: f64,
    /// e predicted from the density exponent, for reference.
    pub predicted_exponent: f64,
    /// ln I(a_k) for each cutoff.
    pub ln_partial_integrals: Vec<f64>,
    /// Estimated remaining tail when converging.
    pub tail_estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiIntegrability {
    pub kappa: f64,
    pub dim: usize,
    pub n_particles: usize,
    pub summability: PsiReport,
    pub second_derivatives: PsiReport,
}

/// Tests int_{a<r<1} psi and int_{a<r<1} |Laplacian psi| along the probe.
/// Only the exponent enters; for N > 2 this is the binary-collision reduction.
pub fn psi_integrability(kappa: f64, dim: usize, n_particles: usize, probe: &GeometricProbe) -> Result<PsiIntegrability> {
    if dim < 3 {
        return Err(Error::UnsupportedDim(dim));
    }
    if n_particles < 2 || !(kappa >= 0.0) {
        return Err(invalid("need N >= 2 and kappa >= 0"));
    }
    probe.validate()?;
    let alpha = density_exponent(kappa, dim, n_particles);
    let d = dim as f64;
    Ok(PsiIntegrability {
        kappa,
        dim,
        n_particles,
        summability: classify(PsiVariant::Summability, d - 1.0 - alpha, probe),
        second_derivatives: classify(PsiVariant::SecondDerivatives, d - 3.0 - alpha, probe),
    })
}

/// ln int_{u0}^{u1} e^{(p+1) u} du by Gauss–Legendre with a log shift.
fn ln_panel(p: f64, u0: f64, u1: f64, nodes: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (x, w) = nodes;
    let h = (u1 - u0) / 2.0;
    let us: Vec<f64> = x.iter().map(|t| u0 + h * (t + 1.0)).collect();
    let m = us.iter().map(|u| (p + 1.0) * u).fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = us.iter().zip(w).map(|(u, w)| w * ((p + 1.0) * u - m).exp()).sum();
    m + (h * s).ln()
}

fn ln_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn classify(variant: PsiVariant, power: f64, probe: &GeometricProbe) -> PsiReport {
    // panels are tens of e-folds long; split them so each GL rule sees a mild exponential
    let nodes = gauss_legendre(24);
    let panel = |u0: f64, u1: f64| {
        let pieces = (((power + 1.0).abs() * (u1 - u0)).ceil() as usize).clamp(1, 4096);
        let dh = (u1 - u0) / pieces as f64;
        (0..pieces).fold(f64::NEG_INFINITY, |acc, i| ln_add(acc, ln_panel(power, u0 + i as f64 * dh, u0 + (i + 1) as f64 * dh, &nodes)))
    };
    let mut ln_inc = Vec::with_capacity(probe.count);
    let mut ln_partial = Vec::with_capacity(probe.count);
    let mut acc = panel(probe.ln_cutoff(0), 0.0);
    ln_partial.push(acc);
    for k in 0..probe.count - 1 {
        let inc = panel(probe.ln_cutoff(k + 1), probe.ln_cutoff(k));
        ln_inc.push(inc);
        acc = ln_add(acc, inc);
        ln_partial.push(acc);
    }
    // least squares of ln(increment_k) against ln a_k over the second half
    let start = ln_inc.len() / 2;
    let pts: Vec<(f64, f64)> = (start..ln_inc.len()).map(|k| (probe.ln_cutoff(k), ln_inc[k])).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let e = sxy / sxx;
    let last = *ln_inc.last().expect("probe has increments");
    let (verdict, tail) = if e.abs() <= INCONCLUSIVE_BAND {
        (Verdict::Inconclusive, None)
    } else if e < 0.0 {
        (Verdict::Diverges, None)
    } else {
        // geometric remainder of the increments beyond the probe
        let q = (e * probe.ln_ratio.abs()).exp();
        let ln_tail = last - (q - 1.0).ln();
        let scale = acc.exp().max(1.0);
        if last.exp() < CAUCHY_TOL * scale && ln_tail.exp() < CAUCHY_TOL * scale {
            (Verdict::Converges, Some(ln_tail.exp()))
        } else {
            (Verdict::Inconclusive, Some(ln_tail.exp()))
        }
    };
    PsiReport {
        variant,
        verdict,
        fitted_exponent: e,
        predicted_exponent: power + 1.0,
        ln_partial_integrals: ln_partial,
        tail_estimate: tail,
    }
}

/// Summability threshold 16 (d/(d-2))^2 for N = 2.
pub fn summability_threshold(dim: usize) -> f64 {
    let d = dim as f64;
    16.0 * (d / (d - 2.0)).powi(2)
}
