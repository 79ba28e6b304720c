//! Small quadrature toolbox shared by the kernel, lifting and analysis modules.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre rule on [a, b] with `panels` equal panels of `order` nodes.
pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(lo + 0.5 * h * (xi + 1.0));
            weights.push(0.5 * h * wi);
        }
    }
    (nodes, weights)
}

/// Integrates `g` over the whole real line with the substitution `u = sinh(s)`
/// and a trapezoid rule in `s`. `reach` bounds |u|; the integrand must be
/// negligible beyond it.
pub fn integrate_real_line(reach: f64, step: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
    let (u, w) = real_line_rule(reach, step);
    u.iter().zip(&w).map(|(u, w)| w * g(*u)).sum()
}

/// Nodes and weights of [`integrate_real_line`].
pub fn real_line_rule(reach: f64, step: f64) -> (Vec<f64>, Vec<f64>) {
    let s_max = reach.asinh();
    let n = (s_max / step).ceil() as i64;
    let h = s_max / n as f64;
    (-n..=n)
        .map(|k| {
            let s = k as f64 * h;
            let w = if k.abs() == n { 0.5 } else { 1.0 };
            (s.sinh(), w * h * s.cosh())
        })
        .unzip()
}

/// Gauss–Hermite nodes and weights for the weight e^{-t^2} on the real line.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        // asymptotic initial guesses, largest root first
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (p, d) = hermite_orthonormal(n, z);
            pp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = hermite_orthonormal(n, z);
        if d != 0.0 {
            pp = d;
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// Orthonormal Hermite polynomial of degree n and its derivative.
fn hermite_orthonormal(n: usize, x: f64) -> (f64, f64) {
    let mut p1 = PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = x * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

/// Surface area of the unit sphere S^{d-1} in R^d.
pub fn unit_sphere_area(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    2.0 * PI.powf(half) / statrs::function::gamma::gamma(half)
}

/// Deterministic product rule on S^{d-1}: Gauss–Legendre in the first
/// coordinate (or its polar angle) and recursion on the equatorial sphere.
/// Returns unit vectors and weights summing to |S^{d-1}|.
pub fn sphere_rule(d: usize, order: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    assert!(d >= 2);
    if d == 2 {
        let m = 2 * order;
        let w = 2.0 * PI / m as f64;
        let pts = (0..m)
            .map(|k| {
                let a = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
        return (pts, vec![w; m]);
    }
    // On S^{d-1}, t = first coordinate has weight (1 - t^2)^{(d-3)/2}.
    let (sub_pts, sub_w) = sphere_rule(d - 1, order);
    // Odd d: the weight is a polynomial in t and Gauss–Legendre in t is exact.
    // Even d: integrate in the polar angle instead, where the weight is smooth.
    let (t, wt): (Vec<f64>, Vec<f64>) = if d % 2 == 1 {
        let (t, w) = gauss_legendre(order);
        let power = (d as i32 - 3) / 2;
        let w = t.iter().zip(&w).map(|(t, w)| w * (1.0 - t * t).powi(power)).collect();
        (t, w)
    } else {
        let (th, w) = composite_gauss(0.0, PI, 1, order);
        let t = th.iter().map(|a| a.cos()).collect();
        let w = th.iter().zip(&w).map(|(a, w)| w * a.sin().powi(d as i32 - 2)).collect();
        (t, w)
    };
    let mut pts = Vec::with_capacity(order * sub_pts.len());
    let mut ws = Vec::with_capacity(order * sub_pts.len());
    for (ti, wi) in t.iter().zip(&wt) {
        let s = (1.0 - ti * ti).sqrt();
        let jac = 1.0;
        for (p, w) in sub_pts.iter().zip(&sub_w) {
            let mut v = Vec::with_capacity(d);
            v.push(*ti);
            v.extend(p.iter().map(|c| c * s));
            pts.push(v);
            ws.push(wi * jac * w);
        }
    }
    (pts, ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        // x^14 integrates to 2/15
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((i - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn real_line_gaussian() {
        let v = integrate_real_line(40.0, 0.02, |u| (-u * u).exp());
        assert!((v - PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gauss_hermite_moments() {
        for n in [1, 2, 5, 16, 40] {
            let (x, w) = gauss_hermite(n);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
            let m0: f64 = w.iter().sum();
            assert!((m0 - PI.sqrt()).abs() < 1e-12, "n {n}: {m0}");
            if n >= 2 {
                let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
                assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-12);
            }
        }
        let (x, w) = gauss_hermite(30);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.cos()).sum();
        assert!((v - PI.sqrt() * (-0.25f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn sphere_rule_weights_and_second_moment() {
        for d in 3..=5 {
            let (pts, w) = sphere_rule(d, 16);
            let total: f64 = w.iter().sum();
            assert!((total - unit_sphere_area(d)).abs() < 1e-10, "d={d}");
            // the average of x_1^2 over the sphere is 1/d
            let m: f64 = pts.iter().zip(&w).map(|(p, w)| w * p[0] * p[0]).sum::<f64>() / total;
            assert!((m - 1.0 / d as f64).abs() < 1e-12);
            let m2: f64 = pts.iter().zip(&w).map(|(p, w)| w * p[d - 1] * p[d - 1]).sum::<f64>() / total;
            assert!((m2 - 1.0 / d as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_area_values() {
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-12);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
    }
}
