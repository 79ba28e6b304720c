use super::*;
use proptest::prelude::*;

fn hardy(kappa: f64, d: usize) -> KernelSpec {
    KernelSpec::hardy_attracting(kappa, d).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn two_particle_drift_example() {
    let drift = LiftedDrift::uniform(hardy(4.0, 3), 2).unwrap();
    let x = ParticleConfiguration::from_blocks(&[vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]]).unwrap();
    let b = eval_drift(&drift, &x).unwrap();
    assert!(close(b[0], 0.25, 1e-15));
    assert_eq!(&b[1..3], &[0.0, 0.0]);
    assert_eq!(b[3], -b[0]);
}

#[test]
fn zero_field_gives_zero_drift() {
    let drift = LiftedDrift::uniform(KernelSpec::zero(3).unwrap(), 4).unwrap();
    let x = ParticleConfiguration::new(4, 3, (0..12).map(|v| v as f64 * 0.3).collect()).unwrap();
    assert!(eval_drift(&drift, &x).unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn equilateral_triangle_points_to_centroid() {
    let h = 3f64.sqrt() / 2.0;
    let x = ParticleConfiguration::from_blocks(&[vec![1.0, 0.0, 0.0], vec![-0.5, h, 0.0], vec![-0.5, -h, 0.0]]).unwrap();
    let drift = LiftedDrift::uniform(hardy(4.0, 3), 3).unwrap();
    let b = eval_drift(&drift, &x).unwrap();
    // side sqrt(3); each pair contributes (1/3)(x_i - x_j)/3, sum = (1/9)(3 x_i) = x_i/3
    let c = x.centroid();
    let mut mags = vec![];
    for i in 0..3 {
        let bi = &b[i * 3..i * 3 + 3];
        let xi = x.block(i);
        for k in 0..3 {
            assert!(close(bi[k], (xi[k] - c[k]) / 3.0, 1e-14));
        }
        mags.push(kernels::norm_sq(bi).sqrt());
    }
    assert!(close(mags[0], mags[1], 1e-14) && close(mags[1], mags[2], 1e-14));
}

#[test]
fn matrix_drift_matches_uniform_and_adds_particle_terms() {
    let k = PairKernel::Raw(hardy(2.0, 3));
    let drift_u = LiftedDrift::uniform(k.clone(), 3).unwrap();
    let drift_m = LiftedDrift::from_matrix(vec![k; 9], 3).unwrap();
    let x = ParticleConfiguration::new(3, 3, vec![0.1, 0.2, 0.3, -1.0, 0.5, 0.0, 0.4, -0.7, 1.1]).unwrap();
    let bu = drift_u.eval(&x).unwrap();
    let bm = drift_m.eval(&x).unwrap();
    for (a, b) in bu.iter().zip(&bm) {
        assert!(close(*a, *b, 1e-14));
    }
    let m = PairKernel::Raw(KernelSpec::constant(vec![1.0, 0.0, 0.0]).unwrap());
    let with_m = drift_u.clone().with_particle_drifts(vec![m.clone(), m.clone(), m]).unwrap();
    let bw = with_m.eval(&x).unwrap();
    for i in 0..3 {
        assert!(close(bw[3 * i], bu[3 * i] + 1.0, 1e-14));
    }
}

#[test]
fn collision_is_reported() {
    let drift = LiftedDrift::uniform(hardy(1.0, 3), 2).unwrap();
    let x = ParticleConfiguration::new(2, 3, vec![0.5, 0.0, 0.0, 0.5, 0.0, 0.0]).unwrap();
    assert!(matches!(eval_drift(&drift, &x), Err(Error::CollisionState { i: 0, j: 1, .. })));
    assert!(matches!(invariant_density(4.0, &x), Err(Error::CollisionState { .. })));
    assert!(matches!(lyapunov_residual(4.0, &x), Err(Error::CollisionState { .. })));
}

#[test]
fn mollified_drift_is_finite_at_coincidence() {
    let m = kernels::mollify(&hardy(4.0, 3), 0.1).unwrap();
    let drift = LiftedDrift::uniform(m, 2).unwrap();
    let x = ParticleConfiguration::new(2, 3, vec![0.5, 0.0, 0.0, 0.5, 0.0, 0.0]).unwrap();
    let b = drift.eval(&x).unwrap();
    assert!(b.iter().all(|v| v.is_finite()));
}

#[test]
fn lifted_bound_examples() {
    assert_eq!(lifted_form_bound(4.0, 0.0, 2), (1.0, 0.0));
    let (d, _) = lifted_form_bound(4.0, 0.0, 1000);
    assert!(close(d, 3.992004, 1e-14));
    let (d, c) = lifted_form_bound(0.0, 5.0, 3);
    assert_eq!(d, 0.0);
    assert!(close(c, 20.0 / 3.0, 1e-15));

    assert_eq!(lifted_div_bound(4.0, 0.0, 2), (2.0, 0.0));
    assert_eq!(lifted_div_bound(2.0 * 16f64.sqrt(), 0.0, 2), (4.0, 0.0));
    assert_eq!(lifted_div_bound(0.0, 0.0, 7), (0.0, 0.0));

    let (d, c) = lifted_mf_bound(2.0, 1.0, 4);
    assert!(close(d, 3.0, 1e-15) && c == 3.0);
    let (d, c) = lifted_power_bound(3.0, 1.0, 1.0, 2).unwrap();
    assert!(close(d, 0.75, 1e-15) && close(c, 0.5, 1e-15));
    assert!(lifted_power_bound(1.0, 1.0, 1.5, 2).is_err());
}

#[test]
fn invariant_density_examples() {
    let x = ParticleConfiguration::pair(3, 1.0).unwrap();
    assert_eq!(invariant_density(4.0, &x).unwrap(), 1.0);
    let e = std::f64::consts::E;
    let x = ParticleConfiguration::pair(3, e).unwrap();
    assert!(close(invariant_density(4.0, &x).unwrap(), (-0.5f64).exp(), 1e-14));

    let x = ParticleConfiguration::new(3, 3, vec![0.0, 0.0, 0.0, 1.3, 0.0, 0.0, 0.2, 0.9, -0.4]).unwrap();
    let a = density_exponent(4.0, 3, 3);
    let prod: f64 = [(0, 1), (0, 2), (1, 2)].iter().map(|&(i, j)| x.pair_distance(i, j).powf(-a)).product();
    assert!(close(invariant_density(4.0, &x).unwrap(), prod, 1e-14));
}

fn fd_laplacian(kappa: f64, x: &ParticleConfiguration, h: f64) -> f64 {
    let mut lap = 0.0;
    let f0 = invariant_density(kappa, x).unwrap();
    for k in 0..x.positions().len() {
        let mut p = x.clone();
        p.positions_mut()[k] += h;
        let fp = invariant_density(kappa, &p).unwrap();
        p.positions_mut()[k] -= 2.0 * h;
        let fm = invariant_density(kappa, &p).unwrap();
        lap += (fp - 2.0 * f0 + fm) / (h * h);
    }
    lap
}

#[test]
fn laplacian_matches_finite_differences() {
    for (n, d, kappa) in [(2, 3, 4.0), (3, 4, 1.0), (3, 3, 9.0)] {
        let pos: Vec<f64> = (0..n * d).map(|k| ((k * 7 + 3) % 11) as f64 / 5.0 - 1.0).collect();
        let x = ParticleConfiguration::new(n, d, pos).unwrap();
        let exact = laplacian_invariant_density(kappa, &x).unwrap();
        let fd = fd_laplacian(kappa, &x, 1e-4);
        assert!((fd - exact).abs() <= 1e-4 * exact.abs(), "n={n} d={d}: {fd} vs {exact}");
    }
}

#[test]
fn lyapunov_identity_examples() {
    let x = ParticleConfiguration::new(2, 3, vec![0.3, -0.2, 0.9, -0.5, 0.4, 0.1]).unwrap();
    let r = lyapunov_residual(4.0, &x).unwrap();
    assert!(r.relative() < 1e-8 && r.scale > 0.0);
    let x = ParticleConfiguration::new(3, 4, (0..12).map(|k| (k as f64 * 1.7).sin()).collect()).unwrap();
    assert!(lyapunov_residual(1.0, &x).unwrap().relative() < 1e-8);
}

#[test]
fn eta_examples() {
    let p = EtaProfile::new(4.0, 3, 2).unwrap();
    assert_eq!(eta_value(&p, 3.0).unwrap(), 2.0);
    assert!(close(eta_value(&p, 0.5).unwrap(), 2f64.sqrt(), 1e-15));
    assert!(eta_value(&p, 0.0).is_err());
    let z = ParticleConfiguration::new(3, 3, vec![0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 5.0, 0.0]).unwrap();
    let p3 = EtaProfile::new(4.0, 3, 3).unwrap();
    assert_eq!(heat_kernel_envelope(&p3, 1.0, &z).unwrap(), 8.0);
}

#[test]
fn eta_is_c2_at_the_junctions() {
    for kappa in [0.0, 1.0, 4.0, 9.0, 15.0] {
        let p = EtaProfile::new(kappa, 3, 2).unwrap();
        let g = p.exponent();
        let (v, d1, d2) = p.eval_with_derivatives(1.0);
        assert!((v - 1.0).abs() < 1e-10 && (d1 + g).abs() < 1e-10 && (d2 - g * (g + 1.0)).abs() < 1e-10);
        let (v, d1, d2) = p.eval_with_derivatives(2.0);
        assert!((v - 2.0).abs() < 1e-10 && d1.abs() < 1e-10 && d2.abs() < 1e-10);
        // the dip below 1 just past r = 1 stays small
        assert!(p.minimum() > 0.9, "kappa {kappa}: {}", p.minimum());
        if kappa == 0.0 {
            assert!(p.minimum() >= 1.0 - 1e-15);
        }
    }
}

#[test]
fn paper_constant_examples() {
    assert_eq!(paper_hardy_constant(3, 2), 0.5);
    assert_eq!(paper_hardy_constant(4, 2), 2.0);
    let c = paper_hardy_constant(3, 10);
    let second = 1.0 / (1.0 + (1.0 + 3.0 * 72.0 / 8.0f64).sqrt());
    assert!(close(c, second, 1e-15) && second > 0.1);
    assert!(close(paper_hardy_constant(3, 3), 1.0 / (1.0 + 1.75f64.sqrt()), 1e-15));
}

#[test]
fn configuration_json_round_trip() {
    let x = ParticleConfiguration::pair(3, 1.0).unwrap();
    let s = serde_json::to_string(&x).unwrap();
    assert_eq!(serde_json::from_str::<ParticleConfiguration>(&s).unwrap(), x);
    let bad = r#"{"n_particles":2,"dim":3,"positions":[0,0,0]}"#;
    assert!(serde_json::from_str::<ParticleConfiguration>(bad).is_err());
}

fn config_strategy(n: usize, d: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0f64..2.0, n * d)
}

fn well_separated(x: &ParticleConfiguration) -> bool {
    x.min_pair_distance().0 > 1e-3
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn drift_is_translation_invariant(pos in config_strategy(3, 3), shift in proptest::collection::vec(-5.0f64..5.0, 3)) {
        let x = ParticleConfiguration::new(3, 3, pos.clone()).unwrap();
        prop_assume!(well_separated(&x));
        let moved: Vec<f64> = pos.iter().enumerate().map(|(k, v)| v + shift[k % 3]).collect();
        let y = ParticleConfiguration::new(3, 3, moved).unwrap();
        let drift = LiftedDrift::uniform(hardy(3.0, 3), 3).unwrap();
        let (bx, by) = (drift.eval(&x).unwrap(), drift.eval(&y).unwrap());
        for (a, b) in bx.iter().zip(&by) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn swapping_particles_swaps_drifts(pos in config_strategy(3, 3)) {
        let x = ParticleConfiguration::new(3, 3, pos.clone()).unwrap();
        prop_assume!(well_separated(&x));
        let mut swapped = pos.clone();
        for k in 0..3 {
            swapped.swap(k, 3 + k);
        }
        let y = ParticleConfiguration::new(3, 3, swapped).unwrap();
        let drift = LiftedDrift::uniform(hardy(2.0, 3), 3).unwrap();
        let (bx, by) = (drift.eval(&x).unwrap(), drift.eval(&y).unwrap());
        for k in 0..3 {
            prop_assert!((bx[k] - by[3 + k]).abs() <= 1e-12 * (1.0 + bx[k].abs()));
            prop_assert!((bx[6 + k] - by[6 + k]).abs() <= 1e-12 * (1.0 + bx[6 + k].abs()));
        }
    }

    #[test]
    fn lyapunov_residual_vanishes(pos in config_strategy(3, 4), kappa in 0.01f64..15.0) {
        let x = ParticleConfiguration::new(3, 4, pos).unwrap();
        prop_assume!(well_separated(&x));
        prop_assert!(lyapunov_residual(kappa, &x).unwrap().relative() <= 1e-8);
    }

    #[test]
    fn lifted_bound_below_kappa_and_increasing(kappa in 0.01f64..100.0, n in 2usize..200) {
        let (d1, _) = lifted_form_bound(kappa, 0.0, n);
        let (d2, _) = lifted_form_bound(kappa, 0.0, n + 1);
        prop_assert!(d1 < kappa && d1 < d2);
    }

    #[test]
    fn eta_continuous_and_positive(kappa in 0.0f64..16.0, r in 0.01f64..3.0) {
        let p = EtaProfile::new(kappa, 3, 2).unwrap();
        let h = 1e-7;
        // eta blows up like r^-alpha at the origin, so continuity is checked relative to its size
        prop_assert!((p.value(r + h) - p.value(r)).abs() < 1e-4 * p.value(r));
        prop_assert!(p.value(r) >= p.minimum() - 1e-12);
    }
}
