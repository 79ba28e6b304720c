use proptest::prelude::*;

use ipslab::analysis::bessel::hit_probability_nu3;
use ipslab::analysis::trial::{estimate_form_bound, FamilyKind};
use ipslab::analysis::{bessel_dimension, bessel_hit_probability, BesselOracle};
use ipslab::kernels::{divergence, eval_kernel, BoundFlavor, KernelSpec};
use ipslab::lift::{density_exponent, multiparticle_hardy_ratio, paper_hardy_constant, LiftedDrift, PairProductTrial, ParticleConfiguration};
use ipslab::sde::{run_ensemble, run_epsilon_schedule, simulate, step, Estimate, PathFunctional, Scheme, SimPlan};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn direction(d: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, d).prop_filter("nonzero", |v| norm(v) > 1e-3)
}

fn free_pair(distance: f64, dt: f64, horizon: f64, ensemble: usize, seed: u64) -> SimPlan {
    let drift = LiftedDrift::uniform(KernelSpec::zero(3).unwrap(), 2).unwrap();
    let mut p = SimPlan::new(drift, ParticleConfiguration::pair(3, distance).unwrap(), dt, horizon);
    p.ensemble = ensemble;
    p.seed = seed;
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bessel_dimension_identities(d in 3usize..12, kappa in 0.0f64..400.0) {
        let dd = d as f64;
        prop_assert_eq!(bessel_dimension(16.0, d), 2.0);
        prop_assert_eq!(bessel_dimension(0.0, d), dd);
        let nu0 = bessel_dimension(16.0 * (dd / (dd - 2.0)).powi(2), d);
        prop_assert!(nu0.abs() <= 8.0 * f64::EPSILON * dd);
        // slope of the pair density near coincidence: nu - d = -sqrt(kappa)(d-2)/(2N) at N = 2
        let nu = bessel_dimension(kappa, d);
        prop_assert!((nu - dd + density_exponent(kappa, d, 2)).abs() <= 1e-12 * (1.0 + dd));
        prop_assert!(bessel_dimension(kappa + 1.0, d) < nu);
        prop_assert_eq!(nu < 2.0, kappa > 16.0);
    }

    #[test]
    fn hardy_magnitude_times_radius_is_constant(d in 3usize..7, kappa in 0.0f64..50.0, u in direction(6), ln_r in -13.0f64..0.0) {
        let u: Vec<f64> = u[..d].to_vec();
        prop_assume!(norm(&u) > 1e-3);
        let r = ln_r.exp();
        let y: Vec<f64> = u.iter().map(|c| c / norm(&u) * r).collect();
        let k = KernelSpec::hardy_attracting(kappa, d).unwrap();
        let exact = kappa.sqrt() * (d as f64 - 2.0) / 2.0;
        let got = norm(&eval_kernel(&k, &y).unwrap()) * r;
        prop_assert!((got - exact).abs() <= 1e-12 * (1.0 + exact));
    }

    #[test]
    fn divergence_matches_central_differences(d in 3usize..6, kappa in 0.5f64..30.0, u in direction(5), r in 0.5f64..2.0, attract in any::<bool>()) {
        let u: Vec<f64> = u[..d].to_vec();
        prop_assume!(norm(&u) > 1e-3);
        let y: Vec<f64> = u.iter().map(|c| c / norm(&u) * r).collect();
        let k = if attract { KernelSpec::hardy_attracting(kappa, d) } else { KernelSpec::hardy_repulsing(kappa, d) }.unwrap();
        let h = 1e-5;
        let mut fd = 0.0;
        for i in 0..d {
            let (mut a, mut b) = (y.clone(), y.clone());
            a[i] += h;
            b[i] -= h;
            fd += (eval_kernel(&k, &a).unwrap()[i] - eval_kernel(&k, &b).unwrap()[i]) / (2.0 * h);
        }
        let div = divergence(&k, &y).unwrap();
        prop_assert!((div - fd).abs() <= 1e-4 * div.abs().max(1e-12), "{} vs {}", div, fd);
    }

    #[test]
    fn zero_drift_step_is_scaled_increment(dt in 1e-6f64..1.0, xi in proptest::collection::vec(-4.0f64..4.0, 6), tamed in any::<bool>()) {
        let drift = LiftedDrift::uniform(KernelSpec::zero(3).unwrap(), 2).unwrap();
        let x = ParticleConfiguration::pair(3, 1.0).unwrap();
        let scheme = if tamed { Scheme::TamedEuler } else { Scheme::EulerMaruyama };
        let y = step(&drift, &x, dt, &xi, scheme).unwrap();
        for ((a, b), z) in y.positions().iter().zip(x.positions()).zip(&xi) {
            prop_assert!((a - b - (2.0 * dt).sqrt() * z).abs() <= 1e-14);
        }
    }

    #[test]
    fn stderr_scales_with_inverse_root_m(s in 0usize..50, extra in 1usize..50, k in 1usize..20) {
        let m = s + extra;
        let a = Estimate::proportion(s, m);
        let b = Estimate::proportion(k * s, k * m);
        prop_assert!((a.mean - b.mean).abs() <= 1e-15);
        prop_assert!((b.std_err * (k as f64).sqrt() - a.std_err).abs() <= 1e-14);
    }

    #[test]
    fn hit_probability_matches_three_dimensional_closed_form(r0 in 0.3f64..2.0, frac in 0.02f64..0.5, horizon in 0.1f64..2.0) {
        let a = frac * r0;
        let exact = hit_probability_nu3(r0, a, horizon);
        let got = bessel_hit_probability(3.0, r0, a, horizon).unwrap();
        prop_assert!((got - exact).abs() <= 1e-3 * exact.max(1e-3), "{} vs {}", got, exact);
    }

    #[test]
    fn trajectories_depend_only_on_seed_and_index(seed in any::<u64>(), index in 0usize..1000) {
        let plan = free_pair(0.5, 1e-2, 0.2, 1, seed);
        prop_assert_eq!(simulate(&plan, index), simulate(&plan, index));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn rayleigh_estimate_never_exceeds_kappa(d in 3usize..5, kappa in 0.5f64..20.0, div in any::<bool>()) {
        let k = KernelSpec::hardy_attracting(kappa, d).unwrap();
        let (flavor, sharp) = if div { (BoundFlavor::DivPlus, 2.0 * kappa.sqrt()) } else { (BoundFlavor::F, kappa) };
        let e = estimate_form_bound(&k, flavor, FamilyKind::RadialPower).unwrap();
        prop_assert!(e.value <= sharp * (1.0 + 1e-12), "{} > {}", e.value, sharp);
        prop_assert!(e.value > 0.9 * sharp);
    }

    #[test]
    fn many_particle_ratio_respects_the_constant(n in 2usize..4, ln_core in -6.0f64..0.0, power in -0.4f64..0.4, center in 0.3f64..3.0, seed in any::<u64>()) {
        let trial = PairProductTrial { n_particles: n, dim: 3, sigma: 1.0, center_width: center, core: ln_core.exp(), power };
        let r = multiparticle_hardy_ratio(&trial, 4000, seed).unwrap();
        let bound = 1.0 / paper_hardy_constant(3, n);
        prop_assert!(r.value <= bound + 4.0 * r.std_err, "{} +- {} vs {}", r.value, r.std_err, bound);
    }

    #[test]
    fn ensembles_match_across_worker_counts(seed in any::<u64>(), workers in 2usize..5) {
        let mut plan = free_pair(0.3, 1e-2, 0.3, 40, seed);
        plan.drift = LiftedDrift::uniform(KernelSpec::hardy_attracting(25.0, 3).unwrap(), 2).unwrap();
        plan.workers = Some(1);
        let a = run_ensemble(&plan).unwrap();
        plan.workers = Some(workers);
        prop_assert_eq!(a, run_ensemble(&plan).unwrap());
    }
}

#[test]
fn drift_integral_is_finite_without_collision() {
    let mut plan = free_pair(0.5, 1e-3, 0.5, 400, 3);
    plan.drift = LiftedDrift::uniform(KernelSpec::hardy_attracting(9.0, 3).unwrap(), 2).unwrap();
    plan.functionals = vec![("drift".into(), PathFunctional::DriftNorm)];
    let r = run_ensemble(&plan).unwrap();
    let survivors: Vec<f64> = r.outcomes.iter().filter(|o| !o.collided).map(|o| o.path_functionals[0]).collect();
    assert!(survivors.len() > 300);
    assert!(survivors.iter().all(|v| v.is_finite() && *v > 0.0));
    assert!(r.functional_means[0].1.mean.is_finite());
}

#[test]
fn collision_probability_does_not_grow_as_epsilon_shrinks() {
    let kernel = KernelSpec::hardy_attracting(9.0, 3).unwrap();
    let m = 800;
    let mut plan = free_pair(0.3, 1e-3, 0.25, m, 8);
    plan.epsilon_schedule = vec![2.5e-4, 1.25e-4];
    let runs = run_epsilon_schedule(&plan, &kernel).unwrap();
    let p: Vec<Estimate> = runs.iter().map(|(_, r)| r.collision_probability).collect();
    for w in p.windows(2) {
        let se = (w[0].std_err.powi(2) + w[1].std_err.powi(2)).sqrt().max(1.0 / m as f64);
        assert!(w[1].mean <= w[0].mean + 3.0 * se, "{p:?}");
    }
    // the finest level sits below r_coll/4 and matches the two-body oracle
    let q = BesselOracle::new(9.0, 3).unwrap().collision_probability(0.3, 1e-3, 0.25).unwrap();
    let last = p.last().unwrap();
    assert!((last.mean - q).abs() <= 3.0 * (q * (1.0 - q) / m as f64).sqrt(), "{p:?} vs {q}");
}
