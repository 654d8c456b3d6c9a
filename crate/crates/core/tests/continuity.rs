use anisoflow::continuity::*;
use anisoflow::grid::ops::div;
use anisoflow::grid::{integrate, lp_norm, DiscreteDomain, ScalarField, VectorField};
use proptest::prelude::*;

fn bump(d: DiscreteDomain) -> ScalarField {
    ScalarField::from_fn(d, |y| 1.0 + 0.5 * (-4.0 * (y[0] * y[0] + y[1] * y[1] + y[2] * y[2])).exp())
}

fn swirl(d: DiscreteDomain, a: f64) -> VectorField {
    let r = d.extent();
    VectorField::from_fn_no_slip(d, move |y| {
        let b = (0..3).map(|i| 1.0 - (y[i] / r).powi(2)).product::<f64>();
        [a * b * (y[1] + 0.3), -a * b * y[0], a * b * (0.5 + y[0] * y[2])]
    })
}

fn run(rho0: ScalarField, u: &VectorField, eps: f64, dt: f64, steps: usize) -> ContinuitySolve {
    let mut s = ContinuitySolve::new(eps, dt, rho0).unwrap();
    for _ in 0..steps {
        s.step(u).unwrap();
    }
    s
}

#[test]
fn constant_density_at_rest_is_exact() {
    let d = DiscreteDomain::new(1.0, 6).unwrap();
    let rho = ScalarField::constant(d, 1.7);
    let next = step_density(&rho, &VectorField::zeros(d), 0.1, 0.01).unwrap();
    assert_eq!(next, rho);
}

#[test]
fn max_principle_at_rest() {
    let d = DiscreteDomain::new(1.0, 8).unwrap();
    let rho0 = ScalarField::from_fn(d, |y| 1.0 + 0.8 * (3.0 * y[0]).sin() * (2.0 * y[1]).cos());
    let s = run(rho0.clone(), &VectorField::zeros(d), 0.3, 0.05, 20);
    for r in s.densities() {
        assert!(r.min() >= rho0.min() && r.max() <= rho0.max());
    }
}

#[test]
fn exponential_density_bounds() {
    let d = DiscreteDomain::new(1.0, 10).unwrap();
    let u = swirl(d, 2.0);
    let dmax = div(&u).values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rho0 = bump(d);
    let dt = 5e-3;
    let s = run(rho0.clone(), &u, 0.05, dt, 40);
    let tol = 10.0 * dt;
    for (k, r) in s.densities().iter().enumerate() {
        let g = (k as f64 * dt * dmax).exp();
        assert!(r.max() <= rho0.max() * g * (1.0 + tol), "step {k}");
        assert!(r.min() >= rho0.min() / g * (1.0 - tol), "step {k}");
    }
}

#[test]
fn stability_estimate_identical_runs() {
    let d = DiscreteDomain::new(1.0, 6).unwrap();
    let u = swirl(d, 1.0);
    let a = run(bump(d), &u, 0.1, 0.01, 5);
    let b = run(bump(d), &u, 0.1, 0.01, 5);
    assert_eq!(stability_estimate(&a, &b).unwrap(), 0.0);
    let c = run(bump(d), &u, 0.2, 0.01, 5);
    assert!(stability_estimate(&a, &c).is_err());
}

#[test]
fn stability_estimate_is_lipschitz() {
    let d = DiscreteDomain::new(1.0, 8).unwrap();
    let u = swirl(d, 1.0);
    let w = VectorField::from_fn_no_slip(d, |y| [(2.0 * y[2]).cos(), y[0] * y[1], 0.5]);
    let base = run(bump(d), &u, 0.1, 0.01, 10);
    let diff = |s: f64| {
        let other = run(bump(d), &u.lin_comb(1.0, &w, s).unwrap(), 0.1, 0.01, 10);
        let last = base.last().zip_map(other.last(), |a, b| a - b).unwrap();
        (stability_estimate(&base, &other).unwrap(), lp_norm(&d, last.values(), 2.0))
    };
    let ratios: Vec<(f64, f64)> = [1e-2, 1e-3, 1e-4].iter().map(|&s| diff(s)).collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), r| (l.min(r.0), h.max(r.0)));
    assert!(hi.is_finite() && hi <= 2.0 * lo, "{ratios:?}");
    let (_, full) = diff(1e-3);
    let (_, half) = diff(5e-4);
    let factor = half / full;
    assert!((0.3..=0.7).contains(&factor), "{factor}");
}

#[test]
fn gradient_budget_examples() {
    let d = DiscreteDomain::new(1.0, 6).unwrap();
    let s = run(ScalarField::constant(d, 2.0), &VectorField::zeros(d), 0.1, 0.01, 3);
    assert_eq!(grad_density_budget(&s), 0.0);

    let d = DiscreteDomain::new(1.0, 8).unwrap();
    let u = swirl(d, 1.0);
    let budgets: Vec<f64> = [1e-1, 1e-2, 1e-3].iter().map(|&e| grad_density_budget(&run(bump(d), &u, e, 5e-3, 20))).collect();
    assert!(budgets.iter().all(|b| *b <= 2.0 * budgets[0]), "{budgets:?}");
}

#[test]
fn fourier_mode_gradient_decays() {
    let d = DiscreteDomain::new(1.0, 10).unwrap();
    let rho0 = ScalarField::from_fn(d, |y| 1.0 + 0.3 * (std::f64::consts::PI * (y[0] + 1.0) / 2.0).cos());
    let s = run(rho0, &VectorField::zeros(d), 0.2, 0.01, 30);
    let g: Vec<f64> = s.densities().iter().map(grad_sq).collect();
    assert!(g.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn mollify_preserves_mass_after_clamp() {
    let d = DiscreteDomain::new(1.0, 8).unwrap();
    let rho = bump(d);
    let m = mollify(&rho, 0.5, 2.0, 3).unwrap();
    assert!((integrate(&m) - integrate(&rho)).abs() <= 1e-12 * integrate(&rho));
    assert!(m.max() < rho.max());
    assert!(mollify(&rho, 2.0, 1.0, 1).is_err());
}

#[test]
fn rejects_bad_input() {
    let d = DiscreteDomain::new(1.0, 4).unwrap();
    let rho = ScalarField::constant(d, 1.0);
    let u = VectorField::from_fn(d, |_| [1.0, 0.0, 0.0]);
    assert!(step_density(&rho, &u, 0.1, 0.01).is_err());
    assert!(step_density(&rho, &VectorField::zeros(d), 0.0, 0.01).is_err());
    assert!(step_density(&ScalarField::constant(d, 0.0), &VectorField::zeros(d), 0.1, 0.01).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mass_is_conserved_per_step(a in 0.1f64..3.0, eps in 0.01f64..0.5, dt in 1e-3f64..2e-2) {
        let d = DiscreteDomain::new(1.0, 6).unwrap();
        let u = swirl(d, a);
        let mut s = ContinuitySolve::new(eps, dt, bump(d)).unwrap();
        for _ in 0..5 {
            let before = integrate(s.last());
            let after = integrate(s.step(&u).unwrap());
            prop_assert!((after - before).abs() <= 1e-12 * before);
        }
    }

    #[test]
    fn positivity_is_kept(a in 0.1f64..2.0) {
        let d = DiscreteDomain::new(1.0, 6).unwrap();
        let s = run(bump(d), &swirl(d, a), 0.1, 5e-3, 10);
        prop_assert!(s.densities().iter().all(|r| r.min() > 0.0));
    }
}
