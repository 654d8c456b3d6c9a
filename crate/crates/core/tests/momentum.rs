use anisoflow::energy::energy_terms;
use anisoflow::grid::{inner_vec, DiscreteDomain, ScalarField, VectorField};
use anisoflow::momentum::*;
use anisoflow::thermo::PressureLaw;
use anisoflow::visc::ViscosityParams;
use nalgebra::{Cholesky, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system(cells: usize, n: usize) -> GalerkinSystem {
    let d = DiscreteDomain::new(1.0, cells).unwrap();
    GalerkinSystem::build(&d, &ViscosityParams::new(1.0, 0.5, 0.0).unwrap(), n).unwrap()
}

fn law() -> PressureLaw {
    PressureLaw::new(1.4, 1.0).unwrap()
}

fn random_density(d: DiscreteDomain, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScalarField::new(d, (0..d.len()).map(|_| rng.gen_range(0.5..2.0)).collect()).unwrap()
}

#[test]
fn mass_matrix_examples() {
    let sys = system(6, 8);
    let d = *sys.domain();
    let id = mass_matrix(&ScalarField::constant(d, 1.0), sys.basis()).unwrap();
    let c = mass_matrix(&ScalarField::constant(d, 2.5), sys.basis()).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            let e = if i == j { 1.0 } else { 0.0 };
            assert!((id[(i, j)] - e).abs() <= 1e-10);
            assert!((c[(i, j)] - 2.5 * e).abs() <= 1e-10);
        }
    }
    assert!(mass_matrix(&ScalarField::constant(d, 0.0), sys.basis()).is_err());
}

#[test]
fn mass_matrix_spectrum_lies_in_density_range() {
    let sys = system(6, 8);
    for seed in 0..5 {
        let rho = random_density(*sys.domain(), seed);
        let m = mass_matrix(&rho, sys.basis()).unwrap();
        assert_eq!(m, m.transpose());
        let ev = SymmetricEigen::new(m.clone()).eigenvalues;
        assert!(ev.min() >= rho.min() * (1.0 - 1e-8) && ev.max() <= rho.max() * (1.0 + 1e-8));
        assert!(Cholesky::new(m).is_some());
    }
}

#[test]
fn rhs_examples() {
    let sys = system(6, 6);
    let d = *sys.domain();
    let l = law();
    let zero = VectorField::zeros(d);
    let rho = ScalarField::constant(d, 1.3);
    let r = rhs_functional(&rho, &zero, &zero, &l, 0.1, &sys).unwrap();
    assert!(r.iter().all(|v| v.abs() <= 1e-10), "{r:?}");

    let e1 = VectorField::from_fn(d, |_| [1.0, 0.0, 0.0]);
    let r = rhs_functional(&ScalarField::constant(d, 1.0), &zero, &e1, &l, 0.1, &sys).unwrap();
    for (i, v) in r.iter().enumerate() {
        assert!((v - inner_vec(sys.basis().mode(i), &e1).unwrap()).abs() <= 1e-12);
    }

    for j in 0..6 {
        let t = rhs_terms(&rho, sys.basis().mode(j), &zero, &l, 0.1, &sys).unwrap();
        for (i, v) in t.viscous.iter().enumerate() {
            let expect = if i == j { -sys.basis().eigenvalue(j) } else { 0.0 };
            assert!((v - expect).abs() <= 1e-6 * sys.basis().eigenvalue(j), "({i},{j}) {v}");
        }
    }
}

#[test]
fn rest_state_is_fixed() {
    let sys = system(6, 6);
    let l = law();
    let rest = FlowState::rest(*sys.domain(), &l, 6);
    let zero = VectorField::zeros(*sys.domain());
    let (traj, _) = simulate(&rest, &zero, &sys, &l, &StepConfig::new(0.1, 1e-2), 20).unwrap();
    for k in 0..traj.len() {
        assert!(traj.rho(k).values().iter().all(|v| (v - 1.0).abs() <= 1e-10));
        assert!(traj.u(k).comps().iter().flatten().all(|v| v.abs() <= 1e-10));
    }
}

fn small_initial(sys: &GalerkinSystem) -> FlowState {
    let d = *sys.domain();
    let rho = ScalarField::from_fn(d, |y| 1.0 + 0.2 * (-3.0 * (y[0] * y[0] + y[1] * y[1] + y[2] * y[2])).exp());
    let coeffs: Vec<f64> = (0..sys.n()).map(|i| 0.3 / (1.0 + i as f64)).collect();
    FlowState::new(rho, GalerkinState { coeffs, time: 0.0 }).unwrap()
}

#[test]
fn energy_does_not_grow_without_forcing() {
    let sys = system(6, 8);
    let l = law();
    let zero = VectorField::zeros(*sys.domain());
    let dt = 2e-3;
    let cfg = StepConfig::new(0.1, dt);
    let mut state = small_initial(&sys);
    let e0 = energy_terms(&state, &zero, &sys, &l, cfg.eps).unwrap().energy();
    let mut prev = e0;
    for _ in 0..100 {
        state = advance(&state, &zero, &sys, &l, &cfg).unwrap().0;
        let e = energy_terms(&state, &zero, &sys, &l, cfg.eps).unwrap().energy();
        assert!(e <= prev + 10.0 * dt * dt * e0, "{e} > {prev}");
        prev = e;
    }
    assert!(prev < e0);
}

#[test]
fn picard_iterations_do_not_grow_when_dt_halves() {
    let sys = system(6, 8);
    let l = law();
    let zero = VectorField::zeros(*sys.domain());
    let state = small_initial(&sys);
    let iters = |dt: f64| advance(&state, &zero, &sys, &l, &StepConfig::new(0.1, dt)).unwrap().1.picard_iterations;
    let a = iters(4e-3);
    let b = iters(2e-3);
    let c = iters(1e-3);
    assert!(b <= a && c <= b, "{a} {b} {c}");
}

#[test]
fn picard_failure_is_reported() {
    let sys = system(4, 4);
    let l = law();
    let zero = VectorField::zeros(*sys.domain());
    let state = small_initial(&sys);
    let mut cfg = StepConfig::new(0.1, 1e-2);
    cfg.max_iter = 1;
    cfg.tol = 1e-300;
    assert!(matches!(advance(&state, &zero, &sys, &l, &cfg), Err(anisoflow::Error::Iteration { .. })));
    cfg.theta = 1.5;
    assert!(advance(&state, &zero, &sys, &l, &cfg).is_err());
}

#[test]
fn projection_examples() {
    let sys = system(6, 6);
    let d = *sys.domain();
    let rho = random_density(d, 9);
    let m0 = sys.basis().mode(0).mul_scalar(&rho).unwrap();
    let c = initial_velocity_projection(&m0, &rho, sys.basis()).unwrap();
    for (i, v) in c.coeffs.iter().enumerate() {
        let e = if i == 0 { 1.0 } else { 0.0 };
        assert!((v - e).abs() <= 1e-8);
    }
    let z = initial_velocity_projection(&VectorField::zeros(d), &rho, sys.basis()).unwrap();
    assert!(z.coeffs.iter().all(|v| *v == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn projection_reproduces_initial_momentum(seed in 0u64..1000) {
        let sys = system(4, 5);
        let d = *sys.domain();
        let rho = random_density(d, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let a: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let m0 = VectorField::from_fn_no_slip(d, |y| [a[0] * y[1], a[1] * y[0] * y[2], a[2]]);
        let c = initial_velocity_projection(&m0, &rho, sys.basis()).unwrap();
        let m = mass_matrix(&rho, sys.basis()).unwrap();
        let j = &m * nalgebra::DVector::from_vec(c.coeffs);
        for i in 0..sys.n() {
            let expect = inner_vec(&m0, sys.basis().mode(i)).unwrap();
            prop_assert!((j[i] - expect).abs() <= 1e-10);
        }
    }

    #[test]
    fn mass_matrix_is_positive_definite(seed in 0u64..1000) {
        let sys = system(4, 5);
        let rho = random_density(*sys.domain(), seed);
        prop_assert!(Cholesky::new(mass_matrix(&rho, sys.basis()).unwrap()).is_some());
    }
}
