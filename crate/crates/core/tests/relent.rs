use anisoflow::energy::{budget_residual, EnergyReport};
use anisoflow::grid::{inner_vec, DiscreteDomain, ScalarField, VectorField};
use anisoflow::momentum::{initial_velocity_projection, simulate, FlowState, GalerkinState, GalerkinSystem, StepConfig, Trajectory};
use anisoflow::relent::*;
use anisoflow::thermo::PressureLaw;
use anisoflow::visc::ViscosityParams;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> ViscosityParams {
    ViscosityParams::new(1.0, 0.5, 0.0).unwrap()
}

fn law() -> PressureLaw {
    PressureLaw::new(1.4, 1.0).unwrap()
}

fn bump(d: DiscreteDomain) -> ScalarField {
    ScalarField::from_fn(d, |y| 1.0 + 0.5 * (-4.0 * (y[0] * y[0] + y[1] * y[1] + y[2] * y[2])).exp())
}

fn smooth_u(d: DiscreteDomain, a: f64) -> VectorField {
    VectorField::from_fn_no_slip(d, |y| [a * y[1], -a * y[0], a * (0.5 + y[2] * y[0])])
}

fn run(cells: usize, n: usize, dt: f64, t_end: f64, s: f64, f: Option<VectorField>) -> (GalerkinSystem, Trajectory) {
    let d = DiscreteDomain::new(1.0, cells).unwrap();
    let sys = GalerkinSystem::build(&d, &params(), n).unwrap();
    let rho = bump(d);
    let mut init = FlowState::new(rho.clone(), GalerkinState { coeffs: vec![0.0; n], time: 0.0 }).unwrap();
    if s != 0.0 {
        let m0 = sys.basis().mode(0).scale(s).mul_scalar(&rho).unwrap();
        init.u = initial_velocity_projection(&m0, &rho, sys.basis()).unwrap();
    }
    let f = f.unwrap_or_else(|| VectorField::zeros(d));
    let steps = (t_end / dt).round() as usize;
    let (traj, _) = simulate(&init, &f, &sys, &law(), &StepConfig::new(0.1, dt), steps).unwrap();
    (sys, traj)
}

#[test]
fn rel_entropy_examples() {
    let d = DiscreteDomain::new(1.0, 6).unwrap();
    let l = law();
    let rho = bump(d);
    let u = smooth_u(d, 0.7);
    let own = TestPair::frozen(rho.clone(), u.clone(), &[0.0]).unwrap();
    assert_eq!(rel_entropy(&rho, &u, &own.sample(0), None, &l).unwrap(), 0.0);

    let far = TestPair::far_field(d, &l, &[0.0]).unwrap();
    let z = VectorField::zeros(d);
    let p = params();
    let row = anisoflow::energy::energy_terms_fields(&rho, &u, 0.0, &z, &p, &l, 0.1).unwrap();
    let e = rel_entropy(&rho, &u, &far.sample(0), None, &l).unwrap();
    assert!((e - row.energy()).abs() <= 1e-14 * row.energy());

    let quad = PressureLaw::new(2.0, 1.0).unwrap();
    let sys = GalerkinSystem::build(&d, &p, 1).unwrap();
    let phi = sys.basis().mode(0);
    for s in [0.1, 1.0, 3.0] {
        let shifted = u.lin_comb(1.0, phi, s).unwrap();
        let pair = TestPair::frozen(rho.clone(), u.clone(), &[0.0]).unwrap();
        let v = rel_entropy(&rho, &shifted, &pair.sample(0), None, &quad).unwrap();
        let expect = 0.5 * s * s * inner_vec(&phi.mul_scalar(&rho).unwrap(), phi).unwrap();
        assert!((v - expect).abs() <= 1e-12 * expect);
    }
}

#[test]
fn remainder_examples() {
    let d = DiscreteDomain::new(1.0, 6).unwrap();
    let l = law();
    let p = params();
    let rho = bump(d);
    let u = smooth_u(d, 0.7);
    let far = TestPair::far_field(d, &l, &[0.0]).unwrap();
    let z = VectorField::zeros(d);
    assert_eq!(remainder(&rho, &u, &far.sample(0), None, &p, &l, &z, 0.1).unwrap().total(), 0.0);

    let f = VectorField::from_fn(d, |y| [1.0, y[0], -y[2] * y[1]]);
    let work = inner_vec(&f.mul_scalar(&rho).unwrap(), &u).unwrap();
    let r = remainder(&rho, &u, &far.sample(0), None, &p, &l, &f, 0.1).unwrap().total();
    assert!((r - work).abs() <= 1e-13);

    // U = 0, smooth r frozen in time, ε = 0: only −∫ρu·∇P′(r) survives.
    let r_field = ScalarField::from_fn(d, |y| 1.2 + 0.3 * y[0] * y[1] + 0.2 * y[2]);
    let pair = TestPair::frozen(r_field.clone(), z.clone(), &[0.0]).unwrap();
    let got = remainder(&rho, &u, &pair.sample(0), None, &p, &l, &z, 0.0).unwrap().total();
    let h = d.spacing();
    let dpot = |idx: usize| l.dpot(r_field.values()[idx]);
    let mut expect = 0.0;
    for idx in 0..d.len() {
        let (i, j, k) = d.unindex(idx);
        if d.is_boundary(i, j, k) {
            continue;
        }
        let a = u.at(idx);
        let g: Vec<f64> = (0..3).map(|ax| (dpot(idx + d.stride(ax)) - dpot(idx - d.stride(ax))) / (2.0 * h)).collect();
        expect -= d.weight(idx) * rho.values()[idx] * (a[0] * g[0] + a[1] * g[1] + a[2] * g[2]);
    }
    assert!((got - expect).abs() <= 1e-12 * expect.abs().max(1.0), "{got} vs {expect}");
}

#[test]
fn far_field_reduction_matches_energy_budget() {
    let f = VectorField::from_fn(DiscreteDomain::new(1.0, 6).unwrap(), |y| [0.0, 0.5 * y[0], -1.0]);
    let (sys, traj) = run(6, 6, 4e-3, 0.04, 0.3, Some(f.clone()));
    let l = law();
    let pair = TestPair::far_field(*sys.domain(), &l, traj.times()).unwrap();
    let rep = rei_residual(&traj, &pair, &params(), &l, &f, DefectPolicy::Zero).unwrap();
    let energy = EnergyReport::from_trajectory(&traj, &f, &params(), &l).unwrap();
    for (k, r) in rep.residuals().iter().enumerate() {
        assert!((r - budget_residual(&energy, 0, k).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn frozen_pair_residual_converges_in_dt() {
    let l = law();
    let res: Vec<f64> = [4e-3, 2e-3, 1e-3]
        .iter()
        .map(|&dt| {
            let (_, traj) = run(6, 6, dt, 0.02, 0.3, None);
            let pair = TestPair::frozen(traj.rho(0).clone(), traj.u(0).clone(), traj.times()).unwrap();
            let z = VectorField::zeros(*traj.domain().unwrap());
            rei_residual(&traj, &pair, &params(), &l, &z, DefectPolicy::Zero).unwrap().max_positive_residual()
        })
        .collect();
    assert!(res.iter().all(|r| r.is_finite()));
    assert!(res[1] < res[0] && res[2] < res[1], "{res:?}");
}

#[test]
fn gronwall_against_itself_is_zero() {
    let (_, traj) = run(6, 6, 4e-3, 0.02, 0.3, None);
    let g = gronwall_audit(&traj, &traj, &params(), &law()).unwrap();
    assert!(g.report.rows().iter().all(|r| r.rel_entropy.abs() <= 1e-14));
    assert!(g.holds());
}

#[test]
fn gronwall_shrinks_with_dt() {
    let (_, reference) = run(8, 6, 5e-4, 0.02, 0.3, None);
    let finals: Vec<f64> = [4e-3, 2e-3]
        .iter()
        .map(|&dt| {
            let (_, coarse) = run(8, 6, dt, 0.02, 0.3, None);
            let g = gronwall_audit(&coarse, &reference, &params(), &law()).unwrap();
            assert!(g.holds());
            g.final_rel_entropy()
        })
        .collect();
    assert!(finals[1] < finals[0], "{finals:?}");
}

#[test]
fn gronwall_initial_perturbation_scaling() {
    let (_, reference) = run(6, 6, 1e-3, 0.02, 0.3, None);
    let mut e0 = Vec::new();
    for s in [1e-1, 1e-2, 1e-3] {
        let (_, coarse) = run(6, 6, 2e-3, 0.02, 0.3 + s, None);
        let g = gronwall_audit(&coarse, &reference, &params(), &law()).unwrap();
        assert!(g.holds(), "s = {s}: {:?}", g.violations());
        assert!(g.chain_holds());
        e0.push(g.report.rows()[0].rel_entropy);
    }
    for w in e0.windows(2) {
        let q = w[0] / w[1];
        assert!((q - 100.0).abs() <= 1.0, "{e0:?}");
    }
}

#[test]
fn weight_of_zero_field_is_zero() {
    let d = DiscreteDomain::new(1.0, 4).unwrap();
    assert_eq!(gronwall_weight(&VectorField::zeros(d)), 0.0);
    assert!(gronwall_weight(&smooth_u(d, 1.0)) > 0.0);
}

fn random_field(d: DiscreteDomain, rng: &mut ChaCha8Rng, no_slip: bool) -> VectorField {
    let mut v = VectorField::zeros(d);
    for c in 0..3 {
        for x in v.comp_mut(c) {
            *x = rng.gen_range(-1.0..1.0);
        }
    }
    if no_slip {
        v.enforce_no_slip();
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rearrangement_identity(seed in 0u64..1_000_000) {
        let d = DiscreteDomain::new(1.0, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = ScalarField::new(d, (0..d.len()).map(|_| rng.gen_range(0.1..3.0)).collect()).unwrap();
        let u = random_field(d, &mut rng, false);
        let uu = random_field(d, &mut rng, true);
        let du = random_field(d, &mut rng, false);
        prop_assert!(rearrangement_residual(&rho, &u, &uu, &du).unwrap() <= 1e-10);
    }

    #[test]
    fn rel_entropy_is_nonnegative(seed in 0u64..1_000_000, g in 1.1f64..3.0) {
        let d = DiscreteDomain::new(1.0, 4).unwrap();
        let l = PressureLaw::new(g, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = ScalarField::new(d, (0..d.len()).map(|_| rng.gen_range(0.05..3.0)).collect()).unwrap();
        let r = ScalarField::new(d, (0..d.len()).map(|_| rng.gen_range(0.05..3.0)).collect()).unwrap();
        let u = random_field(d, &mut rng, true);
        let uu = random_field(d, &mut rng, true);
        let pair = TestPair::frozen(r, uu, &[0.0]).unwrap();
        prop_assert!(rel_entropy(&rho, &u, &pair.sample(0), None, &l).unwrap() >= 0.0);
    }
}
