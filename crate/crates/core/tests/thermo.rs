use anisoflow::grid::{DiscreteDomain, ScalarField};
use anisoflow::thermo::*;
use proptest::prelude::*;

fn law(g: f64, ri: f64) -> PressureLaw {
    PressureLaw::new(g, ri).unwrap()
}

#[test]
fn pressure_and_potential_examples() {
    assert_eq!(law(2.0, 1.0).pressure(3.0).unwrap(), 9.0);
    assert_eq!(law(1.4, 1.0).pressure(0.0).unwrap(), 0.0);
    let p = law(1.4, 1.0).pressure(2.0).unwrap();
    assert!((p - (1.4 * 2f64.ln()).exp()).abs() < 1e-14);
    assert!((p - 2.639015821545789).abs() < 1e-12);
    assert_eq!(law(2.0, 1.0).potential(3.0).unwrap(), 9.0);
    assert_eq!(law(1.4, 1.0).potential(0.0).unwrap(), 0.0);
    assert!((law(1.4, 1.0).potential(2.0).unwrap() - 2f64.powf(1.4) / 0.4).abs() < 1e-12);
}

#[test]
fn rel_energy_examples() {
    let l = law(2.0, 1.0);
    assert!((l.rel_energy(3.0, 1.0).unwrap() - 4.0).abs() < 1e-14);
    assert_eq!(law(1.7, 2.0).rel_energy(1.3, 1.3).unwrap(), 0.0);
    assert!((l.rel_energy(0.0, 1.0).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn split_examples() {
    let d = DiscreteDomain::new(1.0, 4).unwrap();
    let l = law(1.4, 1.0);
    for (v, ess) in [(1.5, 1.0), (2.0, 0.0), (0.0, 0.0), (0.5, 0.0)] {
        let (e, r) = ess_res_split(&l, &ScalarField::constant(d, v));
        assert_eq!(e.values()[0], ess);
        assert_eq!(e.values()[0] + r.values()[0], 1.0);
    }
}

#[test]
fn sandwich_examples() {
    let s = sandwich_constants(&law(2.0, 1.0), 10.0).unwrap();
    assert!((s.c1 - 1.0).abs() < 1e-9 && (s.big_c1 - 1.0).abs() < 1e-9);
    for g in [1.2, 1.4, 2.0, 3.0] {
        let l = law(g, 1.3);
        let near = 1.3 * (1.0 + 1e-5);
        let ratio = l.rel_inf(near) / (near - 1.3f64).powi(2);
        assert!((ratio - g * 1.3f64.powf(g - 2.0) / 2.0).abs() < 1e-4 * ratio);
        assert!((l.quadratic_limit() - g * 1.3f64.powf(g - 2.0) / 2.0).abs() < 1e-12);
        let far = 1e40;
        let ratio = l.rel_inf(far) / (far - 1.3f64).powf(g);
        assert!((ratio - 1.0 / (g - 1.0)).abs() < 1e-2 / (g - 1.0));
        assert!((l.power_limit() - 1.0 / (g - 1.0)).abs() < 1e-12);
    }
}

#[test]
fn ws_sandwich_quadratic_law() {
    // ρ²/(ρ−1)² peaks at ρ = 2 with value 4; the other two regions give 1 and 4.
    let c = ws_sandwich(&law(2.0, 1.0), 1.0, 1.0, 10.0).unwrap();
    assert!((c - 4.0).abs() < 1e-9);
    assert!(ws_sandwich(&law(2.0, 1.0), 1.0, 1.0, 1.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rel_energy_is_convex(g in 1.05f64..4.0, r in 0.1f64..5.0, lo in 0.01f64..3.0) {
        let l = law(g, 1.0);
        let h = 1e-3 * r;
        for k in 0..50 {
            let x = lo * r + k as f64 * 0.1 * r;
            let second = l.rel(x + h, r) - 2.0 * l.rel(x, r) + l.rel(x - h, r);
            prop_assert!(second >= -1e-8 * (1.0 + l.rel(x, r)));
        }
    }

    #[test]
    fn pressure_from_potential(g in 1.05f64..4.0, rho in 0.05f64..10.0) {
        let l = law(g, 1.0);
        let h = 1e-5 * rho;
        let dp = (l.pot(rho + h) - l.pot(rho - h)) / (2.0 * h);
        let lhs = dp * rho - l.pot(rho);
        prop_assert!((lhs - l.p(rho)).abs() <= 1e-8 * l.p(rho).max(1e-300));
    }

    #[test]
    fn pressure_taylor_remainder(g in 1.05f64..4.0, rho in 0.0f64..10.0, r in 0.05f64..10.0) {
        let l = law(g, 1.0);
        let lhs = l.p(rho) - l.p(r) - l.dp(r) * (rho - r);
        let rhs = (g - 1.0) * l.rel(rho, r);
        let scale = l.p(rho) + l.p(r) + (l.dp(r) * (rho - r)).abs();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
    }
}
