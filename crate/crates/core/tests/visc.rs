use anisoflow::visc::*;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

/// f(B) written out entry by entry, independent of the library.
fn f_direct(mu: f64, delta: f64, lambda: f64, b: &[f64; 9]) -> f64 {
    let mut s = 0.0;
    for j in 0..3 {
        s += mu * (b[3 * j] * b[3 * j] + b[3 * j + 1] * b[3 * j + 1]) + delta * b[3 * j + 2] * b[3 * j + 2];
    }
    let tr = b[0] + b[4] + b[8];
    s + (mu + lambda) * tr * tr
}

/// Eigenvalues of ½H_f, H from central second differences (exact for quadratics).
fn numeric_half_hessian(mu: f64, delta: f64, lambda: f64) -> Vec<f64> {
    let mut h = DMatrix::zeros(9, 9);
    for a in 0..9 {
        for c in 0..9 {
            let at = |sa: f64, sc: f64| {
                let mut b = [0.0; 9];
                b[a] += sa;
                b[c] += sc;
                f_direct(mu, delta, lambda, &b)
            };
            h[(a, c)] = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / 4.0 / 2.0;
        }
    }
    let mut e: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

#[test]
fn admissibility_examples() {
    assert!(admissible(1.0, 1.0, 0.0).unwrap());
    assert!(!admissible(1.0, 2.0, 0.0).unwrap());
    assert!(!admissible(2.0, 1.0, -3.0).unwrap());
    assert_eq!(lambda_threshold(2.0, 1.0), -2.5);
    // f takes negative values there
    assert!(numeric_half_hessian(2.0, 1.0, -3.0)[0] < 0.0);
}

#[test]
fn ellipticity_examples_against_numeric_hessian() {
    for (l, want) in [(0.0, 1.0), (-1.3, 0.1)] {
        let p = ViscosityParams::new(1.0, 1.0, l).unwrap();
        let oracle = numeric_half_hessian(1.0, 1.0, l)[0];
        assert!((ellipticity_constant(&p) - want).abs() < 1e-12);
        assert!((oracle - want).abs() < 1e-12);
    }
    assert!(ViscosityParams::new(1.0, 1.0, -4.0 / 3.0).is_err());
    assert!(beta_unchecked(1.0, 1.0, -4.0 / 3.0).abs() < 1e-12);
}

#[test]
fn quadratic_form_examples() {
    let p = ViscosityParams::new(1.0, 1.0, 0.0).unwrap();
    let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    assert!((quadratic_form(&p, &id) - 12.0).abs() < 1e-14);
    assert_eq!(quadratic_form(&p, &id), f_direct(1.0, 1.0, 0.0, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
    assert_eq!(quadratic_form(&p, &[[0.0; 3]; 3]), 0.0);
    let e33 = [[0.0; 3], [0.0; 3], [0.0, 0.0, 1.0]];
    assert!((quadratic_form(&p, &e33) - 2.0).abs() < 1e-14);
}

#[test]
fn spectrum_examples() {
    let p = ViscosityParams::new(1.0, 1.0, 0.0).unwrap();
    let s = hessian_spectrum(&p);
    let oracle = numeric_half_hessian(1.0, 1.0, 0.0);
    for (a, b) in s.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((s[8] - 4.0).abs() < 1e-12 && s[..8].iter().all(|&x| (x - 1.0).abs() < 1e-12));
    let q = ViscosityParams::new(1.0, 1.0, -1.3).unwrap();
    assert!((hessian_spectrum(&q)[0] - 0.1).abs() < 1e-12);
    for (mu, l) in [(0.7, -0.7), (2.0, 0.0), (1.5, 3.0)] {
        let iso = ViscosityParams::new(mu, mu, l).unwrap();
        assert_eq!(hessian_spectrum(&iso)[0], mu);
    }
}

fn admissible_triple() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.05f64..5.0, 0.01f64..1.0, 0.0f64..1.0, 1e-6f64..3.0).prop_map(|(mu, frac, t, span)| {
        let delta = mu * frac.max(0.01);
        let lo = lambda_threshold(mu, delta);
        let _ = t;
        (mu, delta, lo + span)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn form_dominates_beta(t in admissible_triple(), raw in proptest::array::uniform9(-1.0f64..1.0)) {
        let (mu, delta, lambda) = t;
        let p = ViscosityParams::new(mu, delta, lambda).unwrap();
        let n = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(n > 1e-3);
        let b = [0, 1, 2].map(|j| [0, 1, 2].map(|l| raw[3 * j + l] / n));
        prop_assert!(quadratic_form(&p, &b) >= ellipticity_constant(&p) - 1e-9);
    }

    #[test]
    fn spectrum_minimum_is_beta(t in admissible_triple()) {
        let (mu, delta, lambda) = t;
        let p = ViscosityParams::new(mu, delta, lambda).unwrap();
        let b = ellipticity_constant(&p);
        prop_assert!((hessian_spectrum(&p)[0] - b).abs() <= 1e-12 * b.max(1e-300));
        let oracle = numeric_half_hessian(mu, delta, lambda);
        prop_assert!((oracle[0] - b).abs() <= 1e-9);
    }

    #[test]
    fn positivity_iff_admissible(mu in 0.05f64..5.0, frac in 0.05f64..1.0, off in -2.0f64..2.0) {
        let delta = mu * frac;
        let lambda = lambda_threshold(mu, delta) + off;
        let ok = admissible(mu, delta, lambda).unwrap();
        let min = numeric_half_hessian(mu, delta, lambda)[0];
        if off.abs() > 1e-6 {
            prop_assert_eq!(ok, min > 0.0);
        }
        let v0 = mu * delta / (mu + 2.0 * delta) + mu + lambda;
        prop_assert_eq!(v_function(mu, delta, lambda, 0.0) > 0.0, ok);
        prop_assert!((v_function(mu, delta, lambda, 0.0) - v0).abs() < 1e-12 * (1.0 + v0.abs()));
    }
}
