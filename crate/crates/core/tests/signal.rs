use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use stlct_phase::signal::{random_signal, GaussianSisSignal, IntervalSpec};
use stlct_phase::Error;

fn sigma0() -> f64 {
    1.0 / (2.0 * PI).sqrt()
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn eval_small_cases() {
    let s = sigma0();
    let one = GaussianSisSignal::from_pairs([(0, c(1.0, 0.0))], 1.0, s).unwrap();
    assert_eq!(one.eval(0.0), c(1.0, 0.0));
    let empty = GaussianSisSignal::zero(1.0, s).unwrap();
    assert_eq!(empty.eval(0.3), c(0.0, 0.0));
    let two = GaussianSisSignal::from_pairs([(0, c(1.0, 0.0)), (1, c(0.0, 1.0))], 1.0, s).unwrap();
    let expect = c(1.0, 1.0) * (-PI / 4.0).exp();
    assert!((two.eval(0.5) - expect).norm() < 1e-15);
}

#[test]
fn tensor_product_cases() {
    let s = sigma0();
    let one = GaussianSisSignal::from_pairs([(0, c(1.0, 0.0))], 1.0, s).unwrap();
    let v = one.tensor_product(1.0, 0.5);
    assert!((v - c((-PI / 2.0).exp(), 0.0)).norm() < 1e-15);
    let f = random_signal(3, 2.0, 8, 1.0, s).unwrap();
    for t in [-1.0, 0.0, 0.4, 2.2] {
        let v = f.tensor_product(0.0, t);
        assert!(v.im == 0.0 && v.re >= 0.0);
        assert!((v.re - f.eval(t).norm_sqr()).abs() < 1e-12);
    }
}

#[test]
fn sup_norm_cases() {
    let s = sigma0();
    let one = GaussianSisSignal::from_pairs([(0, c(1.0, 0.0))], 1.0, s).unwrap();
    let n = one.sup_norm_on_interval(IntervalSpec::new(2.0).unwrap(), 64);
    assert!((n.grid_max - 1.0).abs() < 1e-9);
    assert!(n.certified >= n.grid_max);
    let empty = GaussianSisSignal::zero(1.0, s).unwrap();
    assert_eq!(empty.sup_norm_on_interval(IntervalSpec { s: 3.0 }, 64).certified, 0.0);

    let f = random_signal(4, 3.0, 5, 1.0, s).unwrap();
    let i = IntervalSpec { s: 4.0 };
    let a = f.sup_norm_on_interval(i, 64);
    let b = f.sup_norm_on_interval(i, 128);
    assert!((a.grid_max - b.grid_max).abs() < 1e-4);
    // the certified value dominates a much denser grid
    let dense = (0..=80_000)
        .map(|k| f.eval(-4.0 + 1e-4 * k as f64).norm())
        .fold(0.0, f64::max);
    assert!(a.certified >= dense);
    assert!(IntervalSpec::new(0.0).is_err());
}

#[test]
fn random_signal_shape() {
    let s = sigma0();
    let f = random_signal(45, 6.0, 11, 1.0, s).unwrap();
    assert_eq!(f.coeffs().len(), 91);
    assert!(f.coeffs().values().all(|z| z.re.abs() <= 6.0 && z.im.abs() <= 6.0));
    assert_eq!(f.support(), Some((-45, 45)));
    assert_eq!(random_signal(45, 6.0, 11, 1.0, s).unwrap(), f);
    assert_ne!(random_signal(45, 6.0, 12, 1.0, s).unwrap(), f);
    assert_eq!(random_signal(0, 6.0, 11, 1.0, s).unwrap().coeffs().len(), 1);
    assert!(random_signal(2, 0.0, 1, 1.0, s).is_err());
}

#[test]
fn json_and_files() {
    let f = random_signal(3, 1.0, 9, 0.5, 0.3).unwrap();
    let back = GaussianSisSignal::from_json(&f.to_json().unwrap()).unwrap();
    assert_eq!(back, f);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.json");
    f.save(&path).unwrap();
    assert_eq!(GaussianSisSignal::load(&path).unwrap(), f);

    let dup = r#"{"beta":1.0,"sigma":0.4,"coeffs":[[0,1.0,0.0],[0,2.0,0.0]]}"#;
    assert!(matches!(GaussianSisSignal::from_json(dup), Err(Error::Format(_))));
    let bad = r#"{"beta":-1.0,"sigma":0.4,"coeffs":[]}"#;
    assert!(matches!(GaussianSisSignal::from_json(bad), Err(Error::Validation(_))));
}

#[test]
fn add_requires_same_space() {
    let f = random_signal(1, 1.0, 1, 1.0, 0.4).unwrap();
    let g = random_signal(1, 1.0, 2, 0.5, 0.4).unwrap();
    assert!(f.add(&g).is_err());
    let h = f.add(&f).unwrap();
    assert!((h.eval(0.3) - f.eval(0.3) * 2.0).norm() < 1e-14);
}

proptest! {
    #[test]
    fn tensor_conjugation_symmetry(seed in 0u64..500, xi in -2.0..2.0f64, t in -4.0..4.0f64) {
        let f = random_signal(3, 2.0, seed, 1.0, sigma0()).unwrap();
        let a = f.tensor_product(xi, t);
        let b = f.tensor_product(-xi, t - xi).conj();
        prop_assert!((a - b).norm() <= 1e-13 * a.norm().max(1.0));
    }

    #[test]
    fn eval_is_linear_in_coefficients(seed in 0u64..500, t in -5.0..5.0f64, th in 0.0..std::f64::consts::TAU) {
        let f = random_signal(4, 1.0, seed, 1.0, sigma0()).unwrap();
        let z = Complex64::from_polar(1.3, th);
        prop_assert!((f.scaled(z).eval(t) - z * f.eval(t)).norm() <= 1e-13);
    }

    #[test]
    fn json_roundtrip_is_exact(seed in 0u64..1000, n0 in 0u32..6, beta in 0.1..3.0f64) {
        let f = random_signal(n0, 5.0, seed, beta, 0.37).unwrap();
        prop_assert_eq!(GaussianSisSignal::from_json(&f.to_json().unwrap()).unwrap(), f);
    }

    #[test]
    fn certified_norm_dominates_grid(seed in 0u64..200, s in 0.5..4.0f64) {
        let f = random_signal(3, 2.0, seed, 1.0, sigma0()).unwrap();
        let n = f.sup_norm_on_interval(IntervalSpec { s }, 16);
        let fine = (0..=4000).map(|k| f.eval(-s + 2.0 * s * k as f64 / 4000.0).norm()).fold(0.0, f64::max);
        prop_assert!(n.certified >= fine);
    }
}
