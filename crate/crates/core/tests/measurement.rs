use std::f64::consts::PI;

use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stlct_phase::measurement::{
    add_noise, add_noise_with_inf_norm, matrix_inf_norm, noise_matrix, read_dataset, sample_exact, write_dataset,
    LatticeSpec,
};
use stlct_phase::signal::{random_signal, GaussianSisSignal};
use stlct_phase::stlct::{stlct_quadrature_oracle, LctParams, OracleSpec};
use stlct_phase::Error;

fn sigma0() -> f64 {
    1.0 / (2.0 * PI).sqrt()
}

fn lct0() -> LctParams {
    LctParams::new(2.0, 3.0, 1.0, 2.0).unwrap()
}

#[test]
fn lattice_cardinality() {
    let reduced = LatticeSpec::new(20, 400, 1.0 / 16.0, 1.0).unwrap();
    assert_eq!((reduced.rows(), reduced.cols()), (41, 801));
    let full = LatticeSpec::new(90, 2000, 1.0 / 16.0, 1.0).unwrap();
    assert_eq!((full.rows(), full.cols()), (181, 4001));
    assert_eq!(full.x(-90), -45.0);
    assert_eq!(full.t(2000), 125.0);
    assert!(LatticeSpec::new(1, 1, 0.0, 1.0).is_err());
    assert!(LatticeSpec::new(1, 1, 0.1, -1.0).is_err());
}

#[test]
fn sampling_basic_properties() {
    let lat = LatticeSpec::new(6, 40, 0.125, 1.0).unwrap();
    let empty = GaussianSisSignal::zero(1.0, sigma0()).unwrap();
    let z = sample_exact(&empty, &lct0(), &lat).unwrap();
    assert!(z.values.iter().all(|&v| v == 0.0));

    let f = random_signal(3, 2.0, 12, 1.0, sigma0()).unwrap();
    let m = sample_exact(&f, &lct0(), &lat).unwrap();
    assert_eq!(m.values.dim(), (13, 81));
    assert!(m.values.iter().all(|&v| v >= 0.0));
    let scale = m.values.iter().fold(0.0_f64, |a, &v| a.max(v));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let (n, k) = (rng.gen_range(-6..=6), rng.gen_range(-40..=40));
        let o = stlct_quadrature_oracle(&f, &lct0(), lat.x(n), lat.t(k), &OracleSpec::default())
            .unwrap()
            .norm_sqr();
        let y = m.get(n, k);
        assert!((y - o).abs() <= 1e-8 * o.max(1e-10 * scale), "({n},{k}): {y} vs {o}");
    }
    let other = LatticeSpec::new(6, 40, 0.125, 0.5).unwrap();
    assert!(sample_exact(&f, &lct0(), &other).is_err());
}

#[test]
fn sampling_is_thread_count_invariant() {
    let lat = LatticeSpec::new(10, 120, 0.0625, 1.0).unwrap();
    let f = random_signal(4, 3.0, 2, 1.0, sigma0()).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| sample_exact(&f, &lct0(), &lat).unwrap());
    let b = four.install(|| sample_exact(&f, &lct0(), &lat).unwrap());
    assert_eq!(a.values, b.values);
}

#[test]
fn noise_model() {
    let lat = LatticeSpec::new(4, 20, 0.125, 1.0).unwrap();
    let f = random_signal(2, 1.0, 3, 1.0, sigma0()).unwrap();
    let m = sample_exact(&f, &lct0(), &lat).unwrap();
    assert_eq!(add_noise(&m, 0.0, 9).unwrap().values, m.values);
    assert_eq!(noise_matrix(5, 7, 0.1, 42), noise_matrix(5, 7, 0.1, 42));
    assert_ne!(noise_matrix(5, 7, 0.1, 42), noise_matrix(5, 7, 0.1, 43));
    assert!(matches!(add_noise(&m, -1.0, 1), Err(Error::Validation(_))));

    let noisy = add_noise_with_inf_norm(&m, 0.25, 5).unwrap();
    assert!((noisy.noise_inf_norm - 0.25).abs() < 1e-15);
    assert!((matrix_inf_norm(&(&noisy.values - &m.values)) - 0.25).abs() < 1e-12);
}

#[test]
fn noise_variance_at_full_scale() {
    let delta = 0.001;
    let eta = noise_matrix(181, 4001, delta, 7);
    let n = eta.len() as f64;
    let mean = eta.sum() / n;
    let var = eta.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((var / (delta * delta) - 1.0).abs() < 0.1, "variance ratio {}", var / (delta * delta));
}

#[test]
fn inf_norm_cases() {
    assert_eq!(matrix_inf_norm(&Array2::zeros((3, 4))), 0.0);
    assert_eq!(matrix_inf_norm(&array![[3.5]]), 3.5);
    assert_eq!(matrix_inf_norm(&array![[1.0, -2.0], [0.5, 0.5]]), 3.0);
}

#[test]
fn dataset_roundtrip_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let lat = LatticeSpec::new(5, 30, 0.125, 1.0).unwrap();
    let f = random_signal(2, 2.0, 4, 1.0, sigma0()).unwrap();
    let m = add_noise(&sample_exact(&f, &lct0(), &lat).unwrap(), 0.01, 3).unwrap();
    for name in ["d.bin", "d.csv"] {
        let path = dir.path().join(name);
        write_dataset(&path, &m, Some("signal.json".into())).unwrap();
        let (back, header) = read_dataset(&path).unwrap();
        assert_eq!(back.values, m.values, "{name}");
        assert_eq!(back.lattice, m.lattice);
        assert_eq!(back.lct, m.lct);
        assert_eq!(back.seed, Some(3));
        assert_eq!(header.signal_ref.as_deref(), Some("signal.json"));
        assert_eq!(back.noise_inf_norm, m.noise_inf_norm);
    }
}

#[test]
fn malformed_datasets_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let lat = LatticeSpec::new(2, 3, 0.5, 1.0).unwrap();
    let f = random_signal(1, 1.0, 4, 1.0, sigma0()).unwrap();
    let m = sample_exact(&f, &lct0(), &lat).unwrap();
    let bin = dir.path().join("d.bin");
    write_dataset(&bin, &m, None).unwrap();
    let mut bytes = std::fs::read(&bin).unwrap();
    bytes.truncate(bytes.len() - 4);
    std::fs::write(&bin, &bytes).unwrap();
    assert!(matches!(read_dataset(&bin), Err(Error::Format(_))));

    let csv = dir.path().join("d.csv");
    write_dataset(&csv, &m, None).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    let short: Vec<&str> = text.lines().take(5).collect();
    std::fs::write(&csv, short.join("\n")).unwrap();
    assert!(matches!(read_dataset(&csv), Err(Error::Format(_))));

    std::fs::write(&csv, "not a header\n").unwrap();
    assert!(read_dataset(&csv).is_err());
}
