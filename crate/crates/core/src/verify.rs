//! Property suites run by `stlct verify`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bounds::{local_error_bound, mixed_norm_discrepancy, mixed_norm_n_range, stability_constants, Margins};
use crate::error::Result;
use crate::measurement::{noise_matrix, sample_exact, LatticeSpec, MeasurementSet};
use crate::quadrature::{adaptive_real, AdaptiveSpec};
use crate::reconstruction::{aligned_error, evaluation_grid, phase_aligned_error, Reconstructor};
use crate::signal::{random_signal, GaussianSisSignal, IntervalSpec};
use crate::special::{c_sigma_beta, estimate_decay_constants, theta3, DualGenerator};
use crate::stlct::{magnitude_closed_form, stlct_closed_form, stlct_quadrature_oracle, LctParams, OracleSpec};

/// Width `1/√(2π)` used throughout the default suites.
pub fn default_sigma() -> f64 {
    1.0 / (2.0 * PI).sqrt()
}

/// The three matrices exercised by the oracle checks.
pub fn test_matrices() -> [LctParams; 3] {
    [
        LctParams { a: 2.0, b: 3.0, c: 1.0, d: 2.0 },
        LctParams::gabor(),
        LctParams { a: 1.0, b: 2.0, c: 0.0, d: 1.0 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub pass: bool,
    pub checks: usize,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl SuiteResult {
    fn new(name: &str, checks: usize, worst: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass: worst <= tolerance,
            checks,
            worst,
            tolerance,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub pass: bool,
    pub first_failure: Option<String>,
    pub suites: Vec<SuiteResult>,
}

pub const SUITES: [&str; 9] = [
    "theta",
    "oracle",
    "biorthogonality",
    "unit-phase",
    "equivariance",
    "d-independence",
    "local-bound",
    "stability",
    "dataset",
];

/// Optional dataset (with its ground truth) for the `dataset` suite.
pub struct DatasetCheck<'a> {
    pub m: &'a MeasurementSet,
    pub f: &'a GaussianSisSignal,
}

pub fn run(suite: Option<&str>, seed: u64, dataset: Option<DatasetCheck<'_>>) -> Result<VerifySummary> {
    let want = |name: &str| suite.is_none_or(|s| s == name);
    let mut suites = Vec::new();
    if want("theta") {
        suites.push(theta_suite(seed)?);
    }
    if want("oracle") {
        suites.push(oracle_suite(seed)?);
    }
    if want("biorthogonality") {
        suites.push(biorthogonality_suite()?);
    }
    if want("unit-phase") {
        suites.push(unit_phase_suite(seed, 100_000));
    }
    if want("equivariance") {
        suites.push(equivariance_suite()?);
    }
    if want("d-independence") {
        suites.push(d_independence_suite(seed)?);
    }
    if want("local-bound") {
        suites.push(local_bound_suite(seed, 50)?);
    }
    if want("stability") {
        suites.push(stability_suite(seed, 5)?);
    }
    if let Some(ds) = dataset {
        if want("dataset") {
            suites.push(dataset_suite(ds.m, ds.f, seed)?);
        }
    }
    let first_failure = suites.iter().find(|s| !s.pass).map(|s| s.name.clone());
    Ok(VerifySummary {
        pass: first_failure.is_none() && !suites.is_empty(),
        first_failure,
        suites,
    })
}

/// π-periodicity of ϑ3 and the location of its extrema.
pub fn theta_suite(seed: u64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e7a);
    let mut worst = 0.0_f64;
    let mut extrema_ok = true;
    for _ in 0..500 {
        let z = rng.gen_range(-10.0..10.0);
        let c = rng.gen_range(0.01..0.95);
        let a = theta3(z, c, 1e-16)?;
        let b = theta3(z + PI, c, 1e-16)?;
        worst = worst.max((a - b).abs());
    }
    for &c in &[0.1, 0.5, 0.9] {
        let grid: Vec<f64> = (0..=400).map(|i| PI * i as f64 / 400.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&z| theta3(z, c, 1e-16)).collect::<Result<_>>()?;
        let argmin = (0..vals.len()).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap_or(0);
        let argmax = (0..vals.len()).max_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap_or(0);
        extrema_ok &= argmin == 200 && (argmax == 0 || argmax == 400);
    }
    let detail = if extrema_ok { "extrema at pi/2 and 0" } else { "extrema misplaced" };
    let mut r = SuiteResult::new("theta", 503, worst, 1e-12, detail);
    r.pass &= extrema_ok;
    Ok(r)
}

/// Closed form vs panel quadrature, and magnitude series vs `|closed form|²`.
pub fn oracle_suite(seed: u64) -> Result<SuiteResult> {
    let sigma = default_sigma();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0ac1e);
    let mut worst = 0.0_f64;
    let mut checks = 0;
    for (i, lct) in test_matrices().iter().enumerate() {
        let f = random_signal(2, 3.0, seed + i as u64, 1.0, sigma)?;
        for _ in 0..20 {
            let n: i64 = rng.gen_range(-12..=12);
            let x = 0.5 * n as f64;
            let t = lct.a * x + rng.gen_range(-2.0..2.0) * lct.b;
            let exact = stlct_closed_form(&f, lct, x, t).norm_sqr();
            let oracle = stlct_quadrature_oracle(&f, lct, x, t, &OracleSpec::default())?.norm_sqr();
            let series = magnitude_closed_form(&f, lct, x, t)?;
            if exact > 1e-10 {
                worst = worst.max((exact - oracle).abs() / exact);
                worst = worst.max((series - exact).abs() / exact * 10.0);
                checks += 1;
            }
        }
    }
    Ok(SuiteResult::new(
        "oracle",
        checks,
        worst,
        1e-8,
        "relative error; series-vs-closed-form scaled by 10 against its 1e-9 target",
    ))
}

/// `⟨φ̃_ξ(· − βn/2), φ_ξ⟩ = δ_{n,0}`.
pub fn biorthogonality_suite() -> Result<SuiteResult> {
    let (sigma, beta) = (default_sigma(), 1.0);
    let dg = DualGenerator::new(sigma, beta)?;
    let quad = AdaptiveSpec {
        abs_tol: 1e-12,
        initial_panels: 256,
        ..AdaptiveSpec::default()
    };
    let mut worst = 0.0_f64;
    let mut checks = 0;
    for &xi in &[0.0, 0.7, 1.4] {
        for n in -5..=5 {
            let v = biorthogonality_product(&dg, xi, n, &quad);
            let target = if n == 0 { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
            checks += 1;
        }
    }
    Ok(SuiteResult::new("biorthogonality", checks, worst, 1e-6, "absolute error"))
}

/// `∫ φ̃_ξ(t − βn/2) φ_ξ(t) dt`.
pub fn biorthogonality_product(dg: &DualGenerator, xi: f64, n: i64, quad: &AdaptiveSpec) -> f64 {
    let shift = 0.5 * dg.beta() * n as f64;
    let reach = dg.table().extent() + shift.abs() + xi.abs();
    adaptive_real(|t| dg.phi_tilde(xi, t - shift) * dg.phi_xi(xi, t), -reach, reach, quad)
}

/// `|z₁/|z₁| − z₂/|z₂|| ≤ 2|z₁ − z₂|/|z₁|`, compared without slack.
pub fn unit_phase_suite(seed: u64, pairs: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51de);
    let mut violations = 0usize;
    let mut worst_ratio = 0.0_f64;
    for i in 0..pairs {
        // mix scales so near-cancelling pairs are exercised too
        let scale = 10f64.powi((i % 7) as i32 - 3);
        let mut draw = || {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        };
        let z1 = draw();
        let z2 = z1 + draw() * scale;
        if z1.norm() == 0.0 || z2.norm() == 0.0 {
            continue;
        }
        let lhs = (z1 / z1.norm() - z2 / z2.norm()).norm();
        let rhs = 2.0 * (z1 - z2).norm() / z1.norm();
        if lhs > rhs {
            violations += 1;
        }
        if rhs > 0.0 {
            worst_ratio = worst_ratio.max(lhs / rhs);
        }
    }
    SuiteResult::new(
        "unit-phase",
        pairs,
        violations as f64,
        0.0,
        format!("violations; largest lhs/rhs = {worst_ratio:.6}"),
    )
}

/// Small noiseless pipeline used by the equivariance check.
fn small_pipeline(f: &GaussianSisSignal) -> Result<(MeasurementSet, Vec<f64>, f64)> {
    let lct = LctParams { a: 2.0, b: 3.0, c: 1.0, d: 2.0 };
    let lattice = LatticeSpec::new(14, 140, 0.125, f.beta())?;
    let m = sample_exact(f, &lct, &lattice)?;
    let rc = Reconstructor::new(&m)?;
    let anchors = rc.select_anchors(1.5, 1.0, 0.05, 1.0 / 64.0)?;
    let mags = anchors.magnitudes.clone();
    let rec = rc.assemble(anchors)?;
    let err = phase_aligned_error(f, &rec, 1.5, 32)?.optimized;
    Ok((m, mags, err))
}

/// Signal used by the equivariance suite; `|f|` stays well above zero on `[−1.5, 1.5]`.
pub fn equivariance_signal() -> Result<GaussianSisSignal> {
    GaussianSisSignal::from_pairs(
        [
            (-2, Complex64::new(0.7, -0.4)),
            (-1, Complex64::new(1.0, 0.5)),
            (0, Complex64::new(-0.8, 0.9)),
            (1, Complex64::new(0.6, 1.1)),
            (2, Complex64::new(-0.5, 0.3)),
        ],
        1.0,
        default_sigma(),
    )
}

/// Multiplying `f` by a unimodular constant leaves data, anchors and error unchanged.
pub fn equivariance_suite() -> Result<SuiteResult> {
    let f = equivariance_signal()?;
    let g = f.scaled(Complex64::from_polar(1.0, 1.234));
    let (mf, af, ef) = small_pipeline(&f)?;
    let (mg, ag, eg) = small_pipeline(&g)?;
    let scale = mf.values.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    let mut worst = mf
        .values
        .iter()
        .zip(mg.values.iter())
        .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs() / scale));
    if af.len() != ag.len() {
        worst = f64::INFINITY;
    } else {
        for (x, y) in af.iter().zip(&ag) {
            worst = worst.max((x - y).abs());
        }
    }
    worst = worst.max((ef - eg).abs());
    Ok(SuiteResult::new(
        "equivariance",
        mf.values.len() + af.len() + 1,
        worst,
        1e-10,
        format!("data, anchor magnitudes and aligned error (error {ef:.3e})"),
    ))
}

/// `M_f` does not depend on `d` once `a` and `b` are fixed.
pub fn d_independence_suite(seed: u64) -> Result<SuiteResult> {
    let f = random_signal(3, 2.0, seed, 1.0, default_sigma())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd);
    let base = LctParams::from_abd(2.0, 3.0, 2.0)?;
    let mut worst = 0.0_f64;
    let mut checks = 0;
    for &d in &[-3.0, 0.0, 0.5, 7.0] {
        let other = LctParams::from_abd(2.0, 3.0, d)?;
        for _ in 0..25 {
            let x = rng.gen_range(-4.0..4.0);
            let t = 2.0 * x + rng.gen_range(-3.0..3.0);
            let m0 = magnitude_closed_form(&f, &base, x, t)?;
            let m1 = magnitude_closed_form(&f, &other, x, t)?;
            // the closed form must agree too; it carries d only in a phase
            let c1 = stlct_closed_form(&f, &other, x, t).norm_sqr();
            let scale = m0.max(1.0);
            worst = worst.max((m0 - m1).abs() / scale).max((m0 - c1).abs() / scale);
            checks += 1;
        }
    }
    Ok(SuiteResult::new("d-independence", checks, worst, 1e-10, "relative difference"))
}

/// Reduced-scale configuration of the local discretization bound check.
pub struct LocalBoundSetup {
    pub f: GaussianSisSignal,
    pub lct: LctParams,
    pub lattice: LatticeSpec,
    pub s: f64,
    pub r: f64,
    pub margins: Margins,
}

/// `s = 5, r = 3/2, h = 1/16, m = 10, q = 60` with a 5-coefficient signal.
pub fn local_bound_setup(seed: u64) -> Result<LocalBoundSetup> {
    let sigma = default_sigma();
    let f = random_signal(2, 2.0, seed, 1.0, sigma)?;
    let lct = LctParams::new(2.0, 3.0, 1.0, 2.0)?;
    let (s, r, h) = (5.0, 1.5, 1.0 / 16.0);
    let margins = Margins { m: 10, q: 60 };
    let n = (crate::bounds::leading_n(s, r, 1.0) + margins.m) as usize;
    let k = (crate::bounds::leading_h(lct.a, 1.0, n, h) + margins.q) as usize;
    let lattice = LatticeSpec::new(n, k, h, 1.0)?;
    Ok(LocalBoundSetup {
        f,
        lct,
        lattice,
        s,
        r,
        margins,
    })
}

/// Measured `|f_ξ(p+ξ) − G_p(ξ)|` against the bound, as `measured / bound`.
pub fn local_bound_ratios(setup: &LocalBoundSetup, seed: u64, samples: usize) -> Result<Vec<(f64, f64, f64, f64)>> {
    let dc = estimate_decay_constants(setup.f.sigma(), setup.f.beta())?;
    let m = sample_exact(&setup.f, &setup.lct, &setup.lattice)?;
    let rc = Reconstructor::new(&m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51);
    (0..samples)
        .map(|_| {
            let p = rng.gen_range(-setup.s..=setup.s);
            let xi = rng.gen_range(-setup.r..=setup.r);
            let measured = (setup.f.tensor_product(xi, p + xi) - rc.local_tensor_estimate(p, xi)).norm();
            let bound = local_error_bound(
                &setup.f,
                &setup.lct,
                &setup.lattice,
                setup.s,
                setup.r,
                setup.margins,
                xi,
                0.0,
                &dc,
            )?;
            Ok((p, xi, measured, bound.total))
        })
        .collect()
}

pub fn local_bound_suite(seed: u64, samples: usize) -> Result<SuiteResult> {
    let setup = local_bound_setup(seed)?;
    let rows = local_bound_ratios(&setup, seed, samples)?;
    let worst = rows.iter().map(|r| r.2 / r.3).fold(0.0, f64::max);
    let largest = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    Ok(SuiteResult::new(
        "local-bound",
        rows.len(),
        worst,
        1.0,
        format!("measured/bound ratio; largest measured error {largest:.3e}"),
    ))
}

/// One pair of the global stability check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCase {
    pub lhs: f64,
    pub constant: f64,
    pub discrepancy: f64,
    pub rhs: f64,
}

/// Random pair `(f, g)` with `g` a perturbation of `f` at relative size `scale`.
pub fn stability_pair(seed: u64, scale: f64) -> Result<(GaussianSisSignal, GaussianSisSignal)> {
    let sigma = default_sigma();
    let f = random_signal(2, 1.0, seed, 1.0, sigma)?;
    let noise = random_signal(2, 1.0, seed ^ 0xabcdef, 1.0, sigma)?;
    let rot = Complex64::from_polar(1.0, 0.37 * seed as f64);
    let g = f.add(&noise.scaled(Complex64::new(scale, 0.0)))?.scaled(rot);
    Ok((f, g))
}

/// Empirical check of the global stability estimate on `s = 3` with anchors
/// `−2, −1, 0, 1, 2` and `r = 1`, so the estimate covers `[−3, 3]`.
pub fn stability_case(f: &GaussianSisSignal, g: &GaussianSisSignal, lct: &LctParams) -> Result<StabilityCase> {
    let (s, r) = (3.0, 1.0);
    let anchors = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let gamma = anchors.iter().map(|&p| f.eval(p).norm()).fold(f64::INFINITY, f64::min);
    let interval = IntervalSpec { s };
    let fn_ = f.sup_norm_on_interval(interval, 64).certified;
    let gn = g.sup_norm_on_interval(interval, 64).certified;
    let dg = DualGenerator::new(f.sigma(), f.beta())?;
    let c = 1.05 * c_sigma_beta(&dg, 1024)?;
    let consts = stability_constants(fn_, gn, gamma, anchors.len(), r, f.sigma(), c)?;
    let quad = AdaptiveSpec {
        abs_tol: 1e-13,
        initial_panels: 32,
        ..AdaptiveSpec::default()
    };
    let discrepancy = mixed_norm_discrepancy(f, g, lct, mixed_norm_n_range(f, g), &quad)?;
    let ts = evaluation_grid(s, 256);
    let fv: Vec<Complex64> = ts.iter().map(|&t| f.eval(t)).collect();
    let gv: Vec<Complex64> = ts.iter().map(|&t| g.eval(t)).collect();
    let lhs = aligned_error(&fv, &gv).optimized;
    Ok(StabilityCase {
        lhs,
        constant: consts.global_constant,
        discrepancy,
        rhs: consts.global_constant * discrepancy,
    })
}

pub fn stability_suite(seed: u64, pairs: usize) -> Result<SuiteResult> {
    let lct = LctParams::new(2.0, 3.0, 1.0, 2.0)?;
    let mut worst = 0.0_f64;
    for i in 0..pairs {
        let scale = 10f64.powi(-(i as i32 % 4));
        let (f, g) = stability_pair(seed + i as u64, scale)?;
        let case = stability_case(&f, &g, &lct)?;
        worst = worst.max(case.lhs / case.rhs);
    }
    Ok(SuiteResult::new("stability", pairs, worst, 1.0, "aligned error / (constant x mixed norm)"))
}

/// Dataset against regenerated exact data plus its recorded noise, and ten
/// entries against the quadrature oracle.
pub fn dataset_suite(m: &MeasurementSet, f: &GaussianSisSignal, seed: u64) -> Result<SuiteResult> {
    let exact = sample_exact(f, &m.lct, &m.lattice)?;
    let mut expected = exact.values.clone();
    if m.noise_level > 0.0 {
        let (rows, cols) = m.values.dim();
        let eta = noise_matrix(rows, cols, m.noise_level, m.seed.unwrap_or(0));
        expected = &expected + &eta;
    }
    let scale = exact.values.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut worst = m
        .values
        .iter()
        .zip(expected.iter())
        .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs() / scale));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xda7a);
    let (nn, kk) = (m.lattice.n as i64, m.lattice.k as i64);
    let mut spots = BTreeMap::new();
    while spots.len() < 10.min(m.values.len()) {
        spots.insert((rng.gen_range(-nn..=nn), rng.gen_range(-kk..=kk)), ());
    }
    for &(n, k) in spots.keys() {
        let (x, t) = (m.lattice.x(n), m.lattice.t(k));
        let oracle = stlct_quadrature_oracle(f, &m.lct, x, t, &OracleSpec::default())?.norm_sqr();
        let y = exact.get(n, k);
        worst = worst.max((oracle - y).abs() / scale);
    }
    Ok(SuiteResult::new(
        "dataset",
        m.values.len() + spots.len(),
        worst,
        1e-8,
        "deviation from regenerated data, relative to max |Y|",
    ))
}
