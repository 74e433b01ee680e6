//! Anchor detection, local reconstruction, phase propagation and assembly.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::MeasurementSet;
use crate::quadrature::{adaptive, AdaptiveSpec};
use crate::signal::GaussianSisSignal;
use crate::special::DualGenerator;
use crate::stlct::{LctParams, MagnitudeRow};

/// Linear functionals of one measurement set: the anchor detector and the
/// local estimates of `f_ξ`.
#[derive(Debug, Clone)]
pub struct Reconstructor<'a> {
    m: &'a MeasurementSet,
    dg: DualGenerator,
    row_sums: Vec<f64>,
}

impl<'a> Reconstructor<'a> {
    pub fn new(m: &'a MeasurementSet) -> Result<Self> {
        let dg = DualGenerator::new(m.sigma, m.lattice.beta)?;
        let row_sums = m.values.rows().into_iter().map(|r| r.sum()).collect();
        Ok(Self { m, dg, row_sums })
    }

    pub fn measurements(&self) -> &MeasurementSet {
        self.m
    }

    pub fn dual(&self) -> &DualGenerator {
        &self.dg
    }

    /// Row indices `n` with `φ̃` not identically zero at `βn/2` away from `centre`.
    fn rows_near(&self, centre: f64) -> std::ops::RangeInclusive<i64> {
        let half = 0.5 * self.m.lattice.beta;
        let reach = self.dg.table().extent();
        let nn = self.m.lattice.n as i64;
        let lo = (((centre - reach) / half).floor() as i64).max(-nn);
        let hi = (((centre + reach) / half).ceil() as i64).min(nn);
        lo..=hi
    }

    /// `A(t) = h Σ_n Σ_k Y_{n,k} φ̃₀(t − βn/2)`.
    pub fn anchor_detector(&self, t: f64) -> f64 {
        let half = 0.5 * self.m.lattice.beta;
        let nn = self.m.lattice.n as i64;
        let sum: f64 = self
            .rows_near(t)
            .map(|n| self.row_sums[(n + nn) as usize] * self.dg.phi_tilde(0.0, t - half * n as f64))
            .sum();
        self.m.lattice.h * sum
    }

    /// `Σ_k Y_{n,k} e^{2πiξhk/b}` for row `n`.
    fn frequency_sum(&self, n: i64, xi: f64) -> Complex64 {
        let lat = &self.m.lattice;
        let row = self.m.values.row((n + lat.n as i64) as usize);
        let theta = 2.0 * PI * xi * lat.h / self.m.lct.b;
        let w = Complex64::from_polar(1.0, theta);
        // Horner in w over k + H, then shift by w^{-H}
        let mut acc = Complex64::new(0.0, 0.0);
        for &y in row.iter().rev() {
            acc = acc * w + y;
        }
        acc * Complex64::from_polar(1.0, -theta * lat.k as f64)
    }

    /// `h Σ_n e^{−iπaβnξ/b} (Σ_k Y_{n,k} e^{2πiξhk/b}) φ̃_ξ(p + ξ − βn/2)`,
    /// which is `conj G_p(ξ)`.
    fn conj_estimate(&self, p: f64, xi: f64) -> Complex64 {
        let lat = &self.m.lattice;
        let LctParams { a, b, .. } = self.m.lct;
        let half = 0.5 * lat.beta;
        let t = p + xi;
        let amp = self.dg.amplitude(xi);
        let table = self.dg.table();
        let mut acc = Complex64::new(0.0, 0.0);
        for n in self.rows_near(t - 0.5 * xi) {
            let g = table.eval(t - 0.5 * xi - half * n as f64);
            if g == 0.0 {
                continue;
            }
            let carrier = Complex64::from_polar(1.0, -PI * a * lat.beta * n as f64 * xi / b);
            acc += carrier * self.frequency_sum(n, xi) * g;
        }
        acc * (amp * lat.h)
    }

    /// `G_p(ξ)`, the discrete estimate of `f_ξ(p + ξ)`.
    pub fn local_tensor_estimate(&self, p: f64, xi: f64) -> Complex64 {
        self.conj_estimate(p, xi).conj()
    }

    /// `R_j(ξ) = conj(G_{p_j}(ξ)) / √A_j` for anchor index `j` (zero-based).
    pub fn local_reconstruction(&self, anchors: &AnchorSet, j: usize, xi: f64) -> Result<Complex64> {
        let aj = anchors.magnitudes[j];
        if !(aj > 0.0) {
            return Err(Error::NonpositiveAnchor { j: j + 1, value: aj });
        }
        Ok(self.conj_estimate(anchors.points[j], xi) / aj.sqrt())
    }

    /// `ρ_j = R_j(p_{j+1} − p_j) / |R_j(p_{j+1} − p_j)|` for `j = 1..J−1`.
    pub fn phase_factors(&self, anchors: &AnchorSet) -> Result<Vec<Complex64>> {
        (0..anchors.len().saturating_sub(1))
            .map(|j| {
                let gap = anchors.points[j + 1] - anchors.points[j];
                let z = self.local_reconstruction(anchors, j, gap)?;
                let norm = z.norm();
                if !(norm > f64::MIN_POSITIVE && norm.is_finite()) {
                    return Err(Error::ZeroTransition { j: j + 1 });
                }
                Ok(z / norm)
            })
            .collect()
    }

    /// Greedy anchor scan; see [`select_anchors`].
    pub fn select_anchors(&self, s: f64, r: f64, gamma_tilde: f64, scan_step: f64) -> Result<AnchorSet> {
        select_anchors_with(|t| self.anchor_detector(t), s, r, gamma_tilde, scan_step)
    }

    /// Step 4 of the algorithm: phase-propagated piecewise reconstruction.
    pub fn assemble(&self, anchors: AnchorSet) -> Result<Reconstruction<'_>> {
        for (j, &aj) in anchors.magnitudes.iter().enumerate() {
            if !(aj > 0.0) {
                return Err(Error::NonpositiveAnchor { j: j + 1, value: aj });
            }
        }
        let rho = self.phase_factors(&anchors)?;
        let jn = anchors.len();
        let mu = jn.div_ceil(2);
        // zero-based segment i = j − 1; the middle segment mu − 1 keeps phase 1
        let mut seg_phase = vec![Complex64::new(1.0, 0.0); jn.saturating_sub(1)];
        for i in (0..mu.saturating_sub(1)).rev() {
            seg_phase[i] = seg_phase[i + 1] * rho[i].conj();
        }
        for i in mu..jn.saturating_sub(1) {
            seg_phase[i] = seg_phase[i - 1] * rho[i - 1];
        }
        Ok(Reconstruction {
            engine: self,
            anchors,
            rho,
            mu,
            seg_phase,
        })
    }
}

/// Anchor points `−s = p₁ < … < p_J = s` with their detector values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub points: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub r: f64,
    pub gamma_tilde: f64,
    /// Greedy picks removed to keep the alternate spacing before the final anchor.
    pub dropped: usize,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the spacing and threshold constraints with slack `tol`.
    pub fn check(&self, s: f64, tol: f64) -> std::result::Result<(), String> {
        let p = &self.points;
        if p.len() < 2 {
            return Err(format!("only {} anchors", p.len()));
        }
        if (p[0] + s).abs() > tol || (p[p.len() - 1] - s).abs() > tol {
            return Err(format!("endpoints {} and {} are not -s and s", p[0], p[p.len() - 1]));
        }
        for w in p.windows(2) {
            if !(w[1] > w[0]) || w[1] - w[0] > self.r + tol {
                return Err(format!("gap {} -> {} violates 0 < gap <= r", w[0], w[1]));
            }
        }
        if p.len() >= 3 {
            for w in p.windows(3) {
                if w[2] - w[0] < self.r - tol {
                    return Err(format!("p[j+2] - p[j] = {} < r", w[2] - w[0]));
                }
            }
        }
        if let Some(a) = self.magnitudes.iter().find(|&&a| a < self.gamma_tilde) {
            return Err(format!("anchor magnitude {a} below threshold"));
        }
        Ok(())
    }
}

/// Greedy farthest-admissible scan of a detector on the grid
/// `{−s, −s + Δ, …, s}` (`Δ ≤ scan_step`, dividing `2s`).
///
/// From `p_j` the scan takes the largest grid point `p ≤ p_j + r` with
/// `A(p) ≥ γ̃` and `p − p_{j−1} ≥ r`; `s` is taken as soon as it is in reach.
/// If `s − p_{j−1} < r` at that moment, `p_j` is dropped: the gap
/// `p_{j−1} → s` is then below `r`, and `s − p_{j−2} > p_j − p_{j−2} ≥ r`,
/// so every constraint holds without relaxing any of them.
pub fn select_anchors_with<F>(detector: F, s: f64, r: f64, gamma_tilde: f64, scan_step: f64) -> Result<AnchorSet>
where
    F: Fn(f64) -> f64,
{
    if !(s > 0.0 && r > 0.0 && scan_step > 0.0 && gamma_tilde.is_finite()) {
        return Err(Error::Validation(format!(
            "anchor scan needs s, r, scan_step > 0 (s={s}, r={r}, scan_step={scan_step})"
        )));
    }
    if scan_step > r / 16.0 + 1e-15 {
        return Err(Error::Validation(format!("scan step {scan_step} exceeds r/16 = {}", r / 16.0)));
    }
    let cells = (2.0 * s / scan_step).ceil() as usize;
    let step = 2.0 * s / cells as f64;
    let at = |i: usize| if i == cells { s } else { -s + step * i as f64 };
    let reach = (r / step + 1e-9).floor() as usize;
    let spacing = (r / step - 1e-9).ceil() as usize;

    let a_start = detector(-s);
    if a_start < gamma_tilde {
        return Err(Error::Endpoint { point: -s, value: a_start, gamma_tilde });
    }
    let a_end = detector(s);
    if a_end < gamma_tilde {
        return Err(Error::Endpoint { point: s, value: a_end, gamma_tilde });
    }

    let mut idx = vec![0usize];
    let mut vals = vec![a_start];
    let mut dropped = 0;
    loop {
        let cur = *idx.last().expect("nonempty");
        if cur + reach >= cells {
            if idx.len() >= 2 && cells < idx[idx.len() - 2] + spacing {
                idx.pop();
                vals.pop();
                dropped += 1;
            }
            idx.push(cells);
            vals.push(a_end);
            break;
        }
        let lo = if idx.len() >= 2 {
            (idx[idx.len() - 2] + spacing).max(cur + 1)
        } else {
            cur + 1
        };
        let mut next = None;
        let mut i = cur + reach;
        while i >= lo {
            let v = detector(at(i));
            if v >= gamma_tilde {
                next = Some((i, v));
                break;
            }
            i -= 1;
        }
        match next {
            Some((i, v)) => {
                idx.push(i);
                vals.push(v);
            }
            None => {
                return Err(Error::AnchorGap {
                    from: at(cur),
                    to: at(cur + reach),
                    gamma_tilde,
                })
            }
        }
    }
    Ok(AnchorSet {
        points: idx.into_iter().map(at).collect(),
        magnitudes: vals,
        r,
        gamma_tilde,
        dropped,
    })
}

/// Detector scan over a measurement set.
pub fn select_anchors(m: &MeasurementSet, s: f64, r: f64, gamma_tilde: f64, scan_step: f64) -> Result<AnchorSet> {
    Reconstructor::new(m)?.select_anchors(s, r, gamma_tilde, scan_step)
}

/// Output of the algorithm: a piecewise evaluator on `[−s, s]`.
#[derive(Debug, Clone)]
pub struct Reconstruction<'a> {
    engine: &'a Reconstructor<'a>,
    pub anchors: AnchorSet,
    pub rho: Vec<Complex64>,
    /// `⌈J/2⌉`, one-based.
    pub mu: usize,
    seg_phase: Vec<Complex64>,
}

impl<'a> Reconstruction<'a> {
    /// Zero-based segment index containing `t`, honoring the half-open
    /// conventions left and right of the middle segment.
    pub fn segment_of(&self, t: f64) -> usize {
        let p = &self.anchors.points;
        let segs = p.len() - 1;
        // largest j with p[j] <= t, clamped to a valid segment
        let j = p.partition_point(|&q| q <= t).saturating_sub(1).min(segs - 1);
        let mu0 = self.mu - 1;
        if j > mu0 && t <= p[j] {
            j - 1
        } else {
            j
        }
    }

    /// Phase multiplier of zero-based segment `i`.
    pub fn segment_phase(&self, i: usize) -> Complex64 {
        self.seg_phase[i]
    }

    pub fn eval(&self, t: f64) -> Result<Complex64> {
        let i = self.segment_of(t);
        let xi = t - self.anchors.points[i];
        Ok(self.seg_phase[i] * self.engine.local_reconstruction(&self.anchors, i, xi)?)
    }

    /// Values on `count` equispaced points of `[−s, s]`, in parallel.
    pub fn eval_grid(&self, ts: &[f64]) -> Result<Vec<Complex64>> {
        ts.par_iter().map(|&t| self.eval(t)).collect()
    }
}

/// Uniform grid on `[−s, s]` with `density` points per unit length.
pub fn evaluation_grid(s: f64, density: usize) -> Vec<f64> {
    let cells = ((2.0 * s * density.max(1) as f64).ceil() as usize).max(1);
    (0..=cells)
        .map(|i| if i == cells { s } else { -s + 2.0 * s * i as f64 / cells as f64 })
        .collect()
}

/// Sup-norm error after removing the global phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignedError {
    /// `max |f − τ* R|` with `τ*` from the grid inner product.
    pub inner_product: f64,
    /// Minimum over unimodular `τ` by scan and golden-section search.
    pub optimized: f64,
    pub tau: Complex64,
}

/// Phase-aligned error between samples `f` and `r` of two functions.
pub fn aligned_error(f: &[Complex64], r: &[Complex64]) -> AlignedError {
    let ip: Complex64 = f.iter().zip(r).map(|(a, b)| a * b.conj()).sum();
    let tau = if ip.norm() > 0.0 { ip / ip.norm() } else { Complex64::new(1.0, 0.0) };
    let err = |tau: Complex64| {
        f.iter()
            .zip(r)
            .map(|(a, b)| (a - tau * b).norm())
            .fold(0.0, f64::max)
    };
    let e_ip = err(tau);
    let at = |theta: f64| err(Complex64::from_polar(1.0, theta));

    let coarse = 64;
    let (mut best_k, mut best) = (0usize, f64::INFINITY);
    for k in 0..coarse {
        let v = at(2.0 * PI * k as f64 / coarse as f64);
        if v < best {
            best = v;
            best_k = k;
        }
    }
    let dh = 2.0 * PI / coarse as f64;
    let (mut lo, mut hi) = (best_k as f64 * dh - dh, best_k as f64 * dh + dh);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (at(x1), at(x2));
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = at(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = at(x2);
        }
    }
    let optimized = best.min(f1).min(f2).min(e_ip);
    AlignedError {
        inner_product: e_ip,
        optimized,
        tau,
    }
}

/// `min_τ max_grid |f − τR|` over `[−s, s]`.
pub fn phase_aligned_error(
    f: &GaussianSisSignal,
    rec: &Reconstruction<'_>,
    s: f64,
    grid_density: usize,
) -> Result<AlignedError> {
    let ts = evaluation_grid(s, grid_density);
    let rv = rec.eval_grid(&ts)?;
    let fv: Vec<Complex64> = ts.iter().map(|&t| f.eval(t)).collect();
    Ok(aligned_error(&fv, &rv))
}

/// Window-row integrals `∫ M_f(βn/2, u) e^{−2πiξu/b} du`.
pub fn magnitude_fourier_integral(row: &MagnitudeRow, lct: &LctParams, sigma: f64, xi: f64) -> Result<Complex64> {
    let x = row.x();
    let centre = lct.a * x;
    // Gaussian factor e^{-2π²σ²w²/b²} is below 1e-18 beyond this half-width
    let half = lct.b * (41.5f64 / 2.0).sqrt() / (PI * sigma);
    let spec = AdaptiveSpec {
        abs_tol: 1e-15,
        rel_tol: 1e-13,
        max_depth: 30,
        initial_panels: 32,
    };
    // magnitudes never fail for a validated row; clamp errors are surfaced afterwards
    let failure = std::cell::Cell::new(None);
    let v = adaptive(
        |u| match row.eval(u) {
            Ok(m) => m * Complex64::from_polar(1.0, -2.0 * PI * xi * u / lct.b),
            Err(e) => {
                failure.set(Some(e.to_string()));
                Complex64::new(0.0, 0.0)
            }
        },
        centre - half,
        centre + half,
        &spec,
    );
    match failure.into_inner() {
        Some(msg) => Err(Error::Magnitude(msg)),
        None => Ok(v),
    }
}

/// `f_ξ(p + ξ)` from the continuous representation, rows `|n| ≤ n_range`.
pub fn tensor_from_magnitudes(
    f: &GaussianSisSignal,
    lct: &LctParams,
    p: f64,
    xi: f64,
    n_range: usize,
) -> Result<Complex64> {
    lct.validate()?;
    let dg = DualGenerator::new(f.sigma(), f.beta())?;
    let beta = f.beta();
    let nr = n_range as i64;
    (-nr..=nr)
        .into_par_iter()
        .map(|n| {
            let x = 0.5 * beta * n as f64;
            let g = dg.phi_tilde(xi, p + xi - x);
            if g == 0.0 {
                return Ok(Complex64::new(0.0, 0.0));
            }
            let row = MagnitudeRow::new(f, lct, x);
            let integral = magnitude_fourier_integral(&row, lct, f.sigma(), xi)?;
            let carrier = Complex64::from_polar(1.0, PI * lct.a * beta * n as f64 * xi / lct.b);
            Ok(carrier * integral * g)
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().sum())
}

/// Semi-discrete reconstruction `f(p + ξ)` from exact magnitudes, with the
/// global phase fixed by `f(p)/|f(p)|`.
pub fn reconstruct_semidiscrete(
    f: &GaussianSisSignal,
    lct: &LctParams,
    p: f64,
    xi: f64,
    n_range: usize,
) -> Result<Complex64> {
    let fp = f.eval(p);
    if fp.norm() < 1e-9 {
        return Err(Error::ZeroBasePoint { value: fp.norm() });
    }
    let tau = fp / fp.norm();
    let mag2 = tensor_from_magnitudes(f, lct, p, 0.0, n_range)?.re;
    if !(mag2 > 0.0) {
        return Err(Error::ZeroBasePoint { value: mag2.max(0.0).sqrt() });
    }
    let fxi = if xi == 0.0 {
        Complex64::new(mag2, 0.0)
    } else {
        tensor_from_magnitudes(f, lct, p, xi, n_range)?
    };
    Ok(tau * fxi.conj() / mag2.sqrt())
}
