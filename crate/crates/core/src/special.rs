//! Jacobi theta function, the spectral factor `Λ`, its inverse Fourier
//! transform and the dual generators built from it.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `ϑ3(z, c) = Σ_n c^{n²} e^{2inz}` for a real nome `0 < c < 1`.
///
/// For nomes close to one the direct series alternates with large terms near
/// `z = π/2`, so the Poisson-summed form
/// `√(π/α) Σ_k e^{-(z+πk)²/α}` with `c = e^{-α}` is used instead.
pub fn theta3(z: f64, c: f64, tol: f64) -> Result<f64> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Domain(format!("theta nome must lie in (0,1), got {c}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    Ok(theta3_alpha(z, -c.ln(), tol))
}

/// `ϑ3(z, e^{-α})` for `α > 0`, no validation.
pub(crate) fn theta3_alpha(z: f64, alpha: f64, tol: f64) -> f64 {
    if alpha >= PI {
        theta3_direct(z, alpha, tol)
    } else {
        theta3_poisson(z, alpha, tol)
    }
}

fn theta3_direct(z: f64, alpha: f64, tol: f64) -> f64 {
    let mut sum = 1.0;
    let mut n = 1.0_f64;
    loop {
        let term = 2.0 * (-alpha * n * n).exp();
        if term < tol {
            break;
        }
        sum += term * (2.0 * n * z).cos();
        n += 1.0;
    }
    sum
}

fn theta3_poisson(z: f64, alpha: f64, tol: f64) -> f64 {
    // reduce to [-π/2, π/2]
    let w = z - PI * (z / PI).round();
    let pref = (PI / alpha).sqrt();
    let mut sum = (-w * w / alpha).exp();
    let mut k = 1.0_f64;
    loop {
        let a = (-(w + PI * k).powi(2) / alpha).exp();
        let b = (-(w - PI * k).powi(2) / alpha).exp();
        sum += a + b;
        if pref * (a + b) < tol * (pref * sum).max(f64::MIN_POSITIVE) {
            break;
        }
        k += 1.0;
    }
    pref * sum
}

const THETA_TOL: f64 = 1e-17;

fn check_widths(sigma: f64, beta: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite() && beta > 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!(
            "sigma and beta must be positive, got sigma={sigma}, beta={beta}"
        )));
    }
    Ok(())
}

/// `Λ(t) = e^{-π²σ²t²} / ϑ3(βπt/2, e^{-β²/8σ²})`.
pub fn lambda_fn(sigma: f64, beta: f64, t: f64) -> f64 {
    let alpha = beta * beta / (8.0 * sigma * sigma);
    (-PI * PI * sigma * sigma * t * t).exp() / theta3_alpha(0.5 * beta * PI * t, alpha, THETA_TOL)
}

/// Decay rate of `F⁻¹Λ` set by the nearest complex pole of `Λ`,
/// located at `u = 1/β + iβ/(8πσ²)`.
pub fn pole_decay_rate(sigma: f64, beta: f64) -> f64 {
    beta / (4.0 * sigma * sigma)
}

/// Trapezoidal discretization of `∫ Λ(u) e^{2πiut} du`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapezoidSpec {
    pub step: f64,
    pub cutoff: f64,
}

impl TrapezoidSpec {
    /// Cutoff and step adequate for `|t| ≤ t_max`.
    ///
    /// The trapezoid aliases `F⁻¹Λ(t ± m/step)` onto `F⁻¹Λ(t)`, so the step is
    /// chosen to push the first alias forty decay lengths past `t_max`.
    pub fn auto(sigma: f64, beta: f64, t_max: f64) -> Self {
        let nu = pole_decay_rate(sigma, beta);
        let step = 1.0 / (t_max.abs() + 40.0 / nu);
        let scale = lambda_fn(sigma, beta, 0.0).max(lambda_fn(sigma, beta, 1.0 / beta));
        let mut cutoff = (8.0 / (PI * sigma)).max(6.0);
        while lambda_envelope(sigma, beta, cutoff) > 1e-18 * scale {
            cutoff *= 1.25;
        }
        Self { step, cutoff }
    }
}

/// Upper envelope of `Λ` beyond `u`: the Gaussian over the theta minimum.
fn lambda_envelope(sigma: f64, beta: f64, u: f64) -> f64 {
    let alpha = beta * beta / (8.0 * sigma * sigma);
    (-PI * PI * sigma * sigma * u * u).exp() / theta3_alpha(0.5 * PI, alpha, THETA_TOL)
}

/// Weights `Λ(jΔu)` of the cosine sum.
fn lambda_samples(sigma: f64, beta: f64, quad: &TrapezoidSpec) -> Vec<f64> {
    let count = (quad.cutoff / quad.step).ceil() as usize;
    (0..=count)
        .map(|j| lambda_fn(sigma, beta, j as f64 * quad.step))
        .collect()
}

/// Returns `(F⁻¹Λ(t), d/dt F⁻¹Λ(t))` from precomputed samples of `Λ`.
fn cosine_sum(samples: &[f64], step: f64, t: f64) -> (f64, f64) {
    // angle recurrence, resynchronized periodically
    let theta = 2.0 * PI * step * t;
    let (s1, c1) = theta.sin_cos();
    let mut value = 0.0;
    let mut deriv = 0.0;
    let (mut s, mut c) = (0.0_f64, 1.0_f64);
    for (j, &w) in samples.iter().enumerate().skip(1) {
        if j % 64 == 0 {
            (s, c) = (j as f64 * theta).sin_cos();
        } else {
            (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
        }
        value += w * c;
        deriv -= w * j as f64 * s;
    }
    let value = step * (samples[0] + 2.0 * value);
    let deriv = step * 2.0 * (2.0 * PI * step) * deriv;
    (value, deriv)
}

/// `F⁻¹Λ(t) = ∫ Λ(u) e^{2πiut} du` by the trapezoidal rule (real, since `Λ` is even).
pub fn inv_fourier_lambda(sigma: f64, beta: f64, t: f64, quad: &TrapezoidSpec) -> Result<f64> {
    check_widths(sigma, beta)?;
    if !(quad.step > 0.0 && quad.cutoff > 0.0) {
        return Err(Error::Configuration(format!("bad trapezoid spec {quad:?}")));
    }
    let scale = lambda_fn(sigma, beta, 0.0).max(lambda_fn(sigma, beta, 1.0 / beta));
    if lambda_envelope(sigma, beta, quad.cutoff) > 1e-13 * scale {
        return Err(Error::Configuration(format!(
            "cutoff {} leaves Lambda mass above tolerance",
            quad.cutoff
        )));
    }
    let samples = lambda_samples(sigma, beta, quad);
    Ok(cosine_sum(&samples, quad.step, t).0)
}

/// Hermite-interpolated table of `F⁻¹Λ` on `[0, T]`, zero beyond `T`.
#[derive(Debug)]
pub struct LambdaTable {
    sigma: f64,
    beta: f64,
    spacing: f64,
    extent: f64,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

const MAX_TABLE_NODES: usize = 1 << 23;

impl LambdaTable {
    pub fn build(sigma: f64, beta: f64) -> Result<Self> {
        check_widths(sigma, beta)?;
        let nu = pole_decay_rate(sigma, beta);
        let extent = 40.0 / nu + 10.0 * sigma;
        let spacing = (beta / 512.0).min(sigma / 128.0);
        let nodes = (extent / spacing).ceil() as usize + 1;
        if nodes > MAX_TABLE_NODES {
            return Err(Error::Configuration(format!(
                "F^-1 Lambda table would need {nodes} nodes (sigma={sigma}, beta={beta})"
            )));
        }
        let quad = TrapezoidSpec::auto(sigma, beta, extent);
        let samples = lambda_samples(sigma, beta, &quad);
        let (values, derivs) = (0..nodes)
            .map(|i| cosine_sum(&samples, quad.step, i as f64 * spacing))
            .unzip();
        Ok(Self {
            sigma,
            beta,
            spacing,
            extent: (nodes - 1) as f64 * spacing,
            values,
            derivs,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Support of the table; `F⁻¹Λ` is treated as zero for `|t|` beyond it.
    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let x = t.abs();
        if x >= self.extent {
            return 0.0;
        }
        let pos = x / self.spacing;
        let i = pos as usize;
        let u = pos - i as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.derivs[i] * self.spacing, self.derivs[i + 1] * self.spacing);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * d0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * d1
    }
}

type TableCache = Mutex<HashMap<(u64, u64), Arc<LambdaTable>>>;

fn table_cache() -> &'static TableCache {
    static CACHE: OnceLock<TableCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Shared table for `(σ, β)`, built on first use.
pub fn lambda_table(sigma: f64, beta: f64) -> Result<Arc<LambdaTable>> {
    let key = (sigma.to_bits(), beta.to_bits());
    let mut cache = table_cache().lock().expect("table cache poisoned");
    if let Some(t) = cache.get(&key) {
        return Ok(Arc::clone(t));
    }
    let table = Arc::new(LambdaTable::build(sigma, beta)?);
    cache.insert(key, Arc::clone(&table));
    Ok(table)
}

/// Width parameters of the tensor-product Gaussians and their duals.
#[derive(Debug, Clone)]
pub struct DualGenerator {
    sigma: f64,
    beta: f64,
    table: Arc<LambdaTable>,
}

impl DualGenerator {
    pub fn new(sigma: f64, beta: f64) -> Result<Self> {
        Ok(Self {
            sigma,
            beta,
            table: lambda_table(sigma, beta)?,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn table(&self) -> &LambdaTable {
        &self.table
    }

    pub fn lambda(&self, t: f64) -> f64 {
        lambda_fn(self.sigma, self.beta, t)
    }

    #[inline]
    pub fn inv_fourier_lambda(&self, t: f64) -> f64 {
        self.table.eval(t)
    }

    /// Amplitude `√2 e^{ξ²/4σ²}` of `φ̃_ξ`.
    #[inline]
    pub fn amplitude(&self, xi: f64) -> f64 {
        SQRT_2 * (xi * xi / (4.0 * self.sigma * self.sigma)).exp()
    }

    /// `φ̃_ξ(t) = √2 e^{ξ²/4σ²} F⁻¹Λ(t − ξ/2)`.
    #[inline]
    pub fn phi_tilde(&self, xi: f64, t: f64) -> f64 {
        self.amplitude(xi) * self.table.eval(t - 0.5 * xi)
    }

    /// `φ_ξ(t) = φ(t − ξ) φ(t)`.
    pub fn phi_xi(&self, xi: f64, t: f64) -> f64 {
        let s2 = 2.0 * self.sigma * self.sigma;
        (-((t - xi).powi(2) + t * t) / s2).exp()
    }
}

/// `φ̃_ξ(t)` for a one-off evaluation.
pub fn dual_generator(sigma: f64, beta: f64, xi: f64, t: f64) -> Result<f64> {
    Ok(DualGenerator::new(sigma, beta)?.phi_tilde(xi, t))
}

/// Envelope `|F⁻¹Λ(t)| ≤ K e^{-ν|t|}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConstants {
    #[serde(rename = "K")]
    pub k: f64,
    pub nu: f64,
    pub certified: bool,
}

impl DecayConstants {
    pub fn envelope(&self, t: f64) -> f64 {
        self.k * (-self.nu * t.abs()).exp()
    }
}

/// Whether `β/4 ≤ σ ≤ β/2 ≤ 1`.
pub fn in_certified_regime(sigma: f64, beta: f64) -> bool {
    beta / 4.0 <= sigma && sigma <= beta / 2.0 && beta / 2.0 <= 1.0
}

/// Decay constants of `F⁻¹Λ`.
///
/// Inside the certified regime these are `K = 205/σ`, `ν = 1/4`. Elsewhere the
/// rate is a least-squares fit through the oscillation peaks of `log|F⁻¹Λ|`
/// in the band `[1e-10, 1e-2]`, and `K` is then raised until the envelope
/// dominates every sample.
pub fn estimate_decay_constants(sigma: f64, beta: f64) -> Result<DecayConstants> {
    check_widths(sigma, beta)?;
    if in_certified_regime(sigma, beta) {
        return Ok(DecayConstants {
            k: 205.0 / sigma,
            nu: 0.25,
            certified: true,
        });
    }
    let dg = DualGenerator::new(sigma, beta)?;
    let (ts, vals) = decay_samples(&dg);
    fit_envelope(&ts, &vals)
}

/// Sample positions and `|F⁻¹Λ|` values used by the envelope fit.
pub fn decay_samples(dg: &DualGenerator) -> (Vec<f64>, Vec<f64>) {
    let (sigma, beta) = (dg.sigma, dg.beta);
    let nu = pole_decay_rate(sigma, beta);
    let peak = dg.inv_fourier_lambda(0.0).abs().max(1.0);
    let reach = (peak.ln() + 10.0 * 10f64.ln()) / nu;
    let len = (20.0 * sigma).max(reach).min(dg.table.extent);
    let count = 1000usize.max((16.0 * len / beta).ceil() as usize);
    let ts: Vec<f64> = (0..count)
        .map(|i| len * i as f64 / (count - 1) as f64)
        .collect();
    let vals = ts.iter().map(|&t| dg.inv_fourier_lambda(t).abs()).collect();
    (ts, vals)
}

/// Exponential envelope through the peaks of `vals`, inflated to dominate.
pub fn fit_envelope(ts: &[f64], vals: &[f64]) -> Result<DecayConstants> {
    let mut px = Vec::new();
    let mut py = Vec::new();
    for i in 1..vals.len().saturating_sub(1) {
        let v = vals[i];
        if v >= vals[i - 1] && v >= vals[i + 1] && (1e-10..=1e-2).contains(&v) {
            px.push(ts[i]);
            py.push(v.ln());
        }
    }
    if px.len() < 3 {
        return Err(Error::FittingFailure(format!(
            "only {} envelope peaks in the [1e-10, 1e-2] band",
            px.len()
        )));
    }
    let n = px.len() as f64;
    let mx = px.iter().sum::<f64>() / n;
    let my = py.iter().sum::<f64>() / n;
    let sxy: f64 = px.iter().zip(&py).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = px.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::FittingFailure(format!(
            "samples show no decay (slope {slope:.3e})"
        )));
    }
    let nu = -slope;
    let k = ts
        .iter()
        .zip(vals)
        .map(|(&t, &v)| v * (nu * t).exp())
        .fold(0.0_f64, f64::max);
    Ok(DecayConstants {
        k,
        nu,
        certified: false,
    })
}

/// Grid approximation of `C(σ,β) = sup_t Σ_n |F⁻¹Λ(t − βn/2)|` over one period.
///
/// Grid points are `t_i = (β/2) i / grid_density`, so doubling the density
/// refines the grid and can only increase the result.
pub fn c_sigma_beta(dg: &DualGenerator, grid_density: usize) -> Result<f64> {
    if grid_density < 64 {
        return Err(Error::Domain(format!(
            "grid density must be at least 64, got {grid_density}"
        )));
    }
    let half = 0.5 * dg.beta;
    let reach = (dg.table.extent / half).ceil() as i64 + 1;
    let sup = (0..grid_density)
        .map(|i| {
            let t = half * i as f64 / grid_density as f64;
            (-reach..=reach)
                .map(|n| dg.inv_fourier_lambda(t - half * n as f64).abs())
                .sum::<f64>()
        })
        .fold(0.0_f64, f64::max);
    Ok(sup)
}

/// `Ψ_β(t) = √π σ β ϑ3(πβt, e^{-β²/4σ²})`.
pub fn riesz_periodization(sigma: f64, beta: f64, t: f64) -> f64 {
    let alpha = beta * beta / (4.0 * sigma * sigma);
    PI.sqrt() * sigma * beta * theta3_alpha(PI * beta * t, alpha, THETA_TOL)
}
