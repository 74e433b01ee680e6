//! Short-time linear canonical transform with the chirped Gaussian window.
//!
//! The window is `φ̌(t) = e^{iπ(a/b)t²} φ(t)` and the kernel is
//! `K_A(ξ,t) = (ib)^{-1/2} e^{iπ/b (a t² − 2ξt + dξ²)}`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::PanelRule;
use crate::signal::GaussianSisSignal;

/// Unimodular matrix `(a b; c d)` with `b > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LctParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl LctParams {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let p = Self { a, b, c, d };
        p.validate()?;
        Ok(p)
    }

    /// `(0 1; −1 0)`, for which the transform is the Gabor transform.
    pub fn gabor() -> Self {
        Self {
            a: 0.0,
            b: 1.0,
            c: -1.0,
            d: 0.0,
        }
    }

    /// Completes `(a, b, d)` with `c = (ad − 1)/b`.
    pub fn from_abd(a: f64, b: f64, d: f64) -> Result<Self> {
        if !(b > 0.0) {
            return Err(Error::InvalidParams(format!("b must be positive, got {b}")));
        }
        Self::new(a, b, (a * d - 1.0) / b, d)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { a, b, c, d } = *self;
        if ![a, b, c, d].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParams("non-finite matrix entry".into()));
        }
        if !(b > 0.0) {
            return Err(Error::InvalidParams(format!("b must be positive, got {b}")));
        }
        let det = a * d - b * c;
        if (det - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("ad - bc = {det}, expected 1")));
        }
        Ok(())
    }

    /// Principal square root of `ib`.
    pub fn sqrt_ib(&self) -> Complex64 {
        Complex64::new(0.0, self.b).sqrt()
    }

    /// `K_A(ξ, t)`.
    pub fn kernel(&self, xi: f64, t: f64) -> Complex64 {
        let phase = PI / self.b * (self.a * t * t - 2.0 * xi * t + self.d * xi * xi);
        Complex64::from_polar(1.0, phase) / self.sqrt_ib()
    }
}

/// `S f(x,t)` in closed form.
pub fn stlct_closed_form(f: &GaussianSisSignal, lct: &LctParams, x: f64, t: f64) -> Complex64 {
    let LctParams { a, b, d, .. } = *lct;
    let (sigma, beta) = (f.sigma(), f.beta());
    let w = t - a * x;
    let inv4 = 1.0 / (4.0 * sigma * sigma);
    let sum: Complex64 = f
        .coeffs()
        .iter()
        .map(|(&k, &c)| {
            let bk = beta * k as f64;
            c * (-(x - bk).powi(2) * inv4).exp() * Complex64::from_polar(1.0, -PI * (x + bk) * w / b)
        })
        .sum();
    let outer = Complex64::from_polar(
        sigma * PI.sqrt() * (-PI * PI * sigma * sigma * w * w / (b * b)).exp(),
        PI * (d / b) * t * t - PI * (a / b) * x * x,
    );
    outer * sum / lct.sqrt_ib()
}

/// Panel quadrature used by [`stlct_quadrature_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    /// Integration covers `[x − half_width·σ, x + half_width·σ]`.
    pub half_width: f64,
    /// Panel width in units of `σ`; further capped at half an oscillation.
    pub panel_width: f64,
    pub nodes: usize,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            half_width: 12.0,
            panel_width: 0.25,
            nodes: 16,
        }
    }
}

/// Direct quadrature of `∫ f(u) conj(φ̌(u−x)) K_A(t,u) du`.
pub fn stlct_quadrature_oracle(
    f: &GaussianSisSignal,
    lct: &LctParams,
    x: f64,
    t: f64,
    spec: &OracleSpec,
) -> Result<Complex64> {
    lct.validate()?;
    if spec.half_width < 8.0 || spec.nodes < 4 || !(spec.panel_width > 0.0) {
        return Err(Error::Configuration(format!(
            "oracle spec {spec:?} does not cover the window support"
        )));
    }
    let sigma = f.sigma();
    let LctParams { a, b, .. } = *lct;
    // the integrand oscillates at (t − a x)/b cycles per unit
    let freq = ((t - a * x) / b).abs();
    let mut width = spec.panel_width * sigma;
    if freq > 0.0 {
        width = width.min(0.5 / freq);
    }
    let rule = PanelRule {
        panel_width: width,
        nodes_per_panel: spec.nodes,
    };
    let half = spec.half_width * sigma;
    let inv2 = 1.0 / (2.0 * sigma * sigma);
    let v = rule.integrate(x - half, x + half, |u| {
        let win = Complex64::from_polar((-(u - x).powi(2) * inv2).exp(), -PI * (a / b) * (u - x).powi(2));
        f.eval(u) * win * lct.kernel(t, u)
    });
    Ok(v)
}

/// Coefficients `r̆_ℓ^x` of the trigonometric series `V_x`.
#[derive(Debug, Clone)]
pub struct VxCoefficients {
    pub x: f64,
    /// Index of `coeffs[0]`; the series is symmetric so this is `-ell_max`.
    pub ell_min: i64,
    pub coeffs: Vec<Complex64>,
    /// `π β / b`, the angular frequency step of the series.
    omega: f64,
}

impl VxCoefficients {
    pub fn ell_max(&self) -> i64 {
        -self.ell_min
    }

    pub fn get(&self, ell: i64) -> Complex64 {
        let i = ell - self.ell_min;
        if i < 0 || i as usize >= self.coeffs.len() {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[i as usize]
        }
    }

    /// `Σ |r̆_ℓ|`, the natural scale of `V_x`.
    pub fn abs_sum(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        self.eval_complex(Complex64::new(t, 0.0))
    }

    /// `V_x(z)` at complex `z`.
    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let ell = (self.ell_min + i as i64) as f64;
                r * (Complex64::new(0.0, self.omega * ell) * z).exp()
            })
            .sum()
    }
}

/// Analytic bound `‖c‖²(1 + σ√(2π)/β) e^{-β²ℓ²/8σ²}` on `|r̆_ℓ|`.
pub fn vx_coefficient_bound(f: &GaussianSisSignal, ell: i64) -> f64 {
    let (sigma, beta) = (f.sigma(), f.beta());
    let c = f.coeff_sup();
    c * c * (1.0 + sigma * (2.0 * PI).sqrt() / beta)
        * (-(beta * beta) * (ell * ell) as f64 / (8.0 * sigma * sigma)).exp()
}

const ELL_TAIL: f64 = 1e-14;

/// `r̆_ℓ^x` for every `ℓ` whose analytic bound is at least `1e-14`.
pub fn vx_coefficients(f: &GaussianSisSignal, lct: &LctParams, x: f64) -> VxCoefficients {
    let (sigma, beta) = (f.sigma(), f.beta());
    let omega = PI * beta / lct.b;
    let Some((lo, hi)) = f.support() else {
        return VxCoefficients {
            x,
            ell_min: 0,
            coeffs: vec![Complex64::new(0.0, 0.0)],
            omega,
        };
    };
    let mut ell_max = hi - lo;
    while ell_max > 0 && vx_coefficient_bound(f, ell_max) < ELL_TAIL {
        ell_max -= 1;
    }
    // w_n = c_n e^{-(x−βn)²/4σ²}, restricted to indices where it is not negligible
    let inv4 = 1.0 / (4.0 * sigma * sigma);
    let reach = (2.0 * sigma * 45.0f64.sqrt() / beta).ceil() as i64 + 1;
    let centre = (x / beta).round() as i64;
    let n_lo = lo.max(centre - reach);
    let n_hi = hi.min(centre + reach);
    let weights: Vec<Complex64> = if n_lo <= n_hi {
        (n_lo..=n_hi)
            .map(|n| {
                let c = f.coeffs().get(&n).copied().unwrap_or_default();
                c * (-(x - beta * n as f64).powi(2) * inv4).exp()
            })
            .collect()
    } else {
        Vec::new()
    };
    let len = weights.len() as i64;
    let coeffs = (-ell_max..=ell_max)
        .map(|ell| {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0.max(-ell)..len.min(len - ell) {
                acc += weights[i as usize] * weights[(i + ell) as usize].conj();
            }
            acc * Complex64::from_polar(1.0, -omega * lct.a * x * ell as f64)
        })
        .collect();
    VxCoefficients {
        x,
        ell_min: -ell_max,
        coeffs,
        omega,
    }
}

/// `M_f(x, ·)` for one window position, with its `V_x` coefficients cached.
#[derive(Debug, Clone)]
pub struct MagnitudeRow {
    pub vx: VxCoefficients,
    a: f64,
    b: f64,
    sigma: f64,
}

impl MagnitudeRow {
    pub fn new(f: &GaussianSisSignal, lct: &LctParams, x: f64) -> Self {
        Self {
            vx: vx_coefficients(f, lct, x),
            a: lct.a,
            b: lct.b,
            sigma: f.sigma(),
        }
    }

    pub fn x(&self) -> f64 {
        self.vx.x
    }

    /// `(πσ²/b) e^{-2π²σ²(z−ax)²/b²}` at complex `z`.
    fn gaussian(&self, z: Complex64) -> Complex64 {
        let w = z - self.a * self.vx.x;
        let s2 = self.sigma * self.sigma;
        (PI * s2 / self.b) * (-(2.0 * PI * PI * s2 / (self.b * self.b)) * w * w).exp()
    }

    /// Entire extension `M_f(x, z)`.
    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.gaussian(z) * self.vx.eval_complex(z)
    }

    /// `M_f(x, t)`, real and non-negative.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let v = self.vx.eval(t);
        let scale = self.vx.abs_sum().max(1.0);
        if v.im.abs() > 1e-8 * scale {
            return Err(Error::Magnitude(format!(
                "V_x({t}) has imaginary residual {:.3e} at x = {}",
                v.im,
                self.vx.x
            )));
        }
        let g = self.gaussian(Complex64::new(t, 0.0)).re;
        let m = g * v.re;
        if m < 0.0 {
            if m < -1e-10 * (g * scale).max(1.0) {
                return Err(Error::Magnitude(format!(
                    "negative magnitude {m:.3e} at (x, t) = ({}, {t})",
                    self.vx.x
                )));
            }
            return Ok(0.0);
        }
        Ok(m)
    }
}

/// `M_f(x,t) = |S f(x,t)|²` via the trigonometric series.
pub fn magnitude_closed_form(f: &GaussianSisSignal, lct: &LctParams, x: f64, t: f64) -> Result<f64> {
    lct.validate()?;
    MagnitudeRow::new(f, lct, x).eval(t)
}

/// `h Σ_{k=−H}^{H} M_f(x, hk) e^{−2πiξhk/b}`.
pub fn trapezoid_fourier(
    f: &GaussianSisSignal,
    lct: &LctParams,
    x: f64,
    xi: f64,
    h: f64,
    half_count: usize,
) -> Result<Complex64> {
    lct.validate()?;
    let row = MagnitudeRow::new(f, lct, x);
    let mut acc = Complex64::new(0.0, 0.0);
    let n = half_count as i64;
    for k in -n..=n {
        let t = h * k as f64;
        acc += row.eval(t)? * Complex64::from_polar(1.0, -2.0 * PI * xi * t / lct.b);
    }
    Ok(acc * h)
}
