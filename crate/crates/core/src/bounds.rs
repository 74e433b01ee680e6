//! Analytic constants, the local discretization bound, sampling-parameter
//! planning and the stability constants.

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::LatticeSpec;
use crate::quadrature::{adaptive_real, AdaptiveSpec};
use crate::signal::{GaussianSisSignal, IntervalSpec};
use crate::special::DecayConstants;
use crate::stlct::{LctParams, MagnitudeRow};

/// Ceiling that treats values within rounding of an integer as that integer.
pub fn robust_ceil(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as i64
    } else {
        x.ceil() as i64
    }
}

/// `(1 + 2√(2π)σ/β)²`.
fn riesz_factor(sigma: f64, beta: f64) -> f64 {
    (1.0 + 2.0 * (2.0 * PI).sqrt() * sigma / beta).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DConstants {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
}

pub fn d_constants(sigma: f64, beta: f64, r: f64, dc: &DecayConstants) -> DConstants {
    let (k, nu) = (dc.k, dc.nu);
    let growth = (r * r / (4.0 * sigma * sigma)).exp();
    let rf = riesz_factor(sigma, beta);
    let tail = 1.0 + 2.0 / (nu * beta);
    let sp = PI.sqrt();
    DConstants {
        d1: 4.0 * sp * sigma / (nu * beta) * k * growth * rf,
        d2: 4.0 * sp * k * sigma * growth * rf * tail * (1.0 + r / sigma).exp(),
        d3: 2.0 * sp * k * sigma * growth * rf * tail,
        d4: 2.0 * SQRT_2 * k * growth * tail,
    }
}

/// `⌈(2/β)(s + r/2)⌉`.
pub fn leading_n(s: f64, r: f64, beta: f64) -> i64 {
    robust_ceil(2.0 / beta * (s + 0.5 * r))
}

/// `⌈|a|βN/(2h)⌉`.
pub fn leading_h(a: f64, beta: f64, n: usize, h: f64) -> i64 {
    robust_ceil(a.abs() * beta * n as f64 / (2.0 * h))
}

/// Truncation margins `m = N − ⌈(2/β)(s + r/2)⌉`, `q = H − ⌈|a|βN/(2h)⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Margins {
    pub m: i64,
    pub q: i64,
}

impl Margins {
    pub fn of(lattice: &LatticeSpec, lct: &LctParams, s: f64, r: f64) -> Self {
        Self {
            m: lattice.n as i64 - leading_n(s, r, lattice.beta),
            q: lattice.k as i64 - leading_h(lct.a, lattice.beta, lattice.n, lattice.h),
        }
    }
}

/// Three-term right-hand side of the local discretization bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationBound {
    pub m: i64,
    pub q: i64,
    pub term_truncation: f64,
    pub term_noise: f64,
    pub term_quadrature: f64,
    pub total: f64,
}

/// Bound on `|f_ξ(p + ξ) − G_p(ξ)|`, uniform in `p ∈ [−s, s]`.
#[allow(clippy::too_many_arguments)]
pub fn local_error_bound(
    f: &GaussianSisSignal,
    lct: &LctParams,
    lattice: &LatticeSpec,
    s: f64,
    r: f64,
    margins: Margins,
    xi: f64,
    eta_inf: f64,
    dc: &DecayConstants,
) -> Result<DiscretizationBound> {
    let actual = Margins::of(lattice, lct, s, r);
    if actual != margins || margins.m < 0 || margins.q < 0 {
        return Err(Error::Consistency(format!(
            "N = {}, H = {} decompose into m = {}, q = {}, expected nonnegative {:?}",
            lattice.n, lattice.k, actual.m, actual.q, margins
        )));
    }
    let (sigma, beta, h, b) = (f.sigma(), f.beta(), lattice.h, lct.b);
    let (k, nu) = (dc.k, dc.nu);
    let c2 = f.coeff_sup().powi(2);
    let rf = riesz_factor(sigma, beta);
    let tail = 1.0 + 2.0 / (nu * beta);
    let front = k * (xi * xi / (4.0 * sigma * sigma)).exp();
    let (m, q) = (margins.m as f64, margins.q as f64);
    let term_truncation =
        front * 4.0 * PI.sqrt() * sigma / (nu * beta) * c2 * rf * (-nu * beta * m / 2.0).exp();
    let term_noise = front * 2.0 * SQRT_2 * h * tail * eta_inf;
    let aliasing = 2.0 * (1.0 + xi.abs() / sigma).exp() / (b / (sigma * h)).exp_m1();
    let cutoff = (-2.0 * PI * PI * sigma * sigma * h * h * q * q / (b * b)).exp();
    let term_quadrature = front * 2.0 * PI.sqrt() * sigma * c2 * rf * tail * (aliasing + cutoff);
    Ok(DiscretizationBound {
        m: margins.m,
        q: margins.q,
        term_truncation,
        term_noise,
        term_quadrature,
        total: term_truncation + term_noise + term_quadrature,
    })
}

/// Trapezoid-vs-integral bound `2M(W)/(e^{2πζ/h} − 1)` plus the cutoff term,
/// with `ζ = b/(2πσ)` and `M(W) ≤ √(π/2) σ ‖c‖² (1+2√(2π)σ/β)² e^{1+|ξ|/σ}`.
pub fn trapezoid_error_bound(f: &GaussianSisSignal, lct: &LctParams, xi: f64, h: f64, q: f64) -> f64 {
    let (sigma, beta, b) = (f.sigma(), f.beta(), lct.b);
    let c2 = f.coeff_sup().powi(2);
    let scale = (PI / 2.0).sqrt() * sigma * c2 * riesz_factor(sigma, beta);
    scale
        * (2.0 * (1.0 + xi.abs() / sigma).exp() / (b / (sigma * h)).exp_m1()
            + (-2.0 * PI * PI * sigma * sigma * h * h * q * q / (b * b)).exp())
}

/// One inequality of a parameter check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub lhs: f64,
    pub relation: String,
    pub rhs: f64,
    pub pass: bool,
}

impl Condition {
    pub(crate) fn ge(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            relation: ">=".into(),
            rhs,
            pass: lhs >= rhs,
        }
    }

    pub(crate) fn le(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            relation: "<=".into(),
            rhs,
            pass: lhs <= rhs,
        }
    }
}

/// Inputs shared by planning and post-hoc condition checks.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance<'a> {
    pub f: &'a GaussianSisSignal,
    pub lct: &'a LctParams,
    pub gamma: f64,
    pub s: f64,
    pub r: f64,
    pub epsilon: f64,
    pub dc: &'a DecayConstants,
}

impl Tolerance<'_> {
    /// Certified `‖f‖_{L∞(I)}`.
    pub fn f_norm(&self) -> f64 {
        self.f
            .sup_norm_on_interval(IntervalSpec { s: self.s }, 64)
            .certified
    }

    /// `min{γ², γ³/‖f‖}`.
    pub fn max_epsilon(&self) -> f64 {
        let g = self.gamma;
        (g * g).min(g.powi(3) / self.f_norm())
    }

    pub fn kappa(&self) -> f64 {
        self.f_norm().max(1.0) / self.gamma.min(self.gamma * self.gamma)
    }

    fn log_arg(&self, d: f64) -> f64 {
        16.0 * self.s * d * self.f.coeff_sup().powi(2) / (self.r * self.epsilon)
    }

    fn validate(&self) -> Result<DConstants> {
        let (s, r, eps, gamma) = (self.s, self.r, self.epsilon, self.gamma);
        if !(s > 0.0 && r > 0.0 && gamma > 0.0) {
            return Err(Error::Validation(format!(
                "planning needs s, r, gamma > 0 (s={s}, r={r}, gamma={gamma})"
            )));
        }
        if r > 2.0 * s {
            return Err(Error::Validation(format!("r = {r} exceeds 2s = {}", 2.0 * s)));
        }
        let cap = self.max_epsilon();
        if !(eps > 0.0 && eps <= cap) {
            return Err(Error::InfeasibleTolerance(format!(
                "epsilon = {eps:e} must lie in (0, min(gamma^2, gamma^3/|f|_inf)] = (0, {cap:e}]"
            )));
        }
        Ok(d_constants(self.f.sigma(), self.f.beta(), r, self.dc))
    }

    /// Right-hand side of the condition on `N`.
    pub fn n_rhs(&self, d: &DConstants) -> f64 {
        let beta = self.f.beta();
        leading_n(self.s, self.r, beta) as f64
            + 2.0 / (self.dc.nu * beta) * self.log_arg(d.d1).ln()
    }

    /// Right-hand side of the condition on `1/h`.
    pub fn inv_h_rhs(&self, d: &DConstants) -> f64 {
        self.f.sigma() / self.lct.b * (self.log_arg(d.d2) + 1.0).ln()
    }

    /// Right-hand side of the condition on `H`.
    pub fn h_count_rhs(&self, d: &DConstants, n: usize, h: f64) -> f64 {
        let (sigma, b) = (self.f.sigma(), self.lct.b);
        leading_h(self.lct.a, self.f.beta(), n, h) as f64
            + b / (SQRT_2 * PI * sigma * h) * self.log_arg(d.d3).ln().max(0.0).sqrt()
    }

    /// `rε / (16 s h D4)`.
    pub fn eta_cap(&self, d: &DConstants, h: f64) -> f64 {
        self.r * self.epsilon / (16.0 * self.s * h * d.d4)
    }

    /// Every hypothesis of the robustness theorem for a given lattice.
    pub fn check(&self, lattice: &LatticeSpec, eta_inf: f64) -> Result<Vec<Condition>> {
        let d = self.validate()?;
        let mut out = vec![
            Condition::le("epsilon", self.epsilon, self.max_epsilon()),
            Condition::le("r", self.r, 2.0 * self.s),
            Condition::ge("N", lattice.n as f64, self.n_rhs(&d)),
            Condition::ge("N_margin", lattice.n as f64, leading_n(self.s, self.r, lattice.beta) as f64),
            Condition::ge("1/h", 1.0 / lattice.h, self.inv_h_rhs(&d)),
            Condition::ge("H", lattice.k as f64, self.h_count_rhs(&d, lattice.n, lattice.h)),
        ];
        out.push(Condition::le("eta_inf", eta_inf, self.eta_cap(&d, lattice.h)));
        Ok(out)
    }

    /// Smallest `N, H` and largest dyadic `h` meeting every condition.
    pub fn plan(&self) -> Result<PlannedParameters> {
        let d = self.validate()?;
        let beta = self.f.beta();
        let lead_n = leading_n(self.s, self.r, beta);
        let n = robust_ceil(self.n_rhs(&d)).max(lead_n) as usize;
        let need = self.inv_h_rhs(&d);
        let h = (0..=12)
            .map(|j| 0.5f64.powi(j))
            .find(|h| 1.0 / h >= need)
            .ok_or_else(|| {
                Error::InfeasibleTolerance(format!("1/h must be at least {need:.3}, beyond h = 2^-12"))
            })?;
        let lead_h = leading_h(self.lct.a, beta, n, h);
        let k = robust_ceil(self.h_count_rhs(&d, n, h)).max(lead_h) as usize;
        let lattice = LatticeSpec::new(n, k, h, beta)?;
        let eta_max = self.eta_cap(&d, h);
        let conditions = self.check(&lattice, 0.0)?;
        Ok(PlannedParameters {
            epsilon: self.epsilon,
            lattice,
            eta_max,
            gamma: self.gamma,
            gamma_tilde: 1.5 * self.gamma * self.gamma,
            kappa: self.kappa(),
            f_norm: self.f_norm(),
            leading_n: lead_n,
            leading_h: lead_h,
            d,
            conditions,
        })
    }
}

/// Output of [`Tolerance::plan`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedParameters {
    pub epsilon: f64,
    pub lattice: LatticeSpec,
    pub eta_max: f64,
    pub gamma: f64,
    pub gamma_tilde: f64,
    pub kappa: f64,
    pub f_norm: f64,
    pub leading_n: i64,
    pub leading_h: i64,
    pub d: DConstants,
    pub conditions: Vec<Condition>,
}

impl PlannedParameters {
    /// `(33/16) εκ`, the noiseless guarantee.
    pub fn noiseless_bound(&self) -> f64 {
        33.0 / 16.0 * self.epsilon * self.kappa
    }

    /// `(11/4) εκ`, the guarantee under the noise cap.
    pub fn noisy_bound(&self) -> f64 {
        11.0 / 4.0 * self.epsilon * self.kappa
    }
}

/// Convenience wrapper around [`Tolerance::plan`].
#[allow(clippy::too_many_arguments)]
pub fn plan_parameters(
    f: &GaussianSisSignal,
    gamma: f64,
    s: f64,
    r: f64,
    epsilon: f64,
    lct: &LctParams,
    dc: &DecayConstants,
) -> Result<PlannedParameters> {
    Tolerance {
        f,
        lct,
        gamma,
        s,
        r,
        epsilon,
        dc,
    }
    .plan()
}

/// `γ` with `γ̃ = (3/2)γ²`.
pub fn gamma_from_threshold(gamma_tilde: f64) -> f64 {
    (2.0 * gamma_tilde / 3.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConstants {
    pub zeta: f64,
    pub local_constant: f64,
    pub global_constant: f64,
    #[serde(rename = "J")]
    pub j: usize,
    pub r: f64,
    pub gamma: f64,
}

/// Local and global stability prefactors.
///
/// `ζ` is evaluated with `|f(p)| ≥ γ` and `|g(p)| ≥ γ/2`, giving
/// `ζ ≤ (2/γ)(e^{r²/4σ²} + 2‖f‖/(3γ))`.
#[allow(clippy::too_many_arguments)]
pub fn stability_constants(
    f_norm: f64,
    g_norm: f64,
    gamma: f64,
    j: usize,
    r: f64,
    sigma: f64,
    c: f64,
) -> Result<StabilityConstants> {
    if !(gamma > 0.0 && r > 0.0 && sigma > 0.0 && c > 0.0) || j < 2 {
        return Err(Error::Validation(format!(
            "stability constants need positive inputs and J >= 2 (gamma={gamma}, r={r}, J={j})"
        )));
    }
    let growth = (r * r / (4.0 * sigma * sigma)).exp();
    let zeta = 2.0 / gamma * (growth + 2.0 * f_norm / (3.0 * gamma));
    let global_constant = 16.0 * SQRT_2 / 3.0
        * j.div_ceil(2) as f64
        * growth
        * c
        * (f_norm + g_norm).max(1.0)
        / gamma.min(gamma * gamma);
    Ok(StabilityConstants {
        zeta,
        local_constant: SQRT_2 * zeta * c,
        global_constant,
        j,
        r,
        gamma,
    })
}

/// Rows needed so that omitted rows of the mixed norm are below `1e-12`.
pub fn mixed_norm_n_range(f: &GaussianSisSignal, g: &GaussianSisSignal) -> usize {
    let radius = f.support_radius().max(g.support_radius()) + 12.0 * f.sigma().max(g.sigma());
    (2.0 * radius / f.beta()).ceil() as usize
}

/// `sup_{|n| ≤ n_range} ∫ |M_f(βn/2, t) − M_g(βn/2, t)| dt`.
pub fn mixed_norm_discrepancy(
    f: &GaussianSisSignal,
    g: &GaussianSisSignal,
    lct: &LctParams,
    n_range: usize,
    quad: &AdaptiveSpec,
) -> Result<f64> {
    lct.validate()?;
    if f.beta() != g.beta() || f.sigma() != g.sigma() {
        return Err(Error::Validation("signals live in different spaces".into()));
    }
    let sigma = f.sigma();
    let half = lct.b * (41.5f64 / 2.0).sqrt() / (PI * sigma);
    let nr = n_range as i64;
    let rows: Vec<f64> = (-nr..=nr)
        .into_par_iter()
        .map(|n| {
            let x = 0.5 * f.beta() * n as f64;
            let rf = MagnitudeRow::new(f, lct, x);
            let rg = MagnitudeRow::new(g, lct, x);
            let centre = lct.a * x;
            adaptive_real(
                |t| (rf.eval(t).unwrap_or(f64::NAN) - rg.eval(t).unwrap_or(f64::NAN)).abs(),
                centre - half,
                centre + half,
                quad,
            )
        })
        .collect();
    if rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::Magnitude("magnitude assembly failed inside the mixed norm".into()));
    }
    Ok(rows.into_iter().fold(0.0, f64::max))
}

/// Everything the `bounds` command reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub sigma: f64,
    pub beta: f64,
    pub lct: LctParams,
    pub s: f64,
    pub r: f64,
    pub decay: DecayConstants,
    #[serde(rename = "C")]
    pub c_sigma_beta: f64,
    pub d: DConstants,
    pub gamma: f64,
    pub gamma_tilde: f64,
    pub epsilon: Option<f64>,
    pub kappa: f64,
    pub f_norm: f64,
    pub leading_n: i64,
    pub leading_h: i64,
    /// True for `a = 0`, where the leading term of the `H` condition vanishes.
    pub leading_h_vanishes: bool,
    pub lattice: LatticeSpec,
    pub eta_max: Option<f64>,
    pub conditions: Vec<Condition>,
    pub local_bound: Option<DiscretizationBound>,
    pub stability: Option<StabilityConstants>,
    pub notes: Vec<String>,
}

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn robust_ceil_snaps() {
        assert_eq!(robust_ceil(1440.0000000001), 1440);
        assert_eq!(robust_ceil(81.5), 82);
        assert_eq!(robust_ceil(3.0), 3);
        assert_eq!(robust_ceil(3.01), 4);
    }

    #[test]
    fn full_scale_leading_terms() {
        assert_eq!(leading_n(40.0, 1.5, 1.0), 82);
        assert_eq!(leading_h(2.0, 1.0, 90, 1.0 / 16.0), 1440);
        assert_eq!(leading_h(0.0, 1.0, 90, 1.0 / 16.0), 0);
    }
}
