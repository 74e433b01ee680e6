//! Numerical integration helpers.
//!
//! Two families live here: composite Gauss–Legendre panels (fixed work, used
//! by the transform oracle) and a globally adaptive bisection scheme built on
//! the same 16-point rule (used wherever an integral over the real line must
//! be resolved to a prescribed absolute tolerance).

use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

fn legendre16() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        GaussLegendre::new(16)
            .expect("degree 16 is valid")
            .as_node_weight_pairs()
            .to_vec()
    })
}

fn legendre_rule(nodes: usize) -> Vec<(f64, f64)> {
    if nodes == 16 {
        return legendre16().to_vec();
    }
    GaussLegendre::new(nodes.max(2))
        .expect("degree >= 2")
        .as_node_weight_pairs()
        .to_vec()
}

fn gl_on<F>(rule: &[(f64, f64)], a: f64, b: f64, f: &F) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = Complex64::new(0.0, 0.0);
    for &(x, w) in rule {
        acc += f(mid + half * x) * w;
    }
    acc * half
}

/// Composite Gauss–Legendre rule on equal panels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelRule {
    /// Requested panel width; the interval is split into the nearest number
    /// of equal panels not wider than this.
    pub panel_width: f64,
    pub nodes_per_panel: usize,
}

impl Default for PanelRule {
    fn default() -> Self {
        Self {
            panel_width: 0.1,
            nodes_per_panel: 16,
        }
    }
}

impl PanelRule {
    pub fn integrate<F>(&self, a: f64, b: f64, f: F) -> Complex64
    where
        F: Fn(f64) -> Complex64,
    {
        if b <= a {
            return Complex64::new(0.0, 0.0);
        }
        let rule = legendre_rule(self.nodes_per_panel);
        let panels = ((b - a) / self.panel_width).ceil().max(1.0) as usize;
        let width = (b - a) / panels as f64;
        (0..panels)
            .map(|i| {
                let lo = a + i as f64 * width;
                gl_on(&rule, lo, lo + width, &f)
            })
            .sum()
    }
}

/// Tolerances for [`adaptive`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
    /// Number of equal panels the interval is cut into before refinement.
    pub initial_panels: usize,
}

impl Default for AdaptiveSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            max_depth: 30,
            initial_panels: 16,
        }
    }
}

impl AdaptiveSpec {
    pub fn with_abs_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }
}

/// Adaptive bisection with a 16-point Gauss–Legendre rule.
///
/// A panel is accepted when the rule on the panel and the sum over its two
/// halves agree within the panel's share of the tolerance.
pub fn adaptive<F>(f: F, a: f64, b: f64, spec: &AdaptiveSpec) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    if b <= a {
        return Complex64::new(0.0, 0.0);
    }
    let rule = legendre16();
    let panels = spec.initial_panels.max(1);
    let width = (b - a) / panels as f64;
    let coarse: Vec<Complex64> = (0..panels)
        .map(|i| {
            let lo = a + i as f64 * width;
            gl_on(rule, lo, lo + width, &f)
        })
        .collect();
    let scale: f64 = coarse.iter().map(|z| z.norm()).sum();
    let tol = spec.abs_tol.max(spec.rel_tol * scale);
    let mut total = Complex64::new(0.0, 0.0);
    for (i, whole) in coarse.into_iter().enumerate() {
        let lo = a + i as f64 * width;
        total += refine(&f, rule, lo, lo + width, whole, tol / panels as f64, spec.max_depth);
    }
    total
}

fn refine<F>(
    f: &F,
    rule: &[(f64, f64)],
    a: f64,
    b: f64,
    whole: Complex64,
    tol: f64,
    depth: u32,
) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    let mid = 0.5 * (a + b);
    let left = gl_on(rule, a, mid, f);
    let right = gl_on(rule, mid, b, f);
    let split = left + right;
    if depth == 0 || (split - whole).norm() <= tol {
        return split;
    }
    refine(f, rule, a, mid, left, 0.5 * tol, depth - 1)
        + refine(f, rule, mid, b, right, 0.5 * tol, depth - 1)
}

/// Adaptive integration of a real integrand.
pub fn adaptive_real<F>(f: F, a: f64, b: f64, spec: &AdaptiveSpec) -> f64
where
    F: Fn(f64) -> f64,
{
    adaptive(|x| Complex64::new(f(x), 0.0), a, b, spec).re
}

/// Truncated trapezoidal sum `h * sum_{k=-H}^{H} f(h k)`.
pub fn trapezoid<F>(h: f64, half_count: usize, f: F) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    let n = half_count as i64;
    let sum: Complex64 = (-n..=n).map(|k| f(h * k as f64)).sum();
    sum * h
}
