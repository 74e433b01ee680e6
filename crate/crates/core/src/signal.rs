//! Complex Gaussian shift-invariant signals `f = Σ cₙ φ(· − βn)`.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finitely supported signal in the Gaussian shift-invariant space.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSisSignal {
    coeffs: BTreeMap<i64, Complex64>,
    beta: f64,
    sigma: f64,
}

/// Interval `[-s, s]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSpec {
    pub s: f64,
}

impl IntervalSpec {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Validation(format!("interval half-width must be positive, got {s}")));
        }
        Ok(Self { s })
    }
}

/// Grid and certified sup norms over an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupNorm {
    pub grid_max: f64,
    /// `grid_max` plus the Lipschitz slack over half a grid step.
    pub certified: f64,
}

impl GaussianSisSignal {
    pub fn new(coeffs: BTreeMap<i64, Complex64>, beta: f64, sigma: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite() && sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Validation(format!(
                "beta and sigma must be positive, got beta={beta}, sigma={sigma}"
            )));
        }
        if coeffs.values().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::Validation("non-finite coefficient".into()));
        }
        Ok(Self { coeffs, beta, sigma })
    }

    pub fn from_pairs<I>(pairs: I, beta: f64, sigma: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (i64, Complex64)>,
    {
        Self::new(pairs.into_iter().collect(), beta, sigma)
    }

    pub fn zero(beta: f64, sigma: f64) -> Result<Self> {
        Self::new(BTreeMap::new(), beta, sigma)
    }

    pub fn coeffs(&self) -> &BTreeMap<i64, Complex64> {
        &self.coeffs
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `‖c‖_∞`.
    pub fn coeff_sup(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `(min n, max n)` over stored coefficients.
    pub fn support(&self) -> Option<(i64, i64)> {
        let lo = *self.coeffs.keys().next()?;
        let hi = *self.coeffs.keys().next_back()?;
        Some((lo, hi))
    }

    /// Largest `|βn|` over stored coefficients.
    pub fn support_radius(&self) -> f64 {
        self.support()
            .map(|(lo, hi)| self.beta * lo.abs().max(hi.abs()) as f64)
            .unwrap_or(0.0)
    }

    /// Multiplies every coefficient by `z`.
    pub fn scaled(&self, z: Complex64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|(&n, &c)| (n, c * z)).collect(),
            beta: self.beta,
            sigma: self.sigma,
        }
    }

    /// Coefficient-wise sum; both signals must share `β` and `σ`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.beta != other.beta || self.sigma != other.sigma {
            return Err(Error::Validation("signals live in different spaces".into()));
        }
        let mut coeffs = self.coeffs.clone();
        for (&n, &c) in &other.coeffs {
            *coeffs.entry(n).or_default() += c;
        }
        Ok(Self { coeffs, ..*self })
    }

    /// `f(t) = Σ cₙ e^{-(t−βn)²/2σ²}`.
    pub fn eval(&self, t: f64) -> Complex64 {
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        self.coeffs
            .iter()
            .map(|(&n, &c)| {
                let d = t - self.beta * n as f64;
                c * (-d * d * inv).exp()
            })
            .sum()
    }

    /// `f_ξ(t) = f(t − ξ) · conj f(t)`.
    pub fn tensor_product(&self, xi: f64, t: f64) -> Complex64 {
        self.eval(t - xi) * self.eval(t).conj()
    }

    /// Max of `|f|` on a uniform grid over `[-s, s]` with `grid_density`
    /// points per unit of `σ`, plus a certified upper bound.
    pub fn sup_norm_on_interval(&self, interval: IntervalSpec, grid_density: usize) -> SupNorm {
        let s = interval.s;
        let per_unit = grid_density.max(1) as f64 / self.sigma;
        let cells = ((2.0 * s * per_unit).ceil() as usize).max(1);
        let step = 2.0 * s / cells as f64;
        let grid_max = (0..=cells)
            .map(|i| self.eval(-s + step * i as f64).norm())
            .fold(0.0, f64::max);
        SupNorm {
            grid_max,
            certified: grid_max + self.lipschitz() * 0.5 * step,
        }
    }

    /// Lipschitz constant `‖c‖_∞ · #coeffs / (σ√e)`.
    pub fn lipschitz(&self) -> f64 {
        self.coeff_sup() * self.coeffs.len() as f64 / (self.sigma * std::f64::consts::E.sqrt())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&SignalFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SignalFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Serialized form `{beta, sigma, coeffs: [[n, re, im], ...]}`.
#[derive(Debug, Serialize, Deserialize)]
struct SignalFile {
    beta: f64,
    sigma: f64,
    coeffs: Vec<(i64, f64, f64)>,
}

impl From<&GaussianSisSignal> for SignalFile {
    fn from(f: &GaussianSisSignal) -> Self {
        Self {
            beta: f.beta,
            sigma: f.sigma,
            coeffs: f.coeffs.iter().map(|(&n, c)| (n, c.re, c.im)).collect(),
        }
    }
}

impl TryFrom<SignalFile> for GaussianSisSignal {
    type Error = Error;

    fn try_from(file: SignalFile) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        for (n, re, im) in file.coeffs {
            if coeffs.insert(n, Complex64::new(re, im)).is_some() {
                return Err(Error::Format(format!("duplicate coefficient index {n}")));
            }
        }
        Self::new(coeffs, file.beta, file.sigma)
    }
}

/// Coefficients `u + iv`, `u, v ~ U[-amplitude, amplitude]` for `|n| ≤ n0`.
pub fn random_signal(n0: u32, amplitude: f64, seed: u64, beta: f64, sigma: f64) -> Result<GaussianSisSignal> {
    if !(amplitude > 0.0) {
        return Err(Error::Validation(format!("amplitude must be positive, got {amplitude}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n0 = n0 as i64;
    let coeffs = (-n0..=n0)
        .map(|n| {
            let re = rng.gen_range(-amplitude..=amplitude);
            let im = rng.gen_range(-amplitude..=amplitude);
            (n, Complex64::new(re, im))
        })
        .collect();
    GaussianSisSignal::new(coeffs, beta, sigma)
}
