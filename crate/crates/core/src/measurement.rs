//! Sampling lattice, phaseless data and dataset files.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::GaussianSisSignal;
use crate::stlct::{LctParams, MagnitudeRow};

/// Lattice `(β/2)·{−N..N} × h·{−H..H}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "H")]
    pub k: usize,
    pub h: f64,
    pub beta: f64,
}

impl LatticeSpec {
    pub fn new(n: usize, k: usize, h: f64, beta: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::Validation(format!(
                "lattice needs h > 0 and beta > 0, got h={h}, beta={beta}"
            )));
        }
        Ok(Self { n, k, h, beta })
    }

    pub fn rows(&self) -> usize {
        2 * self.n + 1
    }

    pub fn cols(&self) -> usize {
        2 * self.k + 1
    }

    /// Time position `βn/2` of row index `n ∈ [−N, N]`.
    pub fn x(&self, n: i64) -> f64 {
        0.5 * self.beta * n as f64
    }

    /// Frequency position `hk`.
    pub fn t(&self, k: i64) -> f64 {
        self.h * k as f64
    }
}

/// Phaseless samples `Y_{n,k} = M_f(βn/2, hk) + η_{n,k}`; entry `(n, k)` is
/// stored at `(n + N, k + H)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub lattice: LatticeSpec,
    pub sigma: f64,
    pub lct: LctParams,
    pub values: Array2<f64>,
    pub noise_level: f64,
    pub seed: Option<u64>,
    /// Realized `‖η‖_∞` (max absolute row sum) of the added noise.
    pub noise_inf_norm: f64,
}

impl MeasurementSet {
    pub fn get(&self, n: i64, k: i64) -> f64 {
        let (nn, kk) = (self.lattice.n as i64, self.lattice.k as i64);
        self.values[[(n + nn) as usize, (k + kk) as usize]]
    }

    /// Same lattice with different sample values.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        if values.dim() != self.values.dim() {
            return Err(Error::Validation(format!(
                "value matrix shape {:?} differs from lattice {:?}",
                values.dim(),
                self.values.dim()
            )));
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }
}

/// `Y_{n,k} = M_f(βn/2, hk)`, rows evaluated in parallel.
pub fn sample_exact(f: &GaussianSisSignal, lct: &LctParams, lat: &LatticeSpec) -> Result<MeasurementSet> {
    lct.validate()?;
    if (lat.beta - f.beta()).abs() > 0.0 {
        return Err(Error::Validation(format!(
            "lattice beta {} differs from signal beta {}",
            lat.beta,
            f.beta()
        )));
    }
    let rows: Vec<Vec<f64>> = (-(lat.n as i64)..=lat.n as i64)
        .into_par_iter()
        .map(|n| {
            let row = MagnitudeRow::new(f, lct, lat.x(n));
            (-(lat.k as i64)..=lat.k as i64)
                .map(|k| row.eval(lat.t(k)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((lat.rows(), lat.cols()), flat)
        .map_err(|e| Error::Validation(e.to_string()))?;
    Ok(MeasurementSet {
        lattice: *lat,
        sigma: f.sigma(),
        lct: *lct,
        values,
        noise_level: 0.0,
        seed: None,
        noise_inf_norm: 0.0,
    })
}

/// I.i.d. `N(0, δ²)` noise matrix from a ChaCha8 stream, row-major.
pub fn noise_matrix(rows: usize, cols: usize, delta: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        delta * z
    })
}

/// Adds i.i.d. Gaussian noise with standard deviation `delta`. Values may
/// become negative.
pub fn add_noise(m: &MeasurementSet, delta: f64, seed: u64) -> Result<MeasurementSet> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Validation(format!("noise level must be >= 0, got {delta}")));
    }
    let (rows, cols) = m.values.dim();
    let eta = noise_matrix(rows, cols, delta, seed);
    let mut out = m.clone();
    out.values = &m.values + &eta;
    out.noise_level = delta;
    out.seed = Some(seed);
    out.noise_inf_norm = matrix_inf_norm(&eta);
    Ok(out)
}

/// Adds Gaussian noise rescaled so that its `‖η‖_∞` equals `target`.
pub fn add_noise_with_inf_norm(m: &MeasurementSet, target: f64, seed: u64) -> Result<MeasurementSet> {
    if !(target >= 0.0 && target.is_finite()) {
        return Err(Error::Validation(format!("noise cap must be >= 0, got {target}")));
    }
    let (rows, cols) = m.values.dim();
    let unit = noise_matrix(rows, cols, 1.0, seed);
    let norm = matrix_inf_norm(&unit);
    let scale = if norm > 0.0 { target / norm } else { 0.0 };
    let mut out = m.clone();
    out.values = &m.values + &(&unit * scale);
    out.noise_level = scale;
    out.seed = Some(seed);
    out.noise_inf_norm = matrix_inf_norm(&(&unit * scale));
    Ok(out)
}

/// `‖B‖_∞ = max_n Σ_k |B_{n,k}|`.
pub fn matrix_inf_norm(b: &Array2<f64>) -> f64 {
    b.axis_iter(Axis(0))
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// JSON header of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub beta: f64,
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "H")]
    pub k: usize,
    pub h: f64,
    pub delta: f64,
    pub seed: Option<u64>,
    pub signal_ref: Option<String>,
    #[serde(default)]
    pub noise_inf_norm: f64,
}

impl DatasetHeader {
    pub fn of(m: &MeasurementSet, signal_ref: Option<String>) -> Self {
        Self {
            beta: m.lattice.beta,
            sigma: m.sigma,
            a: m.lct.a,
            b: m.lct.b,
            c: m.lct.c,
            d: m.lct.d,
            n: m.lattice.n,
            k: m.lattice.k,
            h: m.lattice.h,
            delta: m.noise_level,
            seed: m.seed,
            signal_ref,
            noise_inf_norm: m.noise_inf_norm,
        }
    }

    fn into_parts(self) -> Result<(LatticeSpec, LctParams, f64)> {
        let lat = LatticeSpec::new(self.n, self.k, self.h, self.beta)?;
        let lct = LctParams::new(self.a, self.b, self.c, self.d)?;
        if !(self.sigma > 0.0) {
            return Err(Error::Format(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok((lat, lct, self.sigma))
    }
}

/// Payload encoding of a dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    /// Header line followed by little-endian binary64 values.
    Binary,
    /// `# {header}` line, then `n,k,Y` rows.
    Csv,
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::Csv,
            _ => Self::Binary,
        }
    }
}

pub fn write_dataset(path: &Path, m: &MeasurementSet, signal_ref: Option<String>) -> Result<()> {
    let header = serde_json::to_string(&DatasetHeader::of(m, signal_ref))?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    match DatasetFormat::from_path(path) {
        DatasetFormat::Binary => {
            writeln!(out, "{header}")?;
            for v in m.values.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        DatasetFormat::Csv => {
            writeln!(out, "# {header}")?;
            writeln!(out, "n,k,Y")?;
            let (nn, kk) = (m.lattice.n as i64, m.lattice.k as i64);
            for ((i, j), v) in m.values.indexed_iter() {
                // `{:?}` prints the shortest decimal that round-trips
                writeln!(out, "{},{},{:?}", i as i64 - nn, j as i64 - kk, v)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<(MeasurementSet, DatasetHeader)> {
    let mut input = BufReader::new(std::fs::File::open(path)?);
    let mut first = String::new();
    input.read_line(&mut first)?;
    let csv = first.starts_with('#');
    let header: DatasetHeader = serde_json::from_str(first.trim_start_matches('#').trim())?;
    let (lat, lct, sigma) = header.clone().into_parts()?;
    let (rows, cols) = (lat.rows(), lat.cols());
    let mut values = Array2::<f64>::zeros((rows, cols));
    if csv {
        let mut line = String::new();
        input.read_line(&mut line)?;
        if line.trim() != "n,k,Y" {
            return Err(Error::Format(format!("unexpected CSV column line {:?}", line.trim())));
        }
        let mut count = 0usize;
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut field = || {
                parts
                    .next()
                    .ok_or_else(|| Error::Format(format!("short CSV row {line:?}")))
            };
            let n: i64 = field()?.trim().parse().map_err(|e| Error::Format(format!("{e}")))?;
            let k: i64 = field()?.trim().parse().map_err(|e| Error::Format(format!("{e}")))?;
            let y: f64 = field()?.trim().parse().map_err(|e| Error::Format(format!("{e}")))?;
            let (i, j) = (n + lat.n as i64, k + lat.k as i64);
            if i < 0 || j < 0 || i as usize >= rows || j as usize >= cols {
                return Err(Error::Format(format!("index ({n},{k}) outside lattice")));
            }
            values[[i as usize, j as usize]] = y;
            count += 1;
        }
        if count != rows * cols {
            return Err(Error::Format(format!("expected {} rows, found {count}", rows * cols)));
        }
    } else {
        let mut bytes = Vec::with_capacity(rows * cols * 8);
        input.read_to_end(&mut bytes)?;
        if bytes.len() != rows * cols * 8 {
            return Err(Error::Format(format!(
                "payload has {} bytes, expected {}",
                bytes.len(),
                rows * cols * 8
            )));
        }
        for (v, chunk) in values.iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite sample value".into()));
    }
    let m = MeasurementSet {
        lattice: lat,
        sigma,
        lct,
        values,
        noise_level: header.delta,
        seed: header.seed,
        noise_inf_norm: header.noise_inf_norm,
    };
    Ok((m, header))
}
