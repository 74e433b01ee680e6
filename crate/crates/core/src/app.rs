//! Experiment configuration and the command implementations behind the `stlct` binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    d_constants, leading_h, leading_n, local_error_bound, plan_parameters, stability_constants, BoundReport,
    Condition, Margins, PlannedParameters, Tolerance,
};
use crate::error::{Error, Result};
use crate::measurement::{
    add_noise, add_noise_with_inf_norm, read_dataset, sample_exact, write_dataset, LatticeSpec, MeasurementSet,
};
use crate::reconstruction::{aligned_error, evaluation_grid, Reconstructor};
use crate::signal::{random_signal, GaussianSisSignal};
use crate::special::{c_sigma_beta, estimate_decay_constants, DualGenerator};
use crate::stlct::LctParams;
use crate::verify::{self, DatasetCheck, VerifySummary};

pub const OUT_DIR_ENV: &str = "STLCT_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalSpec {
    Random {
        n0: u32,
        amplitude: f64,
        seed: u64,
        beta: f64,
        sigma: f64,
    },
    File {
        file: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    /// Rescale the drawn noise so its max row sum equals this value.
    #[serde(default)]
    pub eta_inf: Option<f64>,
    /// Rescale the drawn noise to the planned noise cap (tolerance mode only).
    #[serde(default)]
    pub scale_to_cap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub s: f64,
    pub r: f64,
    #[serde(default)]
    pub gamma_tilde: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Anchor scan step; defaults to `r/64`.
    #[serde(default)]
    pub scan_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Dataset file name inside the output directory; `.csv` selects the text format.
    #[serde(default = "default_dataset")]
    pub dataset: String,
    /// Evaluation points per unit length for the reconstruction grid.
    #[serde(default = "default_density")]
    pub grid_density: usize,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_dataset() -> String {
    "dataset.bin".into()
}

fn default_density() -> usize {
    32
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            dataset: default_dataset(),
            grid_density: default_density(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub signal: SignalSpec,
    pub lct: LctParams,
    #[serde(default)]
    pub lattice: Option<LatticeSpec>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    pub algorithm: AlgorithmSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Marks a configuration that only runs with `--full`.
    #[serde(default)]
    pub full_scale: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.lattice, &self.epsilon) {
            (Some(_), Some(_)) => {
                return Err(Error::Validation("give either lattice or epsilon, not both".into()))
            }
            (None, None) => return Err(Error::Validation("give one of lattice or epsilon".into())),
            _ => {}
        }
        self.lct.validate()?;
        let a = &self.algorithm;
        if !(a.s > 0.0 && a.r > 0.0) {
            return Err(Error::Validation(format!("s and r must be positive (s={}, r={})", a.s, a.r)));
        }
        if a.gamma.is_none() && a.gamma_tilde.is_none() {
            return Err(Error::Validation("give gamma or gamma_tilde".into()));
        }
        if let Some(n) = &self.noise {
            if !(n.delta >= 0.0) || n.eta_inf.is_some_and(|v| !(v >= 0.0)) {
                return Err(Error::Validation("noise levels must be nonnegative".into()));
            }
            if n.scale_to_cap && (self.epsilon.is_none() || n.eta_inf.is_some()) {
                return Err(Error::Validation(
                    "scale_to_cap needs epsilon planning and excludes eta_inf".into(),
                ));
            }
        }
        if self.output.grid_density == 0 {
            return Err(Error::Validation("grid_density must be positive".into()));
        }
        Ok(())
    }

    /// `(γ, γ̃)` with `γ̃ = (3/2)γ²` filling whichever is missing.
    pub fn gammas(&self) -> (f64, f64) {
        let a = &self.algorithm;
        match (a.gamma, a.gamma_tilde) {
            (Some(g), Some(gt)) => (g, gt),
            (Some(g), None) => (g, 1.5 * g * g),
            (None, Some(gt)) => ((2.0 * gt / 3.0).sqrt(), gt),
            (None, None) => (f64::NAN, f64::NAN),
        }
    }

    pub fn scan_step(&self) -> f64 {
        self.algorithm.scan_step.unwrap_or(self.algorithm.r / 64.0)
    }

    pub fn signal(&self) -> Result<GaussianSisSignal> {
        match &self.signal {
            SignalSpec::Random {
                n0,
                amplitude,
                seed,
                beta,
                sigma,
            } => random_signal(*n0, *amplitude, *seed, *beta, *sigma),
            SignalSpec::File { file } => GaussianSisSignal::load(file),
        }
    }

    /// Lattice from the config or from the tolerance planner.
    pub fn resolve_lattice(&self, f: &GaussianSisSignal) -> Result<(LatticeSpec, Option<PlannedParameters>)> {
        if let Some(l) = self.lattice {
            if l.beta != f.beta() {
                return Err(Error::Validation(format!(
                    "lattice beta {} differs from signal beta {}",
                    l.beta,
                    f.beta()
                )));
            }
            return Ok((l, None));
        }
        let eps = self.epsilon.unwrap_or(f64::NAN);
        let (gamma, _) = self.gammas();
        let dc = estimate_decay_constants(f.sigma(), f.beta())?;
        let plan = plan_parameters(f, gamma, self.algorithm.s, self.algorithm.r, eps, &self.lct, &dc)?;
        Ok((plan.lattice, Some(plan)))
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::AnchorGap { .. }
        | Error::Endpoint { .. }
        | Error::NonpositiveAnchor { .. }
        | Error::ZeroTransition { .. }
        | Error::ZeroBasePoint { .. } => 3,
        Error::InfeasibleTolerance(_) => 4,
        Error::Magnitude(_) | Error::FittingFailure(_) => 5,
        _ => 2,
    }
}

/// Output directory: explicit flag, then the environment, then the config.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_DIR_ENV) {
        return PathBuf::from(p);
    }
    cfg.map_or_else(default_dir, |c| c.output.dir.clone())
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings(pub BTreeMap<String, f64>);

impl Timings {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        self.0.insert(stage.into(), start.elapsed().as_secs_f64());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutcome {
    pub signal: PathBuf,
    pub dataset: PathBuf,
    pub rows: usize,
    pub cols: usize,
    pub delta: f64,
    pub noise_inf_norm: f64,
    pub planned: Option<PlannedParameters>,
    #[serde(skip)]
    pub timings: Timings,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn run_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<SimulateOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let mut timings = Timings::default();
    let f = cfg.signal()?;
    let (lattice, planned) = timings.time("plan", || cfg.resolve_lattice(&f))?;
    let exact = timings.time("sample", || sample_exact(&f, &cfg.lct, &lattice))?;
    let noise = cfg.noise.clone().unwrap_or(NoiseSpec {
        delta: 0.0,
        seed: 0,
        eta_inf: None,
        scale_to_cap: false,
    });
    let target = match (&planned, noise.scale_to_cap) {
        (Some(p), true) => Some(p.eta_max),
        _ => noise.eta_inf,
    };
    let m = timings.time("noise", || match target {
        Some(t) => add_noise_with_inf_norm(&exact, t, noise.seed),
        None if noise.delta > 0.0 => add_noise(&exact, noise.delta, noise.seed),
        None => Ok(exact.clone()),
    })?;
    let signal_path = out.join("signal.json");
    let dataset_path = out.join(&cfg.output.dataset);
    timings.time("write", || {
        f.save(&signal_path)?;
        write_dataset(&dataset_path, &m, Some("signal.json".into()))
    })?;
    Ok(SimulateOutcome {
        signal: signal_path,
        dataset: dataset_path,
        rows: m.lattice.rows(),
        cols: m.lattice.cols(),
        delta: m.noise_level,
        noise_inf_norm: m.noise_inf_norm,
        planned,
        timings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Error with the inner-product phase.
    pub inner_product: f64,
    /// Error with the optimized phase.
    pub optimized: f64,
    /// Grid maximum of `|A(t) − |f(t)|²|`.
    pub detector: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeReport {
    pub epsilon: f64,
    pub kappa: f64,
    pub noiseless: f64,
    pub noisy: f64,
    pub eta_max: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(rename = "J")]
    pub j: usize,
    pub dropped_anchors: usize,
    pub s: f64,
    pub r: f64,
    pub gamma_tilde: f64,
    pub lattice: LatticeSpec,
    pub delta: f64,
    pub eta_inf: f64,
    pub error: Option<ErrorReport>,
    pub guarantee: Option<GuaranteeReport>,
    /// Kept out of `report.json` so repeat runs stay byte-identical.
    #[serde(skip)]
    pub timings: Timings,
}

/// Ground truth next to the dataset, if any.
fn truth_signal(cfg: &ExperimentConfig, out: &Path) -> Result<Option<GaussianSisSignal>> {
    let path = match &cfg.signal {
        SignalSpec::File { file } => file.clone(),
        SignalSpec::Random { .. } => out.join("signal.json"),
    };
    if path.exists() {
        GaussianSisSignal::load(&path).map(Some)
    } else {
        Ok(None)
    }
}

pub fn run_reconstruct(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let mut timings = Timings::default();
    let (m, _) = timings.time("read", || read_dataset(&out.join(&cfg.output.dataset)))?;
    let truth = truth_signal(cfg, out)?;
    reconstruct_measurements(cfg, &m, truth.as_ref(), out, timings)
}

/// Reconstruction stage on in-memory data; writes the CSV files and the report.
pub fn reconstruct_measurements(
    cfg: &ExperimentConfig,
    m: &MeasurementSet,
    truth: Option<&GaussianSisSignal>,
    out: &Path,
    mut timings: Timings,
) -> Result<RunReport> {
    std::fs::create_dir_all(out)?;
    let (s, r) = (cfg.algorithm.s, cfg.algorithm.r);
    let (gamma, gamma_tilde) = cfg.gammas();
    let rc = timings.time("prepare", || Reconstructor::new(m))?;
    let anchors = timings.time("anchors", || rc.select_anchors(s, r, gamma_tilde, cfg.scan_step()))?;
    let mut csv = String::from("j,p,A\n");
    for (j, (p, a)) in anchors.points.iter().zip(&anchors.magnitudes).enumerate() {
        writeln!(csv, "{},{:?},{:?}", j + 1, p, a).ok();
    }
    std::fs::write(out.join("anchors.csv"), csv)?;
    let (j, dropped) = (anchors.len(), anchors.dropped);
    let rec = timings.time("assemble", || rc.assemble(anchors))?;

    let ts = evaluation_grid(s, cfg.output.grid_density);
    let rv = timings.time("evaluate", || rec.eval_grid(&ts))?;
    let detector: Vec<f64> = ts.iter().map(|&t| rc.anchor_detector(t)).collect();
    let fv: Option<Vec<Complex64>> = truth.map(|f| ts.iter().map(|&t| f.eval(t)).collect());

    let mut det_csv = String::from(if fv.is_some() { "t,A,abs_f_sq\n" } else { "t,A\n" });
    let mut rec_csv = String::from(if fv.is_some() {
        "t,re_f,re_r,im_f,im_r\n"
    } else {
        "t,re_r,im_r\n"
    });
    let mut error = None;
    match &fv {
        Some(fv) => {
            let ae = aligned_error(fv, &rv);
            let mut det_err = 0.0_f64;
            for (i, &t) in ts.iter().enumerate() {
                let mag = fv[i].norm_sqr();
                det_err = det_err.max((detector[i] - mag).abs());
                writeln!(det_csv, "{t:?},{:?},{mag:?}", detector[i]).ok();
                let rr = ae.tau * rv[i];
                writeln!(rec_csv, "{t:?},{:?},{:?},{:?},{:?}", fv[i].re, rr.re, fv[i].im, rr.im).ok();
            }
            error = Some(ErrorReport {
                inner_product: ae.inner_product,
                optimized: ae.optimized,
                detector: det_err,
            });
        }
        None => {
            for (i, &t) in ts.iter().enumerate() {
                writeln!(det_csv, "{t:?},{:?}", detector[i]).ok();
                writeln!(rec_csv, "{t:?},{:?},{:?}", rv[i].re, rv[i].im).ok();
            }
        }
    }
    std::fs::write(out.join("detector.csv"), det_csv)?;
    std::fs::write(out.join("reconstruction.csv"), rec_csv)?;

    let guarantee = match (cfg.epsilon, truth) {
        (Some(eps), Some(f)) => {
            let dc = estimate_decay_constants(f.sigma(), f.beta())?;
            let tol = Tolerance {
                f,
                lct: &m.lct,
                gamma,
                s,
                r,
                epsilon: eps,
                dc: &dc,
            };
            let kappa = tol.kappa();
            let d = d_constants(f.sigma(), f.beta(), r, &dc);
            let eta_max = tol.eta_cap(&d, m.lattice.h);
            let noiseless = 33.0 / 16.0 * eps * kappa;
            let noisy = 11.0 / 4.0 * eps * kappa;
            let bound = if m.noise_inf_norm > 0.0 { noisy } else { noiseless };
            Some(GuaranteeReport {
                epsilon: eps,
                kappa,
                noiseless,
                noisy,
                eta_max,
                within: error.as_ref().is_some_and(|e| e.optimized <= bound),
            })
        }
        _ => None,
    };
    let report = RunReport {
        j,
        dropped_anchors: dropped,
        s,
        r,
        gamma_tilde,
        lattice: m.lattice,
        delta: m.noise_level,
        eta_inf: m.noise_inf_norm,
        error,
        guarantee,
        timings,
    };
    write_json(&out.join("report.json"), &report)?;
    write_json(&out.join("timings.json"), &report.timings)?;
    Ok(report)
}

/// Constants, leading terms and condition checks for a configuration.
pub fn bound_report(cfg: &ExperimentConfig) -> Result<BoundReport> {
    cfg.validate()?;
    let f = cfg.signal()?;
    let (sigma, beta) = (f.sigma(), f.beta());
    let (s, r) = (cfg.algorithm.s, cfg.algorithm.r);
    let (gamma, gamma_tilde) = cfg.gammas();
    let dc = estimate_decay_constants(sigma, beta)?;
    let d = d_constants(sigma, beta, r, &dc);
    let dg = DualGenerator::new(sigma, beta)?;
    let c = c_sigma_beta(&dg, 1024)?;
    let tol = Tolerance {
        f: &f,
        lct: &cfg.lct,
        gamma,
        s,
        r,
        epsilon: cfg.epsilon.unwrap_or(f64::NAN),
        dc: &dc,
    };
    let f_norm = tol.f_norm();
    let mut notes = Vec::new();
    if !dc.certified {
        notes.push("decay constants K, nu fitted numerically outside the certified regime".into());
    }
    notes.push("C(sigma, beta) is a grid maximum of the periodization".into());

    let (lattice, eta_max, conditions, eta_for_bound) = match cfg.epsilon {
        Some(_) => {
            let plan = tol.plan()?;
            (plan.lattice, Some(plan.eta_max), plan.conditions, plan.eta_max)
        }
        None => {
            let lattice = cfg.lattice.unwrap_or_else(|| unreachable!("validated"));
            let conditions = vec![
                Condition::le("r", r, 2.0 * s),
                Condition::ge("N_margin", lattice.n as f64, leading_n(s, r, beta) as f64),
                Condition::ge(
                    "H_margin",
                    lattice.k as f64,
                    leading_h(cfg.lct.a, beta, lattice.n, lattice.h) as f64,
                ),
            ];
            notes.push("lattice given: tolerance conditions skipped, local bound evaluated noiseless".into());
            (lattice, None, conditions, 0.0)
        }
    };
    let lead_n = leading_n(s, r, beta);
    let lead_h = leading_h(cfg.lct.a, beta, lattice.n, lattice.h);
    let vanishes = cfg.lct.a == 0.0;
    if vanishes {
        notes.push("a = 0: the leading term |a| beta N / (2h) of the H condition vanishes".into());
    }
    let margins = Margins::of(&lattice, &cfg.lct, s, r);
    let local_bound = if margins.m >= 0 && margins.q >= 0 {
        Some(local_error_bound(&f, &cfg.lct, &lattice, s, r, margins, r, eta_for_bound, &dc)?)
    } else {
        notes.push("negative lattice margins: local bound not evaluated".into());
        None
    };
    let j_max = (4.0 * s / r).floor() as usize + 2;
    let stability = if gamma > 0.0 {
        notes.push(format!("stability constants use J = {j_max} (largest admissible) and g = f"));
        Some(stability_constants(f_norm, f_norm, gamma, j_max, r, sigma, c)?)
    } else {
        None
    };
    Ok(BoundReport {
        sigma,
        beta,
        lct: cfg.lct,
        s,
        r,
        decay: dc,
        c_sigma_beta: c,
        d,
        gamma,
        gamma_tilde,
        epsilon: cfg.epsilon,
        kappa: tol.kappa(),
        f_norm,
        leading_n: lead_n,
        leading_h: lead_h,
        leading_h_vanishes: vanishes,
        lattice,
        eta_max,
        conditions,
        local_bound,
        stability,
        notes,
    })
}

pub fn run_bounds(cfg: &ExperimentConfig, out: &Path) -> Result<BoundReport> {
    let report = bound_report(cfg)?;
    std::fs::create_dir_all(out)?;
    write_json(&out.join("bounds.json"), &report)?;
    Ok(report)
}

/// Property suites; the dataset suite runs when the config points at an
/// existing dataset with its ground truth.
pub fn run_verify(
    cfg: Option<&ExperimentConfig>,
    suite: Option<&str>,
    seed: u64,
    out: &Path,
) -> Result<VerifySummary> {
    if let Some(name) = suite {
        if !verify::SUITES.contains(&name) {
            return Err(Error::Validation(format!(
                "unknown suite {name:?}; choose from {}",
                verify::SUITES.join(", ")
            )));
        }
    }
    let mut data = None;
    if let Some(cfg) = cfg {
        let path = out.join(&cfg.output.dataset);
        if let (true, Some(f)) = (path.exists(), truth_signal(cfg, out)?) {
            data = Some((read_dataset(&path)?.0, f));
        }
    }
    if suite == Some("dataset") && data.is_none() {
        return Err(Error::Validation("the dataset suite needs a config with a dataset and signal".into()));
    }
    let check = data.as_ref().map(|(m, f)| DatasetCheck { m, f });
    let summary = verify::run(suite, seed, check)?;
    std::fs::create_dir_all(out)?;
    write_json(&out.join("verify.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub simulate: SimulateOutcome,
    pub report: RunReport,
    pub bounds: BoundReport,
}

pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentOutcome> {
    let simulate = run_simulate(cfg, out)?;
    let report = run_reconstruct(cfg, out)?;
    let bounds = run_bounds(cfg, out)?;
    Ok(ExperimentOutcome {
        simulate,
        report,
        bounds,
    })
}

/// Refuses full-scale configs unless `--full` was given.
pub fn check_scale(cfg: &ExperimentConfig, full: bool) -> Result<()> {
    if cfg.full_scale && !full {
        return Err(Error::Validation(
            "this configuration is full scale; pass --full to run it".into(),
        ));
    }
    Ok(())
}

