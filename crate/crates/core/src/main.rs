use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stlct_phase::app::{self, ExperimentConfig};
use stlct_phase::{Error, Result};

// stdout may be a closed pipe (`stlct ... | head`)
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

/// Phaseless STLCT simulation and reconstruction.
#[derive(Parser)]
#[command(name = "stlct", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a signal and write the measurement dataset.
    Simulate(Common),
    /// Reconstruct from the dataset in the output directory.
    Reconstruct(Common),
    /// Report constants, leading terms and condition checks.
    Bounds(Common),
    /// Run the property suites.
    Verify(VerifyArgs),
    /// Simulate, reconstruct and report bounds in one run.
    Experiment(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides STLCT_OUT_DIR and the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the noise seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Allow full-scale configurations.
    #[arg(long)]
    full: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    suite: Option<String>,
}

fn init_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    init_threads(common.threads)?;
    let mut cfg = ExperimentConfig::load(&common.config)?;
    app::check_scale(&cfg, common.full)?;
    if let (Some(seed), Some(noise)) = (common.seed, cfg.noise.as_mut()) {
        noise.seed = seed;
    }
    let out = app::resolve_out_dir(common.out.as_deref(), Some(&cfg));
    Ok((cfg, out))
}

fn print_report(report: &app::RunReport) {
    out!("anchors J = {} (dropped {})", report.j, report.dropped_anchors);
    out!("realized |eta|_inf = {:.6e}", report.eta_inf);
    if let Some(e) = &report.error {
        out!("phase-aligned sup error = {:.6e}", e.optimized);
        out!("detector error = {:.6e}", e.detector);
    }
    if let Some(g) = &report.guarantee {
        out!(
            "guarantee: noiseless {:.6e}, noisy {:.6e}, within = {}",
            g.noiseless, g.noisy, g.within
        );
    }
    for (stage, secs) in &report.timings.0 {
        out!("  {stage:10} {secs:.3}s");
    }
}

fn print_bounds(b: &stlct_phase::bounds::BoundReport) {
    out!("leading N term = {}, leading H term = {}", b.leading_n, b.leading_h);
    out!("lattice N = {}, H = {}, h = {}", b.lattice.n, b.lattice.k, b.lattice.h);
    out!("kappa = {:.6e}, |f|_inf = {:.6e}, C = {:.6e}", b.kappa, b.f_norm, b.c_sigma_beta);
    for c in &b.conditions {
        let mark = if c.pass { "ok  " } else { "FAIL" };
        out!("  {mark} {} = {:.6e} {} {:.6e}", c.name, c.lhs, c.relation, c.rhs);
    }
    for n in &b.notes {
        out!("  note: {n}");
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate(c) => {
            let (cfg, out) = load(&c)?;
            let s = app::run_simulate(&cfg, &out)?;
            out!("wrote {} ({} x {} samples)", s.dataset.display(), s.rows, s.cols);
            out!("delta = {:e}, realized |eta|_inf = {:.6e}", s.delta, s.noise_inf_norm);
            Ok(0)
        }
        Command::Reconstruct(c) => {
            let (cfg, out) = load(&c)?;
            print_report(&app::run_reconstruct(&cfg, &out)?);
            Ok(0)
        }
        Command::Bounds(c) => {
            let (cfg, out) = load(&c)?;
            let b = app::run_bounds(&cfg, &out)?;
            print_bounds(&b);
            Ok(if b.all_pass() { 0 } else { 4 })
        }
        Command::Experiment(c) => {
            let (cfg, out) = load(&c)?;
            let e = app::run_experiment(&cfg, &out)?;
            out!("{} x {} samples", e.simulate.rows, e.simulate.cols);
            print_report(&e.report);
            print_bounds(&e.bounds);
            Ok(0)
        }
        Command::Verify(v) => {
            init_threads(v.threads)?;
            let cfg = v.config.as_deref().map(ExperimentConfig::load).transpose()?;
            let out = app::resolve_out_dir(v.out.as_deref(), cfg.as_ref());
            let summary = app::run_verify(cfg.as_ref(), v.suite.as_deref(), v.seed, &out)?;
            for s in &summary.suites {
                let mark = if s.pass { "PASS" } else { "FAIL" };
                out!("{mark} {:16} worst {:.3e} (tol {:.1e}) {}", s.name, s.worst, s.tolerance, s.detail);
            }
            out!("summary: {}", out.join("verify.json").display());
            match &summary.first_failure {
                Some(name) => {
                    eprintln!("first failing property: {name}");
                    Ok(5)
                }
                None => Ok(0),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(app::exit_code(&e) as u8)
        }
    }
}

