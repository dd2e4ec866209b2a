//! `witten`: runs one experiment from a JSON manifest and writes results.csv,
//! summary.json and plotdata/*.csv into the output directory.
//!
//! Exit codes: 0 when every assertion holds, 1 when one fails, 2 on invalid
//! input or a solver error.

mod manifest;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use witten_core::spectral::SolverOptions;

use crate::manifest::ExperimentManifest;

#[derive(Parser, Debug)]
#[command(name = "witten", version, about = "Witten Laplacian spectra on weighted cell complexes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment manifest (JSON).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for solver start blocks and random fields.
    #[arg(long, global = true, default_value_t = 0x5eed)]
    seed: u64,
    /// Relative residual target of the eigensolver.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Largest problem solved with dense LAPACK.
    #[arg(long, global = true)]
    dense_threshold: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Harmonic, exact and coexact spectra per degree.
    Spectrum,
    /// Spectrum under phi -> -phi and p -> n - p.
    Duality,
    /// Product spectra against sums of factor spectra.
    Kunneth,
    /// Collapse of the complement of a domain, optionally with smoothing.
    Collapse,
    /// Removal of shrinking balls.
    Puncture,
    /// Random conformal changes inside the weighted class.
    ConformalSweep,
    /// The three expressions of the twisted Laplacian.
    ThreeForms,
    /// Brute-force min-max against the solver.
    Oracle,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Duality => "duality",
            Command::Kunneth => "kunneth",
            Command::Collapse => "collapse",
            Command::Puncture => "puncture",
            Command::ConformalSweep => "conformal-sweep",
            Command::ThreeForms => "three-forms",
            Command::Oracle => "oracle",
        }
    }
}

fn execute(cli: &Cli) -> witten_core::Result<(report::Report, Option<String>)> {
    let path = cli
        .manifest
        .as_ref()
        .ok_or_else(|| witten_core::Error::Invalid("--manifest is required".into()))?;
    let loaded = ExperimentManifest::from_path(path)?.load()?;
    let mut opts = SolverOptions { seed: cli.seed, ..SolverOptions::default() };
    if let Some(t) = cli.tol.or(loaded.manifest.solver_tol) {
        if !(t > 0.0 && t < 1.0) {
            return Err(witten_core::Error::Invalid(format!("solver tolerance must lie in (0, 1), got {t}")));
        }
        opts.tol = t;
    }
    if let Some(n) = cli.dense_threshold {
        opts.dense_threshold = n;
    }
    let report = match cli.command {
        Command::Spectrum => run::spectrum(&loaded, &opts),
        Command::Duality => run::duality(&loaded, &opts),
        Command::Kunneth => run::kunneth_run(&loaded, &opts),
        Command::Collapse => run::collapse(&loaded, &opts),
        Command::Puncture => run::puncture(&loaded, &opts),
        Command::ConformalSweep => run::conformal(&loaded, &opts, cli.seed),
        Command::ThreeForms => run::three_forms(&loaded),
        Command::Oracle => run::oracle(&loaded, &opts),
    }?;
    Ok((report, loaded.manifest.name.clone()))
}

/// OpenBLAS picks its kernels when the library loads, before `main`. Its
/// AVX-512 kernels give wrong factorizations on some hosts, so without an
/// explicit choice the process restarts itself with the Haswell kernels.
fn reexec_with_blas_kernels() -> Option<ExitCode> {
    if std::env::var_os("OPENBLAS_CORETYPE").is_some() {
        return None;
    }
    let exe = std::env::current_exe().ok()?;
    let status = std::process::Command::new(exe)
        .args(std::env::args_os().skip(1))
        .env("OPENBLAS_CORETYPE", "Haswell")
        .status()
        .ok()?;
    Some(ExitCode::from(status.code().unwrap_or(2).clamp(0, 255) as u8))
}

fn main() -> ExitCode {
    if let Some(code) = reexec_with_blas_kernels() {
        return code;
    }
    let cli = Cli::parse();
    let (report, name) = match execute(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("witten {}: {e}", cli.command.name());
            return ExitCode::from(2);
        }
    };
    if let Err(e) = report.write(&cli.out, name.as_deref(), cli.seed) {
        eprintln!("witten {}: cannot write {}: {e}", cli.command.name(), cli.out.display());
        return ExitCode::from(2);
    }
    for a in &report.assertions {
        println!("{} {}: {}", if a.passed { "ok  " } else { "FAIL" }, a.name, a.detail);
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        let names: Vec<&str> = report.failed().map(|a| a.name.as_str()).collect();
        eprintln!("witten {}: failed assertion(s): {}", cli.command.name(), names.join("; "));
        ExitCode::from(1)
    }
}
