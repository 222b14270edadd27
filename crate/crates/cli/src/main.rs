//! `hgs` — command-line front end for the Hénon ground-state solver.
//!
//! Every subcommand reads an optional `--config FILE` of `key = value`
//! pairs, then applies command-line flags on top (flags win). Both paths
//! funnel through the same key parser in the library, so file and flag
//! syntax are identical. Exit codes: 0 success, 1 configuration error,
//! 2 numerical failure, 3 non-convergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use henon_ground_state::cli as runs;
use henon_ground_state::Result;

#[derive(Parser)]
#[command(
    name = "hgs",
    version,
    about = "Ground states of the critical Hénon-type problem on the unit ball",
    long_about = "Computes ground-state solutions of  -Δu = λu + |x|^α |u|^{2*-2} u  on the \
                  unit ball (Dirichlet) via a generalized Nehari-manifold minimax, and verifies \
                  the compactness-threshold inequality with concentrated test functions."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the lowest Dirichlet eigenpairs of the ball Laplacian.
    Eigen(EigenArgs),
    /// Solve for a ground state and write its report and field.
    Solve(SolveArgs),
    /// Sweep concentrated bubbles and verify the energy-threshold inequality.
    Instanton(InstantonArgs),
    /// Sweep λ or α, one ground-state solve per point, into a CSV.
    Scan(ScanArgs),
    /// Recompute diagnostics for a stored field CSV.
    Diag(DiagArgs),
}

#[derive(Args)]
struct EigenArgs {
    /// Key = value configuration file applied before flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Space dimension N >= 3.
    #[arg(long)]
    dim: Option<String>,
    /// Radial grid cells.
    #[arg(long)]
    nr: Option<String>,
    /// Angular grid cells (even).
    #[arg(long)]
    ntheta: Option<String>,
    /// Number of eigenpairs.
    #[arg(short, long)]
    k: Option<String>,
    /// JSON report path (stdout when absent).
    #[arg(long)]
    out: Option<String>,
    /// Directory for eigenfield CSVs.
    #[arg(long)]
    fields_dir: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    /// Key = value configuration file applied before flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Space dimension N >= 3.
    #[arg(long)]
    dim: Option<String>,
    /// Radial grid cells.
    #[arg(long)]
    nr: Option<String>,
    /// Angular grid cells (even).
    #[arg(long)]
    ntheta: Option<String>,
    /// Eigenpairs computed for the splitting.
    #[arg(long)]
    k_eigs: Option<String>,
    /// λ: a number or auto(C*lambdaK).
    #[arg(long)]
    lambda: Option<String>,
    /// Hénon weight exponent α >= 0.
    #[arg(long)]
    alpha: Option<String>,
    /// Seed policy: instanton:EPS or random:SEED.
    #[arg(long)]
    seed: Option<String>,
    /// Gradient tolerance (relative).
    #[arg(long)]
    tol_g_rel: Option<String>,
    /// Constraint tolerance (relative).
    #[arg(long)]
    tol_c: Option<String>,
    /// Outer iteration budget.
    #[arg(long)]
    max_outer: Option<String>,
    /// Compute Morse data (true/false).
    #[arg(long)]
    morse: Option<String>,
    /// Reject configurations that resolve to m = 0.
    #[arg(long)]
    require_m_positive: bool,
    /// JSON report path (stdout when absent).
    #[arg(long)]
    out: Option<String>,
    /// Solution field CSV path.
    #[arg(long)]
    field_out: Option<String>,
}

#[derive(Args)]
struct InstantonArgs {
    /// Key = value configuration file applied before flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Space dimension N >= 3.
    #[arg(long)]
    dim: Option<String>,
    /// Radial grid cells.
    #[arg(long)]
    nr: Option<String>,
    /// Angular grid cells (even).
    #[arg(long)]
    ntheta: Option<String>,
    /// Eigenpairs computed for the splitting.
    #[arg(long)]
    k_eigs: Option<String>,
    /// λ: a number or auto(C*lambdaK).
    #[arg(long)]
    lambda: Option<String>,
    /// Hénon weight exponent α >= 0.
    #[arg(long)]
    alpha: Option<String>,
    /// Comma-separated ε values to sweep.
    #[arg(long)]
    eps: Option<String>,
    /// Witness safety margin (absolute energy).
    #[arg(long)]
    margin: Option<String>,
    /// JSON verdict path (stdout when absent).
    #[arg(long)]
    out: Option<String>,
    /// Per-ε sweep CSV path.
    #[arg(long)]
    sweep_out: Option<String>,
}

#[derive(Args)]
struct ScanArgs {
    /// Key = value configuration file applied before flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Space dimension N >= 3.
    #[arg(long)]
    dim: Option<String>,
    /// Radial grid cells.
    #[arg(long)]
    nr: Option<String>,
    /// Angular grid cells (even).
    #[arg(long)]
    ntheta: Option<String>,
    /// Eigenpairs computed for the splitting.
    #[arg(long)]
    k_eigs: Option<String>,
    /// Swept parameter: lambda or alpha.
    #[arg(long)]
    axis: Option<String>,
    /// First swept value.
    #[arg(long)]
    from: Option<String>,
    /// Last swept value.
    #[arg(long)]
    to: Option<String>,
    /// Number of points.
    #[arg(long)]
    steps: Option<String>,
    /// Fixed λ for α-scans: a number or auto(C*lambdaK).
    #[arg(long)]
    lambda: Option<String>,
    /// Fixed α for λ-scans.
    #[arg(long)]
    alpha: Option<String>,
    /// Seed policy: instanton:EPS or random:SEED.
    #[arg(long)]
    seed: Option<String>,
    /// Compute Morse data per point (true/false).
    #[arg(long)]
    morse: Option<String>,
    /// CSV path (stdout when absent).
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct DiagArgs {
    /// Key = value configuration file applied before flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Field CSV to analyze.
    #[arg(long)]
    field: Option<String>,
    /// Space dimension N >= 3.
    #[arg(long)]
    dim: Option<String>,
    /// Eigenpairs computed for the splitting.
    #[arg(long)]
    k_eigs: Option<String>,
    /// λ: a number or auto(C*lambdaK).
    #[arg(long)]
    lambda: Option<String>,
    /// Hénon weight exponent α >= 0.
    #[arg(long)]
    alpha: Option<String>,
    /// JSON report path (stdout when absent).
    #[arg(long)]
    out: Option<String>,
}

/// Pushes `(key, value)` when the flag was given.
fn push(flags: &mut Vec<(&'static str, String)>, key: &'static str, value: &Option<String>) {
    if let Some(v) = value {
        flags.push((key, v.clone()));
    }
}

/// Builds a run-parameter struct: defaults, then config file pairs, then
/// flag pairs — the same `apply_kv` path for both sources.
fn build<T: Default>(
    config: &Option<PathBuf>,
    flags: &[(&'static str, String)],
    apply: impl Fn(&mut T, &str, &str) -> Result<()>,
) -> Result<T> {
    let mut run = T::default();
    if let Some(path) = config {
        let text = std::fs::read_to_string(path)?;
        for (key, value) in runs::parse_key_values(&text)? {
            apply(&mut run, &key, &value)?;
        }
    }
    for (key, value) in flags {
        apply(&mut run, key, value)?;
    }
    Ok(run)
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Eigen(a) => {
            let mut flags = Vec::new();
            push(&mut flags, "dim", &a.dim);
            push(&mut flags, "nr", &a.nr);
            push(&mut flags, "ntheta", &a.ntheta);
            push(&mut flags, "k", &a.k);
            push(&mut flags, "out", &a.out);
            push(&mut flags, "fields_dir", &a.fields_dir);
            let cfg: runs::EigenRun = build(&a.config, &flags, runs::EigenRun::apply_kv)?;
            runs::run_eigen(&cfg)
        }
        Command::Solve(a) => {
            let mut flags = Vec::new();
            push(&mut flags, "dim", &a.dim);
            push(&mut flags, "nr", &a.nr);
            push(&mut flags, "ntheta", &a.ntheta);
            push(&mut flags, "k_eigs", &a.k_eigs);
            push(&mut flags, "lambda", &a.lambda);
            push(&mut flags, "alpha", &a.alpha);
            push(&mut flags, "seed", &a.seed);
            push(&mut flags, "tol_g_rel", &a.tol_g_rel);
            push(&mut flags, "tol_c", &a.tol_c);
            push(&mut flags, "max_outer", &a.max_outer);
            push(&mut flags, "morse", &a.morse);
            if a.require_m_positive {
                flags.push(("require_m_positive", "true".to_string()));
            }
            push(&mut flags, "out", &a.out);
            push(&mut flags, "field_out", &a.field_out);
            let cfg: runs::SolveRun = build(&a.config, &flags, runs::SolveRun::apply_kv)?;
            runs::run_solve(&cfg)
        }
        Command::Instanton(a) => {
            let mut flags = Vec::new();
            push(&mut flags, "dim", &a.dim);
            push(&mut flags, "nr", &a.nr);
            push(&mut flags, "ntheta", &a.ntheta);
            push(&mut flags, "k_eigs", &a.k_eigs);
            push(&mut flags, "lambda", &a.lambda);
            push(&mut flags, "alpha", &a.alpha);
            push(&mut flags, "eps", &a.eps);
            push(&mut flags, "margin", &a.margin);
            push(&mut flags, "out", &a.out);
            push(&mut flags, "sweep_out", &a.sweep_out);
            let cfg: runs::InstantonRun = build(&a.config, &flags, runs::InstantonRun::apply_kv)?;
            runs::run_instanton(&cfg)
        }
        Command::Scan(a) => {
            let mut flags = Vec::new();
            push(&mut flags, "dim", &a.dim);
            push(&mut flags, "nr", &a.nr);
            push(&mut flags, "ntheta", &a.ntheta);
            push(&mut flags, "k_eigs", &a.k_eigs);
            push(&mut flags, "axis", &a.axis);
            push(&mut flags, "from", &a.from);
            push(&mut flags, "to", &a.to);
            push(&mut flags, "steps", &a.steps);
            push(&mut flags, "lambda", &a.lambda);
            push(&mut flags, "alpha", &a.alpha);
            push(&mut flags, "seed", &a.seed);
            push(&mut flags, "morse", &a.morse);
            push(&mut flags, "out", &a.out);
            let cfg: runs::ScanRun = build(&a.config, &flags, runs::ScanRun::apply_kv)?;
            runs::run_scan(&cfg)
        }
        Command::Diag(a) => {
            let mut flags = Vec::new();
            push(&mut flags, "field", &a.field);
            push(&mut flags, "dim", &a.dim);
            push(&mut flags, "k_eigs", &a.k_eigs);
            push(&mut flags, "lambda", &a.lambda);
            push(&mut flags, "alpha", &a.alpha);
            push(&mut flags, "out", &a.out);
            let cfg: runs::DiagRun = build(&a.config, &flags, runs::DiagRun::apply_kv)?;
            runs::run_diag(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Usage problems are configuration errors (exit 1); help and
            // version displays are successes.
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1u8,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
