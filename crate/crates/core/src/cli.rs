//! Configuration, runs, and machine-readable reports for the `hgs` binary.
//!
//! Each subcommand has a plain run-parameter struct (`EigenRun`, `SolveRun`,
//! `InstantonRun`, `ScanRun`, `DiagRun`) that can be populated from
//! `key = value` pairs — the same pairs whether they come from a config file
//! or from command-line flags, so override semantics are uniform and
//! testable without a process boundary. Unknown keys are rejected.
//!
//! Reports are JSON envelopes
//!
//! ```text
//! { schema, timestamp, content_hash, report: { … } }
//! ```
//!
//! with `content_hash` the SHA-256 of the canonical (compact) serialization
//! of `report` alone. The timestamp is informational and deliberately
//! excluded from the hash, so identical configurations produce identical
//! hashes and identical `report` bodies byte for byte: that is the
//! determinism contract. Key order is struct-declaration order (stable).
//!
//! Exit codes returned by the `run_*` functions (and mapped from errors by
//! the binary): 0 success, 1 configuration error, 2 numerical failure,
//! 3 non-convergence. A non-converged solve still writes its report — the
//! exit code, the `converged` flag, and the absent certification mark it.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::diagnostics::{
    morse_index, polarization_invariants, sign_change, theta_monotonicity, MorseData,
    SymmetryReport, SIGN_CHANGE_TOL,
};
use crate::error::{ConfigError, Error, NumericalError, Result};
use crate::functional::{constraint_from_gradient, energy, h_gradient};
use crate::grid::{build_grid, h_norm, Field, Grid, ProblemSpec, Weights};
use crate::instanton::{instanton_report, threshold, InstantonParams, InstantonReport, ThresholdReport};
use crate::nehari::{minimize_over_y, SeedPolicy, SolveConfig};
use crate::spectral::{
    assemble_operator, check_lambda_off_spectrum, dirichlet_spectrum, split_space, Operator,
    Spectrum, SubspaceSplit,
};

// ---------------------------------------------------------------------------
// Parameter syntax
// ---------------------------------------------------------------------------

/// λ given either absolutely or relative to the computed spectrum:
/// `auto(C*lambdaK)` resolves to `C·λ_K` on the actual grid, which keeps
/// configurations meaningful across resolutions (eigenvalues move with the
/// grid; ratios to them do not).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    Absolute(f64),
    Auto { factor: f64, k: usize },
}

impl LambdaSpec {
    /// Resolves against a computed spectrum.
    pub fn resolve(&self, spectrum: &Spectrum) -> Result<f64> {
        match *self {
            LambdaSpec::Absolute(v) => Ok(v),
            LambdaSpec::Auto { factor, k } => {
                if k == 0 || k > spectrum.len() {
                    return Err(ConfigError::ParameterOutOfRange {
                        name: "k_eigs",
                        requirement: "at least the eigenvalue index named in auto(...)",
                        value: spectrum.len() as f64,
                    }
                    .into());
                }
                Ok(factor * spectrum.eigvals[k - 1])
            }
        }
    }
}

impl FromStr for LambdaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("auto(").and_then(|r| r.strip_suffix(')')) {
            let (factor, mode) = inner.split_once('*').ok_or_else(|| {
                Error::from(ConfigError::Parse {
                    what: "lambda",
                    detail: format!("expected auto(C*lambdaK), got {s:?}"),
                })
            })?;
            let factor: f64 = factor.trim().parse().map_err(|_| {
                Error::from(ConfigError::Parse {
                    what: "lambda",
                    detail: format!("bad factor in {s:?}"),
                })
            })?;
            let k: usize = mode
                .trim()
                .strip_prefix("lambda")
                .and_then(|d| d.parse().ok())
                .ok_or_else(|| {
                    Error::from(ConfigError::Parse {
                        what: "lambda",
                        detail: format!("expected lambdaK after '*', got {s:?}"),
                    })
                })?;
            if !(factor.is_finite() && factor >= 0.0) || k == 0 {
                return Err(ConfigError::Parse {
                    what: "lambda",
                    detail: format!("factor must be finite and >= 0, index >= 1, got {s:?}"),
                }
                .into());
            }
            Ok(LambdaSpec::Auto { factor, k })
        } else {
            let v: f64 = s.parse().map_err(|_| {
                Error::from(ConfigError::Parse {
                    what: "lambda",
                    detail: format!("expected a number or auto(C*lambdaK), got {s:?}"),
                })
            })?;
            Ok(LambdaSpec::Absolute(v))
        }
    }
}

impl fmt::Display for LambdaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaSpec::Absolute(v) => write!(f, "{v}"),
            LambdaSpec::Auto { factor, k } => write!(f, "auto({factor}*lambda{k})"),
        }
    }
}

/// Seed policy syntax: `instanton:EPS` or `random:SEED`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedSpec(pub SeedPolicy);

impl FromStr for SeedSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |detail: String| -> Error {
            ConfigError::Parse {
                what: "seed",
                detail,
            }
            .into()
        };
        let (kind, value) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| bad(format!("expected instanton:EPS or random:SEED, got {s:?}")))?;
        match kind.trim() {
            "instanton" => {
                let eps: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("bad epsilon in {s:?}")))?;
                Ok(SeedSpec(SeedPolicy::Instanton { eps }))
            }
            "random" => {
                let seed: u64 = value
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("bad integer seed in {s:?}")))?;
                Ok(SeedSpec(SeedPolicy::Random { seed }))
            }
            other => Err(bad(format!("unknown seed kind {other:?}"))),
        }
    }
}

impl fmt::Display for SeedSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            SeedPolicy::Instanton { eps } => write!(f, "instanton:{eps}"),
            SeedPolicy::Random { seed } => write!(f, "random:{seed}"),
        }
    }
}

fn parse_value<T: FromStr>(key: &'static str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| {
        ConfigError::Parse {
            what: key,
            detail: format!("cannot parse value {value:?}"),
        }
        .into()
    })
}

fn parse_bool(key: &'static str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::Parse {
            what: key,
            detail: format!("expected true/false, got {value:?}"),
        }
        .into()),
    }
}

fn parse_float_list(key: &'static str, value: &str) -> Result<Vec<f64>> {
    let trimmed = value.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    trimmed
        .split(',')
        .map(|tok| parse_value::<f64>(key, tok))
        .collect()
}

fn unknown_key(sub: &'static str, key: &str) -> Error {
    ConfigError::Parse {
        what: "config key",
        detail: format!("unknown key {key:?} for subcommand {sub}"),
    }
    .into()
}

/// Parses `key = value` configuration text: one pair per line, `#` starts a
/// comment, blank lines ignored.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::from(ConfigError::Parse {
                what: "config file",
                detail: format!("line {}: expected key = value, got {:?}", lineno + 1, raw),
            })
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Run-parameter structs
// ---------------------------------------------------------------------------

/// Parameters of `hgs eigen`.
#[derive(Debug, Clone)]
pub struct EigenRun {
    pub dim: usize,
    pub nr: usize,
    pub ntheta: usize,
    /// Number of eigenpairs to compute.
    pub k: usize,
    /// JSON report destination (stdout when absent).
    pub out: Option<PathBuf>,
    /// When set, the eigenfields are written as `eig_1.csv … eig_k.csv` here.
    pub fields_dir: Option<PathBuf>,
}

impl Default for EigenRun {
    fn default() -> Self {
        EigenRun {
            dim: 5,
            nr: 128,
            ntheta: 32,
            k: 4,
            out: None,
            fields_dir: None,
        }
    }
}

impl EigenRun {
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dim" => self.dim = parse_value("dim", value)?,
            "nr" => self.nr = parse_value("nr", value)?,
            "ntheta" => self.ntheta = parse_value("ntheta", value)?,
            "k" => self.k = parse_value("k", value)?,
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "fields_dir" => self.fields_dir = Some(PathBuf::from(value.trim())),
            _ => return Err(unknown_key("eigen", key)),
        }
        Ok(())
    }
}

/// Parameters of `hgs solve`.
#[derive(Debug, Clone)]
pub struct SolveRun {
    pub dim: usize,
    pub nr: usize,
    pub ntheta: usize,
    /// Eigenpairs computed for the splitting (must bracket λ).
    pub k_eigs: usize,
    /// λ value, absolute or `auto(C*lambdaK)`.
    pub lambda: String,
    pub alpha: f64,
    pub seed: String,
    pub tol_g_rel: f64,
    pub tol_c: f64,
    pub max_outer: usize,
    /// Compute the Morse data of the converged state.
    pub morse: bool,
    /// Reject configurations that resolve to m = 0 (exit 1).
    pub require_m_positive: bool,
    pub out: Option<PathBuf>,
    /// Solution field CSV destination.
    pub field_out: Option<PathBuf>,
}

impl Default for SolveRun {
    fn default() -> Self {
        let nehari = SolveConfig::default();
        SolveRun {
            dim: 5,
            nr: 128,
            ntheta: 32,
            k_eigs: 6,
            lambda: "auto(1.1*lambda1)".to_string(),
            alpha: 0.0,
            seed: "instanton:0.1".to_string(),
            tol_g_rel: nehari.tol_g_rel,
            tol_c: nehari.tol_c,
            max_outer: nehari.max_outer,
            morse: true,
            require_m_positive: false,
            out: None,
            field_out: None,
        }
    }
}

impl SolveRun {
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dim" => self.dim = parse_value("dim", value)?,
            "nr" => self.nr = parse_value("nr", value)?,
            "ntheta" => self.ntheta = parse_value("ntheta", value)?,
            "k_eigs" => self.k_eigs = parse_value("k_eigs", value)?,
            "lambda" => self.lambda = value.trim().to_string(),
            "alpha" => self.alpha = parse_value("alpha", value)?,
            "seed" => self.seed = value.trim().to_string(),
            "tol_g_rel" => self.tol_g_rel = parse_value("tol_g_rel", value)?,
            "tol_c" => self.tol_c = parse_value("tol_c", value)?,
            "max_outer" => self.max_outer = parse_value("max_outer", value)?,
            "morse" => self.morse = parse_bool("morse", value)?,
            "require_m_positive" => {
                self.require_m_positive = parse_bool("require_m_positive", value)?
            }
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "field_out" => self.field_out = Some(PathBuf::from(value.trim())),
            _ => return Err(unknown_key("solve", key)),
        }
        Ok(())
    }
}

/// Parameters of `hgs instanton`.
#[derive(Debug, Clone)]
pub struct InstantonRun {
    pub dim: usize,
    pub nr: usize,
    pub ntheta: usize,
    pub k_eigs: usize,
    pub lambda: String,
    pub alpha: f64,
    /// ε values to sweep, in evaluation order.
    pub eps: Vec<f64>,
    /// Safety margin: a witness must satisfy `fiber_max < threshold − margin`.
    pub margin: f64,
    pub out: Option<PathBuf>,
    /// Per-ε sweep CSV destination.
    pub sweep_out: Option<PathBuf>,
}

impl Default for InstantonRun {
    fn default() -> Self {
        InstantonRun {
            dim: 5,
            nr: 128,
            ntheta: 32,
            k_eigs: 6,
            lambda: "auto(1.1*lambda1)".to_string(),
            alpha: 0.0,
            eps: vec![0.08, 0.05, 0.03],
            margin: 0.0,
            out: None,
            sweep_out: None,
        }
    }
}

impl InstantonRun {
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dim" => self.dim = parse_value("dim", value)?,
            "nr" => self.nr = parse_value("nr", value)?,
            "ntheta" => self.ntheta = parse_value("ntheta", value)?,
            "k_eigs" => self.k_eigs = parse_value("k_eigs", value)?,
            "lambda" => self.lambda = value.trim().to_string(),
            "alpha" => self.alpha = parse_value("alpha", value)?,
            "eps" => self.eps = parse_float_list("eps", value)?,
            "margin" => self.margin = parse_value("margin", value)?,
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "sweep_out" => self.sweep_out = Some(PathBuf::from(value.trim())),
            _ => return Err(unknown_key("instanton", key)),
        }
        Ok(())
    }
}

/// Which parameter `hgs scan` moves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScanAxis {
    Lambda,
    Alpha,
}

/// Parameters of `hgs scan`.
#[derive(Debug, Clone)]
pub struct ScanRun {
    pub dim: usize,
    pub nr: usize,
    pub ntheta: usize,
    pub k_eigs: usize,
    pub axis: ScanAxis,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    /// Fixed λ for α-scans (ignored for λ-scans).
    pub lambda: String,
    /// Fixed α for λ-scans (ignored for α-scans).
    pub alpha: f64,
    pub seed: String,
    pub morse: bool,
    pub out: Option<PathBuf>,
}

impl Default for ScanRun {
    fn default() -> Self {
        ScanRun {
            dim: 5,
            nr: 64,
            ntheta: 16,
            k_eigs: 6,
            axis: ScanAxis::Lambda,
            from: 0.0,
            to: 0.0,
            steps: 0,
            lambda: "auto(1.1*lambda1)".to_string(),
            alpha: 0.0,
            seed: "instanton:0.1".to_string(),
            morse: true,
            out: None,
        }
    }
}

impl ScanRun {
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dim" => self.dim = parse_value("dim", value)?,
            "nr" => self.nr = parse_value("nr", value)?,
            "ntheta" => self.ntheta = parse_value("ntheta", value)?,
            "k_eigs" => self.k_eigs = parse_value("k_eigs", value)?,
            "axis" => {
                self.axis = match value.trim() {
                    "lambda" => ScanAxis::Lambda,
                    "alpha" => ScanAxis::Alpha,
                    other => {
                        return Err(ConfigError::Parse {
                            what: "axis",
                            detail: format!("expected lambda or alpha, got {other:?}"),
                        }
                        .into())
                    }
                }
            }
            "from" => self.from = parse_value("from", value)?,
            "to" => self.to = parse_value("to", value)?,
            "steps" => self.steps = parse_value("steps", value)?,
            "lambda" => self.lambda = value.trim().to_string(),
            "alpha" => self.alpha = parse_value("alpha", value)?,
            "seed" => self.seed = value.trim().to_string(),
            "morse" => self.morse = parse_bool("morse", value)?,
            "out" => self.out = Some(PathBuf::from(value.trim())),
            _ => return Err(unknown_key("scan", key)),
        }
        Ok(())
    }
}

/// Parameters of `hgs diag`.
#[derive(Debug, Clone)]
pub struct DiagRun {
    /// Field CSV to analyze (grid shape inferred from it).
    pub field: PathBuf,
    pub dim: usize,
    pub k_eigs: usize,
    pub lambda: String,
    pub alpha: f64,
    pub out: Option<PathBuf>,
}

impl Default for DiagRun {
    fn default() -> Self {
        DiagRun {
            field: PathBuf::new(),
            dim: 5,
            k_eigs: 6,
            lambda: "auto(1.1*lambda1)".to_string(),
            alpha: 0.0,
            out: None,
        }
    }
}

impl DiagRun {
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "field" => self.field = PathBuf::from(value.trim()),
            "dim" => self.dim = parse_value("dim", value)?,
            "k_eigs" => self.k_eigs = parse_value("k_eigs", value)?,
            "lambda" => self.lambda = value.trim().to_string(),
            "alpha" => self.alpha = parse_value("alpha", value)?,
            "out" => self.out = Some(PathBuf::from(value.trim())),
            _ => return Err(unknown_key("diag", key)),
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Everything a solve-like run needs, assembled once: grid, operator,
/// spectrum, resolved λ, and the `Z ⊕ Y` splitting. Construction performs
/// all validation, including the dimension-four spectral guard.
pub struct Workspace {
    pub spec: ProblemSpec,
    pub grid: Grid,
    pub weights: Weights,
    pub op: Operator,
    pub spectrum: Spectrum,
    pub split: SubspaceSplit,
}

/// Builds a [`Workspace`] from raw run parameters.
pub fn prepare(
    dim: usize,
    lambda: &str,
    alpha: f64,
    nr: usize,
    ntheta: usize,
    k_eigs: usize,
) -> Result<Workspace> {
    let lambda_spec: LambdaSpec = lambda.parse()?;
    let probe = ProblemSpec::new(dim, 0.0, alpha)?;
    let (grid, weights) = build_grid(&probe, nr, ntheta)?;
    let op = assemble_operator(&grid, &weights);
    let spectrum = dirichlet_spectrum(&op, k_eigs)?;
    let lambda = lambda_spec.resolve(&spectrum)?;
    let spec = ProblemSpec::new(dim, lambda, alpha)?;
    check_lambda_off_spectrum(&spec, &spectrum)?;
    let split = split_space(&spec, &spectrum)?;
    Ok(Workspace {
        spec,
        grid,
        weights,
        op,
        spectrum,
        split,
    })
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: u32,
    timestamp: u64,
    content_hash: &'a str,
    report: &'a T,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use fmt::Write;
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

fn json_error(err: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(err))
}

/// Serializes a payload into the versioned envelope and writes it to `out`
/// (stdout when absent). Returns the content hash.
pub fn write_json_report<T: Serialize>(payload: &T, out: Option<&Path>) -> Result<String> {
    let canonical = serde_json::to_vec(payload).map_err(json_error)?;
    let content_hash = sha256_hex(&canonical);
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let envelope = Envelope {
        schema: 1,
        timestamp,
        content_hash: &content_hash,
        report: payload,
    };
    let mut text = serde_json::to_string_pretty(&envelope).map_err(json_error)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(content_hash)
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eigen
// ---------------------------------------------------------------------------

/// `hgs eigen` report body.
#[derive(Debug, Serialize)]
pub struct EigenPayload {
    pub dim: usize,
    pub nr: usize,
    pub ntheta: usize,
    pub dr: f64,
    pub dtheta: f64,
    pub k: usize,
    pub eigenvalues: Vec<f64>,
    pub theta_modes: Vec<usize>,
}

/// Computes the lowest `k` Dirichlet eigenpairs and writes the report
/// (and optionally the eigenfields).
pub fn run_eigen(cfg: &EigenRun) -> Result<i32> {
    let probe = ProblemSpec::new(cfg.dim, 0.0, 0.0)?;
    let (grid, weights) = build_grid(&probe, cfg.nr, cfg.ntheta)?;
    let op = assemble_operator(&grid, &weights);
    let spectrum = dirichlet_spectrum(&op, cfg.k)?;
    if let Some(dir) = &cfg.fields_dir {
        std::fs::create_dir_all(dir)?;
        for (j, field) in spectrum.eigfields.iter().enumerate() {
            field.write_csv(&grid, &dir.join(format!("eig_{}.csv", j + 1)))?;
        }
    }
    let payload = EigenPayload {
        dim: cfg.dim,
        nr: cfg.nr,
        ntheta: cfg.ntheta,
        dr: grid.dr,
        dtheta: grid.dtheta,
        k: cfg.k,
        eigenvalues: spectrum.eigvals.clone(),
        theta_modes: spectrum.theta_mode.clone(),
    };
    write_json_report(&payload, cfg.out.as_deref())?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

/// `hgs solve` report body: resolved configuration, certificates, and
/// diagnostics of the computed state.
#[derive(Debug, Serialize)]
pub struct SolvePayload {
    pub dim: usize,
    pub nr: usize,
    pub ntheta: usize,
    pub k_eigs: usize,
    pub lambda_spec: String,
    pub lambda: f64,
    pub lambda1: f64,
    pub alpha: f64,
    pub seed: String,
    pub tol_g_rel: f64,
    pub tol_c: f64,
    pub max_outer: usize,
    pub m: usize,
    pub converged: bool,
    pub iterations: usize,
    pub level_c: f64,
    pub threshold: f64,
    pub below_threshold: bool,
    /// `(threshold − level_c)/threshold`, signed.
    pub threshold_margin_rel: f64,
    pub f: f64,
    pub grad_norm: f64,
    pub constraint_residual: f64,
    pub changes_sign: bool,
    pub theta_monotone_defect: f64,
    pub morse: Option<MorseData>,
    pub polarization: Option<SymmetryReport>,
}

/// Runs the ground-state solve and writes report + optional field CSV.
/// Returns 0 when converged, 3 when the report is written unconverged.
pub fn run_solve(cfg: &SolveRun) -> Result<i32> {
    let seed: SeedSpec = cfg.seed.parse()?;
    let ws = prepare(cfg.dim, &cfg.lambda, cfg.alpha, cfg.nr, cfg.ntheta, cfg.k_eigs)?;
    if cfg.require_m_positive && ws.split.m == 0 {
        return Err(ConfigError::ParameterOutOfRange {
            name: "lambda",
            requirement: "at least the first eigenvalue (require_m_positive is set)",
            value: ws.spec.lambda,
        }
        .into());
    }
    let nehari_cfg = SolveConfig {
        tol_g_rel: cfg.tol_g_rel,
        tol_c: cfg.tol_c,
        max_outer: cfg.max_outer,
        seed: seed.0,
        ..SolveConfig::default()
    };
    let report = minimize_over_y(&ws.grid, &ws.weights, &ws.spec, &ws.op, &ws.split, &nehari_cfg)?;
    let morse = if cfg.morse {
        Some(morse_index(
            &ws.grid,
            &ws.weights,
            &ws.spec,
            &ws.op,
            &report.u,
            ws.split.m + 3,
        )?)
    } else {
        None
    };
    let polarization = Some(polarization_invariants(
        &ws.grid,
        &ws.weights,
        &ws.spec,
        &report.u,
        &ws.spectrum.eigfields[0],
    )?);
    if let Some(path) = &cfg.field_out {
        report.u.write_csv(&ws.grid, path)?;
    }
    let thr = threshold(cfg.dim);
    let payload = SolvePayload {
        dim: cfg.dim,
        nr: cfg.nr,
        ntheta: cfg.ntheta,
        k_eigs: cfg.k_eigs,
        lambda_spec: cfg.lambda.clone(),
        lambda: ws.spec.lambda,
        lambda1: ws.spectrum.eigvals[0],
        alpha: cfg.alpha,
        seed: cfg.seed.clone(),
        tol_g_rel: cfg.tol_g_rel,
        tol_c: cfg.tol_c,
        max_outer: cfg.max_outer,
        m: ws.split.m,
        converged: report.converged,
        iterations: report.iterations,
        level_c: report.level_c,
        threshold: thr,
        below_threshold: report.level_c < thr,
        threshold_margin_rel: (thr - report.level_c) / thr,
        f: report.f,
        grad_norm: report.grad_norm,
        constraint_residual: report.constraint_residual,
        changes_sign: report.changes_sign,
        theta_monotone_defect: report.theta_monotone_defect,
        morse,
        polarization,
    };
    write_json_report(&payload, cfg.out.as_deref())?;
    Ok(if report.converged { 0 } else { 3 })
}

// ---------------------------------------------------------------------------
// instanton
// ---------------------------------------------------------------------------

/// `hgs instanton` report body.
#[derive(Debug, Serialize)]
pub struct InstantonPayload {
    pub dim: usize,
    pub nr: usize,
    pub ntheta: usize,
    pub k_eigs: usize,
    pub lambda_spec: String,
    pub lambda: f64,
    pub alpha: f64,
    pub m: usize,
    /// ε values that failed to evaluate (reported, not fatal unless all do).
    pub failed_eps: Vec<f64>,
    pub report: ThresholdReport,
}

/// Sweeps the bubble family and writes the threshold verdict. Per-ε
/// failures are tolerated and recorded; the run fails (exit 2) only when
/// every ε fails.
pub fn run_instanton(cfg: &InstantonRun) -> Result<i32> {
    if cfg.eps.is_empty() {
        return Err(ConfigError::EmptyRange("eps").into());
    }
    if !(cfg.margin >= 0.0) {
        return Err(ConfigError::ParameterOutOfRange {
            name: "margin",
            requirement: "a nonnegative threshold margin",
            value: cfg.margin,
        }
        .into());
    }
    let ws = prepare(cfg.dim, &cfg.lambda, cfg.alpha, cfg.nr, cfg.ntheta, cfg.k_eigs)?;
    let mut rows: Vec<InstantonReport> = Vec::new();
    let mut failed_eps = Vec::new();
    let mut last_err: Option<Error> = None;
    for &eps in &cfg.eps {
        let attempt = InstantonParams::with_default_ell(eps).and_then(|params| {
            instanton_report(&ws.grid, &ws.weights, &ws.spec, &ws.op, &ws.split, &params)
        });
        match attempt {
            Ok(row) => rows.push(row),
            Err(e) => {
                eprintln!("instanton: eps = {eps} failed: {e}");
                failed_eps.push(eps);
                last_err = Some(e);
            }
        }
    }
    if rows.is_empty() {
        return Err(last_err.expect("at least one eps attempted"));
    }
    let thr = threshold(cfg.dim);
    let witness = rows
        .iter()
        .find(|r| r.fiber_max < thr - cfg.margin)
        .map(|r| r.params.eps);
    if let Some(path) = &cfg.sweep_out {
        let mut text = String::from(
            "eps,ell,dirichlet,mass,critical_alpha,critical_0,rayleigh,fiber_max,threshold\n",
        );
        for r in &rows {
            use fmt::Write;
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{},{},{}",
                r.params.eps,
                r.params.ell,
                r.integrals.dirichlet,
                r.integrals.mass,
                r.integrals.critical_alpha,
                r.integrals.critical_zero,
                r.rayleigh,
                r.fiber_max,
                r.threshold
            );
        }
        write_text(Some(path), &text)?;
    }
    let payload = InstantonPayload {
        dim: cfg.dim,
        nr: cfg.nr,
        ntheta: cfg.ntheta,
        k_eigs: cfg.k_eigs,
        lambda_spec: cfg.lambda.clone(),
        lambda: ws.spec.lambda,
        alpha: cfg.alpha,
        m: ws.split.m,
        failed_eps,
        report: ThresholdReport {
            threshold: thr,
            margin: cfg.margin,
            verdict: witness.is_some(),
            witness_eps: witness,
            rows,
        },
    };
    write_json_report(&payload, cfg.out.as_deref())?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// scan
// ---------------------------------------------------------------------------

struct ScanRow {
    value: f64,
    outcome: std::result::Result<ScanRowOk, String>,
}

struct ScanRowOk {
    m: usize,
    level_c: f64,
    threshold: f64,
    converged: bool,
    morse: Option<usize>,
    sign_change: bool,
}

/// Sweeps λ or α, one ground-state solve per point, and writes the CSV.
/// Points run concurrently; rows are emitted in sweep order regardless.
/// Returns 0 when at least one point converged, 3 otherwise.
pub fn run_scan(cfg: &ScanRun) -> Result<i32> {
    if cfg.steps == 0 {
        return Err(ConfigError::EmptyRange("scan").into());
    }
    if !cfg.from.is_finite() || !cfg.to.is_finite() {
        return Err(ConfigError::ParameterOutOfRange {
            name: "from/to",
            requirement: "finite scan endpoints",
            value: if cfg.from.is_finite() { cfg.to } else { cfg.from },
        }
        .into());
    }
    let seed: SeedSpec = cfg.seed.parse()?;
    // Shared discretization: the grid and spectrum do not depend on the
    // swept parameter.
    let probe = ProblemSpec::new(cfg.dim, 0.0, 0.0)?;
    let (grid, weights) = build_grid(&probe, cfg.nr, cfg.ntheta)?;
    let op = assemble_operator(&grid, &weights);
    let spectrum = dirichlet_spectrum(&op, cfg.k_eigs)?;
    let fixed_lambda = match cfg.axis {
        ScanAxis::Lambda => 0.0,
        ScanAxis::Alpha => cfg.lambda.parse::<LambdaSpec>()?.resolve(&spectrum)?,
    };
    let values: Vec<f64> = (0..cfg.steps)
        .map(|i| {
            if cfg.steps == 1 {
                cfg.from
            } else {
                cfg.from + (cfg.to - cfg.from) * (i as f64) / ((cfg.steps - 1) as f64)
            }
        })
        .collect();

    let solve_point = |value: f64| -> std::result::Result<ScanRowOk, String> {
        let (lambda, alpha) = match cfg.axis {
            ScanAxis::Lambda => (value, cfg.alpha),
            ScanAxis::Alpha => (fixed_lambda, value),
        };
        let inner = || -> Result<ScanRowOk> {
            let spec = ProblemSpec::new(cfg.dim, lambda, alpha)?;
            check_lambda_off_spectrum(&spec, &spectrum)?;
            let split = split_space(&spec, &spectrum)?;
            let nehari_cfg = SolveConfig {
                seed: seed.0,
                ..SolveConfig::default()
            };
            let report = minimize_over_y(&grid, &weights, &spec, &op, &split, &nehari_cfg)?;
            let morse = if cfg.morse {
                Some(morse_index(&grid, &weights, &spec, &op, &report.u, split.m + 3)?.index)
            } else {
                None
            };
            Ok(ScanRowOk {
                m: split.m,
                level_c: report.level_c,
                threshold: threshold(cfg.dim),
                converged: report.converged,
                morse,
                sign_change: report.changes_sign,
            })
        };
        inner().map_err(|e| e.to_string().replace([',', '\n'], ";"))
    };
    let rows: Vec<ScanRow> = values
        .par_iter()
        .map(|&value| ScanRow {
            value,
            outcome: solve_point(value),
        })
        .collect();

    let axis_name = match cfg.axis {
        ScanAxis::Lambda => "lambda",
        ScanAxis::Alpha => "alpha",
    };
    let mut text = format!("{axis_name},m,level_c,threshold,converged,morse,sign_change,error\n");
    let mut any_converged = false;
    for row in &rows {
        use fmt::Write;
        match &row.outcome {
            Ok(ok) => {
                any_converged |= ok.converged;
                let morse = ok.morse.map(|i| i.to_string()).unwrap_or_default();
                let _ = writeln!(
                    text,
                    "{},{},{},{},{},{},{},",
                    row.value, ok.m, ok.level_c, ok.threshold, ok.converged, morse, ok.sign_change
                );
            }
            Err(msg) => {
                let _ = writeln!(text, "{},,,,false,,,{}", row.value, msg);
            }
        }
    }
    write_text(cfg.out.as_deref(), &text)?;
    Ok(if any_converged { 0 } else { 3 })
}

// ---------------------------------------------------------------------------
// diag
// ---------------------------------------------------------------------------

/// `hgs diag` report body: recomputed certificates and diagnostics for a
/// stored field.
#[derive(Debug, Serialize)]
pub struct DiagPayload {
    pub field: String,
    pub dim: usize,
    pub nr: usize,
    pub ntheta: usize,
    pub lambda_spec: String,
    pub lambda: f64,
    pub alpha: f64,
    pub m: usize,
    pub level: f64,
    pub grad_norm: f64,
    pub constraint_residual: f64,
    pub changes_sign: bool,
    pub theta_monotone_defect: f64,
    pub morse: MorseData,
    pub polarization: SymmetryReport,
}

/// Recomputes diagnostics for a field stored by `solve` (or produced by any
/// compatible tool): energy, gradient and constraint residuals, sign
/// structure, Morse data, polarization gaps.
pub fn run_diag(cfg: &DiagRun) -> Result<i32> {
    let (field, r_nodes, theta_nodes) = Field::read_csv(&cfg.field)?;
    let ws = prepare(
        cfg.dim,
        &cfg.lambda,
        cfg.alpha,
        field.nr,
        field.ntheta,
        cfg.k_eigs,
    )?;
    if !Field::matches_grid(&ws.grid, &r_nodes, &theta_nodes) {
        return Err(NumericalError::FieldFormat(format!(
            "node coordinates in {} do not match the {} x {} grid",
            cfg.field.display(),
            field.nr,
            field.ntheta
        ))
        .into());
    }
    let g = h_gradient(&ws.grid, &ws.spec, &ws.op, &field);
    let grad_norm = h_norm(&ws.grid, &ws.weights, &g);
    let constraint_residual =
        constraint_from_gradient(&ws.grid, &ws.weights, &field, &g, &ws.split).norm(&ws.split);
    let level = energy(&ws.grid, &ws.weights, &ws.spec, &field).phi(&ws.spec);
    let changes_sign = sign_change(&field, SIGN_CHANGE_TOL)?;
    let morse = morse_index(
        &ws.grid,
        &ws.weights,
        &ws.spec,
        &ws.op,
        &field,
        ws.split.m + 3,
    )?;
    let polarization = polarization_invariants(
        &ws.grid,
        &ws.weights,
        &ws.spec,
        &field,
        &ws.spectrum.eigfields[0],
    )?;
    let payload = DiagPayload {
        field: cfg.field.display().to_string(),
        dim: cfg.dim,
        nr: field.nr,
        ntheta: field.ntheta,
        lambda_spec: cfg.lambda.clone(),
        lambda: ws.spec.lambda,
        alpha: cfg.alpha,
        m: ws.split.m,
        level,
        grad_norm,
        constraint_residual,
        changes_sign,
        theta_monotone_defect: theta_monotonicity(&field),
        morse,
        polarization,
    };
    write_json_report(&payload, cfg.out.as_deref())?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;
    use tempfile::tempdir;

    #[test]
    fn lambda_spec_parses_both_forms() {
        assert_eq!("9.5".parse::<LambdaSpec>().unwrap(), LambdaSpec::Absolute(9.5));
        assert_eq!(
            "auto(1.1*lambda1)".parse::<LambdaSpec>().unwrap(),
            LambdaSpec::Auto { factor: 1.1, k: 1 }
        );
        assert_eq!(
            "auto(0.5*lambda3)".parse::<LambdaSpec>().unwrap(),
            LambdaSpec::Auto { factor: 0.5, k: 3 }
        );
        for bad in ["auto(x*lambda1)", "auto(1.1*mu2)", "auto(1.1)", "abc", "auto(1*lambda0)"] {
            assert!(bad.parse::<LambdaSpec>().is_err(), "accepted {bad:?}");
        }
        // Display round-trips.
        let spec: LambdaSpec = "auto(1.25*lambda2)".parse().unwrap();
        assert_eq!(spec.to_string().parse::<LambdaSpec>().unwrap(), spec);
    }

    #[test]
    fn seed_spec_parses_both_kinds() {
        assert_eq!(
            "instanton:0.05".parse::<SeedSpec>().unwrap().0,
            SeedPolicy::Instanton { eps: 0.05 }
        );
        assert_eq!(
            "random:99".parse::<SeedSpec>().unwrap().0,
            SeedPolicy::Random { seed: 99 }
        );
        for bad in ["instanton", "random:x", "noise:3", "instanton:"] {
            assert!(bad.parse::<SeedSpec>().is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn key_value_text_parses_with_comments() {
        let text = "# header\n dim = 5 \nlambda = auto(1.1*lambda1) # trailing\n\nnr=64\n";
        let pairs = parse_key_values(text).unwrap();
        assert_eq!(
            pairs,
            vec![
                ("dim".to_string(), "5".to_string()),
                ("lambda".to_string(), "auto(1.1*lambda1)".to_string()),
                ("nr".to_string(), "64".to_string()),
            ]
        );
        assert!(parse_key_values("dim 5\n").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected_by_every_subcommand() {
        assert!(EigenRun::default().apply_kv("bogus", "1").is_err());
        assert!(SolveRun::default().apply_kv("lambda_max", "1").is_err());
        assert!(InstantonRun::default().apply_kv("epsilon", "0.1").is_err());
        assert!(ScanRun::default().apply_kv("step", "3").is_err());
        assert!(DiagRun::default().apply_kv("input", "x.csv").is_err());
        // Known keys are accepted and typed.
        let mut solve = SolveRun::default();
        solve.apply_kv("alpha", "0.25").unwrap();
        assert_eq!(solve.alpha, 0.25);
        assert!(solve.apply_kv("alpha", "zero").is_err());
        solve.apply_kv("morse", "false").unwrap();
        assert!(!solve.morse);
    }

    #[test]
    fn auto_lambda_resolves_against_the_computed_spectrum() {
        let probe = ProblemSpec::new(3, 0.0, 0.0).unwrap();
        let (grid, weights) = build_grid(&probe, 48, 8).unwrap();
        let op = assemble_operator(&grid, &weights);
        let spectrum = dirichlet_spectrum(&op, 2).unwrap();
        let spec: LambdaSpec = "auto(1.1*lambda2)".parse().unwrap();
        let resolved = spec.resolve(&spectrum).unwrap();
        assert!((resolved - 1.1 * spectrum.eigvals[1]).abs() < 1e-14);
        // Index beyond the computed spectrum is a config error.
        let too_far: LambdaSpec = "auto(1.0*lambda9)".parse().unwrap();
        assert_eq!(too_far.resolve(&spectrum).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn envelope_hash_covers_payload_but_not_timestamp() {
        #[derive(Serialize)]
        struct Demo {
            a: u32,
            b: f64,
        }
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("one.json");
        let p2 = dir.path().join("two.json");
        let h1 = write_json_report(&Demo { a: 1, b: 0.5 }, Some(&p1)).unwrap();
        std::thread::sleep(std::time::Duration::from_millis(5));
        let h2 = write_json_report(&Demo { a: 1, b: 0.5 }, Some(&p2)).unwrap();
        assert_eq!(h1, h2, "hash must not depend on the timestamp");
        let v1: Value = serde_json::from_str(&std::fs::read_to_string(&p1).unwrap()).unwrap();
        let v2: Value = serde_json::from_str(&std::fs::read_to_string(&p2).unwrap()).unwrap();
        assert_eq!(v1["schema"], 1);
        assert_eq!(v1["content_hash"].as_str().unwrap(), h1);
        assert_eq!(v1["report"], v2["report"]);
        let h3 = write_json_report(&Demo { a: 2, b: 0.5 }, Some(&p2)).unwrap();
        assert_ne!(h1, h3, "hash must depend on the payload");
    }

    #[test]
    fn eigen_run_reports_the_spectrum_and_writes_fields() {
        let dir = tempdir().unwrap();
        let out = dir.path().join("eigen.json");
        let fields = dir.path().join("fields");
        let mut cfg = EigenRun::default();
        for (k, v) in [
            ("dim", "3"),
            ("nr", "96"),
            ("ntheta", "16"),
            ("k", "2"),
        ] {
            cfg.apply_kv(k, v).unwrap();
        }
        cfg.out = Some(out.clone());
        cfg.fields_dir = Some(fields.clone());
        assert_eq!(run_eigen(&cfg).unwrap(), 0);
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let eigs = v["report"]["eigenvalues"].as_array().unwrap();
        assert_eq!(eigs.len(), 2);
        let l1 = eigs[0].as_f64().unwrap();
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        assert!((l1 - pi2).abs() / pi2 < 0.02, "lambda1 = {l1}");
        assert_eq!(v["report"]["theta_modes"][0], 0);
        assert!(fields.join("eig_1.csv").exists());
        assert!(fields.join("eig_2.csv").exists());
    }

    #[test]
    fn solve_run_writes_report_field_and_exit_codes() {
        let dir = tempdir().unwrap();
        let out = dir.path().join("solve.json");
        let field_out = dir.path().join("u.csv");
        let mut cfg = SolveRun {
            dim: 5,
            nr: 48,
            ntheta: 12,
            k_eigs: 4,
            out: Some(out.clone()),
            field_out: Some(field_out.clone()),
            ..SolveRun::default()
        };
        assert_eq!(run_solve(&cfg).unwrap(), 0);
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let report = &v["report"];
        assert_eq!(report["m"], 1);
        assert_eq!(report["converged"], true);
        assert_eq!(report["changes_sign"], true);
        assert_eq!(report["below_threshold"], true);
        assert_eq!(report["morse"]["index"], 2);
        assert!(report["polarization"]["mass_gap"].as_f64().unwrap() < 1e-10);
        assert!(
            (report["lambda"].as_f64().unwrap()
                - 1.1 * report["lambda1"].as_f64().unwrap())
            .abs()
                < 1e-12
        );
        assert!(field_out.exists());
        // Guard: require_m_positive rejects sub-λ₁ configurations.
        cfg.lambda = "auto(0.5*lambda1)".to_string();
        cfg.require_m_positive = true;
        let err = run_solve(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn solve_reports_are_deterministic() {
        let dir = tempdir().unwrap();
        let out1 = dir.path().join("a.json");
        let out2 = dir.path().join("b.json");
        let cfg1 = SolveRun {
            dim: 5,
            nr: 48,
            ntheta: 12,
            k_eigs: 4,
            morse: true,
            out: Some(out1.clone()),
            ..SolveRun::default()
        };
        let cfg2 = SolveRun {
            out: Some(out2.clone()),
            ..cfg1.clone()
        };
        run_solve(&cfg1).unwrap();
        run_solve(&cfg2).unwrap();
        let v1: Value = serde_json::from_str(&std::fs::read_to_string(&out1).unwrap()).unwrap();
        let v2: Value = serde_json::from_str(&std::fs::read_to_string(&out2).unwrap()).unwrap();
        assert_eq!(v1["content_hash"], v2["content_hash"]);
        assert_eq!(v1["report"], v2["report"]);
    }

    #[test]
    fn diag_round_trips_a_solve_field() {
        let dir = tempdir().unwrap();
        let field_out = dir.path().join("u.csv");
        let solve_cfg = SolveRun {
            dim: 5,
            nr: 48,
            ntheta: 12,
            k_eigs: 4,
            morse: false,
            field_out: Some(field_out.clone()),
            out: Some(dir.path().join("solve.json")),
            ..SolveRun::default()
        };
        assert_eq!(run_solve(&solve_cfg).unwrap(), 0);
        let diag_out = dir.path().join("diag.json");
        let diag_cfg = DiagRun {
            field: field_out,
            dim: 5,
            k_eigs: 4,
            lambda: "auto(1.1*lambda1)".to_string(),
            alpha: 0.0,
            out: Some(diag_out.clone()),
        };
        assert_eq!(run_diag(&diag_cfg).unwrap(), 0);
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&diag_out).unwrap()).unwrap();
        let solve: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("solve.json")).unwrap())
                .unwrap();
        // The recomputed gradient certificate matches the solve report to
        // CSV round-trip precision (which is exact).
        let g_diag = v["report"]["grad_norm"].as_f64().unwrap();
        let g_solve = solve["report"]["grad_norm"].as_f64().unwrap();
        assert!((g_diag - g_solve).abs() <= 1e-12 * g_solve.max(1e-30));
        assert_eq!(v["report"]["m"], 1);
        assert_eq!(v["report"]["morse"]["index"], 2);
    }

    #[test]
    fn instanton_run_produces_a_witness_and_sweep_csv() {
        let dir = tempdir().unwrap();
        let out = dir.path().join("instanton.json");
        let sweep = dir.path().join("sweep.csv");
        let cfg = InstantonRun {
            dim: 5,
            nr: 128,
            ntheta: 32,
            k_eigs: 4,
            out: Some(out.clone()),
            sweep_out: Some(sweep.clone()),
            ..InstantonRun::default()
        };
        assert_eq!(run_instanton(&cfg).unwrap(), 0);
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(v["report"]["report"]["verdict"], true);
        assert!(v["report"]["report"]["witness_eps"].as_f64().is_some());
        assert_eq!(v["report"]["failed_eps"].as_array().unwrap().len(), 0);
        let csv = std::fs::read_to_string(&sweep).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "eps,ell,dirichlet,mass,critical_alpha,critical_0,rayleigh,fiber_max,threshold"
        );
        assert_eq!(lines.count(), cfg.eps.len());
        // Guards.
        let empty = InstantonRun {
            eps: vec![],
            ..cfg.clone()
        };
        assert_eq!(run_instanton(&empty).unwrap_err().exit_code(), 1);
        let bad_margin = InstantonRun {
            margin: -0.5,
            ..cfg.clone()
        };
        assert_eq!(run_instanton(&bad_margin).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn lambda_scan_crosses_the_first_eigenvalue() {
        let dir = tempdir().unwrap();
        let out = dir.path().join("scan.csv");
        // Resolve λ₁ first so the absolute scan range brackets it.
        let probe = ProblemSpec::new(5, 0.0, 0.0).unwrap();
        let (grid, weights) = build_grid(&probe, 48, 12).unwrap();
        let op = assemble_operator(&grid, &weights);
        let spectrum = dirichlet_spectrum(&op, 2).unwrap();
        let l1 = spectrum.eigvals[0];
        let cfg = ScanRun {
            dim: 5,
            nr: 48,
            ntheta: 12,
            k_eigs: 4,
            axis: ScanAxis::Lambda,
            from: 0.8 * l1,
            to: 1.15 * l1,
            steps: 3,
            alpha: 0.0,
            morse: true,
            out: Some(out.clone()),
            ..ScanRun::default()
        };
        assert_eq!(run_scan(&cfg).unwrap(), 0);
        let csv = std::fs::read_to_string(&out).unwrap();
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), 3);
        let m_of = |row: &str| -> usize { row.split(',').nth(1).unwrap().parse().unwrap() };
        assert_eq!(m_of(rows[0]), 0, "below lambda1: {}", rows[0]);
        assert_eq!(m_of(rows[2]), 1, "above lambda1: {}", rows[2]);
        // Zero steps is a config error.
        let empty = ScanRun {
            steps: 0,
            ..cfg.clone()
        };
        assert_eq!(run_scan(&empty).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn dimension_four_spectral_guard_is_wired_through_prepare() {
        let probe = ProblemSpec::new(4, 0.0, 0.0).unwrap();
        let (grid, weights) = build_grid(&probe, 48, 12).unwrap();
        let op = assemble_operator(&grid, &weights);
        let spectrum = dirichlet_spectrum(&op, 2).unwrap();
        let l1 = spectrum.eigvals[0];
        let err = prepare(4, &format!("{l1}"), 0.0, 48, 12, 2)
            .err()
            .expect("lambda exactly on an eigenvalue must be rejected");
        assert_eq!(err.exit_code(), 1, "lambda exactly on the spectrum: {err}");
        // Slightly off the eigenvalue is fine.
        assert!(prepare(4, &format!("{}", 1.05 * l1), 0.0, 48, 12, 2).is_ok());
    }
}
