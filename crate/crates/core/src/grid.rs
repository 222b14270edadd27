//! Reduced computational domain and quadrature for the unit N-ball.
//!
//! Functions with axial (foliated Schwarz) symmetry on the unit ball
//! `B^N ⊂ ℝ^N` depend only on the radius `r = |x|` and the polar angle
//! `θ = arccos(x·p/|x|)` measured from a fixed axis `p`. Integrals over the
//! ball reduce to the rectangle `(r, θ) ∈ [0,1] × [0,π]` against the measure
//!
//! ```text
//! dx  =  ω_{N-2} · r^{N-1} sin^{N-2}θ · dr dθ,
//! ```
//!
//! where `ω_{N-2} = 2π^{(N-1)/2} / Γ((N-1)/2)` is the surface measure of the
//! unit (N−2)-sphere, and the squared gradient reduces to
//! `|∇u|² = (∂_r u)² + r^{-2} (∂_θ u)²`.
//!
//! This module provides the grid over that rectangle, the quadrature
//! [`Weights`], the function container [`Field`], and the three integrals
//! everything else is built from: [`integrate`], [`weighted_power_integral`],
//! and the Dirichlet inner product [`h_inner`].
//!
//! # Discretization
//!
//! Nodes are cell-centered: `r_i = (i + ½)Δr` with `Δr = 2/(2·nr − 1)`, so
//! that the last node lands exactly on `r = 1` (the Dirichlet boundary, whose
//! cell is the half cell `[1 − Δr/2, 1]`), and `θ_j = (j + ½)Δθ` with
//! `Δθ = π/ntheta`. Cell-centering sidesteps the coordinate singularities at
//! `r = 0` and `θ ∈ {0, π}`: the measure weight `r^{N-1} sin^{N-2}θ` vanishes
//! there and no node ever sits on them. `ntheta` must be even so that the
//! reflection `θ ↦ π − θ` is exactly the node permutation `j ↦ ntheta−1−j`;
//! the polarization diagnostics rely on this being exact.
//!
//! [`h_inner`] is a face-based finite-difference form (gradient differences
//! weighted by face coefficients). It is *the* definition of the discrete
//! Dirichlet energy, and the discrete Laplacian in [`crate::spectral`] is its
//! exact representing operator, so summation by parts holds to rounding — not
//! merely to discretization order. The variational calculus downstream
//! (gradients, Hessians, Nehari constraints) inherits exact duality from this
//! choice.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{ConfigError, Error, NumericalError, Result};

/// Minimal radial resolution accepted by [`build_grid`].
pub const MIN_NR: usize = 8;
/// Minimal angular resolution accepted by [`build_grid`].
pub const MIN_NTHETA: usize = 4;

/// The mathematical problem instance: find ground states of
///
/// ```text
/// −Δu = λ u + |x|^α |u|^{2*−2} u   in B^N,      u = 0 on ∂B^N,
/// ```
///
/// with `2* = 2N/(N−2)` the critical Sobolev exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    /// Space dimension `N ≥ 3`.
    pub dim: usize,
    /// Linear coefficient `λ ≥ 0`.
    pub lambda: f64,
    /// Radial weight exponent `α ≥ 0` (α = 0 recovers the unweighted
    /// critical problem).
    pub alpha: f64,
}

impl ProblemSpec {
    /// Validated constructor.
    pub fn new(dim: usize, lambda: f64, alpha: f64) -> Result<Self> {
        if dim < 3 {
            return Err(ConfigError::DimensionTooSmall(dim).into());
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(ConfigError::ParameterOutOfRange {
                name: "lambda",
                requirement: "0 <= lambda < inf",
                value: lambda,
            }
            .into());
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(ConfigError::ParameterOutOfRange {
                name: "alpha",
                requirement: "0 <= alpha < inf",
                value: alpha,
            }
            .into());
        }
        Ok(ProblemSpec { dim, lambda, alpha })
    }

    /// Critical Sobolev exponent `2* = 2N/(N−2)`.
    pub fn crit_exp(&self) -> f64 {
        2.0 * self.dim as f64 / (self.dim as f64 - 2.0)
    }
}

/// Tensor-product grid over `(r, θ) ∈ [0,1] × [0,π]`; see the module docs for
/// the node layout. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Grid {
    /// Space dimension `N`.
    pub dim: usize,
    /// Number of radial nodes (the last one is the Dirichlet boundary `r = 1`).
    pub nr: usize,
    /// Number of angular nodes (even).
    pub ntheta: usize,
    /// Radial mesh width `Δr = 2/(2·nr − 1)`.
    pub dr: f64,
    /// Angular mesh width `Δθ = π/ntheta`.
    pub dtheta: f64,
    /// Radial nodes `r_i = (i + ½)Δr`, strictly increasing, `r_{nr-1} = 1`.
    pub r: Vec<f64>,
    /// Angular nodes `θ_j = (j + ½)Δθ`.
    pub theta: Vec<f64>,
    /// Surface measure of the unit (N−2)-sphere, the prefactor of the reduced
    /// measure.
    pub omega: f64,
    /// Radial cell widths: `Δr` everywhere except the boundary half cell
    /// `Δr/2` at `i = nr−1`.
    pub dr_cell: Vec<f64>,
    /// Radial face coefficients `((i+1)Δr)^{N-1}/Δr` for faces between nodes
    /// `i` and `i+1` (`i = 0 .. nr−2`); used by the radial part of
    /// [`h_inner`].
    pub rface: Vec<f64>,
    /// Angular face coefficients `sin^{N-2}((j+1)Δθ)/Δθ` for faces between
    /// nodes `j` and `j+1` (`j = 0 .. ntheta−2`).
    pub thface: Vec<f64>,
    /// Radial factors `r_i^{N-3} Δr_i` multiplying the angular stiffness
    /// (they integrate the `r^{-2}` in the reduced gradient against the
    /// measure).
    pub rho: Vec<f64>,
}

/// Quadrature weights for the reduced measure, stored in tensor form:
/// the weight of node `(i, j)` is `omega · radial[i] · angular[j]`.
#[derive(Debug, Clone)]
pub struct Weights {
    /// Sphere-measure prefactor `ω_{N-2}`.
    pub omega: f64,
    /// Radial factors `a_i = r_i^{N-1} Δr_i`.
    pub radial: Vec<f64>,
    /// Angular factors `b_j = sin^{N-2}θ_j · Δθ`.
    pub angular: Vec<f64>,
}

impl Weights {
    /// Weight of node `(i, j)`.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.omega * self.radial[i] * self.angular[j]
    }

    /// Sum of all weights; approximates the volume of the unit N-ball.
    pub fn total(&self) -> f64 {
        let ra: f64 = self.radial.iter().sum();
        let an: f64 = self.angular.iter().sum();
        self.omega * ra * an
    }
}

/// Γ(k/2) for positive half-integer or integer argument given as `half = k`
/// (i.e. the argument is `half/2`). Exact recursion from Γ(1/2) = √π and
/// Γ(1) = 1; only small arguments occur (dimension-derived), so no overflow
/// care is needed.
pub(crate) fn gamma_half(half: usize) -> f64 {
    assert!(half >= 1, "gamma_half needs a positive half-integer argument");
    let mut value = if half % 2 == 1 {
        std::f64::consts::PI.sqrt()
    } else {
        1.0
    };
    let mut k = if half % 2 == 1 { 1 } else { 2 };
    while k + 2 <= half {
        value *= k as f64 / 2.0;
        k += 2;
    }
    value
}

/// Volume of the unit N-ball, `π^{N/2} / Γ(N/2 + 1)`.
pub fn ball_volume(dim: usize) -> f64 {
    std::f64::consts::PI.powf(dim as f64 / 2.0) / gamma_half(dim + 2)
}

/// Surface measure of the unit (d−1)-sphere in ℝ^d, `2π^{d/2}/Γ(d/2)`.
pub fn sphere_measure(d: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma_half(d)
}

/// Builds the grid and its quadrature weights.
///
/// Rejects `nr < 8`, `ntheta < 4`, and odd `ntheta` (the angular reflection
/// must be a node permutation).
pub fn build_grid(spec: &ProblemSpec, nr: usize, ntheta: usize) -> Result<(Grid, Weights)> {
    if nr < MIN_NR || ntheta < MIN_NTHETA {
        return Err(ConfigError::GridTooCoarse {
            nr,
            ntheta,
            min_nr: MIN_NR,
            min_ntheta: MIN_NTHETA,
        }
        .into());
    }
    if ntheta % 2 != 0 {
        return Err(ConfigError::OddTheta(ntheta).into());
    }
    let n = spec.dim;
    let dr = 2.0 / (2.0 * nr as f64 - 1.0);
    let dtheta = std::f64::consts::PI / ntheta as f64;
    let r: Vec<f64> = (0..nr).map(|i| (i as f64 + 0.5) * dr).collect();
    let theta: Vec<f64> = (0..ntheta).map(|j| (j as f64 + 0.5) * dtheta).collect();
    let mut dr_cell = vec![dr; nr];
    dr_cell[nr - 1] = dr / 2.0; // the boundary node only owns the inner half of its cell
    let omega = sphere_measure(n - 1);
    let rface: Vec<f64> = (0..nr - 1)
        .map(|i| ((i as f64 + 1.0) * dr).powi(n as i32 - 1) / dr)
        .collect();
    let thface: Vec<f64> = (0..ntheta - 1)
        .map(|j| ((j as f64 + 1.0) * dtheta).sin().powi(n as i32 - 2) / dtheta)
        .collect();
    let rho: Vec<f64> = (0..nr)
        .map(|i| r[i].powi(n as i32 - 3) * dr_cell[i])
        .collect();
    let radial: Vec<f64> = (0..nr)
        .map(|i| r[i].powi(n as i32 - 1) * dr_cell[i])
        .collect();
    let angular: Vec<f64> = theta
        .iter()
        .map(|&t| t.sin().powi(n as i32 - 2) * dtheta)
        .collect();
    let grid = Grid {
        dim: n,
        nr,
        ntheta,
        dr,
        dtheta,
        r,
        theta,
        omega,
        dr_cell,
        rface,
        thface,
        rho,
    };
    let weights = Weights {
        omega,
        radial,
        angular,
    };
    Ok((grid, weights))
}

impl Grid {
    /// Total number of nodes, `nr · ntheta`.
    pub fn node_count(&self) -> usize {
        self.nr * self.ntheta
    }

    /// True iff radial index `i` is the Dirichlet boundary row `r = 1`.
    #[inline]
    pub fn is_boundary_row(&self, i: usize) -> bool {
        i == self.nr - 1
    }

    /// Flat index of node `(i, j)`, row-major over `(r, θ)`.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.ntheta + j
    }
}

/// A real-valued function sampled on a [`Grid`], the discrete stand-in for an
/// element of `H¹₀`. Values are stored row-major over `(r, θ)`; the Dirichlet
/// boundary row `r = 1` must be identically zero (enforced by the
/// constructors, asserted by consumers).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    /// Radial node count of the owning grid.
    pub nr: usize,
    /// Angular node count of the owning grid.
    pub ntheta: usize,
    /// Node values, length `nr · ntheta`, row-major: `values[i*ntheta + j]`.
    pub values: Vec<f64>,
}

impl Field {
    /// The zero field on `grid`.
    pub fn zeros(grid: &Grid) -> Self {
        Field {
            nr: grid.nr,
            ntheta: grid.ntheta,
            values: vec![0.0; grid.node_count()],
        }
    }

    /// Samples `f(r, θ)` at every node, then zeroes the boundary row.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.node_count());
        for i in 0..grid.nr {
            for j in 0..grid.ntheta {
                values.push(f(grid.r[i], grid.theta[j]));
            }
        }
        let mut field = Field {
            nr: grid.nr,
            ntheta: grid.ntheta,
            values,
        };
        field.zero_boundary();
        field
    }

    /// Wraps raw values (length must be `nr·ntheta`); boundary row is zeroed.
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            grid.node_count(),
            "value buffer length does not match the grid"
        );
        let mut field = Field {
            nr: grid.nr,
            ntheta: grid.ntheta,
            values,
        };
        field.zero_boundary();
        field
    }

    /// Zeroes the Dirichlet row `r = 1`.
    pub fn zero_boundary(&mut self) {
        let start = (self.nr - 1) * self.ntheta;
        for v in &mut self.values[start..] {
            *v = 0.0;
        }
    }

    /// Value at node `(i, j)`.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ntheta + j]
    }

    /// Mutable value at node `(i, j)`.
    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.values[i * self.ntheta + j]
    }

    /// Panics unless `other` lives on the same grid shape. All binary field
    /// operations require this; a mismatch is a programming error, not a
    /// recoverable condition.
    #[inline]
    pub fn assert_compatible(&self, other: &Field) {
        assert!(
            self.nr == other.nr && self.ntheta == other.ntheta,
            "field shape mismatch: {}x{} vs {}x{}",
            self.nr,
            self.ntheta,
            other.nr,
            other.ntheta
        );
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: f64, other: &Field) {
        self.assert_compatible(other);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    /// `self *= c`.
    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// Maximum absolute node value.
    pub fn inf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Minimum and maximum node values.
    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// True iff every value is finite.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// The field reflected across the equator, `u(r, θ) ↦ u(r, π−θ)` — the
    /// exact node permutation `j ↦ ntheta−1−j`.
    pub fn reflect_theta(&self) -> Field {
        let mut out = self.clone();
        for i in 0..self.nr {
            for j in 0..self.ntheta {
                out.values[i * self.ntheta + j] = self.values[i * self.ntheta + (self.ntheta - 1 - j)];
            }
        }
        out
    }

    /// Writes the field as CSV with header `r,theta,value`, one row per node,
    /// row-major over `(r, θ)`. Floats use shortest round-trip formatting, so
    /// a read-back is bit-exact.
    pub fn write_csv(&self, grid: &Grid, path: &Path) -> Result<()> {
        assert!(
            self.nr == grid.nr && self.ntheta == grid.ntheta,
            "field does not belong to this grid"
        );
        let mut out = String::with_capacity(self.values.len() * 24);
        out.push_str("r,theta,value\n");
        for i in 0..self.nr {
            for j in 0..self.ntheta {
                // Shortest round-trip via the default f64 Display.
                writeln!(out, "{},{},{}", grid.r[i], grid.theta[j], self.at(i, j))
                    .expect("writing to a String cannot fail");
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Reads a field CSV produced by [`Field::write_csv`], inferring the grid
    /// shape from the node coordinates (θ cycles fastest). Validates the
    /// shape, the row count, and that every value is finite; the caller is
    /// expected to validate coordinates against its own grid via
    /// [`Field::matches_grid`].
    pub fn read_csv(path: &Path) -> Result<(Field, Vec<f64>, Vec<f64>)> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "r,theta,value" => {}
            other => {
                return Err(NumericalError::FieldFormat(format!(
                    "expected header 'r,theta,value', got {:?}",
                    other
                ))
                .into())
            }
        }
        let mut rs: Vec<f64> = Vec::new();
        let mut thetas: Vec<f64> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut next = |what: &'static str| -> Result<f64> {
                let token = parts
                    .next()
                    .ok_or_else(|| NumericalError::FieldFormat(format!("row {}: missing {}", k + 2, what)))?;
                token.trim().parse::<f64>().map_err(|e| {
                    Error::from(NumericalError::FieldFormat(format!(
                        "row {}: bad {} '{}': {}",
                        k + 2,
                        what,
                        token,
                        e
                    )))
                })
            };
            let r = next("r")?;
            let t = next("theta")?;
            let v = next("value")?;
            if !v.is_finite() {
                return Err(NumericalError::NonFinite("field CSV value").into());
            }
            rs.push(r);
            thetas.push(t);
            values.push(v);
        }
        if values.is_empty() {
            return Err(NumericalError::FieldFormat("no data rows".into()).into());
        }
        // θ cycles fastest: ntheta = length of the leading run of constant r.
        let r0 = rs[0];
        let ntheta = rs.iter().take_while(|&&r| r == r0).count();
        if ntheta == 0 || !values.len().is_multiple_of(ntheta) {
            return Err(
                NumericalError::FieldFormat("rows do not form an (r, theta) product".into()).into(),
            );
        }
        let nr = values.len() / ntheta;
        for i in 0..nr {
            for j in 0..ntheta {
                let k = i * ntheta + j;
                if rs[k] != rs[i * ntheta] || thetas[k] != thetas[j] {
                    return Err(NumericalError::FieldFormat(format!(
                        "row {}: coordinates break the tensor-product layout",
                        k + 2
                    ))
                    .into());
                }
            }
        }
        let field = Field {
            nr,
            ntheta,
            values,
        };
        let r_nodes: Vec<f64> = (0..nr).map(|i| rs[i * ntheta]).collect();
        let theta_nodes: Vec<f64> = thetas[..ntheta].to_vec();
        Ok((field, r_nodes, theta_nodes))
    }

    /// Checks that coordinate vectors (as read from a CSV) agree with `grid`
    /// to tight relative tolerance.
    pub fn matches_grid(grid: &Grid, r_nodes: &[f64], theta_nodes: &[f64]) -> bool {
        r_nodes.len() == grid.nr
            && theta_nodes.len() == grid.ntheta
            && r_nodes
                .iter()
                .zip(&grid.r)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0))
            && theta_nodes
                .iter()
                .zip(&grid.theta)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0))
    }
}

/// `∫ f dx` over the ball: the weighted node sum. Fixed (row-major)
/// summation order keeps results bit-deterministic.
pub fn integrate(grid: &Grid, weights: &Weights, f: &Field) -> f64 {
    debug_assert_eq!(f.nr, grid.nr);
    debug_assert_eq!(f.ntheta, grid.ntheta);
    let mut total = 0.0;
    for i in 0..grid.nr {
        let mut row = 0.0;
        for j in 0..grid.ntheta {
            row += weights.angular[j] * f.at(i, j);
        }
        total += weights.radial[i] * row;
    }
    weights.omega * total
}

/// `∫ f·g dx`; the weighted-L² inner product.
pub fn integrate_product(grid: &Grid, weights: &Weights, f: &Field, g: &Field) -> f64 {
    f.assert_compatible(g);
    debug_assert_eq!(f.nr, grid.nr);
    let mut total = 0.0;
    for i in 0..grid.nr {
        let mut row = 0.0;
        for j in 0..grid.ntheta {
            row += weights.angular[j] * f.at(i, j) * g.at(i, j);
        }
        total += weights.radial[i] * row;
    }
    weights.omega * total
}

/// `∫ |x|^α |u|^p dx  =  Σ_ij r_i^α |u_ij|^p w_ij`. With `α = 0, p = 2` this
/// is the mass term; with `p = 2*` the critical term.
pub fn weighted_power_integral(
    grid: &Grid,
    weights: &Weights,
    u: &Field,
    p: f64,
    alpha: f64,
) -> f64 {
    debug_assert!(p >= 1.0 && alpha >= 0.0);
    debug_assert_eq!(u.nr, grid.nr);
    let mut total = 0.0;
    for i in 0..grid.nr {
        let mut row = 0.0;
        for j in 0..grid.ntheta {
            row += weights.angular[j] * u.at(i, j).abs().powf(p);
        }
        let ra = if alpha == 0.0 { 1.0 } else { grid.r[i].powf(alpha) };
        total += weights.radial[i] * ra * row;
    }
    weights.omega * total
}

/// Discrete Dirichlet inner product `⟨u, v⟩ = ∫ ∇u · ∇v dx` in reduced
/// coordinates:
///
/// ```text
/// ⟨u,v⟩ = ω Σ faces  [ rface_i · Δ_r u · Δ_r v · b_j  +  ρ_i · thface_j · Δ_θ u · Δ_θ v ]
/// ```
///
/// Symmetric and positive definite on fields vanishing at `r = 1`. This form
/// *defines* the discrete `H¹₀` geometry; the stiffness action in
/// [`crate::spectral`] represents it exactly.
pub fn h_inner(grid: &Grid, weights: &Weights, u: &Field, v: &Field) -> f64 {
    u.assert_compatible(v);
    debug_assert_eq!(u.nr, grid.nr);
    let nt = grid.ntheta;
    let mut total = 0.0;
    // Radial differences across faces (i, i+1); the boundary row is a live
    // difference u[nr-1] - u[nr-2] with u[nr-1] = 0, which is exactly the
    // Dirichlet penalty face.
    for i in 0..grid.nr - 1 {
        let mut row = 0.0;
        for j in 0..nt {
            let du = u.at(i + 1, j) - u.at(i, j);
            let dv = v.at(i + 1, j) - v.at(i, j);
            row += weights.angular[j] * du * dv;
        }
        total += grid.rface[i] * row;
    }
    // Angular differences across faces (j, j+1); no wraparound — θ = 0 and
    // θ = π are natural (no-flux) ends of the reduced domain.
    for i in 0..grid.nr {
        let mut row = 0.0;
        for j in 0..nt - 1 {
            let du = u.at(i, j + 1) - u.at(i, j);
            let dv = v.at(i, j + 1) - v.at(i, j);
            row += grid.thface[j] * du * dv;
        }
        total += grid.rho[i] * row;
    }
    grid.omega * total
}

/// `sqrt(⟨u, u⟩)`, the Dirichlet (H) norm.
pub fn h_norm(grid: &Grid, weights: &Weights, u: &Field) -> f64 {
    h_inner(grid, weights, u, u).sqrt()
}
