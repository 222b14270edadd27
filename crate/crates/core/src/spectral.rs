//! Discrete Dirichlet Laplacian, its spectrum, and the `H = Z ⊕ Y` splitting.
//!
//! The reduced stiffness form of [`crate::grid::h_inner`] separates over the
//! tensor grid:
//!
//! ```text
//! K  =  K_r ⊗ diag(b)  +  diag(ρ) ⊗ T_θ,
//! ```
//!
//! with `K_r` the radial face-difference stiffness, `T_θ` the angular one,
//! `b` the angular quadrature factors and `ρ_i = r_i^{N-3}Δr_i`. Solving the
//! angular pencil `T_θ η = μ · diag(b) η` once (a small dense symmetric
//! eigenproblem) block-diagonalizes everything: expanding a field over the
//! `b`-orthonormal basis `η_q` turns `K` into one *tridiagonal* radial matrix
//! `K_q = K_r + μ_q · diag(ρ)` per angular mode. On top of this we get
//!
//! * an exact, factorization-backed Poisson solve `K g = M f` (one Thomas
//!   solve per mode) — the workhorse behind every H-gradient;
//! * the reduced Dirichlet eigenpairs: for each mode `q`, the generalized
//!   tridiagonal problem `K_q ξ = λ · diag(a) ξ`, merged across modes in
//!   ascending order. Since `ρ_i/a_i = r_i^{-2} ≥ 1` every eigenvalue of
//!   mode `q` is at least `μ_q`, which prunes the mode loop after the first
//!   `k` candidates are safe.
//!
//! Everything here is deterministic: dense symmetric eigensolves plus fixed
//! summation orders, no iterative solver, no randomness.
//!
//! The splitting: given `λ`, the subspace `Z` spans the eigenfields with
//! `λ_j ≤ λ` (dimension `m`, ties included at relative tolerance
//! [`TIE_REL_TOL`]) and `Y = Z^⊥`. Because `Z` is spanned by eigenfields,
//! orthogonality to `Z` in the Dirichlet and the weighted-L² inner products
//! coincide, so the projector onto `Z` uses plain L² coordinates.

use nalgebra::{DMatrix, DVector};

use crate::error::{ConfigError, NumericalError, Result};
use crate::grid::{integrate_product, Field, Grid, ProblemSpec, Weights};

/// Relative tolerance at which `λ` counts as *equal* to an eigenvalue: ties
/// go into `Z`, and in dimension four such λ are rejected entirely.
pub const TIE_REL_TOL: f64 = 1e-8;

/// The assembled reduced Laplacian with its angular diagonalization and the
/// per-mode tridiagonal factorizations. Immutable after construction; all
/// queries are pure.
#[derive(Debug, Clone)]
pub struct Operator {
    nr: usize,
    ntheta: usize,
    /// Interior radial node count (`nr − 1`; the last node is Dirichlet).
    ni: usize,
    /// Sphere prefactor ω of the reduced measure (needed for L² norms).
    omega: f64,
    /// Radial quadrature factors `a_i` (full grid, including boundary).
    radial_w: Vec<f64>,
    /// Angular quadrature factors `b_j`.
    angular_w: Vec<f64>,
    /// Radial face coefficients (copied from the grid).
    rface: Vec<f64>,
    /// Angular face coefficients.
    thface: Vec<f64>,
    /// `ρ_i = r_i^{N-3}Δr_i`, interior part.
    rho: Vec<f64>,
    /// Angular eigenvalues `μ_0 = 0 < μ_1 ≤ …`, ascending.
    mu: Vec<f64>,
    /// Angular eigenbasis, `ntheta × ntheta`; column `q` is `η_q`, normalized
    /// so that `η_p^T diag(b) η_q = δ_pq`.
    eta: DMatrix<f64>,
    /// Radial stiffness diagonal (interior), before the `μ_q ρ` shift.
    kr_diag: Vec<f64>,
    /// Radial stiffness off-diagonal (interior faces), length `ni − 1`.
    kr_off: Vec<f64>,
    /// Thomas factorization of `K_q` per mode: lower multipliers…
    fact_low: Vec<Vec<f64>>,
    /// …and modified diagonals.
    fact_diag: Vec<Vec<f64>>,
}

/// Lowest reduced Dirichlet eigenpairs, ascending; eigenfields are
/// L²-orthonormal with a deterministic sign (largest-magnitude node positive).
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Eigenvalues `λ_1 < λ_2 ≤ …` of the reduced problem.
    pub eigvals: Vec<f64>,
    /// Matching eigenfields.
    pub eigfields: Vec<Field>,
    /// Angular mode index of each eigenpair (0 = radially symmetric).
    pub theta_mode: Vec<usize>,
}

/// The splitting `H = Z ⊕ Y` at a given `λ`: `Z` spans the first `m`
/// eigenfields (`λ_j ≤ λ`, ties included), `Y` is its orthogonal complement.
#[derive(Debug, Clone)]
pub struct SubspaceSplit {
    /// Dimension of `Z` (0 when `λ < λ_1`).
    pub m: usize,
    /// The λ this splitting was built for.
    pub lambda: f64,
    /// Eigenvalues `λ_1, …, λ_m`.
    pub z_eigvals: Vec<f64>,
    /// L²-orthonormal basis of `Z`.
    pub z_basis: Vec<Field>,
}

/// Solves the symmetric tridiagonal generalized problem
/// `T x = λ diag(d) x` (all of `d > 0`) densely and returns ascending
/// `(λ, x)` pairs with `x` the *generalized* eigenvectors.
fn generalized_tridiag_eigs(
    diag: &[f64],
    off: &[f64],
    d: &[f64],
) -> (Vec<f64>, Vec<DVector<f64>>) {
    let n = diag.len();
    let dsqrt: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
    // Symmetrized C = D^{-1/2} T D^{-1/2}.
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = diag[i] / (dsqrt[i] * dsqrt[i]);
        if i + 1 < n {
            let v = off[i] / (dsqrt[i] * dsqrt[i + 1]);
            c[(i, i + 1)] = v;
            c[(i + 1, i)] = v;
        }
    }
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vals = Vec::with_capacity(n);
    let mut vecs = Vec::with_capacity(n);
    for &p in &order {
        vals.push(eig.eigenvalues[p]);
        // Undo the symmetrization: x = D^{-1/2} y.
        let mut x = eig.eigenvectors.column(p).clone_owned();
        for i in 0..n {
            x[i] /= dsqrt[i];
        }
        vecs.push(x);
    }
    (vals, vecs)
}

/// Assembles the reduced Laplacian: angular diagonalization plus per-mode
/// radial Thomas factorizations. Cost is one `ntheta × ntheta` dense
/// eigensolve and `O(nr · ntheta)` arithmetic.
pub fn assemble_operator(grid: &Grid, weights: &Weights) -> Operator {
    let nr = grid.nr;
    let nt = grid.ntheta;
    let ni = nr - 1;

    // Angular pencil T_θ η = μ diag(b) η; natural (no-flux) ends.
    let mut tdiag = vec![0.0; nt];
    for j in 0..nt {
        if j > 0 {
            tdiag[j] += grid.thface[j - 1];
        }
        if j + 1 < nt {
            tdiag[j] += grid.thface[j];
        }
    }
    let toff: Vec<f64> = grid.thface.iter().map(|f| -f).collect();
    let (mu, eta_cols) = generalized_tridiag_eigs(&tdiag, &toff, &weights.angular);
    let mut eta = DMatrix::zeros(nt, nt);
    for (q, col) in eta_cols.iter().enumerate() {
        // b-normalize: colᵀ diag(b) col = 1 already holds because the
        // symmetrized eigenvectors are unit; re-normalize defensively and fix
        // the sign so the largest-magnitude entry is positive.
        let nrm: f64 = col
            .iter()
            .zip(&weights.angular)
            .map(|(v, b)| v * v * b)
            .sum::<f64>()
            .sqrt();
        let mut pick = 0;
        for j in 0..nt {
            if col[j].abs() > col[pick].abs() {
                pick = j;
            }
        }
        let sign = if col[pick] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nt {
            eta[(j, q)] = sign * col[j] / nrm;
        }
    }

    // Radial stiffness on interior nodes; the face toward the boundary node
    // stays in the diagonal (Dirichlet elimination).
    let mut kr_diag = vec![0.0; ni];
    for i in 0..ni {
        if i > 0 {
            kr_diag[i] += grid.rface[i - 1];
        }
        kr_diag[i] += grid.rface[i];
    }
    let kr_off: Vec<f64> = (0..ni - 1).map(|i| -grid.rface[i]).collect();
    let rho_int: Vec<f64> = grid.rho[..ni].to_vec();

    // Thomas factorization of K_q = K_r + μ_q diag(ρ) for every mode.
    let mut fact_low = Vec::with_capacity(nt);
    let mut fact_diag = Vec::with_capacity(nt);
    for &muq in &mu {
        let mut dprime = vec![0.0; ni];
        let mut low = vec![0.0; ni];
        dprime[0] = kr_diag[0] + muq * rho_int[0];
        for i in 1..ni {
            let l = kr_off[i - 1] / dprime[i - 1];
            low[i] = l;
            dprime[i] = kr_diag[i] + muq * rho_int[i] - l * kr_off[i - 1];
        }
        fact_low.push(low);
        fact_diag.push(dprime);
    }

    Operator {
        nr,
        ntheta: nt,
        ni,
        omega: weights.omega,
        radial_w: weights.radial.clone(),
        angular_w: weights.angular.clone(),
        rface: grid.rface.clone(),
        thface: grid.thface.clone(),
        rho: rho_int,
        mu,
        eta,
        kr_diag,
        kr_off,
        fact_low,
        fact_diag,
    }
}

impl Operator {
    /// Number of interior radial nodes.
    pub fn interior_radial(&self) -> usize {
        self.ni
    }

    /// Angular eigenvalues of the reduced pencil (ascending; `μ_0 = 0`).
    pub fn angular_eigenvalues(&self) -> &[f64] {
        &self.mu
    }

    /// Applies the reduced Laplacian `A = M⁻¹K` to a field. Self-adjoint in
    /// the weighted L² inner product and positive definite on Dirichlet
    /// fields; `integrate_product(A u, v) = h_inner(u, v)` exactly (up to
    /// rounding) by construction.
    pub fn apply(&self, u: &Field) -> Field {
        debug_assert_eq!(u.nr, self.nr);
        let nt = self.ntheta;
        let mut ku = vec![0.0; self.nr * nt];
        // Radial face fluxes.
        for i in 0..self.nr - 1 {
            let f = self.rface[i];
            for j in 0..nt {
                let d = (u.at(i + 1, j) - u.at(i, j)) * f * self.angular_w[j];
                ku[i * nt + j] -= d;
                ku[(i + 1) * nt + j] += d;
            }
        }
        // Angular face fluxes.
        for i in 0..self.nr - 1 {
            let rho = self.rho[i];
            for j in 0..nt - 1 {
                let d = (u.at(i, j + 1) - u.at(i, j)) * rho * self.thface[j];
                ku[i * nt + j] -= d;
                ku[i * nt + j + 1] += d;
            }
        }
        // Mass inverse; boundary row forced to zero.
        let mut out = Field {
            nr: self.nr,
            ntheta: nt,
            values: ku,
        };
        for i in 0..self.nr - 1 {
            for j in 0..nt {
                *out.at_mut(i, j) /= self.radial_w[i] * self.angular_w[j];
            }
        }
        out.zero_boundary();
        out
    }

    /// Solves the discrete Poisson problem `K g = M f` (i.e. `A g = f` with
    /// `A = M⁻¹K`) exactly via the stored factorization: one angular
    /// transform, one Thomas solve per mode, one transform back.
    pub fn solve_poisson(&self, f: &Field) -> Field {
        debug_assert_eq!(f.nr, self.nr);
        let nt = self.ntheta;
        let ni = self.ni;
        // Right-hand side M f on interior rows, as an ni × nt matrix.
        let mut rhs = DMatrix::zeros(ni, nt);
        for i in 0..ni {
            for j in 0..nt {
                rhs[(i, j)] = self.radial_w[i] * self.angular_w[j] * f.at(i, j);
            }
        }
        // To mode space: fhat = rhs · η (η's b-weight already sits in M f).
        let fhat = &rhs * &self.eta;
        // Per-mode tridiagonal solves.
        let mut ghat = DMatrix::zeros(ni, nt);
        for q in 0..nt {
            let low = &self.fact_low[q];
            let dia = &self.fact_diag[q];
            // Forward substitution.
            ghat[(0, q)] = fhat[(0, q)];
            for i in 1..ni {
                let prev = ghat[(i - 1, q)];
                ghat[(i, q)] = fhat[(i, q)] - low[i] * prev;
            }
            // Back substitution.
            ghat[(ni - 1, q)] /= dia[ni - 1];
            for i in (0..ni - 1).rev() {
                let next = ghat[(i + 1, q)];
                ghat[(i, q)] = (ghat[(i, q)] - self.kr_off[i] * next) / dia[i];
            }
        }
        // Back to node space: g = ghat · ηᵀ.
        let g = &ghat * self.eta.transpose();
        let mut out = Field {
            nr: self.nr,
            ntheta: nt,
            values: vec![0.0; self.nr * nt],
        };
        for i in 0..ni {
            for j in 0..nt {
                *out.at_mut(i, j) = g[(i, j)];
            }
        }
        out
    }
}

/// Computes the `k` lowest reduced Dirichlet eigenpairs.
///
/// Errors when `k` exceeds a quarter of the reduced degrees of freedom (the
/// upper part of a discrete spectrum does not approximate the continuum and
/// is not worth reporting).
pub fn dirichlet_spectrum(op: &Operator, k: usize) -> Result<Spectrum> {
    let available = op.ni * op.ntheta;
    if k == 0 || k > available / 4 {
        return Err(NumericalError::EigenRequestTooLarge {
            requested: k,
            available: available / 4,
        }
        .into());
    }
    // Candidate pool: (λ, q, idx-within-mode, radial vector).
    let mut cands: Vec<(f64, usize, usize, DVector<f64>)> = Vec::new();
    let mut kth_best = f64::INFINITY;
    for q in 0..op.ntheta {
        // Mode eigenvalues are ≥ μ_q (ρ_i/a_i = r_i^{-2} ≥ 1): once the kth
        // candidate beats μ_q, later modes cannot contribute.
        if cands.len() >= k && op.mu[q] > kth_best {
            break;
        }
        let diag: Vec<f64> = (0..op.ni)
            .map(|i| op.kr_diag[i] + op.mu[q] * op.rho[i])
            .collect();
        let (vals, vecs) = generalized_tridiag_eigs(&diag, &op.kr_off, &op.radial_w[..op.ni]);
        for idx in 0..vals.len().min(k) {
            cands.push((vals[idx], q, idx, vecs[idx].clone()));
        }
        let mut sorted: Vec<f64> = cands.iter().map(|c| c.0).collect();
        sorted.sort_by(f64::total_cmp);
        if sorted.len() >= k {
            kth_best = sorted[k - 1];
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    cands.truncate(k);

    let mut eigvals = Vec::with_capacity(k);
    let mut eigfields = Vec::with_capacity(k);
    let mut theta_mode = Vec::with_capacity(k);
    for (lam, q, _idx, xi) in cands {
        // Assemble the tensor eigenfield and L²-normalize. The angular factor
        // is already b-orthonormal, so only the radial norm enters; the ball
        // prefactor ω must be included to make ∫ e² = 1.
        let mut values = vec![0.0; op.nr * op.ntheta];
        for i in 0..op.ni {
            for j in 0..op.ntheta {
                values[i * op.ntheta + j] = xi[i] * op.eta[(j, q)];
            }
        }
        let norm2: f64 = (0..op.ni)
            .map(|i| xi[i] * xi[i] * op.radial_w[i])
            .sum::<f64>();
        let mut field = Field {
            nr: op.nr,
            ntheta: op.ntheta,
            values,
        };
        let scale = 1.0 / (op.omega * norm2).sqrt();
        field.scale(scale);
        // Deterministic sign: the largest-magnitude node value is positive.
        let mut pick = 0;
        for (kk, v) in field.values.iter().enumerate() {
            if v.abs() > field.values[pick].abs() {
                pick = kk;
            }
        }
        if field.values[pick] < 0.0 {
            field.scale(-1.0);
        }
        eigvals.push(lam);
        eigfields.push(field);
        theta_mode.push(q);
    }
    Ok(Spectrum {
        eigvals,
        eigfields,
        theta_mode,
    })
}

impl Spectrum {
    /// Number of computed eigenpairs.
    pub fn len(&self) -> usize {
        self.eigvals.len()
    }

    /// True iff no eigenpairs were computed.
    pub fn is_empty(&self) -> bool {
        self.eigvals.is_empty()
    }
}

/// Builds the `Z ⊕ Y` splitting for `spec.lambda`.
///
/// `m = #{j : λ_j ≤ λ}` with ties (relative distance ≤ [`TIE_REL_TOL`])
/// included in `Z`. Errors if the computed spectrum cannot certify
/// `λ < λ_{m+1}` — ask for more eigenpairs in that case.
pub fn split_space(spec: &ProblemSpec, spectrum: &Spectrum) -> Result<SubspaceSplit> {
    let lam = spec.lambda;
    let mut m = 0;
    for &lj in &spectrum.eigvals {
        if lj <= lam || (lam - lj).abs() <= TIE_REL_TOL * lj {
            m += 1;
        } else {
            break;
        }
    }
    if m == spectrum.len() {
        return Err(NumericalError::SpectrumTooShort {
            computed: spectrum.len(),
            lambda: lam,
        }
        .into());
    }
    Ok(SubspaceSplit {
        m,
        lambda: lam,
        z_eigvals: spectrum.eigvals[..m].to_vec(),
        z_basis: spectrum.eigfields[..m].to_vec(),
    })
}

/// Rejects λ sitting on the computed spectrum (dimension-four guard: the
/// problem there is only treated for λ away from the Dirichlet eigenvalues).
pub fn check_lambda_off_spectrum(spec: &ProblemSpec, spectrum: &Spectrum) -> Result<()> {
    if spec.dim != 4 {
        return Ok(());
    }
    for (j, &lj) in spectrum.eigvals.iter().enumerate() {
        if (spec.lambda - lj).abs() <= TIE_REL_TOL.sqrt() * lj {
            return Err(ConfigError::LambdaOnSpectrum {
                lambda: spec.lambda,
                index: j + 1,
                eigenvalue: lj,
            }
            .into());
        }
    }
    Ok(())
}

/// L² coordinates of the projection of `u` onto `Z`: `c_j = ∫ u e_j`.
/// Because `Z` is eigen-spanned, these coincide with the Dirichlet-orthogonal
/// projection coordinates in the L²-normalized basis.
pub fn project_z(grid: &Grid, weights: &Weights, u: &Field, split: &SubspaceSplit) -> Vec<f64> {
    split
        .z_basis
        .iter()
        .map(|e| integrate_product(grid, weights, u, e))
        .collect()
}

/// Subtracts the `Z`-component of `u` in place, leaving (numerically) the
/// `Y`-component.
pub fn remove_z(grid: &Grid, weights: &Weights, u: &mut Field, split: &SubspaceSplit) {
    let coords = project_z(grid, weights, u, split);
    for (c, e) in coords.iter().zip(&split.z_basis) {
        u.axpy(-c, e);
    }
}
