//! Qualitative certificates for computed states: sign change, Morse index,
//! equatorial polarization, and angular monotonicity.
//!
//! The solver produces candidate ground states; this module checks the
//! structural properties expected of them. Three of the four checks are pure
//! field combinatorics (sign scan, node-exact polarization, monotonicity
//! defect); the Morse index is the one spectral computation, done by
//! subspace iteration on the Hessian in the Dirichlet inner product.
//!
//! Polarization uses the single halfspace realizable in reduced coordinates:
//! the equatorial one, whose reflection `σ(r, θ) = (r, π − θ)` is a
//! node-exact permutation of the grid (even `ntheta`). The polarized field
//! takes the pointwise max over `{u, u∘σ}` on the upper half and the min on
//! the lower half. All plain integrals of `|u|^q`, and any integral against
//! a reflection-symmetric factor, are *exactly* invariant (the rearrangement
//! is a permutation of node values within mirror pairs and the quadrature
//! factors are mirror-symmetric). The Dirichlet form is invariant for fields
//! whose mirror difference has one sign per stencil edge — in particular for
//! monotone slices and for converged states — but for incoherent fields the
//! discrete rearrangement may strictly decrease it; callers should assert
//! equality only where coherence holds and the inequality otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{ConfigError, NumericalError, Result};
use crate::functional::{energy, hessian_apply};
use crate::grid::{h_inner, integrate_product, Field, Grid, ProblemSpec, Weights};
use crate::spectral::Operator;

/// Relative height below which node values do not count as a sign: a field
/// changes sign when it exceeds `tol · ‖u‖_∞` on both sides of zero.
pub const SIGN_CHANGE_TOL: f64 = 1e-8;

/// Margin separating genuinely negative Hessian directions from numerically
/// zero ones. The Hessian acts as the identity plus a compact part, so its
/// positive part has scale 1 and the margin is absolute.
pub const EPS_MORSE: f64 = 1e-6;

/// True iff `u` takes values on both sides of zero beyond
/// `tol · ‖u‖_∞`. Errors on the zero field (no sign to speak of).
pub fn sign_change(u: &Field, tol: f64) -> Result<bool> {
    let peak = u.inf_norm();
    if peak == 0.0 {
        return Err(NumericalError::ZeroField("sign_change").into());
    }
    let (lo, hi) = u.min_max();
    Ok(lo < -tol * peak && hi > tol * peak)
}

/// Morse data of a state: the certified index plus the evidence behind it.
#[derive(Debug, Clone, Serialize)]
pub struct MorseData {
    /// Number of Hessian eigenvalues below `−`[`EPS_MORSE`].
    pub index: usize,
    /// Number of eigenvalues within `±`[`EPS_MORSE`] of zero — nonzero in
    /// near-degenerate situations (λ close to an eigenvalue), in which case
    /// the index alone is not trustworthy.
    pub ambiguous: usize,
    /// The computed lowest Hessian eigenvalues, ascending.
    pub hessian_eigs: Vec<f64>,
}

/// Computes the index of the energy Hessian at `u`: the number of descent
/// directions of `φ''(u)` in the Dirichlet inner product, by subspace
/// iteration on the compact part.
///
/// The Hessian acts as `v ↦ v − C v` with
/// `C v = K⁻¹M((λ + (p−1)W(u))v)` positive semidefinite and H-selfadjoint,
/// so Hessian eigenvalues below `−ε` are exactly `C`-eigenvalues above
/// `1 + ε`: the iteration chases the `k` largest eigenvalues of `C` and
/// counts. Deterministic (fixed internal seed).
///
/// Convergence of the state itself is the caller's responsibility: the index
/// of an unconverged point is meaningless and the CLI refuses to report it.
pub fn morse_index(
    grid: &Grid,
    weights: &Weights,
    spec: &ProblemSpec,
    op: &Operator,
    u: &Field,
    k: usize,
) -> Result<MorseData> {
    let budget = (grid.nr - 1) * grid.ntheta / 4;
    if k == 0 || k > budget {
        return Err(NumericalError::EigenRequestTooLarge {
            requested: k,
            available: budget,
        }
        .into());
    }
    // C v = v − Hessian v, via the functional layer so both stay in sync.
    let compact = |v: &Field| -> Field {
        let mut cv = v.clone();
        cv.axpy(-1.0, &hessian_apply(grid, spec, op, u, v));
        cv
    };
    // Deterministic random start, H-orthonormalized.
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d6f7273);
    let mut basis: Vec<Field> = (0..k)
        .map(|_| {
            let mut f = Field::zeros(grid);
            for v in &mut f.values {
                *v = rng.gen_range(-1.0..1.0);
            }
            f.zero_boundary();
            f
        })
        .collect();
    let orthonormalize = |basis: &mut Vec<Field>| {
        for i in 0..basis.len() {
            // Two Gram-Schmidt passes for numerical orthogonality.
            for _ in 0..2 {
                for j in 0..i {
                    let c = {
                        let (head, tail) = basis.split_at_mut(i);
                        h_inner(grid, weights, &tail[0], &head[j])
                    };
                    let prev = basis[j].clone();
                    basis[i].axpy(-c, &prev);
                }
            }
            let n = h_inner(grid, weights, &basis[i], &basis[i]).sqrt();
            basis[i].scale(1.0 / n.max(1e-300));
        }
    };
    orthonormalize(&mut basis);
    let mut ritz_prev = vec![f64::INFINITY; k];
    let mut ritz = vec![0.0; k];
    for _sweep in 0..300 {
        let mut images: Vec<Field> = basis.iter().map(&compact).collect();
        // Rayleigh-Ritz on the current span.
        let mut small = nalgebra::DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let a = h_inner(grid, weights, &images[i], &basis[j]);
                small[(i, j)] = a;
                small[(j, i)] = a;
            }
        }
        if small.iter().any(|v| !v.is_finite()) {
            return Err(NumericalError::NonFinite("morse subspace iteration").into());
        }
        let eig = small.symmetric_eigen();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for (pos, &p) in order.iter().enumerate() {
            ritz[pos] = eig.eigenvalues[p];
        }
        // Rotate the images into the Ritz basis; they become the next basis.
        let mut rotated: Vec<Field> = Vec::with_capacity(k);
        for &p in &order {
            let mut f = Field::zeros(grid);
            for i in 0..k {
                f.axpy(eig.eigenvectors[(i, p)], &images[i]);
            }
            rotated.push(f);
        }
        images.clear();
        basis = rotated;
        orthonormalize(&mut basis);
        let drift = ritz
            .iter()
            .zip(&ritz_prev)
            .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
            .fold(0.0_f64, f64::max);
        ritz_prev.copy_from_slice(&ritz);
        if drift < 1e-10 {
            break;
        }
    }
    let index = ritz.iter().filter(|&&mu| mu > 1.0 + EPS_MORSE).count();
    let ambiguous = ritz.iter().filter(|&&mu| (mu - 1.0).abs() <= EPS_MORSE).count();
    let mut hessian_eigs: Vec<f64> = ritz.iter().map(|mu| 1.0 - mu).collect();
    hessian_eigs.sort_by(f64::total_cmp);
    Ok(MorseData {
        index,
        ambiguous,
        hessian_eigs,
    })
}

/// Equatorial polarization: on the upper half (θ < π/2) take
/// `max{u, u∘σ}`, on the lower half `min{u, u∘σ}`, with σ the node-exact
/// reflection `θ ↦ π − θ`. Requires even `ntheta`.
pub fn polarize_equatorial(u: &Field) -> Result<Field> {
    if u.ntheta % 2 != 0 {
        return Err(ConfigError::OddTheta(u.ntheta).into());
    }
    let nt = u.ntheta;
    let mut out = u.clone();
    for i in 0..u.nr {
        for j in 0..nt / 2 {
            let a = u.at(i, j);
            let b = u.at(i, nt - 1 - j);
            *out.at_mut(i, j) = a.max(b);
            *out.at_mut(i, nt - 1 - j) = a.min(b);
        }
    }
    Ok(out)
}

/// Angular monotonicity defect: the worst total increase of a radial slice
/// against the dominant orientation, the orientation (toward θ = 0 or toward
/// θ = π) being chosen to minimize the defect. Zero iff every slice is
/// monotone in one common direction.
pub fn theta_monotonicity(u: &Field) -> f64 {
    let mut worst_down = 0.0_f64; // violations of nonincreasing in θ
    let mut worst_up = 0.0_f64; // violations of nondecreasing in θ
    for i in 0..u.nr {
        let mut inc = 0.0;
        let mut dec = 0.0;
        for j in 0..u.ntheta - 1 {
            let d = u.at(i, j + 1) - u.at(i, j);
            if d > 0.0 {
                inc += d;
            } else {
                dec -= d;
            }
        }
        worst_down = worst_down.max(inc);
        worst_up = worst_up.max(dec);
    }
    worst_down.min(worst_up)
}

/// Canonical orientation for reporting: sign flipped so the largest-magnitude
/// node is positive, then θ reflected so that node sits in the upper half
/// (θ ≤ π/2). Both operations are exact symmetries of the energy, so this
/// only standardizes output, never changes any reported quantity.
pub fn canonicalize_orientation(u: &mut Field) {
    let mut pick = 0;
    for (k, v) in u.values.iter().enumerate() {
        if v.abs() > u.values[pick].abs() {
            pick = k;
        }
    }
    if u.values[pick] < 0.0 {
        u.scale(-1.0);
        pick = {
            let mut p = 0;
            for (k, v) in u.values.iter().enumerate() {
                if v.abs() > u.values[p].abs() {
                    p = k;
                }
            }
            p
        };
    }
    let j = pick % u.ntheta;
    if j >= u.ntheta / 2 {
        *u = u.reflect_theta();
    }
}

/// Invariance gaps between a field and its equatorial polarization.
/// All entries are absolute values; see the module docs for which of them
/// are rounding-exact for arbitrary fields and which require coherence.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SymmetryReport {
    /// Monotonicity defect of `u` itself (not of the polarized field).
    pub theta_monotone_defect: f64,
    /// `|φ(u_K) − φ(u)|`.
    pub polarization_energy_gap: f64,
    /// `|‖u_K‖²_H − ‖u‖²_H|` (exact only for coherent fields).
    pub dirichlet_gap: f64,
    /// Signed Dirichlet difference `‖u_K‖²_H − ‖u‖²_H`; never positive
    /// beyond rounding (discrete rearrangement inequality).
    pub dirichlet_change: f64,
    /// `|∫u_K² − ∫u²|` (exact for all fields).
    pub mass_gap: f64,
    /// `|∫|u_K|^p − ∫|u|^p|`, `p = 2*`, unweighted (exact for all fields).
    pub critical_gap: f64,
    /// `|∫u_K e₁ − ∫u e₁|` (exact: e₁ is reflection-symmetric).
    pub e1_gap: f64,
    /// `|∫|x|^α(|u_K|^{p−2}u_K − |u|^{p−2}u) e₁|` (exact likewise).
    pub nonlinear_e1_gap: f64,
}

/// Computes all polarization invariance gaps of `u` against the first
/// eigenfield `e1` (reflection-symmetric by construction).
pub fn polarization_invariants(
    grid: &Grid,
    weights: &Weights,
    spec: &ProblemSpec,
    u: &Field,
    e1: &Field,
) -> Result<SymmetryReport> {
    let uk = polarize_equatorial(u)?;
    let p = spec.crit_exp();
    let eu = energy(grid, weights, spec, u);
    let euk = energy(grid, weights, spec, &uk);
    let nonlinear_overlap = |f: &Field| -> f64 {
        let mut integrand = f.clone();
        for i in 0..grid.nr {
            let ra = grid.r[i].powf(spec.alpha);
            for j in 0..grid.ntheta {
                let v = f.at(i, j);
                *integrand.at_mut(i, j) = ra * v.abs().powf(p - 2.0) * v;
            }
        }
        integrate_product(grid, weights, &integrand, e1)
    };
    let crit_unweighted =
        |f: &Field| crate::grid::weighted_power_integral(grid, weights, f, p, 0.0);
    Ok(SymmetryReport {
        theta_monotone_defect: theta_monotonicity(u),
        polarization_energy_gap: (euk.phi(spec) - eu.phi(spec)).abs(),
        dirichlet_gap: (euk.dirichlet - eu.dirichlet).abs(),
        dirichlet_change: euk.dirichlet - eu.dirichlet,
        mass_gap: (euk.mass - eu.mass).abs(),
        critical_gap: (crit_unweighted(&uk) - crit_unweighted(u)).abs(),
        e1_gap: (integrate_product(grid, weights, &uk, e1)
            - integrate_product(grid, weights, u, e1))
        .abs(),
        nonlinear_e1_gap: (nonlinear_overlap(&uk) - nonlinear_overlap(u)).abs(),
    })
}
