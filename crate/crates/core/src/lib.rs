//! Ground states of a critical Hénon-type equation on the unit ball.
//!
//! This crate computes ground-state solutions of the Dirichlet problem
//!
//! ```text
//! −Δu = λ u + |x|^α |u|^{2*−2} u   in B^N,      u = 0 on ∂B^N,
//! ```
//!
//! for dimension `N ≥ 3`, `λ, α ≥ 0` and the critical Sobolev exponent
//! `2* = 2N/(N−2)`, working in the class of axially symmetric (foliated
//! Schwarz) functions so the problem reduces to two dimensions `(r, θ)`.
//!
//! The variational structure: with `H = H¹₀(B^N)` under the Dirichlet inner
//! product and the energy
//!
//! ```text
//! φ(u) = ½ ∫ (|∇u|² − λu²) − (1/2*) ∫ |x|^α |u|^{2*},
//! ```
//!
//! split `H = Z ⊕ Y` where `Z` spans the eigenfunctions with eigenvalue
//! `λ_j ≤ λ` (dimension `m`). The generalized Nehari set
//!
//! ```text
//! 𝒩 = { u ≠ 0 : ⟨∇φ(u), u⟩ = 0  and  ∇φ(u) ⊥ Z }
//! ```
//!
//! is a natural constraint, and the ground-state level is the minimax
//!
//! ```text
//! c = inf_{v ∈ Y, v≠0}  max_{t>0, w ∈ Z}  φ(t v + w).
//! ```
//!
//! Module layout (one module per concern):
//!
//! * [`grid`] — reduced domain, quadrature, fields, Dirichlet inner product;
//! * [`spectral`] — discrete Laplacian, its spectrum, the `Z ⊕ Y` splitting,
//!   and exact Poisson solves via tensor decomposition;
//! * [`functional`] — energy φ, H-gradient, Hessian action, constraint map F;
//! * [`nehari`] — fiber projection onto 𝒩 and the outer minimization over Y;
//! * [`instanton`] — concentrated test family, Sobolev constant, energy
//!   threshold verification;
//! * [`diagnostics`] — sign change, Morse index, polarization and angular
//!   monotonicity checks;
//! * [`cli`] — configuration, runs, and machine-readable reports for the
//!   `hgs` binary.

#![forbid(unsafe_code)]

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod functional;
pub mod grid;
pub mod instanton;
pub mod nehari;
pub mod spectral;

pub use error::{ConfigError, Error, NumericalError, Result};
pub use grid::{build_grid, Field, Grid, ProblemSpec, Weights};
