//! The energy functional, its H-gradient, Hessian action, and the
//! constraint map that characterizes the manifold of admissible states.
//!
//! The functional under study is
//!
//! ```text
//! φ(u) = ½ ∫ |∇u|²  −  λ/2 ∫ u²  −  1/p ∫ |x|^α |u|^p,       p = 2N/(N−2),
//! ```
//!
//! realized with the reduced quadrature of [`crate::grid`]. All calculus is
//! done in the Dirichlet inner product `⟨·,·⟩ = h_inner`: the gradient
//! returned here is the Riesz representative `∇φ(u) ∈ H` satisfying
//! `⟨∇φ(u), v⟩ = φ'(u)[v]` *exactly* at the discrete level, because
//! [`crate::spectral::Operator::solve_poisson`] inverts the same stiffness
//! form the quadrature uses. That exactness is what lets the outer solver
//! drive residuals to 1e−6 and the tests assert duality at rounding level.
//!
//! The constraint map collects the `m + 1` scalar equations cutting out the
//! admissible set at a given splitting `H = Z ⊕ Y`:
//!
//! ```text
//! F(u) = ( ⟨∇φ(u), u⟩,  ⟨∇φ(u), e_1⟩_{L²}, …, ⟨∇φ(u), e_m⟩_{L²} ),
//! ```
//!
//! whose zero locus (for `u ∉ Z`) is the natural constraint: every critical
//! point of the constrained problem is a genuine critical point of `φ`.

use crate::grid::{h_inner, integrate_product, weighted_power_integral, Field, Grid, ProblemSpec, Weights};
use crate::spectral::{Operator, SubspaceSplit};

/// The three integrals making up the energy, kept separate because every
/// report and diagnostic wants them individually.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    /// `∫ |∇u|²` (reduced Dirichlet form).
    pub dirichlet: f64,
    /// `∫ u²`.
    pub mass: f64,
    /// `∫ |x|^α |u|^p` with `p = 2N/(N−2)`.
    pub critical: f64,
}

impl EnergyBreakdown {
    /// The energy value `φ(u)` assembled from the parts.
    pub fn phi(&self, spec: &ProblemSpec) -> f64 {
        0.5 * (self.dirichlet - spec.lambda * self.mass) - self.critical / spec.crit_exp()
    }

    /// The quadratic-minus-nonlinear derivative along the ray through `u`:
    /// `⟨∇φ(u), u⟩ = dirichlet − λ·mass − critical`. Vanishes on the
    /// admissible manifold.
    pub fn ray_derivative(&self, spec: &ProblemSpec) -> f64 {
        self.dirichlet - spec.lambda * self.mass - self.critical
    }
}

/// Evaluates the three energy integrals of `u`.
pub fn energy(grid: &Grid, weights: &Weights, spec: &ProblemSpec, u: &Field) -> EnergyBreakdown {
    EnergyBreakdown {
        dirichlet: h_inner(grid, weights, u, u),
        mass: integrate_product(grid, weights, u, u),
        critical: weighted_power_integral(grid, weights, u, spec.crit_exp(), spec.alpha),
    }
}

/// The pointwise nonlinear weight `W(x) = |x|^α |u(x)|^{p−2}` as a field
/// (boundary row zero like everything else).
fn nonlinear_weight(grid: &Grid, spec: &ProblemSpec, u: &Field) -> Field {
    let pm2 = spec.crit_exp() - 2.0;
    let mut w = u.clone();
    for i in 0..grid.nr {
        let ra = grid.r[i].powf(spec.alpha);
        for j in 0..grid.ntheta {
            let v = u.at(i, j).abs();
            *w.at_mut(i, j) = ra * v.powf(pm2);
        }
    }
    w
}

/// H-gradient of `φ` at `u`: the field `g` with `⟨g, v⟩ = φ'(u)[v]` for all
/// Dirichlet fields `v`, computed as `g = u − K⁻¹M(λu + W·u)`.
pub fn h_gradient(grid: &Grid, spec: &ProblemSpec, op: &Operator, u: &Field) -> Field {
    let w = nonlinear_weight(grid, spec, u);
    let mut rhs = u.clone();
    for (r, (&uv, &wv)) in rhs
        .values
        .iter_mut()
        .zip(u.values.iter().zip(&w.values))
    {
        *r = (spec.lambda + wv) * uv;
    }
    let mut g = u.clone();
    g.axpy(-1.0, &op.solve_poisson(&rhs));
    g
}

/// Action of the H-Hessian of `φ` at `u` on `v`:
/// `∇²φ(u)v = v − K⁻¹M( λv + (p−1) W·v )`.
pub fn hessian_apply(
    grid: &Grid,
    spec: &ProblemSpec,
    op: &Operator,
    u: &Field,
    v: &Field,
) -> Field {
    let pm1 = spec.crit_exp() - 1.0;
    let w = nonlinear_weight(grid, spec, u);
    let mut rhs = v.clone();
    for (r, (&vv, &wv)) in rhs
        .values
        .iter_mut()
        .zip(v.values.iter().zip(&w.values))
    {
        *r = (spec.lambda + pm1 * wv) * vv;
    }
    let mut out = v.clone();
    out.axpy(-1.0, &op.solve_poisson(&rhs));
    out
}

/// Value of the constraint map: the ray component `s = ⟨∇φ(u), u⟩` and the
/// L² coordinates `z_j = ∫ ∇φ(u) e_j` of the gradient on `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintValue {
    /// `⟨∇φ(u), u⟩` (Dirichlet pairing).
    pub s: f64,
    /// `∫ ∇φ(u) e_j`, `j = 1..m`.
    pub z: Vec<f64>,
}

impl ConstraintValue {
    /// Natural magnitude of the constraint violation: the `z_j` are L²
    /// coordinates, so their H-norm contribution carries a factor `λ_j`
    /// (`‖e_j‖²_H = λ_j` for L²-normalized eigenfields):
    /// `‖F‖ = sqrt(s² + Σ_j λ_j z_j²)`.
    pub fn norm(&self, split: &SubspaceSplit) -> f64 {
        let zsum: f64 = self
            .z
            .iter()
            .zip(&split.z_eigvals)
            .map(|(z, l)| l * z * z)
            .sum();
        (self.s * self.s + zsum).sqrt()
    }
}

/// Evaluates the constraint map from an already-computed H-gradient.
pub fn constraint_from_gradient(
    grid: &Grid,
    weights: &Weights,
    u: &Field,
    g: &Field,
    split: &SubspaceSplit,
) -> ConstraintValue {
    let s = h_inner(grid, weights, g, u);
    let z = split
        .z_basis
        .iter()
        .map(|e| integrate_product(grid, weights, g, e))
        .collect();
    ConstraintValue { s, z }
}

/// Evaluates the constraint map at `u` (computes the gradient internally).
pub fn constraint_f(
    grid: &Grid,
    weights: &Weights,
    spec: &ProblemSpec,
    op: &Operator,
    u: &Field,
    split: &SubspaceSplit,
) -> ConstraintValue {
    let g = h_gradient(grid, spec, op, u);
    constraint_from_gradient(grid, weights, u, &g, split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, h_norm, Field};
    use crate::spectral::{assemble_operator, dirichlet_spectrum, split_space};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(
        dim: usize,
        lambda: f64,
        alpha: f64,
        nr: usize,
        nt: usize,
    ) -> (ProblemSpec, Grid, Weights, Operator) {
        let spec = ProblemSpec::new(dim, lambda, alpha).unwrap();
        let (g, w) = build_grid(&spec, nr, nt).unwrap();
        let op = assemble_operator(&g, &w);
        (spec, g, w, op)
    }

    fn smooth_random_field(g: &Grid, op: &Operator, rng: &mut ChaCha8Rng, amp: f64) -> Field {
        // Two Poisson smoothings of white noise give an H-regular field with
        // O(amp) values; rough noise would wreck finite-difference checks.
        let mut f = Field::zeros(g);
        for v in &mut f.values {
            *v = rng.gen_range(-1.0..1.0);
        }
        f.zero_boundary();
        let mut s = op.solve_poisson(&op.solve_poisson(&f));
        let peak = s.inf_norm().max(1e-30);
        s.scale(amp / peak);
        s
    }

    #[test]
    fn energy_parts_scale_exactly() {
        let (spec, g, w, op) = setup(3, 5.0, 1.0, 32, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u = smooth_random_field(&g, &op, &mut rng, 1.3);
        let mut u2 = u.clone();
        let t = 1.7;
        u2.scale(t);
        let e1 = energy(&g, &w, &spec, &u);
        let e2 = energy(&g, &w, &spec, &u2);
        let p = spec.crit_exp();
        assert!((e2.dirichlet - t * t * e1.dirichlet).abs() < 1e-12 * e1.dirichlet.abs());
        assert!((e2.mass - t * t * e1.mass).abs() < 1e-12 * e1.mass.abs());
        assert!((e2.critical - t.powf(p) * e1.critical).abs() < 1e-12 * e1.critical);
    }

    #[test]
    fn energy_of_ground_mode_at_its_own_eigenvalue() {
        // With λ = λ₁ the quadratic part cancels on e₁ and only the critical
        // term survives: φ(e₁) = −(1/p) ∫ |x|^α e₁^p.
        let (_, g, w, op) = setup(3, 0.0, 0.5, 96, 16);
        let sp = dirichlet_spectrum(&op, 1).unwrap();
        let spec1 = ProblemSpec::new(3, sp.eigvals[0], 0.5).unwrap();
        let e1 = &sp.eigfields[0];
        let parts = energy(&g, &w, &spec1, e1);
        let expect = -parts.critical / spec1.crit_exp();
        let phi = parts.phi(&spec1);
        assert!(
            (phi - expect).abs() < 1e-9 * expect.abs(),
            "phi {} vs {}",
            phi,
            expect
        );
        // And the quadratic cancellation itself, via the Rayleigh identity.
        assert!((parts.dirichlet - spec1.lambda * parts.mass).abs() < 1e-9 * parts.dirichlet);
    }

    #[test]
    fn gradient_is_exact_riesz_representative() {
        // ⟨∇φ(u), v⟩ must equal the directional derivative assembled from
        // the energy integrands directly: h(u,v) − λ∫uv − ∫W u v. This holds
        // to rounding by the Poisson duality, independent of any step size.
        let (spec, g, w, op) = setup(4, 10.0, 1.5, 40, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = smooth_random_field(&g, &op, &mut rng, 1.1);
        let grad = h_gradient(&g, &spec, &op, &u);
        for _ in 0..4 {
            let v = smooth_random_field(&g, &op, &mut rng, 0.9);
            let lhs = h_inner(&g, &w, &grad, &v);
            // Direct derivative: h(u,v) − ∫(λ + W)u v.
            let wfield = super::nonlinear_weight(&g, &spec, &u);
            let mut integrand = u.clone();
            for (t, (&uv, &wv)) in integrand
                .values
                .iter_mut()
                .zip(u.values.iter().zip(&wfield.values))
            {
                *t = (spec.lambda + wv) * uv;
            }
            let rhs = h_inner(&g, &w, &u, &v) - integrate_product(&g, &w, &integrand, &v);
            assert!(
                (lhs - rhs).abs() <= 1e-11 * lhs.abs().max(1.0),
                "duality defect {} vs {}",
                lhs,
                rhs
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences_of_phi() {
        let (spec, g, w, op) = setup(3, 6.0, 0.0, 32, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let u = smooth_random_field(&g, &op, &mut rng, 1.0);
        let v = smooth_random_field(&g, &op, &mut rng, 1.0);
        let grad = h_gradient(&g, &spec, &op, &u);
        let exact = h_inner(&g, &w, &grad, &v);
        let h = 1e-5;
        let phi_at = |t: f64| {
            let mut ut = u.clone();
            ut.axpy(t, &v);
            energy(&g, &w, &spec, &ut).phi(&spec)
        };
        let fd = (phi_at(h) - phi_at(-h)) / (2.0 * h);
        assert!(
            (fd - exact).abs() <= 1e-7 * exact.abs().max(1e-3),
            "fd {} vs exact {}",
            fd,
            exact
        );
    }

    #[test]
    fn hessian_is_symmetric_and_matches_gradient_differences() {
        let (spec, g, w, op) = setup(3, 6.0, 1.0, 32, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let u = smooth_random_field(&g, &op, &mut rng, 1.2);
        let v = smooth_random_field(&g, &op, &mut rng, 1.0);
        let x = smooth_random_field(&g, &op, &mut rng, 1.0);
        // Symmetry in the Dirichlet product.
        let hv = hessian_apply(&g, &spec, &op, &u, &v);
        let hx = hessian_apply(&g, &spec, &op, &u, &x);
        let a = h_inner(&g, &w, &hv, &x);
        let b = h_inner(&g, &w, &v, &hx);
        assert!((a - b).abs() <= 1e-11 * a.abs().max(1.0));
        // Directional finite difference of the gradient.
        let h = 1e-5;
        let grad_at = |t: f64| {
            let mut ut = u.clone();
            ut.axpy(t, &v);
            h_gradient(&g, &spec, &op, &ut)
        };
        let mut fd = grad_at(h);
        fd.axpy(-1.0, &grad_at(-h));
        fd.scale(1.0 / (2.0 * h));
        let mut diff = fd.clone();
        diff.axpy(-1.0, &hv);
        let rel = h_norm(&g, &w, &diff) / h_norm(&g, &w, &hv).max(1e-30);
        assert!(rel < 1e-5, "hessian fd mismatch {}", rel);
    }

    #[test]
    fn eigenfield_hessian_action_at_zero_is_closed_form() {
        // At u = 0 the Hessian is v ↦ v − λ K⁻¹M v; on an eigenfield e_j it
        // multiplies by (1 − λ/λ_j).
        let (_, g, w, op) = setup(3, 0.0, 0.0, 64, 16);
        let sp = dirichlet_spectrum(&op, 2).unwrap();
        let spec = ProblemSpec::new(3, 15.0, 0.0).unwrap();
        let zero = Field::zeros(&g);
        for j in 0..2 {
            let e = &sp.eigfields[j];
            let he = hessian_apply(&g, &spec, &op, &zero, e);
            let factor = 1.0 - spec.lambda / sp.eigvals[j];
            let mut diff = he.clone();
            diff.axpy(-factor, e);
            let rel = h_norm(&g, &w, &diff) / h_norm(&g, &w, e);
            assert!(rel < 1e-9, "mode {} defect {}", j, rel);
        }
    }

    #[test]
    fn constraint_ray_component_matches_energy_parts() {
        // s = ⟨∇φ(u), u⟩ must equal dirichlet − λ·mass − critical exactly.
        let (spec, g, w, op) = setup(5, 12.0, 2.0, 48, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let u = smooth_random_field(&g, &op, &mut rng, 1.4);
        let sp = dirichlet_spectrum(&op, 2).unwrap();
        let split = split_space(&spec, &sp).unwrap();
        let f = constraint_f(&g, &w, &spec, &op, &u, &split);
        let parts = energy(&g, &w, &spec, &u);
        let expect = parts.ray_derivative(&spec);
        assert!(
            (f.s - expect).abs() <= 1e-10 * expect.abs().max(1.0),
            "s {} vs parts {}",
            f.s,
            expect
        );
    }

    #[test]
    fn constraint_z_component_on_ground_mode_is_closed_form() {
        // For u = e₁: z₁ = 1 − λ/λ₁ − (1/λ₁)∫|x|^α e₁^p, using
        // K⁻¹M e₁ = e₁/λ₁ and self-adjointness of K⁻¹M.
        let (_, g, w, op) = setup(3, 0.0, 0.0, 96, 16);
        let sp = dirichlet_spectrum(&op, 2).unwrap();
        let l1 = sp.eigvals[0];
        let spec = ProblemSpec::new(3, 15.0, 0.0).unwrap(); // m = 1
        let split = split_space(&spec, &sp).unwrap();
        assert_eq!(split.m, 1);
        let e1 = sp.eigfields[0].clone();
        let f = constraint_f(&g, &w, &spec, &op, &e1, &split);
        let crit = weighted_power_integral(&g, &w, &e1, spec.crit_exp(), 0.0);
        let expect = 1.0 - spec.lambda / l1 - crit / l1;
        assert!(
            (f.z[0] - expect).abs() < 1e-9,
            "z1 {} vs {}",
            f.z[0],
            expect
        );
        // ‖F‖ weights the z-part by λ₁.
        let norm = f.norm(&split);
        let by_hand = (f.s * f.s + l1 * f.z[0] * f.z[0]).sqrt();
        assert!((norm - by_hand).abs() < 1e-14 * by_hand);
    }

    #[test]
    fn radial_critical_point_has_vanishing_gradient() {
        // Independent oracle: solve the *radial* discrete problem
        //   K_r ξ = a ∘ (λ ξ + ξ^{p−1}),   ξ > 0,
        // with completely separate 1D code (local assembly, damped Newton,
        // dense tridiagonal solves), then check that the embedded
        // θ-constant field makes the 2D H-gradient vanish.
        let (spec, g, w, op) = setup(3, 5.0, 0.0, 64, 8);
        let p = spec.crit_exp();
        let ni = g.nr - 1;
        // Local radial stiffness and mass.
        let mut diag = vec![0.0; ni];
        let mut off = vec![0.0; ni - 1];
        for i in 0..ni {
            if i > 0 {
                diag[i] += g.rface[i - 1];
            }
            diag[i] += g.rface[i];
            if i + 1 < ni {
                off[i] = -g.rface[i];
            }
        }
        let a: Vec<f64> = (0..ni).map(|i| g.r[i].powi(2) * g.dr_cell[i]).collect();
        // Local tridiagonal solver (no reuse of library code).
        let solve_tri = |dg: &[f64], lo: &[f64], rhs: &[f64]| -> Vec<f64> {
            let n = dg.len();
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            c[0] = lo[0] / dg[0];
            d[0] = rhs[0] / dg[0];
            for i in 1..n {
                let m = dg[i] - lo[i - 1] * c[i - 1];
                if i < n - 1 {
                    c[i] = lo[i] / m;
                }
                d[i] = (rhs[i] - lo[i - 1] * d[i - 1]) / m;
            }
            let mut x = vec![0.0; n];
            x[n - 1] = d[n - 1];
            for i in (0..n - 1).rev() {
                x[i] = d[i] - c[i] * x[i + 1];
            }
            x
        };
        let apply_k = |xi: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; ni];
            for i in 0..ni {
                out[i] = diag[i] * xi[i];
                if i > 0 {
                    out[i] += off[i - 1] * xi[i - 1];
                }
                if i + 1 < ni {
                    out[i] += off[i] * xi[i + 1];
                }
            }
            out
        };
        let residual = |xi: &[f64]| -> Vec<f64> {
            let k = apply_k(xi);
            (0..ni)
                .map(|i| k[i] - a[i] * (spec.lambda * xi[i] + xi[i].abs().powf(p - 1.0)))
                .collect()
        };
        // Seed: fiber-scaled cosine bump (positive, right order of magnitude).
        let l1 = 9.869604401089358; // π², the radial ground eigenvalue
        let mut xi: Vec<f64> = (0..ni)
            .map(|i| (std::f64::consts::FRAC_PI_2 * g.r[i]).cos())
            .collect();
        {
            let k = apply_k(&xi);
            let dir: f64 = k.iter().zip(&xi).map(|(kv, x)| kv * x).sum();
            let mass: f64 = a.iter().zip(&xi).map(|(av, x)| av * x * x).sum();
            let crit: f64 = a
                .iter()
                .zip(&xi)
                .map(|(av, x)| av * x.abs().powf(p))
                .sum();
            let t = ((dir - spec.lambda * mass) / crit).powf(1.0 / (p - 2.0));
            for x in &mut xi {
                *x *= t;
            }
            assert!(spec.lambda < l1);
        }
        // Damped Newton on the residual.
        let mut res = residual(&xi);
        let mut rn: f64 = res.iter().map(|v| v * v).sum::<f64>().sqrt();
        for _ in 0..60 {
            if rn < 1e-13 {
                break;
            }
            let jdiag: Vec<f64> = (0..ni)
                .map(|i| {
                    diag[i] - a[i] * (spec.lambda + (p - 1.0) * xi[i].abs().powf(p - 2.0))
                })
                .collect();
            let step = solve_tri(&jdiag, &off, &res);
            let mut damp = 1.0;
            loop {
                let trial: Vec<f64> = xi
                    .iter()
                    .zip(&step)
                    .map(|(x, s)| x - damp * s)
                    .collect();
                let tres = residual(&trial);
                let tn: f64 = tres.iter().map(|v| v * v).sum::<f64>().sqrt();
                if tn < rn || damp < 1e-4 {
                    xi = trial;
                    res = tres;
                    rn = tn;
                    break;
                }
                damp *= 0.5;
            }
        }
        assert!(rn < 1e-12, "1D Newton stalled at {}", rn);
        assert!(xi.iter().all(|&v| v > 0.0), "radial solution not positive");
        // Embed as θ-constant field and check the 2D gradient vanishes.
        let mut u = Field::zeros(&g);
        for i in 0..ni {
            for j in 0..g.ntheta {
                *u.at_mut(i, j) = xi[i];
            }
        }
        let grad = h_gradient(&g, &spec, &op, &u);
        let rel = h_norm(&g, &w, &grad) / h_norm(&g, &w, &u);
        assert!(rel < 1e-10, "2D gradient at radial solution: {}", rel);
        // Its constraint value at m = 0 is the ray component alone, and zero.
        let sp = dirichlet_spectrum(&op, 1).unwrap();
        let split = split_space(&spec, &sp).unwrap();
        assert_eq!(split.m, 0);
        let f = constraint_from_gradient(&g, &w, &u, &grad, &split);
        assert!(f.norm(&split) < 1e-9 * h_norm(&g, &w, &u).powi(2));
    }
}
