use std::collections::BTreeMap;
use std::sync::Arc;

use num_rational::Ratio;

use crate::error::{AdiabandError, Result};
use crate::field::{CMat, MatrixField};
use crate::grid::PhaseSpaceGrid;
use crate::models::poly2::Poly2;
use crate::quantize::{FiberPolynomial, FiberSymbol, FiberTerm, FockLadder};
use crate::symbol::FormalSymbol;

/// Cap on the sqrt(h)-Taylor order of the normal-form symbol.
pub const TAYLOR_CAP: usize = 4;

/// Magnetic-well normal form: the two-scale symbol
///   B(z)^2 xi1^2 + (x1 + alpha(z) xi1)^2 + V(z) + h W(z),
/// z = (xi2 + sqrt(h) x1, x2 + sqrt(h) xi1), Taylor-expanded in sqrt(h) to
/// order `j`. The coefficient functions are polynomials in z = (s, t), so the
/// expansion is exact. W = ((d1 B)^2 + (d1 alpha)^2) / 4.
pub struct MagneticWellSpec {
    pub b_dot: Poly2,
    pub v_dot: Poly2,
    pub alpha_dot: Poly2,
    /// Taylor truncation order in sqrt(h).
    pub j: usize,
    /// Lower field bound: b_dot >= b0 must hold on the grid.
    pub b0: f64,
}

impl MagneticWellSpec {
    /// The acceptance model: B = 1 + (s^2 + t^2)/4, V = alpha = 0.
    pub fn radial_well(j: usize) -> Self {
        let mut b = Poly2::constant(1.0);
        b.add_to(2, 0, 0.25);
        b.add_to(0, 2, 0.25);
        Self { b_dot: b, v_dot: Poly2::zero(), alpha_dot: Poly2::zero(), j, b0: 1.0 }
    }

    /// Metric correction W = ((d1 B)^2 + (d1 alpha)^2) / 4, entering at h^1.
    pub fn w_correction(&self) -> Poly2 {
        let db = self.b_dot.derive(1, 0);
        let da = self.alpha_dot.derive(1, 0);
        db.mul(&db).add(&da.mul(&da)).scale(0.25)
    }

    /// Band branch mu_p = (2p - 1) B + V as a function of (s, t).
    pub fn mu_branch(&self, p: usize) -> Poly2 {
        self.b_dot.scale((2 * p - 1) as f64).add(&self.v_dot)
    }

    /// Checks the field bound and the unique-interior-minimum assumption on
    /// the given base phase-space grid (arguments swapped: (s, t) =
    /// (xi2, x2)).
    pub fn validate_on(&self, grid: &PhaseSpaceGrid) -> Result<()> {
        if self.j > TAYLOR_CAP {
            return Err(AdiabandError::TaylorOrderUnsupported(self.j, TAYLOR_CAP));
        }
        let mu1 = self.mu_branch(1);
        let mut min_val = f64::INFINITY;
        let mut min_node = (0usize, 0usize);
        for ix in 0..grid.n_x {
            for ixi in 0..grid.n_xi {
                let (x, xi) = (grid.x(ix), grid.xi(ixi));
                let b = self.b_dot.eval(xi, x);
                if b < self.b0 - 1e-12 {
                    return Err(AdiabandError::GapViolation {
                        ix,
                        ixi,
                        detail: format!("field {b:.6} below the bound {}", self.b0),
                    });
                }
                let m = mu1.eval(xi, x);
                if m < min_val {
                    min_val = m;
                    min_node = (ix, ixi);
                }
            }
        }
        if !grid.in_interior(min_node.0, min_node.1) {
            return Err(AdiabandError::InvalidGrid(format!(
                "band minimum sits on the boundary at node {min_node:?}"
            )));
        }
        Ok(())
    }
}

/// Fiber-monomial tables: for each sqrt(h)-order n = 0..=J, a map from the
/// fiber monomial (x1_pow, xi1_pow) to its base coefficient polynomial in
/// (s, t).
pub(crate) fn fiber_tables(
    spec: &MagneticWellSpec,
) -> Result<Vec<BTreeMap<(usize, usize), Poly2>>> {
    if spec.j > TAYLOR_CAP {
        return Err(AdiabandError::TaylorOrderUnsupported(spec.j, TAYLOR_CAP));
    }
    let g = spec.b_dot.mul(&spec.b_dot);
    let a2 = spec.alpha_dot.mul(&spec.alpha_dot);
    let w = spec.w_correction();
    let mut tables: Vec<BTreeMap<(usize, usize), Poly2>> = vec![BTreeMap::new(); spec.j + 1];

    let add = |n: usize, key: (usize, usize), p: Poly2, tables: &mut Vec<BTreeMap<(usize, usize), Poly2>>| {
        if p.is_zero() {
            return;
        }
        tables[n]
            .entry(key)
            .and_modify(|q| *q = q.add(&p))
            .or_insert(p);
    };

    for n in 0..=spec.j {
        if n == 0 {
            add(0, (2, 0), Poly2::constant(1.0), &mut tables);
        }
        // Each factor f(z) contributes its Taylor coefficients at order
        // a + b = n with fiber monomial x1^a xi1^b.
        for a in 0..=n {
            let b = n - a;
            add(n, (a, b + 2), g.taylor_coeff(a, b), &mut tables);
            add(n, (a + 1, b + 1), spec.alpha_dot.taylor_coeff(a, b).scale(2.0), &mut tables);
            add(n, (a, b + 2), a2.taylor_coeff(a, b), &mut tables);
            add(n, (a, b), spec.v_dot.taylor_coeff(a, b), &mut tables);
        }
        // h W(z) sits two sqrt(h)-orders up.
        if n >= 2 {
            for a in 0..=(n - 2) {
                let b = n - 2 - a;
                add(n, (a, b), w.taylor_coeff(a, b), &mut tables);
            }
        }
    }
    Ok(tables)
}

/// The symbol as a fiber-polynomial series ready for two-scale quantization.
/// Base coefficients take the quantizer's (x, xi) arguments; the normal form
/// evaluates its functions at (s, t) = (xi2, x2).
pub fn fiber_symbol(spec: &MagneticWellSpec) -> Result<FiberSymbol> {
    let tables = fiber_tables(spec)?;
    let mut terms = BTreeMap::new();
    for (n, table) in tables.into_iter().enumerate() {
        if table.is_empty() {
            continue;
        }
        let poly_terms: Vec<FiberTerm> = table
            .into_iter()
            .map(|((xp, kp), poly)| FiberTerm {
                x_pow: xp,
                xi_pow: kp,
                coeff: Box::new(move |x, xi| poly.eval(xi, x)),
            })
            .collect();
        terms.insert(Ratio::new(n as i64, 2), FiberPolynomial { terms: poly_terms });
    }
    Ok(FiberSymbol { q0: 2, terms })
}

/// The symbol as a matrix-valued formal series on the base phase-space grid,
/// with each fiber polynomial realized in the Fock ladder. This is the input
/// for the projector and factorization machinery.
pub fn matrix_symbol(
    spec: &MagneticWellSpec,
    grid: Arc<PhaseSpaceGrid>,
    ladder: &FockLadder,
) -> Result<FormalSymbol> {
    let tables = fiber_tables(spec)?;
    let m = ladder.m();
    let mut sym = FormalSymbol::new(grid.clone(), m, m, 2, Ratio::new(spec.j as i64, 2))?
        .with_fd_degree(6);
    for (n, table) in tables.into_iter().enumerate() {
        if table.is_empty() {
            continue;
        }
        let mono: Vec<(Poly2, CMat)> = table
            .into_iter()
            .map(|((xp, kp), poly)| Ok((poly, ladder.weyl_monomial(xp, kp)?)))
            .collect::<Result<_>>()?;
        let field = MatrixField::from_fn(grid.clone(), m, m, |x, xi| {
            let mut acc = CMat::zeros((m, m));
            for (poly, w) in &mono {
                let c = poly.eval(xi, x);
                if c != 0.0 {
                    acc = acc + w.mapv(|z| z * c);
                }
            }
            acc
        });
        sym.set_term(Ratio::new(n as i64, 2), field)?;
    }
    Ok(sym)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64 as C64;

    #[test]
    fn flat_field_is_a_pure_fiber_oscillator() {
        let spec = MagneticWellSpec {
            b_dot: Poly2::constant(1.0),
            v_dot: Poly2::zero(),
            alpha_dot: Poly2::zero(),
            j: 4,
            b0: 1.0,
        };
        let tables = fiber_tables(&spec).unwrap();
        let p0 = &tables[0];
        assert_eq!(p0.len(), 2);
        assert_abs_diff_eq!(p0[&(2, 0)].eval(0.3, -0.8), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p0[&(0, 2)].eval(0.3, -0.8), 1.0, epsilon = 1e-14);
        for table in &tables[1..] {
            assert!(table.is_empty());
        }
    }

    #[test]
    fn radial_well_w_correction() {
        let spec = MagneticWellSpec::radial_well(2);
        // W = (d1 B)^2 / 4 = (s/2)^2 / 4 = s^2 / 16
        let w = spec.w_correction();
        assert_abs_diff_eq!(w.eval(2.0, 5.0), 0.25, epsilon = 1e-14);
        let tables = fiber_tables(&spec).unwrap();
        // order 1 is odd in the fiber variables
        for (&(a, b), _) in &tables[1] {
            assert_eq!((a + b) % 2, 1, "even monomial ({a},{b}) at odd order");
        }
        // W lands in the (0,0) slot at order 2
        assert_abs_diff_eq!(tables[2][&(0, 0)].eval(2.0, 5.0), 0.25, epsilon = 1e-14);
    }

    #[test]
    fn fiber_spectrum_matches_band_branches() {
        let spec = MagneticWellSpec::radial_well(2);
        let grid = Arc::new(PhaseSpaceGrid::clamped(1.8, 16).unwrap());
        spec.validate_on(&grid).unwrap();
        let ladder = FockLadder::new(16);
        let sym = matrix_symbol(&spec, grid.clone(), &ladder).unwrap();
        let h0 = sym.coeff(Ratio::new(0, 2)).unwrap();
        for &(ix, ixi) in &[(8usize, 8usize), (4, 10), (11, 5)] {
            let (x, xi) = (grid.x(ix), grid.xi(ixi));
            let node = h0.at(ix, ixi);
            let (vals, _) = linalg::eigh_sorted(&node).unwrap();
            for p in 1..=3usize {
                let want = spec.mu_branch(p).eval(xi, x);
                assert_abs_diff_eq!(vals[p - 1], want, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn odd_order_has_no_diagonal_band_coupling() {
        // parity: (H_{1/2} u0, u0) = 0 because H_{1/2} is odd in the fiber
        // variables and u0 is even.
        let spec = MagneticWellSpec::radial_well(2);
        let grid = Arc::new(PhaseSpaceGrid::clamped(1.8, 12).unwrap());
        let ladder = FockLadder::new(12);
        let sym = matrix_symbol(&spec, grid.clone(), &ladder).unwrap();
        let h0 = sym.coeff(Ratio::new(0, 2)).unwrap();
        let h_half = sym.coeff(Ratio::new(1, 2)).unwrap();
        for &(ix, ixi) in &[(6usize, 6usize), (3, 8)] {
            let (_, v) = linalg::eigh_sorted(&h0.at(ix, ixi)).unwrap();
            let u0 = v.column(0).to_owned();
            let coupled = h_half.at(ix, ixi).dot(&u0);
            let diag: C64 = u0.iter().zip(coupled.iter()).map(|(a, b)| a.conj() * b).sum();
            assert!(diag.norm() < 1e-12, "diagonal coupling {}", diag.norm());
        }
    }

    #[test]
    fn field_bound_violations_are_refused() {
        let mut spec = MagneticWellSpec::radial_well(2);
        spec.b0 = 1.5;
        let grid = Arc::new(PhaseSpaceGrid::clamped(1.8, 12).unwrap());
        assert!(matches!(
            spec.validate_on(&grid),
            Err(AdiabandError::GapViolation { .. })
        ));
    }
}
