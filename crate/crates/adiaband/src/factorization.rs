use num_complex::Complex64 as C64;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{AdiabandError, Result};
use crate::field::{CMat, MatrixField};
use crate::fit::{fit_log_slope, SlopeFit, DEFECT_FLOOR};
use crate::linalg::eigh_sorted;
use crate::projector::ProjectorHierarchy;
use crate::symbol::{Exponent, FormalSymbol};

/// How the free range-component constant is distributed between L and ell at
/// each order. Observables (the reconstructed projector, effective spectra)
/// are gauge independent; the raw factor fields are not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GaugeRule {
    /// -W/2 on each factor; reproduces L = ell automatically for selfadjoint
    /// input.
    EqualSplit,
    /// The whole -W on L, nothing on ell.
    AllOnL,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorDiagnostics {
    pub exponent: String,
    /// Residuals of the two solvability conditions at this order.
    pub comp_l: f64,
    pub comp_ell: f64,
    pub w_norm: f64,
}

/// Row-vector factors L = sum h^k (u_k, .) and ell = sum h^k (v_k, .) of the
/// rank-one reduction, stored as 1 x m symbols.
#[derive(Debug, Clone)]
pub struct FactorPair {
    pub l: FormalSymbol,
    pub ell: FormalSymbol,
    pub u0: MatrixField,
    pub gauge: GaugeRule,
    pub diagnostics: Vec<FactorDiagnostics>,
}

/// Unit section spanning the range of a rank-one projector field, with the
/// phase fixed at a reference node and propagated by neighbor alignment.
pub fn build_u0(pi0: &MatrixField) -> Result<MatrixField> {
    if !pi0.is_square() {
        return Err(AdiabandError::DimMismatch(pi0.rows(), pi0.cols(), pi0.cols(), pi0.rows()));
    }
    let grid = pi0.grid().clone();
    let dim = pi0.rows();
    let (n_x, n_xi) = (grid.n_x, grid.n_xi);

    // raw top eigenvector per node (eigenvalue must be ~1, the rest ~0)
    let mut raw: Vec<ndarray::Array1<C64>> = Vec::with_capacity(grid.n_nodes());
    for ix in 0..n_x {
        for ixi in 0..n_xi {
            let p = pi0.at(ix, ixi);
            let (w, v) = eigh_sorted(&p)?;
            let rank = w.iter().filter(|&&l| l > 0.5).count();
            if rank != 1 {
                return Err(AdiabandError::RankViolation { expected: 1, found: rank });
            }
            raw.push(v.column(dim - 1).to_owned());
        }
    }

    // reference phase: largest-magnitude component real positive at (0, 0)
    let fix_global = |v: &ndarray::Array1<C64>| -> C64 {
        let (mut best, mut mag) = (0, 0.0);
        for (i, z) in v.iter().enumerate() {
            if z.norm() > mag {
                mag = z.norm();
                best = i;
            }
        }
        let z = v[best];
        (z / z.norm()).conj()
    };
    let phase0 = fix_global(&raw[0]);
    raw[0].mapv_inplace(|z| z * phase0);

    // align each node with an already-fixed neighbor
    let align = |fixed: &ndarray::Array1<C64>, free: &mut ndarray::Array1<C64>| {
        let ip: C64 = fixed.iter().zip(free.iter()).map(|(a, b)| a.conj() * b).sum();
        if ip.norm() > 1e-12 {
            let ph = (ip / ip.norm()).conj();
            free.mapv_inplace(|z| z * ph);
        }
    };
    for ixi in 1..n_xi {
        let (head, tail) = raw.split_at_mut(ixi);
        align(&head[ixi - 1], &mut tail[0]);
    }
    for ix in 1..n_x {
        for ixi in 0..n_xi {
            let idx = ix * n_xi + ixi;
            let (head, tail) = raw.split_at_mut(idx);
            align(&head[(ix - 1) * n_xi + ixi], &mut tail[0]);
        }
    }

    // on periodic grids the section must close up; accumulate the phase
    // winding along each boundary loop
    if grid.is_periodic() {
        let loop_winding = |indices: Vec<usize>| -> f64 {
            let mut w = 0.0;
            for k in 0..indices.len() {
                let a = &raw[indices[k]];
                let b = &raw[indices[(k + 1) % indices.len()]];
                let ip: C64 = a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum();
                if ip.norm() > 1e-12 {
                    w += ip.arg();
                }
            }
            w
        };
        let row: Vec<usize> = (0..n_xi).collect();
        let col: Vec<usize> = (0..n_x).map(|ix| ix * n_xi).collect();
        for winding in [loop_winding(row), loop_winding(col)] {
            if winding.abs() > std::f64::consts::PI {
                return Err(AdiabandError::GaugeObstruction { winding });
            }
        }
    }

    Ok(MatrixField::build_nodes(grid, dim, 1, |ix, ixi| {
        let v = &raw[ix * n_xi + ixi];
        CMat::from_shape_fn((dim, 1), |(r, _)| v[r])
    }))
}

fn scalar_one(template: &FormalSymbol, truncation: Exponent) -> Result<FormalSymbol> {
    let mut one = FormalSymbol::new(template.grid().clone(), 1, 1, template.q0(), truncation)?
        .with_fd_degree(template.fd_degree());
    one.set_term(
        Ratio::from_integer(0),
        MatrixField::identity(template.grid().clone(), 1),
    )?;
    Ok(one)
}

/// Inductive construction of the factors up to exponent `k_max`.
pub fn build_factors(
    hier: &ProjectorHierarchy,
    u0: &MatrixField,
    k_max: Exponent,
    gauge: GaugeRule,
) -> Result<FactorPair> {
    let q0 = hier.pi.q0();
    let steps_r = k_max * Ratio::from_integer(q0 as i64);
    if !steps_r.is_integer() || steps_r < Ratio::from_integer(0) {
        return Err(AdiabandError::ExponentNotOnLattice(k_max.to_string(), q0));
    }
    if k_max > hier.pi.truncation() {
        return Err(AdiabandError::Config {
            path: "k_max".into(),
            message: format!(
                "factors to order {k_max} need a hierarchy of at least that order, have {}",
                hier.pi.truncation()
            ),
        });
    }
    let zero = Ratio::from_integer(0);
    let grid = u0.grid().clone();
    let dim = u0.rows();
    let pi0 = hier.pi.coeff_or_zero(zero);
    let pi0_perp = MatrixField::identity(grid.clone(), dim).sub(&pi0)?;
    let l0 = u0.adjoint();

    let fd_degree = hier.pi.fd_degree();
    let mut l = FormalSymbol::new(grid.clone(), 1, dim, q0, zero)?.with_fd_degree(fd_degree);
    l.set_term(zero, l0.clone())?;
    let mut ell = l.clone();
    let mut diagnostics = Vec::new();

    let comp_tol = 1e-8;
    for step in 1..=steps_r.to_integer() {
        let e = Ratio::new(step, q0 as i64);
        let l_t = l.clone().with_truncation(e);
        let ell_t = ell.clone().with_truncation(e);
        let pi_t = hier.pi.clone().with_truncation(e);

        let w = l_t.moyal(&ell_t.adjoint())?.coeff_or_zero(e);
        // Order-e coefficient of L (*) Pi with L_e still absent: the unknown
        // enters that coefficient only through L_e Pi0, so the equation
        // L = L (*) Pi reads L_e Pi0_perp = rhs_l (and mirrored for ell).
        let rhs_l = l_t.moyal(&pi_t)?.coeff_or_zero(e);
        let rhs_ell = ell_t.moyal(&pi_t.adjoint())?.coeff_or_zero(e);

        // solvability of the off-range equations (proved identities): the
        // known part must carry no component along the range of Pi0
        let comp_l = rhs_l.matmul(&pi0)?.sup_norm();
        let comp_ell = rhs_ell.matmul(&pi0)?.sup_norm();
        for (relation, v) in [("factor solvability (L)", comp_l), ("factor solvability (ell)", comp_ell)]
        {
            if v > comp_tol {
                return Err(AdiabandError::CompatibilityViolation {
                    relation: if relation.ends_with("(L)") {
                        "factor solvability (L)"
                    } else {
                        "factor solvability (ell)"
                    },
                    order: e.to_string(),
                    value: v,
                    tol: comp_tol,
                });
            }
        }

        // range components: (u_e, u0) + (u0, v_e) = -W, split per gauge rule
        let (a, b) = match gauge {
            GaugeRule::EqualSplit => (
                w.scale(C64::new(-0.5, 0.0)),
                w.adjoint().scale(C64::new(-0.5, 0.0)),
            ),
            GaugeRule::AllOnL => (
                w.scale(C64::new(-1.0, 0.0)),
                MatrixField::zeros(grid.clone(), 1, 1),
            ),
        };
        let l_e = a.matmul(&l0)?.add(&rhs_l.matmul(&pi0_perp)?)?;
        let ell_e = b.matmul(&l0)?.add(&rhs_ell.matmul(&pi0_perp)?)?;

        diagnostics.push(FactorDiagnostics {
            exponent: e.to_string(),
            comp_l,
            comp_ell,
            w_norm: w.sup_norm(),
        });
        l = l.with_truncation(e);
        l.set_term(e, l_e)?;
        ell = ell.with_truncation(e);
        ell.set_term(e, ell_e)?;
    }

    Ok(FactorPair { l, ell, u0: u0.clone(), gauge, diagnostics })
}

/// Slope fits of the two factorization identities,
/// ||L (*) ell^* - 1|| and ||ell^* (*) L - Pi||.
pub fn verify_factorization(
    pair: &FactorPair,
    hier: &ProjectorHierarchy,
    h_values: &[f64],
    extra: i64,
) -> Result<(SlopeFit, SlopeFit)> {
    let (unit_pts, proj_pts) = factorization_defect_tables(pair, hier, h_values, extra)?;
    Ok((
        fit_log_slope(&unit_pts, DEFECT_FLOOR)?,
        fit_log_slope(&proj_pts, DEFECT_FLOOR)?,
    ))
}

pub fn factorization_defect_tables(
    pair: &FactorPair,
    hier: &ProjectorHierarchy,
    h_values: &[f64],
    extra: i64,
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    let k = pair.l.truncation().min(hier.pi.truncation());
    let ext = k + Ratio::from_integer(extra.max(1));
    let l = pair.l.clone().with_truncation(ext);
    let ell = pair.ell.clone().with_truncation(ext);
    let pi = hier.pi.clone().with_truncation(ext);
    let unit_defect = l.moyal(&ell.adjoint())?.sub(&scalar_one(&l, ext)?)?;
    let proj_defect = ell.adjoint().moyal(&l)?.sub(&pi)?;
    let table = |sym: &FormalSymbol| -> Vec<(f64, f64)> {
        h_values
            .iter()
            .map(|&h| (h, sym.eval_at_h(h).sup_norm()))
            .collect()
    };
    Ok((table(&unit_defect), table(&proj_defect)))
}

/// Scalar effective symbol m = L (*) H (*) ell^*.
pub fn build_effective(
    h: &FormalSymbol,
    pair: &FactorPair,
    k_max: Exponent,
) -> Result<FormalSymbol> {
    let l = pair.l.clone().with_truncation(k_max);
    let ell = pair.ell.clone().with_truncation(k_max);
    let h_t = h.truncated(k_max);
    l.moyal(&h_t)?.moyal(&ell.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PhaseSpaceGrid;
    use crate::projector::{build_hierarchy, BuildOptions, GapSpec};
    use std::sync::Arc;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn pgrid(n: usize) -> Arc<PhaseSpaceGrid> {
        Arc::new(PhaseSpaceGrid::periodic(2.0 * std::f64::consts::PI, n).unwrap())
    }

    #[test]
    fn u0_for_constant_projector_is_first_basis_vector() {
        let g = pgrid(16);
        let pi0 = MatrixField::from_fn(g, 3, 3, |_, _| {
            let mut m = CMat::zeros((3, 3));
            m[(0, 0)] = c(1.0);
            m
        });
        let u0 = build_u0(&pi0).unwrap();
        for (ix, ixi) in [(0, 0), (7, 3), (15, 15)] {
            let v = u0.at(ix, ixi);
            assert!((v[(0, 0)] - c(1.0)).norm() < 1e-12);
            assert!(v[(1, 0)].norm() < 1e-12 && v[(2, 0)].norm() < 1e-12);
        }
    }

    #[test]
    fn u0_follows_rotating_family() {
        let g = pgrid(48);
        let theta = |x: f64, xi: f64| 0.2 * x.sin() * xi.cos();
        let pi0 = MatrixField::from_fn(g.clone(), 2, 2, |x, xi| {
            let t = theta(x, xi);
            let v = [t.cos(), t.sin()];
            CMat::from_shape_fn((2, 2), |(r, s)| c(v[r] * v[s]))
        });
        let u0 = build_u0(&pi0).unwrap();
        let expected = MatrixField::from_fn(g, 2, 1, |x, xi| {
            let t = theta(x, xi);
            CMat::from_shape_fn((2, 1), |(r, _)| c(if r == 0 { t.cos() } else { t.sin() }))
        });
        assert!(u0.sub(&expected).unwrap().sup_norm() < 1e-9);
    }

    /// Rank-one upper band of a smooth 2x2 symbol; xi-only principal part
    /// plus an order-1 coupling.
    fn model(g: &Arc<PhaseSpaceGrid>, k_trunc: i64) -> (FormalSymbol, GapSpec) {
        let eps = 0.1;
        let h0 = MatrixField::from_fn(g.clone(), 2, 2, |_, xi| {
            let mut m = CMat::zeros((2, 2));
            m[(0, 0)] = c(xi.sin());
            m[(0, 1)] = c(eps);
            m[(1, 0)] = c(eps);
            m[(1, 1)] = c(2.0 + xi.cos());
            m
        });
        let h1 = MatrixField::from_fn(g.clone(), 2, 2, |x, xi| {
            let gv = 0.15 * (x.sin() + xi.cos());
            let mut m = CMat::zeros((2, 2));
            m[(0, 0)] = c(0.1 * x.cos());
            m[(0, 1)] = c(gv);
            m[(1, 0)] = c(gv);
            m
        });
        let mut h = FormalSymbol::new(g.clone(), 2, 2, 1, Ratio::from_integer(k_trunc)).unwrap();
        h.set_term(Ratio::from_integer(0), h0).unwrap();
        if k_trunc >= 1 {
            h.set_term(Ratio::from_integer(1), h1).unwrap();
        }
        (h, GapSpec { window: (-1.5, 1.0), delta: 0.15 })
    }

    fn built(k: i64) -> (FormalSymbol, ProjectorHierarchy, FactorPair) {
        let g = pgrid(96);
        let (h, gap) = model(&g, k);
        let hier =
            build_hierarchy(&h, &gap, Ratio::from_integer(k), &BuildOptions::default()).unwrap();
        let u0 = build_u0(&hier.pi.coeff_or_zero(Ratio::from_integer(0))).unwrap();
        let pair = build_factors(&hier, &u0, Ratio::from_integer(k), GaugeRule::EqualSplit).unwrap();
        (h, hier, pair)
    }

    #[test]
    fn order_zero_identities_are_exact() {
        let (_, hier, pair) = built(0);
        let l0 = pair.l.coeff_or_zero(Ratio::from_integer(0));
        let unit = l0.matmul(&l0.adjoint()).unwrap();
        let one = MatrixField::identity(l0.grid().clone(), 1);
        assert!(unit.sub(&one).unwrap().sup_norm() < 1e-12);
        let proj = l0.adjoint().matmul(&l0).unwrap();
        let pi0 = hier.pi.coeff_or_zero(Ratio::from_integer(0));
        assert!(proj.sub(&pi0).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn constant_symbol_gives_trivial_factors() {
        let g = pgrid(16);
        let h0 = MatrixField::from_fn(g.clone(), 2, 2, |_, _| {
            let mut m = CMat::zeros((2, 2));
            m[(0, 0)] = c(-1.0);
            m[(1, 1)] = c(2.0);
            m
        });
        let mut h = FormalSymbol::new(g, 2, 2, 1, Ratio::from_integer(2)).unwrap();
        h.set_term(Ratio::from_integer(0), h0).unwrap();
        let gap = GapSpec { window: (-2.0, 0.0), delta: 1.0 };
        let hier =
            build_hierarchy(&h, &gap, Ratio::from_integer(2), &BuildOptions::default()).unwrap();
        let u0 = build_u0(&hier.pi.coeff_or_zero(Ratio::from_integer(0))).unwrap();
        let pair =
            build_factors(&hier, &u0, Ratio::from_integer(2), GaugeRule::EqualSplit).unwrap();
        for k in 1..=2 {
            assert!(pair.l.coeff_or_zero(Ratio::from_integer(k)).sup_norm() < 1e-10);
            assert!(pair.ell.coeff_or_zero(Ratio::from_integer(k)).sup_norm() < 1e-10);
        }
        // effective symbol is the constant selected eigenvalue
        let eff = build_effective(&h, &pair, Ratio::from_integer(2)).unwrap();
        let e0 = eff.coeff_or_zero(Ratio::from_integer(0));
        assert!((e0.at(3, 3)[(0, 0)] - c(-1.0)).norm() < 1e-10);
        for k in 1..=2 {
            assert!(eff.coeff_or_zero(Ratio::from_integer(k)).sup_norm() < 1e-10);
        }
    }

    #[test]
    fn factors_solve_their_defining_recursion_per_order() {
        // L (*) Pi = L and ell (*) Pi^* = ell must hold coefficient by
        // coefficient, including the off-range components that no other
        // identity sees.
        let (_, hier, pair) = built(1);
        let lp = pair.l.moyal(&hier.pi).unwrap();
        let ep = pair.ell.moyal(&hier.pi.adjoint()).unwrap();
        for step in 0..=1i64 {
            let e = Ratio::from_integer(step);
            let dl = lp.coeff_or_zero(e).sub(&pair.l.coeff_or_zero(e)).unwrap().sup_norm();
            let de = ep.coeff_or_zero(e).sub(&pair.ell.coeff_or_zero(e)).unwrap().sup_norm();
            assert!(dl < 1e-4, "L recursion off by {dl} at order {step}");
            assert!(de < 1e-4, "ell recursion off by {de} at order {step}");
        }
        // and the reconstructed projector identity carries the same order
        let proj = pair.ell.adjoint().moyal(&pair.l).unwrap();
        let d = proj
            .coeff_or_zero(Ratio::from_integer(1))
            .sub(&hier.pi.coeff_or_zero(Ratio::from_integer(1)))
            .unwrap()
            .sup_norm();
        assert!(d < 1e-4, "order-1 projector reconstruction off by {d}");
    }

    #[test]
    fn selfadjoint_input_forces_equal_factors() {
        let (_, _, pair) = built(1);
        let d = pair
            .l
            .coeff_or_zero(Ratio::from_integer(1))
            .sub(&pair.ell.coeff_or_zero(Ratio::from_integer(1)))
            .unwrap()
            .sup_norm();
        assert!(d < 1e-9, "L1 and ell1 differ by {d}");
    }

    #[test]
    fn x_independent_principal_part_kills_first_cross_term() {
        let (_, _, pair) = built(1);
        let zero = Ratio::from_integer(0);
        let one_r = Ratio::from_integer(1);
        let l0 = pair.l.coeff_or_zero(zero);
        let l1 = pair.l.coeff_or_zero(one_r);
        let e0 = pair.ell.coeff_or_zero(zero);
        let e1 = pair.ell.coeff_or_zero(one_r);
        let cross = l1
            .matmul(&e0.adjoint())
            .unwrap()
            .add(&l0.matmul(&e1.adjoint()).unwrap())
            .unwrap();
        assert!(cross.sup_norm() < 1e-8, "cross term {}", cross.sup_norm());
    }

    #[test]
    fn effective_first_order_matches_inner_product_oracle() {
        let (h, _, pair) = built(1);
        let eff = build_effective(&h, &pair, Ratio::from_integer(1)).unwrap();
        let zero = Ratio::from_integer(0);
        let one_r = Ratio::from_integer(1);
        // principal coefficient tracks the selected band
        let e0 = eff.coeff_or_zero(zero);
        let band = MatrixField::from_scalar_fn(e0.grid().clone(), |_, xi| {
            let (a, b) = (xi.sin(), 2.0 + xi.cos());
            c(0.5 * (a + b) - (0.25 * (a - b) * (a - b) + 0.1f64 * 0.1).sqrt())
        });
        assert!(e0.sub(&band).unwrap().sup_norm() < 1e-9);
        // with an xi-only principal part the order-1 coefficient reduces to
        // (u0, H1 u0) plus the scalar Moyal bracket corrections involving
        // xi-only factors; compare against the static quadratic form where the
        // corrections cancel: H0 and u0 depend only on xi, so every Poisson
        // bracket of two xi-only factors vanishes and the order-1 Moyal
        // corrections from L0 (*) H0 survive only through H1.
        let e1 = eff.coeff_or_zero(one_r);
        let u0 = &pair.u0;
        let h1 = h.coeff_or_zero(one_r);
        let oracle = u0.adjoint().matmul(&h1).unwrap().matmul(u0).unwrap();
        // subtract the gauge-symmetric W-correction: at order 1 the effective
        // coefficient is L1 H0 l0* + L0 H0 l1* + L0 H1 l0* + brackets; the
        // factor corrections contribute -W * mu0 which the construction keeps
        // purely in the off-range direction here, so the direct comparison
        // stands on its own.
        let d = e1.sub(&oracle).unwrap().sup_norm();
        assert!(d < 1e-7, "first-order effective coefficient off by {d}");
    }

    #[test]
    fn gauge_choice_leaves_projector_reconstruction_invariant() {
        let g = pgrid(64);
        let (h, gap) = model(&g, 1);
        let hier =
            build_hierarchy(&h, &gap, Ratio::from_integer(1), &BuildOptions::default()).unwrap();
        let u0 = build_u0(&hier.pi.coeff_or_zero(Ratio::from_integer(0))).unwrap();
        let mut recon = Vec::new();
        for gauge in [GaugeRule::EqualSplit, GaugeRule::AllOnL] {
            let pair = build_factors(&hier, &u0, Ratio::from_integer(1), gauge).unwrap();
            let ext = Ratio::from_integer(1);
            let p = pair
                .ell
                .clone()
                .with_truncation(ext)
                .adjoint()
                .moyal(&pair.l.clone().with_truncation(ext))
                .unwrap();
            recon.push(p);
        }
        for k in 0..=1 {
            let e = Ratio::from_integer(k);
            let d = recon[0]
                .coeff_or_zero(e)
                .sub(&recon[1].coeff_or_zero(e))
                .unwrap()
                .sup_norm();
            assert!(d < 1e-8, "reconstructed projector differs at order {k}: {d}");
        }
    }
}
