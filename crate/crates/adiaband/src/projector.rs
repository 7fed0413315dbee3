use num_complex::Complex64 as C64;
use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AdiabandError, Result};
use crate::field::{CMat, MatrixField};
use crate::fit::{fit_log_slope, SlopeFit, DEFECT_FLOOR};
use crate::linalg::eigh_sorted;
use crate::symbol::{Exponent, FormalSymbol};
use crate::sylvester::{solve_sylvester_contour, Contour, SylvesterProblem};

/// Spectral window selecting the principal band(s), with the minimal distance
/// `delta` between selected and discarded eigenvalues at every node.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GapSpec {
    pub window: (f64, f64),
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OffDiagSolver {
    /// Node-wise eigenbasis solve (default).
    Eigen,
    /// Node-wise contour-integral solve with the given nodes per branch.
    Contour { n_quad: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub solver: OffDiagSolver,
    /// Absolute tolerance on the compatibility identities per order.
    pub comp_tol: f64,
    pub fd_degree: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { solver: OffDiagSolver::Eigen, comp_tol: 1e-8, fd_degree: 6 }
    }
}

/// Residuals recorded at one induction order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderDiagnostics {
    pub exponent: String,
    pub comp1: f64,
    pub comp2_inside: f64,
    pub comp2_outside: f64,
    pub r_norm: f64,
    pub t_norm: f64,
    pub hermiticity: f64,
}

#[derive(Debug, Clone)]
pub struct ProjectorHierarchy {
    pub pi: FormalSymbol,
    pub source: FormalSymbol,
    pub gap: GapSpec,
    pub diagnostics: Vec<OrderDiagnostics>,
}

/// Node-wise spectral projector onto the eigenvalues of H0 inside the window.
pub fn build_pi0(h0: &MatrixField, gap: &GapSpec) -> Result<MatrixField> {
    if !h0.is_square() {
        return Err(AdiabandError::DimMismatch(h0.rows(), h0.cols(), h0.cols(), h0.rows()));
    }
    let scale = h0.sup_norm().max(1.0);
    if h0.hermiticity_defect() > 1e-10 * scale {
        return Err(AdiabandError::NonHermitian("principal symbol".into()));
    }
    let grid = h0.grid().clone();
    let (m, mm) = gap.window;
    let n_xi = grid.n_xi;
    let per_node: Vec<Result<(CMat, usize)>> = (0..grid.n_nodes())
        .into_par_iter()
        .map(|node| {
            let (ix, ixi) = (node / n_xi, node % n_xi);
            let a = h0.at(ix, ixi);
            let (w, v) = eigh_sorted(&a)?;
            let dim = a.nrows();
            let mut p = CMat::zeros((dim, dim));
            let mut rank = 0;
            for (k, &l) in w.iter().enumerate() {
                let inside = l >= m && l <= mm;
                if inside {
                    rank += 1;
                    let col = v.column(k);
                    for r in 0..dim {
                        for c in 0..dim {
                            p[(r, c)] += col[r] * col[c].conj();
                        }
                    }
                }
                for &o in &w {
                    let o_inside = o >= m && o <= mm;
                    if inside && !o_inside && (l - o).abs() < gap.delta {
                        return Err(AdiabandError::GapViolation {
                            ix,
                            ixi,
                            detail: format!("|{l} - {o}| < delta = {}", gap.delta),
                        });
                    }
                }
            }
            Ok((p, rank))
        })
        .collect();
    let mut ranks = std::collections::BTreeSet::new();
    for r in &per_node {
        match r {
            Ok((_, rank)) => {
                ranks.insert(*rank);
            }
            Err(_) => {}
        }
    }
    let mats: Vec<CMat> = per_node
        .into_iter()
        .map(|r| r.map(|(p, _)| p))
        .collect::<Result<_>>()?;
    if ranks.len() != 1 {
        let mut it = ranks.iter();
        let expected = *it.next().unwrap();
        let found = *it.next().unwrap();
        return Err(AdiabandError::RankViolation { expected, found });
    }
    let rows = h0.rows();
    Ok(MatrixField::build_nodes(grid, rows, rows, |ix, ixi| {
        mats[ix * n_xi + ixi].clone()
    }))
}

/// Per-node spectral data of the parked Sylvester operators K0 = H0 P + c P"
/// and K1 = H0 P" + c' P (P = Pi0, P" = complement).
struct NodeSylvester {
    l0: Vec<f64>,
    v0: CMat,
    l1: Vec<f64>,
    v1: CMat,
    k0: CMat,
    k1: CMat,
}

impl NodeSylvester {
    /// Solve (H0 Pi0) X - X (H0 Pi0^perp) = Y through the parked operators.
    fn solve_eigen(&self, y: &CMat) -> CMat {
        let v0h = self.v0.t().mapv(|z| z.conj());
        let v1h = self.v1.t().mapv(|z| z.conj());
        let mut c = v0h.dot(y).dot(&self.v1);
        for i in 0..self.l0.len() {
            for j in 0..self.l1.len() {
                c[(i, j)] /= C64::new(self.l0[i] - self.l1[j], 0.0);
            }
        }
        self.v0.dot(&c).dot(&v1h)
    }

    fn solve_contour(&self, y: &CMat, delta: f64, n_quad: usize) -> Result<CMat> {
        let prob =
            SylvesterProblem::new(self.k0.clone(), self.k1.clone(), y.clone(), delta)?;
        let contour = Contour::around(&self.l0, &self.l1, delta, n_quad)?;
        solve_sylvester_contour(&prob, &contour)
    }
}

fn prepare_node_solvers(
    h0: &MatrixField,
    pi0: &MatrixField,
    gap: &GapSpec,
) -> Result<Vec<NodeSylvester>> {
    let grid = h0.grid();
    let n_xi = grid.n_xi;
    let (m, mm) = gap.window;
    // Parking constants: c keeps the complement block inside the enclosed
    // window, c' keeps the Pi0 block well outside it; the parked blocks of the
    // datum are zero, so they never contribute to the solution.
    let c_in = 0.5 * (m + mm);
    let c_out = mm + 2.0 * gap.delta;
    (0..grid.n_nodes())
        .into_par_iter()
        .map(|node| {
            let (ix, ixi) = (node / n_xi, node % n_xi);
            let a = h0.at(ix, ixi);
            let p = pi0.at(ix, ixi);
            let dim = a.nrows();
            let q = CMat::eye(dim) - &p;
            let k0 = a.dot(&p) + q.mapv(|e| e * C64::new(c_in, 0.0));
            let k1 = a.dot(&q) + p.mapv(|e| e * C64::new(c_out, 0.0));
            let (l0, v0) = eigh_sorted(&k0)?;
            let (l1, v1) = eigh_sorted(&k1)?;
            for (i, &la) in l0.iter().enumerate() {
                for (j, &lb) in l1.iter().enumerate() {
                    if (la - lb).abs() < gap.delta * 0.5 {
                        return Err(AdiabandError::GapViolation {
                            ix,
                            ixi,
                            detail: format!(
                                "parked Sylvester spectra collide: |{la} - {lb}| < {} (pair {i},{j})",
                                gap.delta * 0.5
                            ),
                        });
                    }
                }
            }
            Ok(NodeSylvester { l0, v0, l1, v1, k0, k1 })
        })
        .collect()
}

/// Inductive construction of the superadiabatic hierarchy up to exponent
/// `k_max` on the 1/q0 lattice of `h`.
pub fn build_hierarchy(
    h: &FormalSymbol,
    gap: &GapSpec,
    k_max: Exponent,
    opts: &BuildOptions,
) -> Result<ProjectorHierarchy> {
    let q0 = h.q0();
    let steps_r = k_max * Ratio::from_integer(q0 as i64);
    if !steps_r.is_integer() || steps_r < Ratio::from_integer(0) {
        return Err(AdiabandError::ExponentNotOnLattice(k_max.to_string(), q0));
    }
    let n_steps = steps_r.to_integer();
    let zero = Ratio::from_integer(0);
    let h0 = h
        .coeff(zero)
        .ok_or_else(|| AdiabandError::Config {
            path: "H".into(),
            message: "missing principal (order-0) term".into(),
        })?
        .clone();
    let pi0 = build_pi0(&h0, gap)?;
    let grid = h0.grid().clone();
    let dim = h0.rows();
    let eye = MatrixField::identity(grid.clone(), dim);
    let pi0_perp = eye.sub(&pi0)?;
    let solvers = prepare_node_solvers(&h0, &pi0, gap)?;
    let n_xi = grid.n_xi;

    let selfadjoint = h
        .terms()
        .all(|(_, f)| f.hermiticity_defect() < 1e-10 * f.sup_norm().max(1.0));

    let mut pi = FormalSymbol::new(grid.clone(), dim, dim, q0, zero)?
        .with_fd_degree(opts.fd_degree);
    pi.set_term(zero, pi0.clone())?;
    let mut diagnostics = Vec::new();

    for step in 1..=n_steps {
        let e = Ratio::new(step, q0 as i64);
        let e_prev = Ratio::new(step - 1, q0 as i64);

        let pi_t = pi.clone().with_truncation(e);
        let r = pi_t.moyal(&pi_t)?.coeff_or_zero(e);
        let h_t = h.truncated(e_prev).with_truncation(e).with_fd_degree(opts.fd_degree);
        let t = h_t.moyal_commutator(&pi_t)?.coeff_or_zero(e);
        let h_e = h.coeff_or_zero(e);
        let s = t.add(&h_e.commutator(&pi0)?)?;

        // compatibility identities (theorems; failures indicate calculus bugs)
        let comp1 = pi0.commutator(&r)?.sup_norm();
        let hr = h0.commutator(&r)?;
        let comp2_inside = pi0
            .matmul(&hr)?
            .matmul(&pi0)?
            .sub(&pi0.matmul(&t)?.matmul(&pi0)?)?
            .sup_norm();
        let comp2_outside = pi0_perp
            .matmul(&hr)?
            .matmul(&pi0_perp)?
            .add(&pi0_perp.matmul(&t)?.matmul(&pi0_perp)?)?
            .sup_norm();
        for (name, v) in [
            ("comp_1", comp1),
            ("comp_2 (inside block)", comp2_inside),
            ("comp_2 (outside block)", comp2_outside),
        ] {
            if v > opts.comp_tol {
                return Err(AdiabandError::CompatibilityViolation {
                    relation: match name {
                        "comp_1" => "comp_1",
                        "comp_2 (inside block)" => "comp_2 (inside block)",
                        _ => "comp_2 (outside block)",
                    },
                    order: e.to_string(),
                    value: v,
                    tol: opts.comp_tol,
                });
            }
        }

        // diagonal blocks are forced by the idempotency defect
        let diag = pi0_perp
            .matmul(&r)?
            .matmul(&pi0_perp)?
            .sub(&pi0.matmul(&r)?.matmul(&pi0)?)?;

        // off-diagonal blocks from the two Sylvester problems
        let y_upper = pi0.matmul(&s)?.matmul(&pi0_perp)?.scale(C64::new(-1.0, 0.0));
        let y_lower_adj = pi0.matmul(&s.adjoint())?.matmul(&pi0_perp)?;
        let per_node: Vec<Result<(CMat, CMat)>> = (0..grid.n_nodes())
            .into_par_iter()
            .map(|node| {
                let (ix, ixi) = (node / n_xi, node % n_xi);
                let y1 = y_upper.at(ix, ixi);
                let y2 = y_lower_adj.at(ix, ixi);
                let sv = &solvers[node];
                match opts.solver {
                    OffDiagSolver::Eigen => Ok((sv.solve_eigen(&y1), sv.solve_eigen(&y2))),
                    OffDiagSolver::Contour { n_quad } => Ok((
                        sv.solve_contour(&y1, gap.delta, n_quad)?,
                        sv.solve_contour(&y2, gap.delta, n_quad)?,
                    )),
                }
            })
            .collect();
        let solved: Vec<(CMat, CMat)> = per_node.into_iter().collect::<Result<_>>()?;
        let x_upper = MatrixField::build_nodes(grid.clone(), dim, dim, |ix, ixi| {
            solved[ix * n_xi + ixi].0.clone()
        });
        let x_lower = MatrixField::build_nodes(grid.clone(), dim, dim, |ix, ixi| {
            solved[ix * n_xi + ixi].1.clone()
        })
        .adjoint();
        // compress to the genuine corner blocks (the parked blocks vanish
        // identically; this removes roundoff leakage)
        let x_upper = pi0.matmul(&x_upper)?.matmul(&pi0_perp)?;
        let x_lower = pi0_perp.matmul(&x_lower)?.matmul(&pi0)?;

        let pi_e = diag.add(&x_upper)?.add(&x_lower)?;
        let hermiticity = if selfadjoint { pi_e.hermiticity_defect() } else { f64::NAN };
        diagnostics.push(OrderDiagnostics {
            exponent: e.to_string(),
            comp1,
            comp2_inside,
            comp2_outside,
            r_norm: r.sup_norm(),
            t_norm: t.sup_norm(),
            hermiticity,
        });
        pi = pi.with_truncation(e);
        pi.set_term(e, pi_e)?;
    }

    Ok(ProjectorHierarchy { pi, source: h.clone(), gap: *gap, diagnostics })
}

/// Idempotency and commutation defects of the truncated hierarchy at numeric
/// values of h, with log-log slope fits. The Moyal expansion is carried
/// `extra` integer orders past the truncation so the leading remainder is
/// represented.
pub fn defect_orders(
    hier: &ProjectorHierarchy,
    h_values: &[f64],
    extra: i64,
) -> Result<(SlopeFit, SlopeFit)> {
    let k = hier.pi.truncation();
    let ext = k + Ratio::from_integer(extra.max(1));
    let pi_ext = hier.pi.clone().with_truncation(ext);
    let idem = pi_ext.moyal(&pi_ext)?.sub(&pi_ext)?;
    let h_ext = hier.source.truncated(k).with_truncation(ext);
    let comm = h_ext.moyal_commutator(&pi_ext)?;
    let pts = |sym: &FormalSymbol| -> Vec<(f64, f64)> {
        h_values
            .iter()
            .map(|&h| (h, sym.eval_at_h(h).sup_norm()))
            .collect()
    };
    Ok((
        fit_log_slope(&pts(&idem), DEFECT_FLOOR)?,
        fit_log_slope(&pts(&comm), DEFECT_FLOOR)?,
    ))
}

/// Same defect tables without the fit, for reporting.
pub fn defect_tables(
    hier: &ProjectorHierarchy,
    h_values: &[f64],
    extra: i64,
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    let k = hier.pi.truncation();
    let ext = k + Ratio::from_integer(extra.max(1));
    let pi_ext = hier.pi.clone().with_truncation(ext);
    let idem = pi_ext.moyal(&pi_ext)?.sub(&pi_ext)?;
    let h_ext = hier.source.truncated(k).with_truncation(ext);
    let comm = h_ext.moyal_commutator(&pi_ext)?;
    let table = |sym: &FormalSymbol| {
        h_values
            .iter()
            .map(|&h| (h, sym.eval_at_h(h).sup_norm()))
            .collect()
    };
    Ok((table(&idem), table(&comm)))
}

/// Decay of the cross product of two hierarchies over disjoint windows.
pub fn orthogonality_defect(
    h1: &ProjectorHierarchy,
    h2: &ProjectorHierarchy,
    h_values: &[f64],
    extra: i64,
) -> Result<SlopeFit> {
    let (a1, b1) = h1.gap.window;
    let (a2, b2) = h2.gap.window;
    if a1.max(a2) <= b1.min(b2) {
        return Err(AdiabandError::Config {
            path: "windows".into(),
            message: format!("windows [{a1}, {b1}] and [{a2}, {b2}] overlap"),
        });
    }
    let k = h1.pi.truncation().min(h2.pi.truncation());
    let ext = k + Ratio::from_integer(extra.max(1));
    let p1 = h1.pi.clone().with_truncation(ext);
    let p2 = h2.pi.clone().with_truncation(ext);
    let cross = p1.moyal(&p2)?;
    let pts: Vec<(f64, f64)> = h_values
        .iter()
        .map(|&h| (h, cross.eval_at_h(h).sup_norm()))
        .collect();
    fit_log_slope(&pts, DEFECT_FLOOR)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapScalingEntry {
    pub j: usize,
    pub alpha: (usize, usize),
    /// Fitted exponent of the sup-norm in the gap parameter.
    pub exponent: f64,
    pub norms: Vec<(f64, f64)>,
}

/// Sup-norms of derivatives of hierarchy terms across a gap-parameterized
/// family, fitted as powers of the gap.
pub fn gap_scaling_probe<F>(
    family: F,
    probes: &[(usize, (usize, usize))],
    deltas: &[f64],
    opts: &BuildOptions,
) -> Result<Vec<GapScalingEntry>>
where
    F: Fn(f64) -> Result<(FormalSymbol, GapSpec)>,
{
    let j_max = probes.iter().map(|&(j, _)| j).max().unwrap_or(0);
    let mut per_delta = Vec::new();
    for &d in deltas {
        let (h, gap) = family(d)?;
        let k_max = Ratio::from_integer(j_max as i64);
        let hier = build_hierarchy(&h, &gap, k_max, opts)?;
        per_delta.push((d, hier));
    }
    probes
        .iter()
        .map(|&(j, alpha)| {
            let norms: Vec<(f64, f64)> = per_delta
                .iter()
                .map(|(d, hier)| {
                    let term = hier.pi.coeff_or_zero(Ratio::from_integer(j as i64));
                    let der = term.derive(alpha.0, alpha.1, opts.fd_degree)?;
                    Ok((*d, der.sup_norm()))
                })
                .collect::<Result<_>>()?;
            let fit = fit_log_slope(&norms, DEFECT_FLOOR)?;
            Ok(GapScalingEntry { j, alpha, exponent: fit.slope, norms })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PhaseSpaceGrid;
    use std::sync::Arc;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn pgrid(n: usize) -> Arc<PhaseSpaceGrid> {
        Arc::new(PhaseSpaceGrid::periodic(2.0 * std::f64::consts::PI, n).unwrap())
    }

    /// Two-band model: diagonal bands f(x, xi) and -1 with a Gaussian
    /// off-diagonal first-order coupling.
    fn two_band(g: &Arc<PhaseSpaceGrid>, k_trunc: i64) -> FormalSymbol {
        let h0 = MatrixField::from_fn(g.clone(), 2, 2, |x, xi| {
            let mut m = CMat::zeros((2, 2));
            m[(0, 0)] = c(1.0 + 0.3 * x.sin() * xi.cos());
            m[(1, 1)] = c(-1.0);
            m
        });
        let h1 = MatrixField::from_fn(g.clone(), 2, 2, |x, xi| {
            let mut m = CMat::zeros((2, 2));
            let gv = 0.2 * (-x * x - xi * xi).exp();
            m[(0, 1)] = c(gv);
            m[(1, 0)] = c(gv);
            m
        });
        let mut h =
            FormalSymbol::new(g.clone(), 2, 2, 1, Ratio::from_integer(k_trunc)).unwrap();
        h.set_term(Ratio::from_integer(0), h0).unwrap();
        h.set_term(Ratio::from_integer(1), h1).unwrap();
        h
    }

    fn upper_gap() -> GapSpec {
        GapSpec { window: (0.5, 1.5), delta: 1.5 }
    }

    #[test]
    fn pi0_constant_diagonal_selection() {
        let g = pgrid(16);
        let h0 = MatrixField::from_fn(g.clone(), 2, 2, |_, _| {
            let mut m = CMat::zeros((2, 2));
            m[(1, 1)] = c(2.0);
            m
        });
        let p = build_pi0(&h0, &GapSpec { window: (-1.0, 1.0), delta: 1.5 }).unwrap();
        let expected = MatrixField::from_fn(g, 2, 2, |_, _| {
            let mut m = CMat::zeros((2, 2));
            m[(0, 0)] = c(1.0);
            m
        });
        assert!(p.sub(&expected).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn pi0_matches_closed_form_2x2() {
        let g = pgrid(32);
        let eps = 0.1;
        let h0 = MatrixField::from_fn(g.clone(), 2, 2, |x, xi| {
            let mut m = CMat::zeros((2, 2));
            m[(0, 0)] = c(x.sin());
            m[(0, 1)] = c(eps);
            m[(1, 0)] = c(eps);
            m[(1, 1)] = c(2.0 + xi.cos());
            m
        });
        let p = build_pi0(&h0, &GapSpec { window: (-1.5, 1.0), delta: 0.15 }).unwrap();
        let expected = MatrixField::from_fn(g, 2, 2, |x, xi| {
            let (a, b) = (x.sin(), 2.0 + xi.cos());
            let lam = 0.5 * (a + b) - (0.25 * (a - b) * (a - b) + eps * eps).sqrt();
            // eigenvector of the lower eigenvalue: (eps, lam - a)
            let n2 = eps * eps + (lam - a) * (lam - a);
            let v = [eps, lam - a];
            CMat::from_shape_fn((2, 2), |(r, s)| c(v[r] * v[s] / n2))
        });
        assert!(p.sub(&expected).unwrap().sup_norm() < 1e-10);
    }

    #[test]
    fn constant_symbol_has_trivial_hierarchy() {
        let g = pgrid(16);
        let h0 = MatrixField::from_fn(g.clone(), 2, 2, |_, _| {
            let mut m = CMat::zeros((2, 2));
            m[(1, 1)] = c(2.0);
            m
        });
        let mut h = FormalSymbol::new(g, 2, 2, 1, Ratio::from_integer(2)).unwrap();
        h.set_term(Ratio::from_integer(0), h0).unwrap();
        let hier = build_hierarchy(
            &h,
            &GapSpec { window: (-1.0, 1.0), delta: 1.5 },
            Ratio::from_integer(2),
            &BuildOptions::default(),
        )
        .unwrap();
        for k in 1..=2 {
            assert!(
                hier.pi.coeff_or_zero(Ratio::from_integer(k)).sup_norm() < 1e-10,
                "order {k} should vanish for a constant symbol"
            );
        }
    }

    #[test]
    fn first_order_term_matches_rayleigh_schroedinger() {
        let g = pgrid(128);
        let h = two_band(&g, 1);
        let hier = build_hierarchy(
            &h,
            &upper_gap(),
            Ratio::from_integer(1),
            &BuildOptions::default(),
        )
        .unwrap();
        let pi1 = hier.pi.coeff_or_zero(Ratio::from_integer(1));
        // Pi0 is the constant diag(1, 0), so all Moyal corrections vanish and
        // the first-order term is the static perturbative coupling g/(E+ - E-).
        let expected = MatrixField::from_fn(g, 2, 2, |x, xi| {
            let f = 1.0 + 0.3 * x.sin() * xi.cos();
            let gv = 0.2 * (-x * x - xi * xi).exp();
            let mut m = CMat::zeros((2, 2));
            m[(0, 1)] = c(gv / (f + 1.0));
            m[(1, 0)] = c(gv / (f + 1.0));
            m
        });
        assert!(pi1.sub(&expected).unwrap().sup_norm() < 1e-7);
        // selfadjoint input -> Hermitian corrections
        assert!(hier.diagnostics[0].hermiticity < 1e-10);
    }

    #[test]
    fn eigen_and_contour_builds_agree() {
        let g = pgrid(24);
        let h = two_band(&g, 1);
        let base = build_hierarchy(
            &h,
            &upper_gap(),
            Ratio::from_integer(1),
            &BuildOptions::default(),
        )
        .unwrap();
        for n_quad in [64, 128] {
            let alt = build_hierarchy(
                &h,
                &upper_gap(),
                Ratio::from_integer(1),
                &BuildOptions {
                    solver: OffDiagSolver::Contour { n_quad },
                    ..BuildOptions::default()
                },
            )
            .unwrap();
            let d = base
                .pi
                .coeff_or_zero(Ratio::from_integer(1))
                .sub(&alt.pi.coeff_or_zero(Ratio::from_integer(1)))
                .unwrap()
                .sup_norm();
            assert!(d < 1e-8, "solver disagreement {d} at n_quad {n_quad}");
        }
    }

    /// Smooth 2x2 model with non-constant principal projector: bands
    /// sin x and 2 + cos xi coupled by a constant eps.
    fn crossing_free(g: &Arc<PhaseSpaceGrid>, k_trunc: i64) -> FormalSymbol {
        let eps = 0.1;
        let h0 = MatrixField::from_fn(g.clone(), 2, 2, |x, xi| {
            let mut m = CMat::zeros((2, 2));
            m[(0, 0)] = c(x.sin());
            m[(0, 1)] = c(eps);
            m[(1, 0)] = c(eps);
            m[(1, 1)] = c(2.0 + xi.cos());
            m
        });
        let mut h = FormalSymbol::new(g.clone(), 2, 2, 1, Ratio::from_integer(k_trunc)).unwrap();
        h.set_term(Ratio::from_integer(0), h0).unwrap();
        h
    }

    #[test]
    fn zeroth_order_defect_slope_is_one() {
        let g = pgrid(64);
        let h = crossing_free(&g, 0);
        let gap = GapSpec { window: (-1.5, 1.0), delta: 0.15 };
        let hier =
            build_hierarchy(&h, &gap, Ratio::from_integer(0), &BuildOptions::default()).unwrap();
        let hs: Vec<f64> = (3..=7).map(|k| 0.5f64.powi(k)).collect();
        let (idem, comm) = defect_orders(&hier, &hs, 2).unwrap();
        assert!(idem.slope > 0.8, "idempotency slope {}", idem.slope);
        assert!(comm.slope > 0.8, "commutator slope {}", comm.slope);
    }

    #[test]
    fn gap_probe_sees_inverse_gap_growth() {
        // avoided crossing with gap delta: levels +/- sqrt(x^2 + delta^2/4)
        let family = |delta: f64| -> Result<(FormalSymbol, GapSpec)> {
            let g = Arc::new(PhaseSpaceGrid::clamped(1.0, 48).unwrap());
            let h0 = MatrixField::from_fn(g.clone(), 2, 2, |x, _| {
                let mut m = CMat::zeros((2, 2));
                m[(0, 0)] = c(x);
                m[(0, 1)] = c(delta / 2.0);
                m[(1, 0)] = c(delta / 2.0);
                m[(1, 1)] = c(-x);
                m
            });
            let mut h = FormalSymbol::new(g, 2, 2, 1, Ratio::from_integer(1))?;
            h.set_term(Ratio::from_integer(0), h0)?;
            // the two levels touch the nominal gap exactly at x = 0, so the
            // declared delta backs off slightly to absorb roundoff
            Ok((h, GapSpec { window: (-2.0, -1e-9), delta: 0.9 * delta }))
        };
        let deltas = [0.4, 0.2, 0.1, 0.05];
        let probes = [(0usize, (0usize, 0usize)), (0, (1, 0))];
        let entries = gap_scaling_probe(
            family,
            &probes,
            &deltas,
            &BuildOptions { comp_tol: 1e-4, ..BuildOptions::default() },
        )
        .unwrap();
        // norm of the projector itself stays bounded
        assert!(entries[0].exponent.abs() < 0.3, "got {}", entries[0].exponent);
        // first derivative grows like 1/delta
        assert!(
            entries[1].exponent < -0.7 && entries[1].exponent > -1.3,
            "got {}",
            entries[1].exponent
        );
    }
}
