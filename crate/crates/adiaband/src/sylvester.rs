use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use ndarray::Array2;
use ndarray_linalg::{Inverse, OperationNorm};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{AdiabandError, Result};
use crate::linalg::{eigh_sorted, hermiticity_defect};

pub type CMat = Array2<C64>;

pub const PANEL_NODES: usize = 32;
pub const MAX_NODES_PER_BRANCH: usize = 1024;
pub const REFINE_TOL: f64 = 1e-11;

fn require_hermitian(m: &CMat, name: &str) -> Result<()> {
    let scale = m.opnorm_one().unwrap_or(1.0).max(1.0);
    if hermiticity_defect(m) > 1e-10 * scale {
        return Err(AdiabandError::NonHermitian(name.to_string()));
    }
    Ok(())
}

/// K0 X - X K1 = Y with spectrally separated Hermitian K0, K1.
#[derive(Debug, Clone)]
pub struct SylvesterProblem {
    pub k0: CMat,
    pub k1: CMat,
    pub y: CMat,
    pub delta: f64,
}

impl SylvesterProblem {
    pub fn new(k0: CMat, k1: CMat, y: CMat, delta: f64) -> Result<Self> {
        if k0.nrows() != k0.ncols() || k1.nrows() != k1.ncols() {
            return Err(AdiabandError::DimMismatch(
                k0.nrows(),
                k0.ncols(),
                k1.nrows(),
                k1.ncols(),
            ));
        }
        if y.nrows() != k0.nrows() || y.ncols() != k1.nrows() {
            return Err(AdiabandError::DimMismatch(y.nrows(), y.ncols(), k0.nrows(), k1.nrows()));
        }
        if !(delta > 0.0) {
            return Err(AdiabandError::Config {
                path: "delta".into(),
                message: format!("gap parameter must be positive, got {delta}"),
            });
        }
        Ok(Self { k0, k1, y, delta })
    }
}

/// Counterclockwise rectangle enclosing the selected spectrum.
#[derive(Debug, Clone, Copy)]
pub struct Contour {
    pub a_left: f64,
    pub a_right: f64,
    pub half_height: f64,
    /// Quadrature points per branch; rounded up to whole panels.
    pub n_quad: usize,
}

impl Contour {
    /// Rectangle with margin delta/2 around `enclosed` and half-height
    /// 1 + delta; `excluded` must stay at distance >= delta/2 outside.
    pub fn around(enclosed: &[f64], excluded: &[f64], delta: f64, n_quad: usize) -> Result<Self> {
        let lo = enclosed.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = enclosed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            return Err(AdiabandError::ContourInvalid("no enclosed spectrum".into()));
        }
        let c = Self {
            a_left: lo - delta / 2.0,
            a_right: hi + delta / 2.0,
            half_height: 1.0 + delta,
            n_quad,
        };
        c.validate(enclosed, excluded, delta)?;
        Ok(c)
    }

    pub fn validate(&self, enclosed: &[f64], excluded: &[f64], delta: f64) -> Result<()> {
        if !(self.a_right > self.a_left) || !(self.half_height > 0.0) {
            return Err(AdiabandError::ContourInvalid(format!(
                "degenerate rectangle [{}, {}] x [-{}, {}]",
                self.a_left, self.a_right, self.half_height, self.half_height
            )));
        }
        for &l in enclosed {
            if l <= self.a_left || l >= self.a_right {
                return Err(AdiabandError::ContourInvalid(format!(
                    "selected eigenvalue {l} outside rectangle [{}, {}]",
                    self.a_left, self.a_right
                )));
            }
        }
        for &m in excluded {
            let dist = if m < self.a_left {
                self.a_left - m
            } else if m > self.a_right {
                m - self.a_right
            } else {
                0.0
            };
            if dist < delta * 0.5 - 1e-12 {
                return Err(AdiabandError::ContourInvalid(format!(
                    "excluded eigenvalue {m} within {dist:.3e} of the boundary (need {:.3e})",
                    delta * 0.5
                )));
            }
        }
        Ok(())
    }

    /// Quadrature nodes (z, dz-weight) over the whole counterclockwise
    /// boundary, using composite Gauss-Legendre panels of PANEL_NODES points.
    fn nodes(&self) -> Vec<(C64, C64)> {
        let per_branch = self.n_quad.max(PANEL_NODES);
        let panels = per_branch.div_ceil(PANEL_NODES);
        let rule = GaussLegendre::new(NonZeroUsize::new(PANEL_NODES).unwrap());
        let base = rule.as_node_weight_pairs();

        let corners = [
            C64::new(self.a_left, -self.half_height),
            C64::new(self.a_right, -self.half_height),
            C64::new(self.a_right, self.half_height),
            C64::new(self.a_left, self.half_height),
        ];
        let mut out = Vec::with_capacity(4 * panels * PANEL_NODES);
        for b in 0..4 {
            let z0 = corners[b];
            let z1 = corners[(b + 1) % 4];
            let dz = (z1 - z0) / panels as f64;
            for p in 0..panels {
                let a = z0 + dz * p as f64;
                for &(t, w) in base {
                    // map [-1, 1] onto the panel [a, a + dz]
                    out.push((a + dz * (0.5 * (t + 1.0)), dz * (0.5 * w)));
                }
            }
        }
        out
    }
}

/// Eigenbasis solution X = V0 ((V0* Y V1) ./ (lambda_i - mu_j)) V1*.
pub fn solve_sylvester_eigen(prob: &SylvesterProblem) -> Result<CMat> {
    require_hermitian(&prob.k0, "K0")?;
    require_hermitian(&prob.k1, "K1")?;
    let (l0, v0) = eigh_sorted(&prob.k0)?;
    let (l1, v1) = eigh_sorted(&prob.k1)?;
    for (i, &a) in l0.iter().enumerate() {
        for (j, &b) in l1.iter().enumerate() {
            if (a - b).abs() < prob.delta * 0.5 {
                return Err(AdiabandError::GapViolation {
                    ix: i,
                    ixi: j,
                    detail: format!("|{a} - {b}| < delta/2 = {}", prob.delta * 0.5),
                });
            }
        }
    }
    let v0h = v0.t().mapv(|z| z.conj());
    let mut c = v0h.dot(&prob.y).dot(&v1);
    for i in 0..l0.len() {
        for j in 0..l1.len() {
            c[(i, j)] /= C64::new(l0[i] - l1[j], 0.0);
        }
    }
    let v1h = v1.t().mapv(|z| z.conj());
    Ok(v0.dot(&c).dot(&v1h))
}

/// Contour solution X = -(1/2 pi i) oint (K0 - z)^-1 Y (K1 - z)^-1 dz, with
/// the contour winding once counterclockwise around spec(K0).
pub fn solve_sylvester_contour(prob: &SylvesterProblem, contour: &Contour) -> Result<CMat> {
    require_hermitian(&prob.k0, "K0")?;
    require_hermitian(&prob.k1, "K1")?;
    let (l0, _) = eigh_sorted(&prob.k0)?;
    let (l1, _) = eigh_sorted(&prob.k1)?;
    // Common shift putting the selected spectrum into (0, span); X is
    // invariant under shifting both operators by the same constant.
    let shift = l0.iter().cloned().fold(f64::INFINITY, f64::min) - prob.delta * 0.5;
    let l0s: Vec<f64> = l0.iter().map(|l| l - shift).collect();
    let l1s: Vec<f64> = l1.iter().map(|l| l - shift).collect();
    let shifted = Contour {
        a_left: contour.a_left - shift,
        a_right: contour.a_right - shift,
        half_height: contour.half_height,
        n_quad: contour.n_quad,
    };
    shifted.validate(&l0s, &l1s, prob.delta)?;

    let n0 = prob.k0.nrows();
    let n1 = prob.k1.nrows();
    let eye0 = CMat::eye(n0);
    let eye1 = CMat::eye(n1);
    let k0s = &prob.k0 - &eye0.mapv(|e| e * C64::new(shift, 0.0));
    let k1s = &prob.k1 - &eye1.mapv(|e| e * C64::new(shift, 0.0));

    let acc = shifted
        .nodes()
        .par_iter()
        .map(|&(z, w)| -> Result<CMat> {
            let r0 = (&k0s - &eye0.mapv(|e| e * z))
                .inv()
                .map_err(|e| AdiabandError::SolverFailure(e.to_string()))?;
            let r1 = (&k1s - &eye1.mapv(|e| e * z))
                .inv()
                .map_err(|e| AdiabandError::SolverFailure(e.to_string()))?;
            Ok(r0.dot(&prob.y).dot(&r1).mapv(|e| e * w))
        })
        .try_reduce(
            || CMat::zeros((n0, n1)),
            |a, b| Ok(a + b),
        )?;
    // (1/(2 pi i)) = -i/(2 pi); with (K - z)^-1 resolvents and a
    // counterclockwise rectangle around spec(K0) this is the orientation
    // that reproduces the eigenbasis solution.
    let pref = C64::new(0.0, -1.0 / (2.0 * std::f64::consts::PI));
    Ok(acc.mapv(|e| e * pref))
}

/// Contour solve with the default rectangle, doubling panel counts until two
/// successive refinements differ by < REFINE_TOL or the node cap is reached.
pub fn solve_sylvester_contour_refined(prob: &SylvesterProblem) -> Result<CMat> {
    let (l0, _) = eigh_sorted(&prob.k0)?;
    let (l1, _) = eigh_sorted(&prob.k1)?;
    let mut n_quad = PANEL_NODES;
    let mut contour = Contour::around(&l0, &l1, prob.delta, n_quad)?;
    let mut prev = solve_sylvester_contour(prob, &contour)?;
    while n_quad < MAX_NODES_PER_BRANCH {
        n_quad *= 2;
        contour.n_quad = n_quad;
        let next = solve_sylvester_contour(prob, &contour)?;
        let diff = (&next - &prev).opnorm_fro().unwrap_or(f64::INFINITY);
        if diff < REFINE_TOL * (1.0 + next.opnorm_fro().unwrap_or(0.0)) {
            return Ok(next);
        }
        prev = next;
    }
    let residual = sylvester_residual(prob, &prev);
    if residual > 1e-8 {
        return Err(AdiabandError::QuadratureNotConverged { residual, nodes: n_quad });
    }
    Ok(prev)
}

/// Relative residual ||K0 X - X K1 - Y|| / ||Y||.
pub fn sylvester_residual(prob: &SylvesterProblem, x: &CMat) -> f64 {
    let r = prob.k0.dot(x) - x.dot(&prob.k1) - &prob.y;
    let ny = prob.y.opnorm_fro().unwrap_or(0.0);
    if ny == 0.0 {
        r.opnorm_fro().unwrap_or(0.0)
    } else {
        r.opnorm_fro().unwrap_or(f64::INFINITY) / ny
    }
}

/// Spectral projector onto eigenvalues of Hermitian K inside `window`,
/// Pi = -(1/2 pi i) oint (K - z)^-1 dz around the window.
pub fn riesz_projector(k: &CMat, window: (f64, f64), delta: f64, n_quad: usize) -> Result<CMat> {
    require_hermitian(k, "K")?;
    let (m, mm) = window;
    let (spec, _) = eigh_sorted(k)?;
    let inside: Vec<f64> = spec.iter().cloned().filter(|l| *l >= m && *l <= mm).collect();
    let n = k.nrows();
    if inside.is_empty() {
        return Ok(CMat::zeros((n, n)));
    }
    let outside: Vec<f64> = spec.iter().cloned().filter(|l| *l < m || *l > mm).collect();
    for &l in &inside {
        for &o in &outside {
            if (l - o).abs() <= delta {
                return Err(AdiabandError::GapViolation {
                    ix: 0,
                    ixi: 0,
                    detail: format!("window eigenvalue {l} within {delta} of excluded {o}"),
                });
            }
        }
    }
    let contour = Contour::around(&inside, &outside, delta, n_quad)?;
    let eye = CMat::eye(n);
    let acc = contour
        .nodes()
        .par_iter()
        .map(|&(z, w)| -> Result<CMat> {
            let r = (k - &eye.mapv(|e| e * z))
                .inv()
                .map_err(|e| AdiabandError::SolverFailure(e.to_string()))?;
            Ok(r.mapv(|e| e * w))
        })
        .try_reduce(|| CMat::zeros((n, n)), |a, b| Ok(a + b))?;
    let pref = C64::new(0.0, 1.0 / (2.0 * std::f64::consts::PI));
    // -(1/2 pi i) = i/(2 pi)
    Ok(acc.mapv(|e| e * pref))
}

/// Solve many independent problems in parallel, preserving input order.
pub fn solve_batch_eigen(problems: &[SylvesterProblem]) -> Result<Vec<CMat>> {
    problems.par_iter().map(solve_sylvester_eigen).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> CMat {
        // random spectrum in [lo, hi] conjugated by a random unitary (QR phase)
        let a = CMat::from_shape_fn((n, n), |_| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let h = &a + &a.t().mapv(|z| z.conj());
        let (_, v) = eigh_sorted(&h).unwrap();
        let d = CMat::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                c(lo + (hi - lo) * rng.gen::<f64>())
            } else {
                c(0.0)
            }
        });
        v.dot(&d).dot(&v.t().mapv(|z| z.conj()))
    }

    #[test]
    fn scalar_resolvent_formula() {
        let prob = SylvesterProblem::new(
            array![[c(0.1)]],
            array![[c(1.0)]],
            array![[c(0.7)]],
            0.2,
        )
        .unwrap();
        let x = solve_sylvester_eigen(&prob).unwrap();
        assert_abs_diff_eq!(x[(0, 0)].re, -0.7 / 0.9, epsilon = 1e-14);
        let contour = Contour::around(&[0.1], &[1.0], 0.2, 64).unwrap();
        let xc = solve_sylvester_contour(&prob, &contour).unwrap();
        assert_abs_diff_eq!(xc[(0, 0)].re, -0.7 / 0.9, epsilon = 1e-10);
        assert!(xc[(0, 0)].im.abs() < 1e-10);
    }

    #[test]
    fn zero_datum_gives_zero_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k0 = random_hermitian(&mut rng, 4, 0.0, 0.4);
        let k1 = random_hermitian(&mut rng, 3, 1.0, 2.0);
        let prob = SylvesterProblem::new(k0, k1, CMat::zeros((4, 3)), 0.5).unwrap();
        assert!(solve_sylvester_eigen(&prob).unwrap().opnorm_fro().unwrap() < 1e-14);
        let xc = solve_sylvester_contour_refined(&prob).unwrap();
        assert!(xc.opnorm_fro().unwrap() < 1e-13);
    }

    #[test]
    fn eigen_matches_vectorized_linear_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let k0 = random_hermitian(&mut rng, 4, 0.0, 0.4);
        let k1 = random_hermitian(&mut rng, 4, 1.0, 2.0);
        let y = CMat::from_shape_fn((4, 4), |_| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let prob = SylvesterProblem::new(k0.clone(), k1.clone(), y.clone(), 0.5).unwrap();
        let x = solve_sylvester_eigen(&prob).unwrap();

        // oracle: dense (I (x) K0 - K1^T (x) I) vec(X) = vec(Y), column-major vec
        use ndarray_linalg::Solve;
        let n = 16;
        let mut big = CMat::zeros((n, n));
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    // K0 acting on the row index within column j
                    big[(j * 4 + i, j * 4 + k)] += k0[(i, k)];
                    // -K1 acting from the right couples columns
                    big[(j * 4 + i, k * 4 + i)] -= k1[(k, j)];
                }
            }
        }
        let rhs = ndarray::Array1::from_shape_fn(n, |t| y[(t % 4, t / 4)]);
        let sol = big.solve(&rhs).unwrap();
        let x_oracle = CMat::from_shape_fn((4, 4), |(i, j)| sol[j * 4 + i]);
        let rel = (&x - &x_oracle).opnorm_fro().unwrap() / x_oracle.opnorm_fro().unwrap();
        assert!(rel < 1e-9, "relative deviation {rel}");
    }

    #[test]
    fn contour_matches_eigen_on_random_gapped_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k0 = random_hermitian(&mut rng, 6, -0.3, 0.4);
        let k1 = random_hermitian(&mut rng, 3, 1.0, 2.0);
        let y = CMat::from_shape_fn((6, 3), |_| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let prob = SylvesterProblem::new(k0, k1, y, 0.5).unwrap();
        let xe = solve_sylvester_eigen(&prob).unwrap();
        let (l0, _) = eigh_sorted(&prob.k0).unwrap();
        let (l1, _) = eigh_sorted(&prob.k1).unwrap();
        let contour = Contour::around(&l0, &l1, prob.delta, 128).unwrap();
        let xc = solve_sylvester_contour(&prob, &contour).unwrap();
        let rel = (&xe - &xc).opnorm_fro().unwrap() / xe.opnorm_fro().unwrap();
        assert!(rel < 1e-8, "relative deviation {rel}");
        assert!(sylvester_residual(&prob, &xc) < 1e-8);
    }

    #[test]
    fn common_shift_leaves_solution_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k0 = random_hermitian(&mut rng, 5, 0.0, 0.4);
        let k1 = random_hermitian(&mut rng, 5, 1.0, 2.0);
        let y = CMat::from_shape_fn((5, 5), |_| c(rng.gen::<f64>() - 0.5));
        let eye = CMat::eye(5);
        let prob = SylvesterProblem::new(k0.clone(), k1.clone(), y.clone(), 0.5).unwrap();
        let shifted = SylvesterProblem::new(
            &k0 + &eye.mapv(|e| e * c(37.5)),
            &k1 + &eye.mapv(|e| e * c(37.5)),
            y,
            0.5,
        )
        .unwrap();
        let a = solve_sylvester_eigen(&prob).unwrap();
        let b = solve_sylvester_eigen(&shifted).unwrap();
        assert!((&a - &b).opnorm_fro().unwrap() < 1e-10);
        // scaling covariance: (cK0, cK1, cY) has the same solution
        let scaled = SylvesterProblem::new(
            k0.mapv(|e| e * c(3.0)),
            k1.mapv(|e| e * c(3.0)),
            prob.y.mapv(|e| e * c(3.0)),
            0.5,
        )
        .unwrap();
        let s = solve_sylvester_eigen(&scaled).unwrap();
        assert!((&a - &s).opnorm_fro().unwrap() < 1e-10);
    }

    #[test]
    fn gap_violation_is_detected() {
        let prob = SylvesterProblem::new(
            array![[c(0.5)]],
            array![[c(0.55)]],
            array![[c(1.0)]],
            0.2,
        )
        .unwrap();
        assert!(matches!(
            solve_sylvester_eigen(&prob),
            Err(AdiabandError::GapViolation { .. })
        ));
    }

    #[test]
    fn riesz_projector_diagonal_selection() {
        let k = array![[c(0.0), c(0.0)], [c(0.0), c(1.0)]];
        let p = riesz_projector(&k, (-0.5, 0.5), 0.4, 64).unwrap();
        assert_abs_diff_eq!(p[(0, 0)].re, 1.0, epsilon = 1e-10);
        assert!(p[(1, 1)].norm() < 1e-10);
        assert!(p[(0, 1)].norm() < 1e-10);
    }

    #[test]
    fn riesz_projector_matches_closed_form_2x2() {
        let t = 0.2;
        let k = array![[c(0.0), c(t)], [c(t), c(1.0)]];
        // lower eigenvector (cos th, -sin th) with tan 2th = 2t (for H = [[0,t],[t,1]]
        // the lower eigenvalue is (1 - sqrt(1 + 4t^2))/2)
        let lower = 0.5 * (1.0 - (1.0 + 4.0 * t * t).sqrt());
        let p = riesz_projector(&k, (lower - 0.1, lower + 0.1), 0.3, 128).unwrap();
        // eigenvector of the lower eigenvalue: (t, lower), normalized
        let n = (t * t + lower * lower).sqrt();
        let v = [t / n, lower / n];
        // projector should equal v v^T with Kv = lower v; verify both properties
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(p[(i, j)].re, v[i] * v[j], epsilon = 1e-9);
                assert!(p[(i, j)].im.abs() < 1e-10);
            }
        }
        // idempotent, Hermitian, commutes with K
        let p2 = p.dot(&p);
        assert!((&p2 - &p).opnorm_fro().unwrap() < 1e-10);
        assert!(hermiticity_defect(&p) < 1e-10);
        assert!((k.dot(&p) - p.dot(&k)).opnorm_fro().unwrap() < 1e-10);
    }

    #[test]
    fn riesz_windows_partition_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = random_hermitian(&mut rng, 6, 0.0, 1.0)
            + random_hermitian(&mut rng, 6, 0.0, 0.0).mapv(|e| e * c(0.0));
        let (spec, _) = eigh_sorted(&k).unwrap();
        // split between the 3rd and 4th eigenvalue; regenerate until gapped
        let cut = 0.5 * (spec[2] + spec[3]);
        let delta = 0.8 * (spec[3] - spec[2]).min(1.0);
        if delta < 0.02 {
            return; // degenerate draw; seed chosen so this does not happen
        }
        let lo = riesz_projector(&k, (spec[0] - 0.5, cut), delta / 2.0, 256).unwrap();
        let hi = riesz_projector(&k, (cut, spec[5] + 0.5), delta / 2.0, 256).unwrap();
        let sum = &lo + &hi;
        assert!((&sum - &CMat::eye(6)).opnorm_fro().unwrap() < 1e-8);
        // full window is the identity
        let all = riesz_projector(&k, (spec[0] - 1.0, spec[5] + 1.0), 0.5, 64).unwrap();
        assert!((&all - &CMat::eye(6)).opnorm_fro().unwrap() < 1e-9);
    }
}
