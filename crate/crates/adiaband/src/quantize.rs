use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::s;
use ndarray_linalg::{Eig, EigValsh, UPLO};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{AdiabandError, Result};
use crate::field::CMat;
use crate::linalg;
use crate::symbol::Exponent;

/// Default cap on dense eigensolve sizes.
pub const DEFAULT_SIZE_CAP: usize = 8192;

/// Uniform 1D grid for the base quantization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseGrid1d {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub periodic: bool,
}

impl BaseGrid1d {
    pub fn new(x_min: f64, x_max: f64, n: usize, periodic: bool) -> Result<Self> {
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(AdiabandError::InvalidGrid(format!(
                "empty interval [{x_min}, {x_max}]"
            )));
        }
        if n < 8 {
            return Err(AdiabandError::InvalidGrid(format!("{n} nodes (need >= 8)")));
        }
        Ok(Self { x_min, x_max, n, periodic })
    }

    /// Node spacing; periodic grids omit the right endpoint.
    pub fn dx(&self) -> f64 {
        if self.periodic {
            (self.x_max - self.x_min) / self.n as f64
        } else {
            (self.x_max - self.x_min) / (self.n - 1) as f64
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    /// Half-width of the representable momentum band at parameter `h`.
    pub fn nyquist_xi(&self, h: f64) -> f64 {
        PI * h / self.dx()
    }
}

/// Basis descriptor for a quantized operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Basis {
    Scalar1d { grid: BaseGrid1d },
    Tensor { base: BaseGrid1d, fock_m: usize },
}

/// Dense matrix realization of a symbol in a declared basis.
#[derive(Debug, Clone)]
pub struct QuantizedOperator {
    pub matrix: CMat,
    pub basis: Basis,
    pub h: f64,
}

impl QuantizedOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.matrix)
    }
}

/// Weyl quantization of a scalar symbol on a 1D grid.
///
/// The matrix is the exact discrete Weyl transform
///   A(i,j) = (1/n) sum_k omega^{k(i-j)} a((x_i + x_j)/2, xi_k),
/// with omega = e^{2 pi i / n} and xi_k = 2 pi h k / (n dx) running over the
/// signed Nyquist band; for even n the two Nyquist samples +-xi_{n/2} are
/// averaged so that real symbols stay Hermitian. Diagonal symbols a = a(x)
/// quantize exactly (the k-sum collapses to a Kronecker delta), and a = xi
/// reproduces the spectral derivative -ih d/dx on grid plane waves.
///
/// `xi_extent` declares the momentum range on which the symbol must be
/// resolved; the precondition is h >= c * dx * xi_extent with c = 1/pi,
/// i.e. xi_extent must fit inside the Nyquist band. Violations are refused
/// rather than aliased.
pub fn weyl_quantize_scalar_1d<F>(
    a: F,
    h: f64,
    grid: &BaseGrid1d,
    xi_extent: f64,
) -> Result<QuantizedOperator>
where
    F: Fn(f64, f64) -> C64 + Sync,
{
    if !(h > 0.0) {
        return Err(AdiabandError::Config {
            path: "h".into(),
            message: format!("semiclassical parameter must be positive, got {h}"),
        });
    }
    let nyq = grid.nyquist_xi(h);
    if xi_extent > nyq * (1.0 + 1e-12) {
        return Err(AdiabandError::ResolutionViolated(format!(
            "dx * xi_extent / h = {:.4} exceeds pi; representable band is [-{:.4}, {:.4}]",
            grid.dx() * xi_extent / h,
            nyq,
            nyq
        )));
    }
    let matrix = assemble_weyl_matrix(&a, h, grid);
    Ok(QuantizedOperator { matrix, basis: Basis::Scalar1d { grid: grid.clone() }, h })
}

fn assemble_weyl_matrix<F>(a: &F, h: f64, grid: &BaseGrid1d) -> CMat
where
    F: Fn(f64, f64) -> C64 + Sync,
{
    let n = grid.n;
    let dx = grid.dx();
    let dxi = 2.0 * PI * h / (n as f64 * dx);
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_inverse(n);

    // One inverse FFT per anti-diagonal s = i + j: the lag transform of the
    // symbol sampled along xi at the midpoint x.
    let diag: Vec<Vec<C64>> = (0..2 * n - 1)
        .into_par_iter()
        .map(|s| {
            let x_mid = grid.x_min + 0.5 * s as f64 * dx;
            let mut buf: Vec<C64> = (0..n)
                .map(|kk| {
                    if n % 2 == 0 && kk == n / 2 {
                        let xi = (n / 2) as f64 * dxi;
                        (a(x_mid, xi) + a(x_mid, -xi)) * C64::new(0.5, 0.0)
                    } else {
                        let k = if kk <= n / 2 { kk as i64 } else { kk as i64 - n as i64 };
                        a(x_mid, k as f64 * dxi)
                    }
                })
                .collect();
            fft.process(&mut buf);
            let inv_n = 1.0 / n as f64;
            buf.iter_mut().for_each(|z| *z *= inv_n);
            buf
        })
        .collect();

    let mut m = CMat::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let d = (i as i64 - j as i64).rem_euclid(n as i64) as usize;
            m[(i, j)] = diag[i + j][d];
        }
    }
    m
}

/// Weyl quantization of a (possibly rectangular) matrix-valued symbol on a
/// 1D grid: each fiber entry is quantized independently and placed in the
/// corresponding block (base index major, fiber index minor). Preconditions
/// are the same as for the scalar quantizer.
pub fn weyl_quantize_blocks<F>(
    a: F,
    rows: usize,
    cols: usize,
    h: f64,
    grid: &BaseGrid1d,
    xi_extent: f64,
) -> Result<CMat>
where
    F: Fn(f64, f64) -> CMat + Sync,
{
    if !(h > 0.0) {
        return Err(AdiabandError::Config {
            path: "h".into(),
            message: format!("semiclassical parameter must be positive, got {h}"),
        });
    }
    let nyq = grid.nyquist_xi(h);
    if xi_extent > nyq * (1.0 + 1e-12) {
        return Err(AdiabandError::ResolutionViolated(format!(
            "dx * xi_extent / h = {:.4} exceeds pi; representable band is [-{:.4}, {:.4}]",
            grid.dx() * xi_extent / h,
            nyq,
            nyq
        )));
    }
    let n = grid.n;
    let mut total = CMat::zeros((n * rows, n * cols));
    for p in 0..rows {
        for q in 0..cols {
            let entry = assemble_weyl_matrix(&|x, xi| a(x, xi)[(p, q)], h, grid);
            for i in 0..n {
                for j in 0..n {
                    total[(i * rows + p, j * cols + q)] = entry[(i, j)];
                }
            }
        }
    }
    Ok(total)
}

/// Square-fiber specialization of [`weyl_quantize_blocks`] returning a
/// tensor-basis operator.
pub fn weyl_quantize_operator_1d<F>(
    a: F,
    m: usize,
    h: f64,
    grid: &BaseGrid1d,
    xi_extent: f64,
) -> Result<QuantizedOperator>
where
    F: Fn(f64, f64) -> CMat + Sync,
{
    let matrix = weyl_quantize_blocks(a, m, m, h, grid, xi_extent)?;
    Ok(QuantizedOperator {
        matrix,
        basis: Basis::Tensor { base: grid.clone(), fock_m: m },
        h,
    })
}

const FOCK_PAD: usize = 4;

/// Ladder realization of the fiber variables (x1, xi1) in the Hermite basis.
///
/// Matrices are built at size m + 4 and cropped to m after products, so the
/// truncation edge does not pollute the retained block.
#[derive(Debug, Clone)]
pub struct FockLadder {
    m: usize,
    x_full: CMat,
    xi_full: CMat,
}

impl FockLadder {
    pub fn new(m: usize) -> Self {
        assert!(m >= 2, "Fock truncation must be at least 2");
        let mm = m + FOCK_PAD;
        let mut lower = CMat::zeros((mm, mm));
        for k in 1..mm {
            lower[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
        }
        let raise = linalg::adjoint(&lower);
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        let x_full = (&lower + &raise).mapv(|z| z * inv_sqrt2);
        let xi_full = (&raise - &lower).mapv(|z| z * C64::new(0.0, inv_sqrt2));
        Self { m, x_full, xi_full }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    fn crop(&self, f: &CMat) -> CMat {
        f.slice(s![..self.m, ..self.m]).to_owned()
    }

    pub fn x1(&self) -> CMat {
        self.crop(&self.x_full)
    }

    pub fn xi1(&self) -> CMat {
        self.crop(&self.xi_full)
    }

    /// Weyl-ordered quantization of the monomial x1^a xi1^b via McCoy's
    /// formula: (1/2^a) sum_k C(a,k) x^k xi^b x^{a-k}.
    pub fn weyl_monomial(&self, a: usize, b: usize) -> Result<CMat> {
        if a + b > self.m / 2 {
            return Err(AdiabandError::DegreeTooHigh { degree: a + b, m: self.m });
        }
        let mm = self.m + FOCK_PAD;
        let xi_b = matpow(&self.xi_full, b, mm);
        let mut x_pows = Vec::with_capacity(a + 1);
        let mut p = CMat::eye(mm);
        x_pows.push(p.clone());
        for _ in 0..a {
            p = p.dot(&self.x_full);
            x_pows.push(p.clone());
        }
        let mut acc = CMat::zeros((mm, mm));
        let mut binom = 1.0f64;
        for k in 0..=a {
            if k > 0 {
                binom = binom * (a - k + 1) as f64 / k as f64;
            }
            let term = x_pows[k].dot(&xi_b).dot(&x_pows[a - k]);
            acc = acc + term.mapv(|z| z * binom);
        }
        let scale = 0.5f64.powi(a as i32);
        Ok(self.crop(&acc.mapv(|z| z * scale)))
    }
}

fn matpow(m: &CMat, p: usize, dim: usize) -> CMat {
    let mut acc = CMat::eye(dim);
    for _ in 0..p {
        acc = acc.dot(m);
    }
    acc
}

/// One Weyl-ordered fiber monomial with a base-dependent real coefficient.
pub struct FiberTerm {
    pub x_pow: usize,
    pub xi_pow: usize,
    pub coeff: Box<dyn Fn(f64, f64) -> f64 + Sync + Send>,
}

/// Polynomial in the fiber variables with coefficients on the base phase space.
pub struct FiberPolynomial {
    pub terms: Vec<FiberTerm>,
}

impl FiberPolynomial {
    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.x_pow + t.xi_pow).max().unwrap_or(0)
    }
}

/// Series sum_alpha h^alpha p_alpha(x1, xi1; x2, xi2) with polynomial fiber
/// dependence, ready for two-scale quantization.
pub struct FiberSymbol {
    pub q0: u32,
    pub terms: BTreeMap<Exponent, FiberPolynomial>,
}

impl FiberSymbol {
    pub fn max_degree(&self) -> usize {
        self.terms.values().map(|p| p.degree()).max().unwrap_or(0)
    }
}

/// Two-scale quantization: inner (fiber) variables at scale 1 in the Fock
/// ladder, outer (base) variables at scale h on the grid. Half-integer powers
/// of h are inserted numerically; the result acts on base (x) fock(m) with the
/// base index major.
pub fn quantize_fiber_model(
    sym: &FiberSymbol,
    ladder: &FockLadder,
    base: &BaseGrid1d,
    h: f64,
    xi_extent: f64,
) -> Result<QuantizedOperator> {
    let m = ladder.m();
    let dim = base.n * m;
    let mut total = CMat::zeros((dim, dim));
    for (&alpha, poly) in &sym.terms {
        let h_alpha = h.powf(*alpha.numer() as f64 / *alpha.denom() as f64);
        for term in &poly.terms {
            let fiber = ladder.weyl_monomial(term.x_pow, term.xi_pow)?;
            let base_op = weyl_quantize_scalar_1d(
                |x, xi| C64::new((term.coeff)(x, xi), 0.0),
                h,
                base,
                xi_extent,
            )?;
            kron_add_into(&mut total, &base_op.matrix, &fiber, C64::new(h_alpha, 0.0));
        }
    }
    Ok(QuantizedOperator {
        matrix: total,
        basis: Basis::Tensor { base: base.clone(), fock_m: m },
        h,
    })
}

/// total += scale * (a kron b).
fn kron_add_into(total: &mut CMat, a: &CMat, b: &CMat, scale: C64) {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    assert_eq!(total.dim(), (ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let s = a[(i, j)] * scale;
            if s.norm_sqr() == 0.0 {
                continue;
            }
            for p in 0..rb {
                for q in 0..cb {
                    total[(i * rb + p, j * cb + q)] += s * b[(p, q)];
                }
            }
        }
    }
}

/// Eigenvalues of a quantized operator, sorted ascending and filtered to the
/// window when one is given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Full complex spectrum, present only when the matrix failed the
    /// Hermiticity check; `eigenvalues` then holds the real parts.
    pub complex_eigenvalues: Option<Vec<(f64, f64)>>,
    pub hermitian: bool,
}

pub fn spectrum(op: &QuantizedOperator, window: Option<(f64, f64)>) -> Result<Spectrum> {
    spectrum_with_cap(op, window, DEFAULT_SIZE_CAP)
}

pub fn spectrum_with_cap(
    op: &QuantizedOperator,
    window: Option<(f64, f64)>,
    cap: usize,
) -> Result<Spectrum> {
    let n = op.matrix.nrows();
    if n > cap {
        return Err(AdiabandError::SizeCap(n, cap));
    }
    let scale = op.matrix.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    let in_window = |v: f64| window.map_or(true, |(a, b)| v >= a && v <= b);
    if op.hermiticity_defect() <= 1e-10 * scale {
        let w = op
            .matrix
            .eigvalsh(UPLO::Lower)
            .map_err(|e| AdiabandError::SolverFailure(e.to_string()))?;
        Ok(Spectrum {
            eigenvalues: w.iter().copied().filter(|&v| in_window(v)).collect(),
            complex_eigenvalues: None,
            hermitian: true,
        })
    } else {
        let (w, _) = op
            .matrix
            .eig()
            .map_err(|e| AdiabandError::SolverFailure(e.to_string()))?;
        let mut zs: Vec<C64> = w.to_vec();
        zs.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
        Ok(Spectrum {
            eigenvalues: zs.iter().map(|z| z.re).filter(|&v| in_window(v)).collect(),
            complex_eigenvalues: Some(zs.iter().map(|z| (z.re, z.im)).collect()),
            hermitian: false,
        })
    }
}

/// Full Hermitian eigendecomposition (eigenvectors as columns). Refuses
/// non-Hermitian input.
pub fn eigenpairs(op: &QuantizedOperator, cap: usize) -> Result<(Vec<f64>, CMat)> {
    let n = op.matrix.nrows();
    if n > cap {
        return Err(AdiabandError::SizeCap(n, cap));
    }
    let scale = op.matrix.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    let defect = op.hermiticity_defect();
    if defect > 1e-10 * scale {
        return Err(AdiabandError::NonHermitian(format!(
            "hermiticity defect {defect:.3e} at scale {scale:.3e}"
        )));
    }
    linalg::eigh_sorted(&op.matrix)
}
