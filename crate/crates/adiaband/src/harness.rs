//! End-to-end spectral experiments: full vs effective operator comparison,
//! quasimode transfer, functional calculus, and the harmonic-approximation
//! oracle for the magnetic-well model.

use std::sync::Arc;

use ndarray::{Array1, ArrayView1};
use num_complex::Complex64 as C64;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{AdiabandError, Result};
use crate::factorization::{build_effective, build_factors, build_u0, FactorPair, GaugeRule};
use crate::field::CMat;
use crate::fit::{fit_log_slope, SlopeFit, DEFECT_FLOOR};
use crate::grid::PhaseSpaceGrid;
use crate::linalg;
use crate::models::magnetic_well::{self, MagneticWellSpec};
use crate::projector::{build_hierarchy, BuildOptions, GapSpec, ProjectorHierarchy};
use crate::quantize::{
    quantize_fiber_model, spectrum_with_cap, weyl_quantize_blocks, weyl_quantize_scalar_1d,
    BaseGrid1d, FockLadder, QuantizedOperator, DEFAULT_SIZE_CAP,
};
use crate::symbol::{Exponent, FormalSymbol};

/// Relative quasimode residual ||(A - mu) psi|| / ||psi||.
pub fn quasimode_residual(a: &CMat, psi: ArrayView1<C64>, mu: f64) -> f64 {
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    assert!(norm > 0.0, "quasimode must be nonzero");
    let mut r = a.dot(&psi);
    for (ri, pi) in r.iter_mut().zip(psi.iter()) {
        *ri -= pi * mu;
    }
    r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / norm
}

/// Sorted-order pairing of two spectra; differences over the common count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedSpectra {
    pub pairs: Vec<(f64, f64)>,
    pub count_mismatch: bool,
}

impl PairedSpectra {
    pub fn max_diff(&self) -> f64 {
        self.pairs
            .iter()
            .map(|&(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn pair_spectra(a: &[f64], b: &[f64]) -> PairedSpectra {
    let n = a.len().min(b.len());
    PairedSpectra {
        pairs: a[..n].iter().copied().zip(b[..n].iter().copied()).collect(),
        count_mismatch: a.len() != b.len(),
    }
}

/// Smooth compactly supported bump on (a, b), equal to 1 at the midpoint.
pub fn bump(a: f64, b: f64) -> impl Fn(f64) -> f64 + Copy {
    move |t: f64| {
        let u = (2.0 * t - a - b) / (b - a);
        if u.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - u * u)).exp()
        }
    }
}

/// f(A) for Hermitian A via eigendecomposition.
pub fn apply_spectral_function<F: Fn(f64) -> f64>(a: &CMat, f: F) -> Result<CMat> {
    let (vals, vecs) = linalg::eigh_sorted(a)?;
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let fv = f(v);
        scaled.column_mut(j).iter_mut().for_each(|z| *z *= fv);
    }
    Ok(scaled.dot(&linalg::adjoint(&vecs)))
}

fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Commutator defect ||[chi(H), P]||_F and range-inclusion defect
/// ||P chi(H) - chi(H)||_F for a Hermitian H and an approximate band
/// projector P.
pub fn functional_calculus_defects<F: Fn(f64) -> f64>(
    h_mat: &CMat,
    p_mat: &CMat,
    chi: F,
) -> Result<(f64, f64)> {
    let chi_h = apply_spectral_function(h_mat, chi)?;
    let comm = chi_h.dot(p_mat) - p_mat.dot(&chi_h);
    let range = p_mat.dot(&chi_h) - &chi_h;
    Ok((frobenius(&comm), frobenius(&range)))
}

/// Symbol-side pipeline for a magnetic-well model: matrix symbol, projector
/// hierarchy, rank-one factors, and the scalar effective symbol, all truncated
/// at `k_max` on the half-integer lattice.
pub struct MagneticWellPipeline {
    pub spec: MagneticWellSpec,
    pub grid: Arc<PhaseSpaceGrid>,
    pub fock_m: usize,
    pub gap: GapSpec,
    pub symbol: FormalSymbol,
    pub hierarchy: ProjectorHierarchy,
    pub factors: FactorPair,
    pub effective: FormalSymbol,
}

/// Window around the lowest band branch with the margin to the second branch
/// split between window padding and the declared gap.
pub fn lowest_band_gap(spec: &MagneticWellSpec, grid: &PhaseSpaceGrid) -> Result<GapSpec> {
    let mu1 = spec.mu_branch(1);
    let mu2 = spec.mu_branch(2);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut next = f64::INFINITY;
    for ix in 0..grid.n_x {
        for ixi in 0..grid.n_xi {
            let (x, xi) = (grid.x(ix), grid.xi(ixi));
            let v1 = mu1.eval(xi, x);
            let v2 = mu2.eval(xi, x);
            lo = lo.min(v1);
            hi = hi.max(v1);
            next = next.min(v2);
        }
    }
    let margin = next - hi;
    if margin <= 0.0 {
        return Err(AdiabandError::Config {
            path: "grid".into(),
            message: format!(
                "lowest band (max {hi:.4}) overlaps the second branch (min {next:.4}); shrink the grid"
            ),
        });
    }
    Ok(GapSpec {
        window: (lo - 0.25 * margin, hi + 0.25 * margin),
        delta: 0.25 * margin,
    })
}

pub fn magnetic_well_pipeline(
    spec: MagneticWellSpec,
    grid: Arc<PhaseSpaceGrid>,
    fock_m: usize,
    k_max: Exponent,
) -> Result<MagneticWellPipeline> {
    let ladder = FockLadder::new(fock_m);
    let symbol = magnetic_well::matrix_symbol(&spec, grid.clone(), &ladder)?;
    let gap = lowest_band_gap(&spec, &grid)?;
    // compatibility identities are checked in absolute terms; scale the
    // tolerance to the symbol magnitude (Fock blocks are far from unit norm)
    let scale = symbol
        .coeff(Ratio::from_integer(0))
        .map(|f| f.sup_norm().max(1.0))
        .unwrap_or(1.0);
    let opts = BuildOptions { comp_tol: 1e-8 * scale, ..BuildOptions::default() };
    let hierarchy = build_hierarchy(&symbol, &gap, k_max, &opts)?;
    let pi0 = hierarchy
        .pi
        .coeff(Ratio::from_integer(0))
        .expect("hierarchy carries its principal term")
        .clone();
    let u0 = build_u0(&pi0)?;
    let factors = build_factors(&hierarchy, &u0, k_max, GaugeRule::EqualSplit)?;
    let effective = build_effective(&symbol, &factors, k_max)?;
    Ok(MagneticWellPipeline {
        spec,
        grid,
        fock_m,
        gap,
        symbol,
        hierarchy,
        factors,
        effective,
    })
}

/// Full two-scale quantization of the model at parameter h.
pub fn full_operator(
    spec: &MagneticWellSpec,
    fock_m: usize,
    base: &BaseGrid1d,
    h: f64,
    xi_extent: f64,
) -> Result<QuantizedOperator> {
    let fs = magnetic_well::fiber_symbol(spec)?;
    let ladder = FockLadder::new(fock_m);
    quantize_fiber_model(&fs, &ladder, base, h, xi_extent)
}

/// Quantization of the scalar effective symbol at parameter h. Sample
/// coordinates are clamped into [-clamp, clamp]^2 before interpolation: the
/// quantizer sweeps the whole Nyquist band, and outside the symbol's grid
/// hull the continuation is by the boundary value rather than extrapolation.
pub fn effective_operator(
    effective: &FormalSymbol,
    base: &BaseGrid1d,
    h: f64,
    xi_extent: f64,
    clamp: f64,
) -> Result<QuantizedOperator> {
    let field = effective.eval_at_h(h);
    weyl_quantize_scalar_1d(
        |x, xi| field.interpolate(x.clamp(-clamp, clamp), xi.clamp(-clamp, clamp))[(0, 0)],
        h,
        base,
        xi_extent,
    )
}

/// Quantization of a fiber-valued row/column symbol (the transfer factors)
/// at parameter h, with the same clamped continuation.
pub fn quantize_factor(
    factor: &FormalSymbol,
    base: &BaseGrid1d,
    h: f64,
    xi_extent: f64,
    clamp: f64,
) -> Result<CMat> {
    let field = factor.eval_at_h(h);
    weyl_quantize_blocks(
        |x, xi| field.interpolate(x.clamp(-clamp, clamp), xi.clamp(-clamp, clamp)),
        field.rows(),
        field.cols(),
        h,
        base,
        xi_extent,
    )
}

/// One h-point of the spectral comparison, in operator units (multiply by h
/// for the semiclassical eigenvalue scale).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralRow {
    pub h: f64,
    pub full: Vec<f64>,
    pub effective: Vec<f64>,
    pub count_mismatch: bool,
    /// Largest index-matched difference, in semiclassical units (x h).
    pub max_diff: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub rows: Vec<SpectralRow>,
    pub diff_slope: SlopeFit,
    pub truncation: String,
    pub fock_m: usize,
    pub base_n: usize,
    /// Band bottom mu0 = min mu_1 (operator units).
    pub mu0: f64,
}

/// Spectral window for the comparison, in operator units: everything below
/// mu0 + window_c * h.
fn comparison_window(mu0: f64, window_c: f64, h: f64) -> (f64, f64) {
    (f64::NEG_INFINITY, mu0 + window_c * h)
}

/// Full vs effective spectra over an h sweep, with the decay fit of the
/// largest index-matched difference in semiclassical units.
pub fn compare_spectra(
    pipe: &MagneticWellPipeline,
    base: &BaseGrid1d,
    h_values: &[f64],
    window_c: f64,
    xi_extent: f64,
    clamp: f64,
) -> Result<SpectrumReport> {
    let oracle = harmonic_oracle(&pipe.spec)?;
    let mu0 = oracle.mu0;
    let mut rows = Vec::new();
    for &h in h_values {
        let window = comparison_window(mu0, window_c, h);
        let full = full_operator(&pipe.spec, pipe.fock_m, base, h, xi_extent)?;
        let full_spec = spectrum_with_cap(&full, Some(window), DEFAULT_SIZE_CAP)?;
        let eff = effective_operator(&pipe.effective, base, h, xi_extent, clamp)?;
        let eff_spec = spectrum_with_cap(&eff, Some(window), DEFAULT_SIZE_CAP)?;
        let paired = pair_spectra(&full_spec.eigenvalues, &eff_spec.eigenvalues);
        rows.push(SpectralRow {
            h,
            full: full_spec.eigenvalues,
            effective: eff_spec.eigenvalues,
            count_mismatch: paired.count_mismatch,
            max_diff: paired.max_diff() * h,
        });
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.max_diff)).collect();
    let diff_slope = fit_log_slope(&pts, DEFECT_FLOOR)?;
    Ok(SpectrumReport {
        rows,
        diff_slope,
        truncation: pipe.hierarchy.pi.truncation().to_string(),
        fock_m: pipe.fock_m,
        base_n: base.n,
        mu0,
    })
}

/// Harmonic-approximation constants at the band minimum: the low-lying
/// eigenvalues behave as h (mu0 + ((2j-1) c0 + c1) h + o(h)) with
/// c0 = sqrt(det Hess mu_1) / 2 and c1 the Gaussian ground-state average of
/// the order-h fiber correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarmonicOracle {
    /// Minimum of mu_1 in (s, t) coordinates.
    pub minimum: (f64, f64),
    pub mu0: f64,
    pub c0: f64,
    pub c1: f64,
}

impl HarmonicOracle {
    /// Predicted coefficient of h^2 in the j-th semiclassical eigenvalue.
    pub fn second_order(&self, j: usize) -> f64 {
        (2 * j - 1) as f64 * self.c0 + self.c1
    }
}

pub fn harmonic_oracle(spec: &MagneticWellSpec) -> Result<HarmonicOracle> {
    if !spec.alpha_dot.is_zero() {
        return Err(AdiabandError::Config {
            path: "alpha_dot".into(),
            message: "harmonic oracle implemented for alpha = 0 only".into(),
        });
    }
    let mu1 = spec.mu_branch(1);
    let (ds, dt) = (mu1.derive(1, 0), mu1.derive(0, 1));
    let (dss, dst, dtt) = (mu1.derive(2, 0), mu1.derive(1, 1), mu1.derive(0, 2));

    // coarse scan, then Newton on the gradient
    let mut best = (0.0f64, 0.0f64);
    let mut best_v = f64::INFINITY;
    for i in 0..=60 {
        for k in 0..=60 {
            let s = -3.0 + 0.1 * i as f64;
            let t = -3.0 + 0.1 * k as f64;
            let v = mu1.eval(s, t);
            if v < best_v {
                best_v = v;
                best = (s, t);
            }
        }
    }
    let (mut s, mut t) = best;
    for _ in 0..100 {
        let g = (ds.eval(s, t), dt.eval(s, t));
        let (a, b, c) = (dss.eval(s, t), dst.eval(s, t), dtt.eval(s, t));
        let det = a * c - b * b;
        if det.abs() < 1e-14 {
            break;
        }
        let step = ((c * g.0 - b * g.1) / det, (a * g.1 - b * g.0) / det);
        s -= step.0;
        t -= step.1;
        if step.0.hypot(step.1) < 1e-14 {
            break;
        }
    }
    let grad = ds.eval(s, t).hypot(dt.eval(s, t));
    let (a, b, c) = (dss.eval(s, t), dst.eval(s, t), dtt.eval(s, t));
    let det = a * c - b * b;
    if grad > 1e-10 || det <= 1e-12 || a <= 0.0 {
        return Err(AdiabandError::BracketFailure(format!(
            "no non-degenerate minimum: |grad| = {grad:.3e}, det Hess = {det:.3e}"
        )));
    }

    let mu0 = mu1.eval(s, t);
    let c0 = det.sqrt() / 2.0;

    // order-h fiber correction averaged in the squeezed fiber ground state:
    // for B^2 xi^2 + x^2 the ground Wigner function is a centered Gaussian
    // with var(x) = B/2, var(xi) = 1/(2B), and Weyl-ordered monomial averages
    // are plain Gaussian moments of the symbol.
    let b0 = spec.b_dot.eval(s, t);
    let var_x = b0 / 2.0;
    let var_xi = 1.0 / (2.0 * b0);
    let tables = magnetic_well::fiber_tables(spec)?;
    let mut c1 = 0.0;
    if tables.len() > 2 {
        for (&(a_pow, b_pow), poly) in &tables[2] {
            if a_pow % 2 == 1 || b_pow % 2 == 1 {
                continue;
            }
            c1 += poly.eval(s, t)
                * gaussian_moment(a_pow, var_x)
                * gaussian_moment(b_pow, var_xi);
        }
    }
    Ok(HarmonicOracle { minimum: (s, t), mu0, c0, c1 })
}

/// E[Z^n] for centered Gaussian Z with the given variance: (n-1)!! var^{n/2}.
fn gaussian_moment(n: usize, var: f64) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    let mut m = 1.0;
    let mut k = n as i64 - 1;
    while k > 0 {
        m *= k as f64;
        k -= 2;
    }
    m * var.powi((n / 2) as i32)
}

/// Residuals of the oracle prediction for the j-th level over the sweep:
/// |lambda_j(h) - h (mu0 + ((2j-1)c0 + c1) h)| in semiclassical units.
pub fn oracle_residuals(
    report: &SpectrumReport,
    oracle: &HarmonicOracle,
    j: usize,
) -> Vec<(f64, f64)> {
    report
        .rows
        .iter()
        .filter_map(|r| {
            r.full.get(j - 1).map(|&lam| {
                let pred = r.h * (oracle.mu0 + oracle.second_order(j) * r.h);
                (r.h, (lam * r.h - pred).abs())
            })
        })
        .collect()
}

/// One h-point of the functional-calculus sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalculusRow {
    pub h: f64,
    pub commutator: f64,
    pub range: f64,
}

/// Functional-calculus defects of the quantized truncated projector against
/// the quantized operator over an h sweep, with slope fits.
pub fn functional_calculus_sweep(
    pipe: &MagneticWellPipeline,
    base: &BaseGrid1d,
    h_values: &[f64],
    chi_window: (f64, f64),
    xi_extent: f64,
    clamp: f64,
) -> Result<(Vec<CalculusRow>, SlopeFit, SlopeFit)> {
    let chi = bump(chi_window.0, chi_window.1);
    let mut rows = Vec::new();
    for &h in h_values {
        let full = full_operator(&pipe.spec, pipe.fock_m, base, h, xi_extent)?;
        let pi_field = pipe.hierarchy.pi.eval_at_h(h);
        let pi_mat = weyl_quantize_blocks(
            |x, xi| pi_field.interpolate(x.clamp(-clamp, clamp), xi.clamp(-clamp, clamp)),
            pipe.fock_m,
            pipe.fock_m,
            h,
            base,
            xi_extent,
        )?;
        let (commutator, range) = functional_calculus_defects(&full.matrix, &pi_mat, chi)?;
        rows.push(CalculusRow { h, commutator, range });
    }
    let comm_fit = fit_log_slope(
        &rows.iter().map(|r| (r.h, r.commutator)).collect::<Vec<_>>(),
        DEFECT_FLOOR,
    )?;
    let range_fit = fit_log_slope(
        &rows.iter().map(|r| (r.h, r.range)).collect::<Vec<_>>(),
        DEFECT_FLOOR,
    )?;
    Ok((rows, comm_fit, range_fit))
}

/// Eigenvector of a Hermitian quantized operator by index (ascending order).
pub fn eigenvector(op: &QuantizedOperator, index: usize) -> Result<(f64, Array1<C64>)> {
    let (vals, vecs) = crate::quantize::eigenpairs(op, DEFAULT_SIZE_CAP)?;
    if index >= vals.len() {
        return Err(AdiabandError::Config {
            path: "index".into(),
            message: format!("eigenvector {index} of a {}-dim operator", vals.len()),
        });
    }
    Ok((vals[index], vecs.column(index).to_owned()))
}
