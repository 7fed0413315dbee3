use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use num_rational::Ratio;

use crate::error::{AdiabandError, Result};
use crate::field::MatrixField;
use crate::grid::PhaseSpaceGrid;

/// Exponent on the 1/q0 lattice.
pub type Exponent = Ratio<i64>;

pub fn exponent(k: i64, q0: u32) -> Exponent {
    Ratio::new(k, q0 as i64)
}

/// Finitely supported series sum_alpha h^alpha C_alpha, with coefficients on a
/// shared phase-space grid and exponents on the 1/q0 lattice, kept only up to
/// (and including) `truncation`.
#[derive(Debug, Clone)]
pub struct FormalSymbol {
    grid: Arc<PhaseSpaceGrid>,
    dim_rows: usize,
    dim_cols: usize,
    q0: u32,
    truncation: Exponent,
    /// Differentiation stencils in products are exact on polynomials of this
    /// degree per axis.
    fd_degree: usize,
    terms: BTreeMap<Exponent, MatrixField>,
}

impl FormalSymbol {
    pub fn new(
        grid: Arc<PhaseSpaceGrid>,
        rows: usize,
        cols: usize,
        q0: u32,
        truncation: Exponent,
    ) -> Result<Self> {
        if q0 == 0 {
            return Err(AdiabandError::Config {
                path: "q0".into(),
                message: "lattice denominator must be positive".into(),
            });
        }
        Ok(Self {
            grid,
            dim_rows: rows,
            dim_cols: cols,
            q0,
            truncation,
            fd_degree: 4,
            terms: BTreeMap::new(),
        })
    }

    pub fn with_fd_degree(mut self, degree: usize) -> Self {
        self.fd_degree = degree;
        self
    }

    pub fn fd_degree(&self) -> usize {
        self.fd_degree
    }

    pub fn grid(&self) -> &Arc<PhaseSpaceGrid> {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.dim_rows
    }

    pub fn cols(&self) -> usize {
        self.dim_cols
    }

    pub fn q0(&self) -> u32 {
        self.q0
    }

    pub fn truncation(&self) -> Exponent {
        self.truncation
    }

    /// Raise (or lower) the truncation without touching stored terms below it.
    pub fn with_truncation(mut self, truncation: Exponent) -> Self {
        self.truncation = truncation;
        self.terms.retain(|&a, _| a <= truncation);
        self
    }

    pub fn truncated(&self, truncation: Exponent) -> Self {
        let mut out = self.clone();
        out.truncation = truncation;
        out.terms.retain(|&a, _| a <= truncation);
        out
    }

    fn check_lattice(&self, alpha: Exponent) -> Result<()> {
        if (alpha * Ratio::from_integer(self.q0 as i64)).is_integer() && alpha >= Ratio::from_integer(0)
        {
            Ok(())
        } else {
            Err(AdiabandError::ExponentNotOnLattice(alpha.to_string(), self.q0))
        }
    }

    /// Insert (or overwrite) the coefficient at `alpha`. Terms beyond the
    /// truncation are silently dropped.
    pub fn set_term(&mut self, alpha: Exponent, field: MatrixField) -> Result<()> {
        self.check_lattice(alpha)?;
        if field.grid().as_ref() != self.grid.as_ref() {
            return Err(AdiabandError::GridMismatch);
        }
        if field.rows() != self.dim_rows || field.cols() != self.dim_cols {
            return Err(AdiabandError::DimMismatch(
                self.dim_rows,
                self.dim_cols,
                field.rows(),
                field.cols(),
            ));
        }
        if alpha <= self.truncation {
            self.terms.insert(alpha, field);
        }
        Ok(())
    }

    /// Add `field` into the coefficient at `alpha`.
    pub fn add_term(&mut self, alpha: Exponent, field: MatrixField) -> Result<()> {
        match self.terms.get(&alpha) {
            Some(existing) => {
                let sum = existing.add(&field)?;
                self.set_term(alpha, sum)
            }
            None => self.set_term(alpha, field),
        }
    }

    pub fn coeff(&self, alpha: Exponent) -> Option<&MatrixField> {
        self.terms.get(&alpha)
    }

    /// Coefficient at `alpha`, as a zero field when absent.
    pub fn coeff_or_zero(&self, alpha: Exponent) -> MatrixField {
        self.terms
            .get(&alpha)
            .cloned()
            .unwrap_or_else(|| MatrixField::zeros(self.grid.clone(), self.dim_rows, self.dim_cols))
    }

    pub fn exponents(&self) -> impl Iterator<Item = Exponent> + '_ {
        self.terms.keys().copied()
    }

    pub fn terms(&self) -> impl Iterator<Item = (Exponent, &MatrixField)> {
        self.terms.iter().map(|(&a, f)| (a, f))
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid.as_ref() != other.grid.as_ref() {
            return Err(AdiabandError::GridMismatch);
        }
        if self.q0 != other.q0 {
            return Err(AdiabandError::ExponentNotOnLattice(
                format!("1/{} against 1/{}", self.q0, other.q0),
                self.q0,
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.truncation = self.truncation.min(other.truncation);
        out.terms.retain(|&a, _| a <= out.truncation);
        for (&a, f) in &other.terms {
            if a <= out.truncation {
                out.add_term(a, f.clone())?;
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        for f in out.terms.values_mut() {
            *f = f.scale(c);
        }
        out
    }

    /// Termwise conjugate transpose; exponents are untouched.
    pub fn adjoint(&self) -> Self {
        let mut out = Self {
            grid: self.grid.clone(),
            dim_rows: self.dim_cols,
            dim_cols: self.dim_rows,
            q0: self.q0,
            truncation: self.truncation,
            fd_degree: self.fd_degree,
            terms: BTreeMap::new(),
        };
        for (&a, f) in &self.terms {
            out.terms.insert(a, f.adjoint());
        }
        out
    }

    /// Bidifferential operator P^j applied to a pair of coefficient fields:
    /// P^j(f, g) = sum_r (-1)^r C(j, r) (dx^{j-r} dxi^r f)(dx^r dxi^{j-r} g),
    /// so that P^1(f, g) = f_x g_xi - f_xi g_x.
    fn poisson_power(
        da: &DerivCache<'_>,
        db: &DerivCache<'_>,
        j: usize,
        degree: usize,
    ) -> Result<MatrixField> {
        let mut acc: Option<MatrixField> = None;
        let mut binom = 1.0f64;
        for r in 0..=j {
            let fa = da.get(j - r, r, degree)?;
            let fb = db.get(r, j - r, degree)?;
            let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
            let term = fa.matmul(&fb)?.scale(C64::new(sign * binom, 0.0));
            acc = Some(match acc {
                Some(a) => a.add(&term)?,
                None => term,
            });
            binom = binom * (j - r) as f64 / (r + 1) as f64;
        }
        Ok(acc.expect("j >= 0"))
    }

    /// Truncated Moyal product: for every pair of terms and every integer
    /// j >= 0 with alpha_a + alpha_b + j <= truncation, accumulate
    /// h^{alpha_a + alpha_b + j} (1/j!) (i/2)^j P^j(A_a, B_b).
    pub fn moyal(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        if self.dim_cols != other.dim_rows {
            return Err(AdiabandError::DimMismatch(
                self.dim_rows,
                self.dim_cols,
                other.dim_rows,
                other.dim_cols,
            ));
        }
        let trunc = self.truncation.min(other.truncation);
        let degree = self.fd_degree.max(other.fd_degree);
        let mut out = Self::new(
            self.grid.clone(),
            self.dim_rows,
            other.dim_cols,
            self.q0,
            trunc,
        )?
        .with_fd_degree(degree);

        let caches_a: Vec<(Exponent, DerivCache<'_>)> = self
            .terms
            .iter()
            .map(|(&a, f)| (a, DerivCache::new(f)))
            .collect();
        let caches_b: Vec<(Exponent, DerivCache<'_>)> = other
            .terms
            .iter()
            .map(|(&b, f)| (b, DerivCache::new(f)))
            .collect();

        for (aa, da) in &caches_a {
            for (bb, db) in &caches_b {
                let base = *aa + *bb;
                if base > trunc {
                    continue;
                }
                let j_max = (trunc - base).floor().to_integer();
                let mut fact = 1.0f64;
                let mut half_i = C64::new(1.0, 0.0);
                for j in 0..=j_max as usize {
                    if j > 0 {
                        fact *= j as f64;
                        half_i *= C64::new(0.0, 0.5);
                    }
                    let p = Self::poisson_power(da, db, j, degree)?;
                    out.add_term(
                        base + Ratio::from_integer(j as i64),
                        p.scale(half_i / fact),
                    )?;
                }
            }
        }
        Ok(out)
    }

    /// Moyal commutator [A, B] = A moyal B - B moyal A.
    pub fn moyal_commutator(&self, other: &Self) -> Result<Self> {
        self.moyal(other)?.sub(&other.moyal(self)?)
    }

    /// Evaluate the series at a concrete h as a single matrix field.
    pub fn eval_at_h(&self, h: f64) -> MatrixField {
        let mut acc = MatrixField::zeros(self.grid.clone(), self.dim_rows, self.dim_cols);
        for (&a, f) in &self.terms {
            let p = *a.numer() as f64 / *a.denom() as f64;
            acc = acc.add(&f.scale(C64::new(h.powf(p), 0.0))).expect("layout");
        }
        acc
    }

    /// Largest coefficient sup-norm; a cheap magnitude gauge.
    pub fn max_coeff_norm(&self) -> f64 {
        self.terms.values().map(|f| f.sup_norm()).fold(0.0, f64::max)
    }
}

/// Per-field lazy cache of mixed partial derivatives, to avoid recomputing
/// them across the j-sum of a Moyal product.
struct DerivCache<'a> {
    base: &'a MatrixField,
    cache: std::cell::RefCell<BTreeMap<(usize, usize, usize), MatrixField>>,
}

impl<'a> DerivCache<'a> {
    fn new(base: &'a MatrixField) -> Self {
        Self { base, cache: std::cell::RefCell::new(BTreeMap::new()) }
    }

    fn get(&self, a_x: usize, a_xi: usize, degree: usize) -> Result<MatrixField> {
        if a_x == 0 && a_xi == 0 {
            return Ok(self.base.clone());
        }
        let key = (a_x, a_xi, degree);
        if let Some(f) = self.cache.borrow().get(&key) {
            return Ok(f.clone());
        }
        let f = self.base.derive(a_x, a_xi, degree)?;
        self.cache.borrow_mut().insert(key, f.clone());
        Ok(f)
    }
}
