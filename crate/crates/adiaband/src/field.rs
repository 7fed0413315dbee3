use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{AdiabandError, Result};
use crate::grid::{Boundary, PhaseSpaceGrid};

pub type CMat = Array2<C64>;

/// Finite-difference weights for the `order`-th derivative on the nodes
/// `offsets` (in units of the spacing), exact on polynomials of degree
/// `offsets.len() - 1` (Fornberg's algorithm).
pub fn fd_weights(order: usize, offsets: &[i64]) -> Vec<f64> {
    let n = offsets.len();
    assert!(order < n);
    let x: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
    // c[j][k]: weight of node j in the k-th derivative at 0.
    let mut c = vec![vec![0.0; order + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = x[0];
    for i in 1..n {
        let mn = order.min(i);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i];
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Symmetric stencil offsets with enough points for exactness degree `degree`.
pub fn central_offsets(order: usize, degree: usize) -> Vec<i64> {
    let half = (order + degree).div_ceil(2);
    (-(half as i64)..=half as i64).collect()
}

/// One complex `rows x cols` matrix per phase-space node.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    grid: Arc<PhaseSpaceGrid>,
    rows: usize,
    cols: usize,
    /// Layout: node-major, node = ix * n_xi + ixi, then row-major matrix.
    data: Vec<C64>,
}

impl MatrixField {
    pub fn zeros(grid: Arc<PhaseSpaceGrid>, rows: usize, cols: usize) -> Self {
        let data = vec![C64::new(0.0, 0.0); grid.n_nodes() * rows * cols];
        Self { grid, rows, cols, data }
    }

    pub fn from_fn<F>(grid: Arc<PhaseSpaceGrid>, rows: usize, cols: usize, f: F) -> Self
    where
        F: Fn(f64, f64) -> CMat + Sync,
    {
        let mut field = Self::zeros(grid.clone(), rows, cols);
        let n_xi = grid.n_xi;
        let block = rows * cols;
        field
            .data
            .par_chunks_mut(block)
            .enumerate()
            .for_each(|(node, chunk)| {
                let ix = node / n_xi;
                let ixi = node % n_xi;
                let m = f(grid.x(ix), grid.xi(ixi));
                assert_eq!(m.dim(), (rows, cols));
                for r in 0..rows {
                    for c in 0..cols {
                        chunk[r * cols + c] = m[(r, c)];
                    }
                }
            });
        field
    }

    /// Build from a node-index closure; useful for combining several fields.
    pub fn build_nodes<F>(grid: Arc<PhaseSpaceGrid>, rows: usize, cols: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> CMat + Sync,
    {
        let mut field = Self::zeros(grid.clone(), rows, cols);
        let n_xi = grid.n_xi;
        let block = rows * cols;
        field
            .data
            .par_chunks_mut(block)
            .enumerate()
            .for_each(|(node, chunk)| {
                let m = f(node / n_xi, node % n_xi);
                assert_eq!(m.dim(), (rows, cols));
                for (dst, s) in chunk.iter_mut().zip(m.iter()) {
                    *dst = *s;
                }
            });
        field
    }

    pub fn from_scalar_fn<F>(grid: Arc<PhaseSpaceGrid>, f: F) -> Self
    where
        F: Fn(f64, f64) -> C64 + Sync,
    {
        Self::from_fn(grid, 1, 1, |x, xi| {
            let mut m = CMat::zeros((1, 1));
            m[(0, 0)] = f(x, xi);
            m
        })
    }

    pub fn constant(grid: Arc<PhaseSpaceGrid>, m: &CMat) -> Self {
        let (rows, cols) = m.dim();
        let mut field = Self::zeros(grid, rows, cols);
        let block = rows * cols;
        for node in 0..field.grid.n_nodes() {
            for r in 0..rows {
                for c in 0..cols {
                    field.data[node * block + r * cols + c] = m[(r, c)];
                }
            }
        }
        field
    }

    pub fn identity(grid: Arc<PhaseSpaceGrid>, dim: usize) -> Self {
        Self::constant(grid, &CMat::eye(dim))
    }

    #[inline]
    pub fn grid(&self) -> &Arc<PhaseSpaceGrid> {
        &self.grid
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn at(&self, ix: usize, ixi: usize) -> CMat {
        let node = self.grid.node(ix, ixi);
        let block = self.rows * self.cols;
        CMat::from_shape_vec(
            (self.rows, self.cols),
            self.data[node * block..(node + 1) * block].to_vec(),
        )
        .expect("block shape")
    }

    pub fn set(&mut self, ix: usize, ixi: usize, m: &CMat) {
        assert_eq!(m.dim(), (self.rows, self.cols));
        let node = self.grid.node(ix, ixi);
        let block = self.rows * self.cols;
        for r in 0..self.rows {
            for c in 0..self.cols {
                self.data[node * block + r * self.cols + c] = m[(r, c)];
            }
        }
    }

    fn check_same_layout(&self, other: &Self) -> Result<()> {
        if self.grid.as_ref() != other.grid.as_ref() {
            return Err(AdiabandError::GridMismatch);
        }
        if self.rows != other.rows || self.cols != other.cols {
            return Err(AdiabandError::DimMismatch(
                self.rows, self.cols, other.rows, other.cols,
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_layout(other)?;
        let mut out = self.clone();
        out.data
            .iter_mut()
            .zip(other.data.iter())
            .for_each(|(a, b)| *a += *b);
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_layout(other)?;
        let mut out = self.clone();
        out.data
            .iter_mut()
            .zip(other.data.iter())
            .for_each(|(a, b)| *a -= *b);
        Ok(out)
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|a| *a *= c);
        out
    }

    /// Pointwise matrix product at every node.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.grid.as_ref() != other.grid.as_ref() {
            return Err(AdiabandError::GridMismatch);
        }
        if self.cols != other.rows {
            return Err(AdiabandError::DimMismatch(
                self.rows, self.cols, other.rows, other.cols,
            ));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = Self::zeros(self.grid.clone(), n, m);
        let la = n * k;
        let lb = k * m;
        let lc = n * m;
        out.data
            .par_chunks_mut(lc)
            .enumerate()
            .for_each(|(node, chunk)| {
                let a = &self.data[node * la..(node + 1) * la];
                let b = &other.data[node * lb..(node + 1) * lb];
                for r in 0..n {
                    for c in 0..m {
                        let mut s = C64::new(0.0, 0.0);
                        for t in 0..k {
                            s += a[r * k + t] * b[t * m + c];
                        }
                        chunk[r * m + c] = s;
                    }
                }
            });
        Ok(out)
    }

    /// Pointwise conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.grid.clone(), self.cols, self.rows);
        let block = self.rows * self.cols;
        for node in 0..self.grid.n_nodes() {
            for r in 0..self.rows {
                for c in 0..self.cols {
                    out.data[node * block + c * self.rows + r] =
                        self.data[node * block + r * self.cols + c].conj();
                }
            }
        }
        out
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// sup over interior nodes of the matrix operator (spectral) norm.
    pub fn sup_norm(&self) -> f64 {
        let block = self.rows * self.cols;
        let n_xi = self.grid.n_xi;
        (0..self.grid.n_nodes())
            .into_par_iter()
            .filter(|node| self.grid.in_interior(node / n_xi, node % n_xi))
            .map(|node| {
                spectral_norm_slice(
                    &self.data[node * block..(node + 1) * block],
                    self.rows,
                    self.cols,
                )
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Largest absolute entry over interior nodes; cheaper than `sup_norm`
    /// and equivalent up to a dimension factor.
    pub fn max_abs(&self) -> f64 {
        let block = self.rows * self.cols;
        let n_xi = self.grid.n_xi;
        (0..self.grid.n_nodes())
            .filter(|node| self.grid.in_interior(node / n_xi, node % n_xi))
            .flat_map(|node| self.data[node * block..(node + 1) * block].iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Deviation from pointwise Hermitian symmetry (square fields only).
    pub fn hermiticity_defect(&self) -> f64 {
        assert!(self.is_square());
        self.sub(&self.adjoint()).expect("layout").sup_norm()
    }

    /// Finite-difference partial derivative d^{a_x}_x d^{a_xi}_xi with
    /// stencils exact on polynomials of degree >= `degree` per axis.
    pub fn derive(&self, a_x: usize, a_xi: usize, degree: usize) -> Result<Self> {
        const MAX_ORDER: usize = 6;
        if a_x > MAX_ORDER || a_xi > MAX_ORDER {
            return Err(AdiabandError::UnsupportedOrder(a_x.max(a_xi), MAX_ORDER));
        }
        let mut out = self.clone();
        if a_x > 0 {
            out = out.derive_axis(Axis1::X, a_x, degree)?;
        }
        if a_xi > 0 {
            out = out.derive_axis(Axis1::Xi, a_xi, degree)?;
        }
        Ok(out)
    }

    fn derive_axis(&self, axis: Axis1, order: usize, degree: usize) -> Result<Self> {
        let offsets = central_offsets(order, degree);
        let reach = *offsets.last().unwrap() as usize;
        self.grid.check_stencil(reach)?;
        let spacing = match axis {
            Axis1::X => self.grid.dx(),
            Axis1::Xi => self.grid.dxi(),
        };
        let len = match axis {
            Axis1::X => self.grid.n_x,
            Axis1::Xi => self.grid.n_xi,
        };
        let scale = spacing.powi(-(order as i32));
        let central: Vec<f64> = fd_weights(order, &offsets)
            .into_iter()
            .map(|w| w * scale)
            .collect();

        // For clamped boundaries, shifted stencils of the same length keep
        // polynomial exactness near the edges.
        let periodic = matches!(self.grid.boundary, Boundary::Periodic);
        let npts = offsets.len();
        let edge_stencils: Vec<(Vec<i64>, Vec<f64>)> = if periodic {
            Vec::new()
        } else {
            (0..len)
                .map(|i| {
                    let lo = (i as i64 - reach as i64).max(0).min(len as i64 - npts as i64);
                    let offs: Vec<i64> = (0..npts as i64).map(|k| lo + k - i as i64).collect();
                    let w: Vec<f64> =
                        fd_weights(order, &offs).into_iter().map(|w| w * scale).collect();
                    (offs, w)
                })
                .collect()
        };

        let block = self.rows * self.cols;
        let (n_x, n_xi) = (self.grid.n_x, self.grid.n_xi);
        let mut out = Self::zeros(self.grid.clone(), self.rows, self.cols);
        out.data
            .par_chunks_mut(block)
            .enumerate()
            .for_each(|(node, chunk)| {
                let ix = node / n_xi;
                let ixi = node % n_xi;
                let pos = match axis {
                    Axis1::X => ix,
                    Axis1::Xi => ixi,
                };
                let (offs, w): (&[i64], &[f64]) = if periodic {
                    (&offsets, &central)
                } else {
                    let (o, w) = &edge_stencils[pos];
                    (o, w)
                };
                for (o, &wk) in offs.iter().zip(w.iter()) {
                    let p = if periodic {
                        (pos as i64 + o).rem_euclid(len as i64) as usize
                    } else {
                        (pos as i64 + o) as usize
                    };
                    let src = match axis {
                        Axis1::X => p * n_xi + ixi,
                        Axis1::Xi => ix * n_xi + p,
                    };
                    let sb = &self.data[src * block..(src + 1) * block];
                    for (dst, &s) in chunk.iter_mut().zip(sb.iter()) {
                        *dst += s * wk;
                    }
                }
                let _ = n_x;
            });
        Ok(out)
    }

    /// Tensor Lagrange interpolation (6 points per axis) at an arbitrary
    /// phase-space point; coordinates are clamped to the grid hull.
    pub fn interpolate(&self, x: f64, xi: f64) -> CMat {
        const NPTS: usize = 6;
        let g = &self.grid;
        let (ix0, wx) = lagrange_axis(x, g.x_min, g.dx(), g.n_x, NPTS, g.is_periodic());
        let (ixi0, wxi) = lagrange_axis(xi, g.xi_min, g.dxi(), g.n_xi, NPTS, g.is_periodic());
        let block = self.rows * self.cols;
        let mut out = CMat::zeros((self.rows, self.cols));
        for (a, &wa) in wx.iter().enumerate() {
            let gi = wrap_index(ix0 + a as i64, g.n_x, g.is_periodic());
            for (b, &wb) in wxi.iter().enumerate() {
                let gj = wrap_index(ixi0 + b as i64, g.n_xi, g.is_periodic());
                let node = g.node(gi, gj);
                let w = wa * wb;
                let sb = &self.data[node * block..(node + 1) * block];
                for r in 0..self.rows {
                    for c in 0..self.cols {
                        out[(r, c)] += sb[r * self.cols + c] * w;
                    }
                }
            }
        }
        out
    }

    /// Map every node matrix through `f`.
    pub fn map_nodes<F>(&self, f: F) -> Self
    where
        F: Fn(usize, usize, &CMat) -> CMat + Sync,
    {
        let mut out = self.clone();
        let n_xi = self.grid.n_xi;
        let block = self.rows * self.cols;
        let src = &self.data;
        out.data
            .par_chunks_mut(block)
            .enumerate()
            .for_each(|(node, chunk)| {
                let ix = node / n_xi;
                let ixi = node % n_xi;
                let m = CMat::from_shape_vec(
                    (self.rows, self.cols),
                    src[node * block..(node + 1) * block].to_vec(),
                )
                .unwrap();
                let r = f(ix, ixi, &m);
                for (dst, s) in chunk.iter_mut().zip(r.iter()) {
                    *dst = *s;
                }
            });
        out
    }
}

#[derive(Clone, Copy)]
enum Axis1 {
    X,
    Xi,
}

fn wrap_index(i: i64, n: usize, periodic: bool) -> usize {
    if periodic {
        i.rem_euclid(n as i64) as usize
    } else {
        i.clamp(0, n as i64 - 1) as usize
    }
}

fn lagrange_axis(
    v: f64,
    v_min: f64,
    dv: f64,
    n: usize,
    npts: usize,
    periodic: bool,
) -> (i64, Vec<f64>) {
    let t = (v - v_min) / dv;
    let mut i0 = t.floor() as i64 - (npts as i64 / 2 - 1);
    if !periodic {
        i0 = i0.clamp(0, n as i64 - npts as i64);
    }
    let mut w = vec![0.0; npts];
    for k in 0..npts {
        let xk = (i0 + k as i64) as f64;
        let mut p = 1.0;
        for j in 0..npts {
            if j != k {
                let xj = (i0 + j as i64) as f64;
                p *= (t - xj) / (xk - xj);
            }
        }
        w[k] = p;
    }
    (i0, w)
}

/// Spectral norm of a small dense matrix stored row-major.
fn spectral_norm_slice(data: &[C64], rows: usize, cols: usize) -> f64 {
    if rows == 1 && cols == 1 {
        return data[0].norm();
    }
    if rows == 1 || cols == 1 {
        return data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    }
    // power iteration on A* A with a deterministic start
    let mut v = vec![C64::new(1.0, 0.0); cols];
    for (i, vi) in v.iter_mut().enumerate() {
        vi.re += 0.01 * (i as f64 + 1.0);
    }
    let mut norm2 = 0.0;
    for _ in 0..40 {
        // w = A v
        let mut w = vec![C64::new(0.0, 0.0); rows];
        for r in 0..rows {
            let mut s = C64::new(0.0, 0.0);
            for c in 0..cols {
                s += data[r * cols + c] * v[c];
            }
            w[r] = s;
        }
        // v = A* w
        for c in 0..cols {
            let mut s = C64::new(0.0, 0.0);
            for r in 0..rows {
                s += data[r * cols + c].conj() * w[r];
            }
            v[c] = s;
        }
        let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nv == 0.0 {
            return 0.0;
        }
        norm2 = nv;
        v.iter_mut().for_each(|z| *z /= nv);
    }
    norm2.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_grid(n: usize) -> Arc<PhaseSpaceGrid> {
        Arc::new(PhaseSpaceGrid::periodic(std::f64::consts::PI, n).unwrap())
    }

    #[test]
    fn fornberg_reproduces_classic_stencils() {
        let w = fd_weights(1, &[-1, 0, 1]);
        assert_abs_diff_eq!(w[0], -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(w[2], 0.5, epsilon = 1e-14);
        let w = fd_weights(2, &[-1, 0, 1]);
        assert_abs_diff_eq!(w[1], -2.0, epsilon = 1e-14);
        let w = fd_weights(1, &[-2, -1, 0, 1, 2]);
        assert_abs_diff_eq!(w[0], 1.0 / 12.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w[1], -8.0 / 12.0, epsilon = 1e-14);
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = scalar_grid(16);
        let f = MatrixField::identity(g, 3);
        assert!(f.derive(1, 0, 4).unwrap().sup_norm() < 1e-14);
        assert!(f.derive(0, 2, 4).unwrap().sup_norm() < 1e-14);
    }

    #[test]
    fn derivative_exact_on_linear_field() {
        let g = Arc::new(PhaseSpaceGrid::clamped(1.0, 32).unwrap());
        let f = MatrixField::from_scalar_fn(g, |x, _| C64::new(x, 0.0));
        let d = f.derive(1, 0, 4).unwrap();
        let one = MatrixField::from_scalar_fn(d.grid().clone(), |_, _| C64::new(1.0, 0.0));
        assert!(d.sub(&one).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn mixed_derivative_matches_analytic() {
        let g = scalar_grid(128);
        let f = MatrixField::from_scalar_fn(g, |x, xi| C64::new(x.sin() * xi.cos(), 0.0));
        let d = f.derive(2, 1, 4).unwrap();
        let exact =
            MatrixField::from_scalar_fn(d.grid().clone(), |x, xi| C64::new(x.sin() * xi.sin(), 0.0));
        assert!(d.sub(&exact).unwrap().sup_norm() < 1e-6);
    }

    #[test]
    fn adjoint_is_involutive() {
        let g = scalar_grid(8);
        let f = MatrixField::from_fn(g, 2, 3, |x, xi| {
            CMat::from_shape_fn((2, 3), |(r, c)| C64::new(x + r as f64, xi * c as f64))
        });
        assert_eq!(f.adjoint().adjoint(), f);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let g = scalar_grid(8);
        let mut m = CMat::zeros((2, 2));
        m[(0, 0)] = C64::new(3.0, 0.0);
        m[(1, 1)] = C64::new(-4.0, 0.0);
        let f = MatrixField::constant(g, &m);
        assert_abs_diff_eq!(f.sup_norm(), 4.0, epsilon = 1e-9);
    }

    #[test]
    fn interpolation_reproduces_smooth_field() {
        let g = scalar_grid(64);
        let f = MatrixField::from_scalar_fn(g, |x, xi| C64::new((0.7 * x).sin(), (0.3 * xi).cos()));
        let v = f.interpolate(0.31, -0.87);
        assert_abs_diff_eq!(v[(0, 0)].re, (0.7f64 * 0.31).sin(), epsilon = 1e-8);
        assert_abs_diff_eq!(v[(0, 0)].im, (0.3f64 * -0.87).cos(), epsilon = 1e-8);
    }
}
