use serde::{Deserialize, Serialize};

use crate::error::{AdiabandError, Result};

/// Largest stencil half-width any derivative routine may use. Interior margins
/// in clamped mode are counted in units of this reach.
pub const MAX_STENCIL_REACH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    /// Fields wrap around in both directions.
    Periodic,
    /// Fields are only trusted on the interior; derivative-consuming
    /// measurements exclude `margin_cells * MAX_STENCIL_REACH` cells per side.
    ClampedMargin { margin_cells: usize },
}

/// Uniform rectangular discretization of a 1d phase space (x, xi).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub xi_min: f64,
    pub xi_max: f64,
    pub n_x: usize,
    pub n_xi: usize,
    pub boundary: Boundary,
}

impl PhaseSpaceGrid {
    pub fn new(
        x_min: f64,
        x_max: f64,
        xi_min: f64,
        xi_max: f64,
        n_x: usize,
        n_xi: usize,
        boundary: Boundary,
    ) -> Result<Self> {
        if n_x < 8 || n_xi < 8 {
            return Err(AdiabandError::InvalidGrid(format!(
                "need n_x, n_xi >= 8, got {n_x} x {n_xi}"
            )));
        }
        if !(x_max > x_min) || !(xi_max > xi_min) {
            return Err(AdiabandError::InvalidGrid(
                "coordinate ranges must have positive length".into(),
            ));
        }
        Ok(Self { x_min, x_max, xi_min, xi_max, n_x, n_xi, boundary })
    }

    pub fn periodic(span: f64, n: usize) -> Result<Self> {
        Self::new(-span, span, -span, span, n, n, Boundary::Periodic)
    }

    pub fn clamped(span: f64, n: usize) -> Result<Self> {
        Self::new(-span, span, -span, span, n, n, Boundary::ClampedMargin { margin_cells: 1 })
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_x as f64
    }

    #[inline]
    pub fn dxi(&self) -> f64 {
        (self.xi_max - self.xi_min) / self.n_xi as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    #[inline]
    pub fn xi(&self, j: usize) -> f64 {
        self.xi_min + j as f64 * self.dxi()
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_x * self.n_xi
    }

    #[inline]
    pub fn node(&self, ix: usize, ixi: usize) -> usize {
        ix * self.n_xi + ixi
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.boundary, Boundary::Periodic)
    }

    /// Number of cells per side excluded from interior measurements.
    pub fn interior_margin(&self) -> usize {
        match self.boundary {
            Boundary::Periodic => 0,
            Boundary::ClampedMargin { margin_cells } => margin_cells * MAX_STENCIL_REACH,
        }
    }

    /// True when node (ix, ixi) lies in the trusted interior.
    pub fn in_interior(&self, ix: usize, ixi: usize) -> bool {
        let m = self.interior_margin();
        ix >= m && ix + m < self.n_x && ixi >= m && ixi + m < self.n_xi
    }

    pub fn check_stencil(&self, reach: usize) -> Result<()> {
        let n = self.n_x.min(self.n_xi);
        if 2 * reach + 1 > n {
            return Err(AdiabandError::StencilExceedsGrid { reach, n });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_grids() {
        assert!(PhaseSpaceGrid::new(0.0, 1.0, 0.0, 1.0, 4, 16, Boundary::Periodic).is_err());
    }

    #[test]
    fn spacings_and_nodes() {
        let g = PhaseSpaceGrid::periodic(std::f64::consts::PI, 16).unwrap();
        assert!((g.dx() - 2.0 * std::f64::consts::PI / 16.0).abs() < 1e-15);
        assert_eq!(g.n_nodes(), 256);
        assert!((g.x(0) + std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn interior_margin_excludes_reach() {
        let g = PhaseSpaceGrid::clamped(1.0, 32).unwrap();
        assert_eq!(g.interior_margin(), MAX_STENCIL_REACH);
        assert!(!g.in_interior(0, 16));
        assert!(g.in_interior(16, 16));
    }
}
