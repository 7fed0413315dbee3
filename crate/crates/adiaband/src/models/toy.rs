use std::sync::Arc;

use num_complex::Complex64 as C64;
use num_rational::Ratio;

use crate::field::{CMat, MatrixField};
use crate::grid::PhaseSpaceGrid;
use crate::projector::GapSpec;
use crate::symbol::FormalSymbol;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Smooth 2x2 family with a non-constant lower band separated from the upper
/// one by an avoided crossing of half-width eps = 0.1:
/// H0 = [[sin x, eps], [eps, 2 + cos xi]], plus a first-order off-diagonal
/// coupling h * 0.3 cos x cos xi that keeps every correction order active.
/// Lower band sits in (-1.5, 1.0).
pub fn crossing_free(g: &Arc<PhaseSpaceGrid>, k_trunc: i64) -> FormalSymbol {
    let eps = 0.1;
    let h0 = MatrixField::from_fn(g.clone(), 2, 2, |x, xi| {
        let mut m = CMat::zeros((2, 2));
        m[(0, 0)] = c(x.sin());
        m[(0, 1)] = c(eps);
        m[(1, 0)] = c(eps);
        m[(1, 1)] = c(2.0 + xi.cos());
        m
    });
    let h1 = MatrixField::from_fn(g.clone(), 2, 2, |x, xi| {
        let mut m = CMat::zeros((2, 2));
        let gv = 0.3 * x.cos() * xi.cos();
        m[(0, 1)] = c(gv);
        m[(1, 0)] = c(gv);
        m
    });
    let mut h = FormalSymbol::new(g.clone(), 2, 2, 1, Ratio::from_integer(k_trunc))
        .unwrap()
        .with_fd_degree(6);
    h.set_term(Ratio::from_integer(0), h0).unwrap();
    if k_trunc >= 1 {
        h.set_term(Ratio::from_integer(1), h1).unwrap();
    }
    h
}

pub fn crossing_free_gap() -> GapSpec {
    GapSpec { window: (-1.5, 1.0), delta: 0.15 }
}

/// Two-band model with diagonal bands 1 + 0.3 sin x cos xi and -1 and a
/// Gaussian off-diagonal coupling at first order. The upper band lives in
/// (0.5, 1.5), the lower one near -1, with gap >= 1.5.
pub fn two_band(g: &Arc<PhaseSpaceGrid>, k_trunc: i64) -> FormalSymbol {
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
    let mut h = FormalSymbol::new(g.clone(), 2, 2, 1, Ratio::from_integer(k_trunc))
        .unwrap()
        .with_fd_degree(6);
    h.set_term(Ratio::from_integer(0), h0).unwrap();
    h.set_term(Ratio::from_integer(1), h1).unwrap();
    h
}

/// x-independent 2x2 family: H0 = [[cos xi, 0.1], [0.1, 2 + 0.5 sin xi]].
/// With no x dependence the first Moyal correction to the factor identity
/// vanishes. Lower band sits in (-1.1, 1.1), gap to the upper >= 0.4.
pub fn xi_only(g: &Arc<PhaseSpaceGrid>, k_trunc: i64) -> FormalSymbol {
    let eps = 0.1;
    let h0 = MatrixField::from_fn(g.clone(), 2, 2, |_, xi| {
        let mut m = CMat::zeros((2, 2));
        m[(0, 0)] = c(xi.cos());
        m[(0, 1)] = c(eps);
        m[(1, 0)] = c(eps);
        m[(1, 1)] = c(2.0 + 0.5 * xi.sin());
        m
    });
    let mut h = FormalSymbol::new(g.clone(), 2, 2, 1, Ratio::from_integer(k_trunc))
        .unwrap()
        .with_fd_degree(6);
    h.set_term(Ratio::from_integer(0), h0).unwrap();
    h
}

pub fn xi_only_gap() -> GapSpec {
    GapSpec { window: (-1.1, 1.1), delta: 0.3 }
}

pub fn two_band_upper_gap() -> GapSpec {
    GapSpec { window: (0.5, 1.5), delta: 1.5 }
}

pub fn two_band_lower_gap() -> GapSpec {
    GapSpec { window: (-1.5, -0.5), delta: 1.5 }
}
