//! Symbol calculus for truncated semiclassical expansions, superadiabatic
//! projector hierarchies, and spectral comparison harnesses for effective
//! band operators.

pub mod config;
pub mod error;
pub mod factorization;
pub mod field;
pub mod grid;
pub mod fit;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod projector;
pub mod quantize;
pub mod report;
pub mod runner;
pub mod symbol;
pub mod sylvester;

pub use error::{AdiabandError, Result};
