//! Versioned JSON run configuration: every experiment is fully described by a
//! serializable document that is embedded in the output for provenance.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{AdiabandError, Result};
use crate::grid::PhaseSpaceGrid;
use crate::quantize::BaseGrid1d;

pub const SCHEMA_VERSION: u32 = 1;

/// Phase-space grid description: the square [-span, span]^2 with n nodes per
/// axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub span: f64,
    pub n: usize,
    pub periodic: bool,
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<PhaseSpaceGrid>> {
        let g = if self.periodic {
            PhaseSpaceGrid::periodic(self.span, self.n)?
        } else {
            PhaseSpaceGrid::clamped(self.span, self.n)?
        };
        Ok(Arc::new(g))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoyalCheckParams {
    pub grid: GridSpec,
    /// Fiber dimension of the random symbols.
    pub dim: usize,
    /// Integer truncation order.
    pub k: i64,
    pub h_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorBuildParams {
    pub grid: GridSpec,
    pub k: i64,
    pub h_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityParams {
    pub grid: GridSpec,
    pub k: i64,
    pub h_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorModel {
    /// Smooth 2x2 avoided-crossing family.
    CrossingFree,
    /// x-independent family, for the vanishing first-order factor identity.
    XiOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationParams {
    pub grid: GridSpec,
    pub model: FactorModel,
    pub k: i64,
    pub h_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagneticWellParams {
    /// Taylor truncation order in sqrt(h); the symbol hierarchy is truncated
    /// at exponent j/2.
    pub j: usize,
    pub fock_m: usize,
    /// Symbol phase-space grid: [-span, span]^2, clamped.
    pub span: f64,
    pub grid_n: usize,
    /// Base quantization grid: [-span, span], periodic, base_n nodes.
    pub base_n: usize,
    pub h_values: Vec<f64>,
    /// Spectral window reaches mu0 + window_c * h (operator units).
    pub window_c: f64,
    /// Declared momentum resolution for the base quantization.
    pub xi_extent: f64,
    /// Interpolation clamp radius for symbol sampling.
    pub clamp: f64,
}

impl Default for MagneticWellParams {
    fn default() -> Self {
        Self {
            j: 2,
            fock_m: 12,
            span: 1.8,
            grid_n: 48,
            base_n: 256,
            h_values: vec![0.04, 0.0283, 0.02, 0.01, 0.005],
            window_c: 2.0,
            xi_extent: 1.0,
            clamp: 1.7,
        }
    }
}

/// Robin parameter; `null` in JSON selects the Dirichlet limit.
pub fn gamma_value(g: Option<f64>) -> f64 {
    g.unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandWindow {
    pub gamma: Option<f64>,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegennesParams {
    /// Robin parameters for the dispersion table (`null` = Dirichlet).
    pub gammas: Vec<Option<f64>>,
    /// Dispersion minima computed for n = 1..=n_max.
    pub n_max: usize,
    /// Windows for the band-counting check.
    pub windows: Vec<BandWindow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalCalculusParams {
    pub j: usize,
    pub fock_m: usize,
    pub span: f64,
    pub grid_n: usize,
    pub base_n: usize,
    pub h_values: Vec<f64>,
    /// Support of the spectral bump (operator units).
    pub chi_window: (f64, f64),
    pub xi_extent: f64,
    pub clamp: f64,
}

impl Default for FunctionalCalculusParams {
    fn default() -> Self {
        Self {
            j: 2,
            fock_m: 8,
            span: 1.8,
            grid_n: 32,
            base_n: 128,
            h_values: vec![0.16, 0.113, 0.08, 0.057, 0.04],
            chi_window: (0.8, 1.5),
            xi_extent: 1.0,
            clamp: 1.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Experiment {
    MoyalCheck(MoyalCheckParams),
    ProjectorBuild(ProjectorBuildParams),
    Orthogonality(OrthogonalityParams),
    Factorization(FactorizationParams),
    MagneticWell(MagneticWellParams),
    Degennes(DegennesParams),
    FunctionalCalculus(FunctionalCalculusParams),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::MoyalCheck(_) => "moyal_check",
            Experiment::ProjectorBuild(_) => "projector_build",
            Experiment::Orthogonality(_) => "orthogonality",
            Experiment::Factorization(_) => "factorization",
            Experiment::MagneticWell(_) => "magnetic_well",
            Experiment::Degennes(_) => "degennes",
            Experiment::FunctionalCalculus(_) => "functional_calculus",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub experiment: Experiment,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| AdiabandError::Config {
            path: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(AdiabandError::Config {
                path: "schema_version".into(),
                message: format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            });
        }
        let check_h = |h_values: &[f64], path: &str| -> Result<()> {
            if h_values.is_empty() {
                return Err(AdiabandError::Config {
                    path: path.into(),
                    message: "empty h list".into(),
                });
            }
            for &h in h_values {
                if !(h > 0.0) || !h.is_finite() {
                    return Err(AdiabandError::Config {
                        path: path.into(),
                        message: format!("h values must be positive and finite, got {h}"),
                    });
                }
            }
            Ok(())
        };
        match &self.experiment {
            Experiment::MoyalCheck(p) => {
                check_h(&p.h_values, "h_values")?;
                if p.dim == 0 || p.k < 0 {
                    return Err(AdiabandError::Config {
                        path: "moyal_check".into(),
                        message: "need dim >= 1 and k >= 0".into(),
                    });
                }
            }
            Experiment::ProjectorBuild(p) => check_h(&p.h_values, "h_values").and_then(|_| {
                if p.k < 0 {
                    Err(AdiabandError::Config {
                        path: "k".into(),
                        message: "truncation order must be nonnegative".into(),
                    })
                } else {
                    Ok(())
                }
            })?,
            Experiment::Orthogonality(p) => check_h(&p.h_values, "h_values")?,
            Experiment::Factorization(p) => check_h(&p.h_values, "h_values")?,
            Experiment::MagneticWell(p) => {
                check_h(&p.h_values, "h_values")?;
                if p.fock_m < 2 * (p.j + 2) {
                    return Err(AdiabandError::Config {
                        path: "fock_m".into(),
                        message: format!(
                            "Fock truncation {} too small for fiber degree {} (need >= {})",
                            p.fock_m,
                            p.j + 2,
                            2 * (p.j + 2)
                        ),
                    });
                }
            }
            Experiment::Degennes(p) => {
                if p.n_max == 0 || p.gammas.is_empty() {
                    return Err(AdiabandError::Config {
                        path: "degennes".into(),
                        message: "need n_max >= 1 and at least one gamma".into(),
                    });
                }
                for g in &p.gammas {
                    if let Some(v) = g {
                        if !(*v >= 0.0) {
                            return Err(AdiabandError::Config {
                                path: "gammas".into(),
                                message: format!("Robin parameter must be >= 0, got {v}"),
                            });
                        }
                    }
                }
            }
            Experiment::FunctionalCalculus(p) => {
                check_h(&p.h_values, "h_values")?;
                if !(p.chi_window.0 < p.chi_window.1) {
                    return Err(AdiabandError::Config {
                        path: "chi_window".into(),
                        message: "empty bump support".into(),
                    });
                }
            }
        }
        Ok(())
    }

    /// FNV-1a 64 over the canonical serialization; identifies the run.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(text.as_bytes()))
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Base grid on [-span, span], periodic, for 1D quantization.
pub fn base_grid(span: f64, n: usize) -> Result<BaseGrid1d> {
    BaseGrid1d::new(-span, span, n, true)
}
