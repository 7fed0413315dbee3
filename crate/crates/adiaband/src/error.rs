use thiserror::Error;

/// Errors reported by the symbol calculus, solvers and model builders.
#[derive(Debug, Error)]
pub enum AdiabandError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("fiber dimension mismatch: {0}x{1} against {2}x{3}")]
    DimMismatch(usize, usize, usize, usize),

    #[error("derivative stencil (reach {reach}) exceeds grid with {n} nodes")]
    StencilExceedsGrid { reach: usize, n: usize },

    #[error("derivative order {0} unsupported (max {1})")]
    UnsupportedOrder(usize, usize),

    #[error("exponent {0} not representable on the 1/{1} lattice")]
    ExponentNotOnLattice(String, u32),

    #[error("spectral gap violated at node ({ix}, {ixi}): {detail}")]
    GapViolation { ix: usize, ixi: usize, detail: String },

    #[error("non-Hermitian input where a selfadjoint operator is required: {0}")]
    NonHermitian(String),

    #[error("invalid contour: {0}")]
    ContourInvalid(String),

    #[error("quadrature did not converge: residual {residual:.3e} after {nodes} nodes per branch")]
    QuadratureNotConverged { residual: f64, nodes: usize },

    #[error("compatibility relation {relation} violated at order {order}: {value:.3e} > {tol:.3e}")]
    CompatibilityViolation {
        relation: &'static str,
        order: String,
        value: f64,
        tol: f64,
    },

    #[error("principal projector has rank {found} where rank {expected} is required")]
    RankViolation { expected: usize, found: usize },

    #[error("gauge obstruction: phase winding {winding:.3e} on a grid loop")]
    GaugeObstruction { winding: f64 },

    #[error("fiber polynomial degree {degree} too high for Fock truncation {m}")]
    DegreeTooHigh { degree: usize, m: usize },

    #[error("Taylor order {0} beyond the implemented cap {1}")]
    TaylorOrderUnsupported(usize, usize),

    #[error("matrix size {0} exceeds configured cap {1}")]
    SizeCap(usize, usize),

    #[error("eigensolver failure: {0}")]
    SolverFailure(String),

    #[error("quantization resolution precondition violated: {0}")]
    ResolutionViolated(String),

    #[error("refinement did not converge: {0}")]
    RefinementNotConverged(String),

    #[error("bracket failure in minimum search: {0}")]
    BracketFailure(String),

    #[error("spectral window [{a}, {b}] straddles a Landau threshold")]
    WindowStraddlesThreshold { a: f64, b: f64 },

    #[error("configuration error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("all defect points at numerical floor; no slope to fit")]
    AllPointsAtFloor,

    #[error("slope fit needs at least {needed} usable points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("incomplete run directory: {0}")]
    IncompleteRun(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AdiabandError>;
