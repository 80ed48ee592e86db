use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point outside chart domain ({chart}: {u}, {v})")]
    Domain { chart: &'static str, u: f64, v: f64 },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("flow left the chart atlas at t = {t} (last valid point {u}, {v})")]
    FlowEscape { t: f64, u: f64, v: f64 },

    #[error("grid resolution insufficient: {0}")]
    Resolution(String),

    #[error("holonomy undefined: {0}")]
    HolonomyUndefined(String),

    #[error("loop is not Bohr-Sommerfeld: closure defect {defect:.3e} rad")]
    ClosureDefect { defect: f64 },

    #[error("degenerate fiber at base value {0}")]
    DegenerateFiber(f64),

    #[error("image functional numerically zero (norm {0:.3e})")]
    DegenerateImage(f64),

    #[error("tangent violates weighted zero mean (residual {0:.3e})")]
    InvalidTangent(f64),

    #[error("invalid hermitian structure: {0}")]
    InvalidStructure(String),

    #[error("projection onto spectral subspace is zero")]
    UndefinedProjection,

    #[error("loop is not Bohr-Sommerfeld at level {level}: residual {residual:.3e}")]
    Level { level: u32, residual: f64 },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("deformation leaves the tubular neighborhood: {0}")]
    ChartOverflow(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
