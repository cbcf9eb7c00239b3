use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// `exp_q` hit its undefined branch: q > 1 and `1 + (1 - q) z <= 0`.
    #[error("deformed exponential undefined for q = {q} at z = {z}")]
    UndefinedDeformedExp { q: f64, z: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("negative initial density {value} at x = {x}")]
    NegativeDensity { x: f64, value: f64 },

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: usize, right: usize },

    #[error("resolution {coarse} does not divide {fine}")]
    IncompatibleResolution { fine: usize, coarse: usize },

    #[error("utility evaluation failed: {0}")]
    Evaluation(String),

    #[error("potential not available for model `{0}`")]
    UnsupportedModel(String),

    #[error("time step {dt} exceeds the guaranteed bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("density became negative ({value:e}) at type {type_index}, cell {cell}")]
    NonnegativityLost {
        type_index: usize,
        cell: usize,
        value: f64,
    },

    #[error("value {value} at type {type_index}, step {step}, cell {cell} left [{lower}, {upper}]")]
    ValueBoundViolated {
        type_index: usize,
        step: usize,
        cell: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("utility {value} exceeds its bound {bound} at type {type_index}, cell {cell}")]
    UtilityBoundViolated {
        type_index: usize,
        cell: usize,
        value: f64,
        bound: f64,
    },

    #[error("non-finite value at type {type_index}, cell {cell}")]
    NonFiniteValue { type_index: usize, cell: usize },

    /// `history` holds every recorded residual (the MFG iteration log; empty for GLD).
    #[error("not converged after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
}
