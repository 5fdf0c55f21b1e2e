use thiserror::Error;

/// Errors surfaced by the numerical layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unknown input measure tag `{0}`")]
    UnknownMeasure(String),

    #[error("zero target vector: alpha/q statistics are undefined")]
    ZeroTarget,

    #[error("matrix is not SPD even after jitter escalation (final jitter {final_jitter:e})")]
    SpdFailure { final_jitter: f64 },

    #[error("singular bracket matrix in target-shift evaluation (smallest eigenvalue {min_eig:e})")]
    SingularBracket { min_eig: f64 },

    #[error("cumulant generating function undefined: bracket matrix not positive definite (smallest eigenvalue {min_eig:e})")]
    NonPositiveDefiniteCgf { min_eig: f64 },

    #[error("resummed target shift diverges: spectral radius {radius:.6} >= 1 (alpha_pole bound violated)")]
    ResummationDiverged { radius: f64 },

    #[error("no sign change in root bracket [{lo:e}, {hi:e}]; scan trace: {trace}")]
    NoRootInBracket { lo: f64, hi: f64, trace: String },

    #[error("Langevin dynamics diverged at step {step} (|theta| = {norm:e}, {norm_ratio:.1}x prior scale)")]
    LangevinDiverged { step: usize, norm: f64, norm_ratio: f64 },

    #[error("nonpositive MSE value {0:e} in log-log slope fit")]
    NonPositiveMse(f64),

    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },

    #[error("finite-difference step underflow for index {index}")]
    FdUnderflow { index: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
