//! Error type shared across the crate.

use thiserror::Error;

/// Which side of the threshold an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorSide {
    Below,
    Above,
}

impl std::fmt::Display for ErrorSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ErrorSide::Below => write!(f, "below"),
            ErrorSide::Above => write!(f, "above"),
        }
    }
}

#[derive(Debug, Error)]
pub enum RdError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: missing column `{0}`")]
    Schema(String),

    #[error("empty cohort: no valid rows after validation")]
    EmptyCohort,

    #[error("empty side: no observations strictly {side} threshold {threshold}")]
    EmptySide { side: ErrorSide, threshold: i64 },

    #[error("identifiability error ({side} side): {distinct} distinct ages cannot support a degree-{order} fit")]
    Identifiability {
        side: ErrorSide,
        distinct: usize,
        order: usize,
    },

    #[error("empty kernel window ({side} side): all kernel weights are zero")]
    EmptyKernelWindow { side: ErrorSide },

    #[error("weak first stage: jump {jump:.4} does not exceed floor {floor:.2}")]
    WeakFirstStage { jump: f64, floor: f64 },

    #[error("degenerate baseline: {0}")]
    DegenerateBaseline(String),

    #[error("undefined elasticity: price change is zero")]
    UndefinedElasticity,

    #[error("degenerate inference: zero standard error with worst-case bias {bias:.6}")]
    DegenerateInference { bias: f64 },

    #[error("unstable bootstrap: {failed} of {total} replicates failed (> {ceiling:.0}% ceiling)")]
    UnstableBootstrap {
        failed: usize,
        total: usize,
        ceiling: f64,
    },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("unsupported fill: days_supplied {0} is not 30 or 90")]
    UnsupportedFill(u32),

    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, RdError>;
