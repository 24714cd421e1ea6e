use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty design: at least one sample required")]
    EmptyDesign,

    #[error("singular projection: {0}")]
    SingularProjection(String),

    #[error("factorization failed after {attempts} jitter escalations")]
    FactorizationFailure { attempts: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown objective id `{0}`")]
    UnknownObjective(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
