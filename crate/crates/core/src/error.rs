use crate::symplectic::PhasePoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (defect {defect:e})")]
    NotSymmetric { defect: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is not symplectic (defect {defect:e})")]
    NotSymplectic { defect: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("states live on different grids")]
    GridMismatch,

    #[error("could not bracket the projection multiplier on [{lo:e}, {hi:e}]")]
    RootBracket { lo: f64, hi: f64 },

    #[error("integration step {dt:e} underflows the minimum step")]
    StepUnderflow { dt: f64 },

    #[error(
        "eps = {eps} exceeds the safe thickening radius {eps_star}; {} point(s) lie in the shell",
        offending.len()
    )]
    UnsafeEpsilon {
        eps: f64,
        eps_star: f64,
        offending: Vec<PhasePoint>,
    },

    #[error("degenerate Möbius action: a + bΓ = 0")]
    Caustic,

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
