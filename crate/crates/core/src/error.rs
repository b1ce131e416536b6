use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid twist profile: {0}")]
    InvalidTwist(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cross-section mask has no interior nodes")]
    EmptyMask,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("interval spans {cells} grid cells, need at least 4")]
    DegenerateInterval { cells: usize },
    #[error("matrix is not positive definite (pivot {row} = {pivot:e})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("eigensolver found {found} of {wanted} pairs (worst residual {residual:e})")]
    NotConverged {
        found: usize,
        wanted: usize,
        residual: f64,
    },
    #[error("linear solve residual {residual:e} above tolerance")]
    LinearSolveFailure { residual: f64 },
    #[error("weight exp(y^2/4) overflows at |y| = {y}")]
    WeightOverflow { y: f64 },
    #[error("relative change {rel_change:e} per step at t = {t} exceeds 10%")]
    StepTooLarge { t: f64, rel_change: f64 },
    #[error("fit window holds {samples} samples, need at least 20")]
    WindowTooShort { samples: usize },
    #[error("fit window reaches t = {t_max}, past the boundary time {t_bc}")]
    BoundaryContaminated { t_max: f64, t_bc: f64 },
    #[error("test function vanishes identically")]
    ZeroFunction,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
