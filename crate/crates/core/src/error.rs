use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("sampling stalled in component {component}: {rejections} consecutive rejections (degenerate box)")]
    DegenerateBox { component: usize, rejections: u64 },

    #[error("monomial Gram matrix ill-conditioned at order {order} (pivot {pivot:e})")]
    IllConditioned { order: usize, pivot: f64 },

    #[error("basis check failed: {0}")]
    Basis(String),

    #[error("quadrature did not converge: residual {residual:e} with {points} points")]
    QuadratureNotConverged { residual: f64, points: usize },

    #[error("rank-deficient design matrix (condition number {condition:e}); use more samples or a lower order")]
    RankDeficient { condition: f64 },

    #[error("interior-point solver stopped after {iterations} iterations with gap {gap:e}")]
    SdpNotConverged { iterations: usize, gap: f64 },

    #[error("kinship order {0} out of range 1..=16")]
    KinshipOrder(usize),

    #[error("argument {0} lies outside the kinship domain [-1, inf)")]
    OutsideKinshipDomain(f64),

    #[error("scaled metric value {0} below -1; scaling is inconsistent")]
    ScalingBug(f64),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("spectrum has no {level} dB crossing inside the grid")]
    NoBandEdge { level: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
