use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("bivector components are not skew-symmetric at ({i}, {j})")]
    NotSkew { i: usize, j: usize },

    #[error("connection has torsion: Gamma^{i}_({j},{k}) != Gamma^{i}_({k},{j})")]
    Torsion { i: usize, j: usize, k: usize },

    #[error("point is not on the submanifold (constraint residual {residual:.3e})")]
    PointNotOnSubmanifold { residual: f64 },

    #[error("constraint Jacobian has rank {rank}, expected {expected}")]
    RankDeficientJacobian { rank: usize, expected: usize },

    #[error("implicit step did not converge on cell {cell}")]
    NonConvergence { cell: usize },

    #[error("periodic path does not close: |X(1) - X(0)| = {gap:.3e}")]
    ClosureFailure { gap: f64 },

    #[error("pair is not compatible: constraint residual {residual:.3e}")]
    ConstraintViolated { residual: f64 },

    #[error("endpoint system is numerically rank-ambiguous (relative singular value {sigma:.3e})")]
    DegenerateEndpointSystem { sigma: f64 },

    #[error("subspace is not coisotropic ({defect} violating directions)")]
    NotCoisotropic { defect: usize },

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Parse(e.to_string())
    }
}
