use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (‖M + Mᵀ‖_F = {asymmetry:.3e})")]
    NotSkew { asymmetry: f64 },

    #[error("degenerate manifold element: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("mass matrix is singular or ill-conditioned (condition number {condition:.3e})")]
    SingularMass { condition: f64 },

    #[error("non-finite state component at t = {t}")]
    NonFinite { t: f64 },

    #[error("attachment geometry is rank deficient: rank {rank} < 6")]
    RankDeficient { rank: usize },

    #[error("desired tension for agent {agent} vanished (‖μ_d‖ = {norm:.3e} N)")]
    DegenerateTension { agent: usize, norm: f64 },

    #[error("ideal force for agent {agent} vanished (‖u‖ = {norm:.3e} N)")]
    DegenerateThrust { agent: usize, norm: f64 },

    #[error("heading reference of agent {agent} is collinear with the thrust axis")]
    CollinearHeading { agent: usize },

    #[error("tangent frame undefined at t = {t}: {reason}")]
    DegenerateTangent { t: f64, reason: String },

    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("telemetry is empty")]
    EmptyTelemetry,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
