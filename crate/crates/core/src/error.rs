use thiserror::Error;

/// Errors produced by the pmtc library.
#[derive(Debug, Error)]
pub enum PmtcError {
    #[error("mode index {mode} out of range for order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("rank {rank} exceeds matrix dimensions {rows}x{cols}")]
    RankTooLarge { rank: usize, rows: usize, cols: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("invalid membership: {0}")]
    InvalidMembership(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("infeasible design: {0}")]
    InfeasibleDesign(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PmtcError>;
