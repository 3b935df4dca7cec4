use thiserror::Error;

/// Errors raised across the localization and topology pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("node count must be positive")]
    InvalidCount,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph has no globally rigid patch")]
    UnlocalizableGraph,
    #[error("patch {patch} is disconnected: no path between local nodes {i} and {j}")]
    DisconnectedPatch { patch: usize, i: usize, j: usize },
    #[error("degenerate configuration: top eigenvalues {0:e}, {1:e}")]
    DegenerateConfiguration(f64, f64),
    #[error("degenerate overlap between patches {0} and {1}: shared points coincide")]
    DegenerateOverlap(usize, usize),

    #[error("power must be positive to convert to dBm, got {0}")]
    NonPositivePower(f64),
    #[error("link distance must be positive, got {0}")]
    ZeroDistance(f64),
    #[error("link {from}->{to} needs {required_dbm:.3} dBm, above the transmit cap")]
    Infeasible {
        from: usize,
        to: usize,
        required_dbm: f64,
    },
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("linear program has no feasible point")]
    LpInfeasible,
    #[error("no convergence after {} iterations (last delta {:.4})", .0.trace.len(), .0.trace.last().map_or(f64::NAN, |t| t.delta))]
    NotConverged(Box<crate::topo::Topology>),

    #[error("no nodes in network")]
    EmptyNetwork,
    #[error("no reports to aggregate")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },
    #[error("io error: {0}")]
    Io(String),
    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
