use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("unknown zone id {zone} (world has {n_zones} zones)")]
    UnknownZone { zone: usize, n_zones: usize },
    #[error("unknown port id {0}")]
    UnknownPort(usize),
    #[error("travel-time matrix has no entry for ({from}, {to})")]
    MissingTravelTime { from: usize, to: usize },
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("charge target {target} is below the initial SoC {initial}")]
    TargetBelowInitial { initial: f64, target: f64 },
    #[error("no charging port in service")]
    NoEligiblePort,
    #[error("detector training needs at least {required} sessions, got {got}")]
    InsufficientTraining { required: usize, got: usize },
    #[error("covariance matrix is singular after regularization")]
    SingularCovariance,
    #[error("cannot pair summaries: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
}
