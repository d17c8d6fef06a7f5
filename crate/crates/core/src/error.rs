use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed optimization model: {0}")]
    MalformedModel(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("invalid case data at {location}: {message}")]
    InvalidCase { location: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("year {0} not present in scaling table")]
    UnknownYear(u32),

    #[error("reduced susceptance matrix is singular (network islanded?)")]
    SingularSusceptance,

    #[error("net injection is unbalanced by {0} MW")]
    UnbalancedInjection(f64),

    #[error("lazy flow loop exceeded {cap} iterations; {remaining} violations remain (worst {worst_excess} MW on branch {worst_branch} hour {worst_hour})")]
    LazyIterationCap {
        cap: usize,
        remaining: usize,
        worst_excess: f64,
        worst_branch: usize,
        worst_hour: usize,
    },

    #[error("scenario(s) {0:?} cannot be served without shedding even at maximum investment")]
    InfeasibleAtMax(Vec<usize>),

    #[error("master problem infeasible: {0}")]
    MasterInfeasible(String),

    #[error("load shed persists after {doublings} penalty doublings in scenario(s) {scenarios:?}")]
    PenaltyEscalation { doublings: usize, scenarios: Vec<usize> },

    #[error("io error on {path:?}")]
    PathIo { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
