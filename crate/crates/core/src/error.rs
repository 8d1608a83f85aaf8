//! Error types for each subsystem, plus the crate-level [`Error`] that the
//! CLI and FFI layers map onto exit / status codes.

use std::path::PathBuf;

use thiserror::Error;

use crate::market_data::YearMonth;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("missing or malformed header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("malformed row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("gap in dates: expected {expected} but found {found} (line {line})")]
    GapInDates {
        line: usize,
        expected: YearMonth,
        found: YearMonth,
    },
    #[error("non-positive level {value} in column `{column}` at {month}")]
    NonPositiveLevel {
        column: String,
        month: YearMonth,
        value: f64,
    },
    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("series length/start mismatch: {0}")]
    LengthMismatch(String),
    #[error("series has zero variance")]
    DegenerateSeries,
    #[error("series must have at least {needed} entries, found {found}")]
    TooShort { needed: usize, found: usize },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("parameter out of domain: {0}")]
    ParameterOutOfDomain(String),
    #[error("insufficient data: {found} observations, need at least {needed}")]
    InsufficientData { needed: usize, found: usize },
    #[error("optimization failed: {0}")]
    OptimizationFailed(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("target mean {target} outside achievable range [{lo}, {hi}]")]
    InfeasibleTarget { target: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("wealth grid too small: {lost_mass:e} probability mass beyond w_max at t = {time}")]
    GridTooSmall { time: usize, lost_mass: f64 },
    #[error("invalid grid configuration: {0}")]
    InvalidGrid(String),
    #[error("rebalance date {0} is not stored in the policy grid")]
    UnknownTime(usize),
    #[error("goal mean {goal} is below the all-bond terminal wealth {floor}")]
    InfeasibleGoal { goal: f64, floor: f64 },
    #[error("target calibration did not converge after {iterations} iterations (last mean {last_mean}, goal {goal})")]
    NoConvergence {
        iterations: usize,
        last_mean: f64,
        goal: f64,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum SimulationError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("empty sample")]
    EmptySample,
    #[error("block of {block_months} months is longer than the {series_months}-month series")]
    BlockTooLong {
        block_months: usize,
        series_months: usize,
    },
    #[error("invalid block size: {0}")]
    InvalidBlock(String),
    #[error("requested window {start} + {months} months not covered by series {first}..={last}")]
    WindowOutOfRange {
        start: YearMonth,
        months: usize,
        first: YearMonth,
        last: YearMonth,
    },
    #[error("need at least one path")]
    NoPaths,
}

/// Top-level error used by the command-line and FFI front ends.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// 1 for computational failures, 2 for I/O and configuration problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Json { .. } | Error::Config(_) | Error::Data(_) => 2,
            Error::Simulation(SimulationError::Data(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
