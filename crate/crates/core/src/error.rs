//! Error types shared by the whole crate.

use crate::linalg::ParamVector;
use crate::protocol::CommStats;
use crate::trace::RunTrace;

/// Everything that can go wrong, from contract violations to diverged runs.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition of an operation was violated (dimension mismatch,
    /// empty batch, invalid hyper-parameter, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The master/worker exchange protocol was used incorrectly
    /// (out-of-range worker id, payload shape mismatch across slots).
    #[error("protocol violation: {0}")]
    Protocol(String),

    /// An iterate became non-finite.
    #[error("diverged in {context} at step {step}")]
    Diverged(Box<DivergedInfo>),

    /// A data file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The data itself is invalid (duplicate ratings, non-finite values, ...).
    #[error("data error: {0}")]
    Data(String),

    /// The requested partition cannot be built (e.g. more machines than users).
    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),

    /// A run configuration is invalid or contains unknown keys.
    #[error("config error: {0}")]
    Config(String),

    /// A diagnostic was requested on a problem that does not support it
    /// (e.g. error-envelope tracking without a known minimizer).
    #[error("unsupported diagnostic: {0}")]
    UnsupportedDiagnostic(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Context attached to a [`Error::Diverged`] failure. Local solvers fill in
/// the step index and the last finite iterate; run drivers additionally
/// attach the communication stats and the event trace collected so far.
#[derive(Debug, Default)]
pub struct DivergedInfo {
    pub context: String,
    pub step: u64,
    pub machine: Option<usize>,
    pub last_iterate: Option<ParamVector>,
    pub stats: Option<CommStats>,
    pub trace: Option<RunTrace>,
}

impl Error {
    pub fn diverged(context: impl Into<String>, step: u64) -> Self {
        Error::Diverged(Box::new(DivergedInfo {
            context: context.into(),
            step,
            ..DivergedInfo::default()
        }))
    }

    pub fn diverged_with(info: DivergedInfo) -> Self {
        Error::Diverged(Box::new(info))
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
