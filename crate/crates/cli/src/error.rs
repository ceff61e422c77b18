//! Process-level error taxonomy.
//!
//! Every failure a command can hit collapses into one of three exit codes:
//! 1 for configuration problems (the message names the offending field when
//! the config file is at fault), 2 for numerical aborts (non-finite values,
//! failed gradient checks, singular solves), 3 for I/O.

use decoupled_uniformity::data::DataError;
use decoupled_uniformity::encoder::EncoderError;
use decoupled_uniformity::eval::EvalError;
use decoupled_uniformity::graphs::GraphError;
use decoupled_uniformity::kernels::KernelError;
use decoupled_uniformity::loss::LossError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn io(context: &str, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<LossError> for CliError {
    fn from(e: LossError) -> Self {
        match e {
            LossError::NonFiniteView { .. }
            | LossError::NonFiniteCentroid { .. }
            | LossError::NotUnitNorm { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::NonFinite { .. }
            | KernelError::NonFinitePrior { .. }
            | KernelError::SingularSystem { .. }
            | KernelError::NonFiniteSolve
            | KernelError::BetaUndefined { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } | DataError::Parse { .. } | DataError::WrongRowCount { .. } => {
                CliError::Io(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::NonFiniteInput
            | EncoderError::DegenerateNorm { .. }
            | EncoderError::NumericalAbort { .. } => CliError::Numerical(e.to_string()),
            EncoderError::Io { .. }
            | EncoderError::BadCheckpoint { .. }
            | EncoderError::CheckpointVersion { .. }
            | EncoderError::UnknownActivation { .. } => CliError::Io(e.to_string()),
            EncoderError::Loss(inner) => inner.into(),
            EncoderError::Kernel(inner) => inner.into(),
            EncoderError::Data(inner) => inner.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NonFiniteEmbedding => CliError::Numerical(e.to_string()),
            EvalError::Loss(inner) => inner.into(),
            EvalError::Kernel(inner) => inner.into(),
            EvalError::Graph(inner) => inner.into(),
            EvalError::Data(inner) => inner.into(),
            EvalError::Encoder(inner) => inner.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}
