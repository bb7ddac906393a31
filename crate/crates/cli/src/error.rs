//! One error type for the whole binary, bucketed by exit code: 1 for
//! usage and configuration problems, 2 for numerical failures, 3 for I/O.

use bno_core::data::DataError;
use bno_core::dmd::DmdError;
use bno_core::eval::EvalError;
use bno_core::model::ModelError;
use bno_core::neural::NeuralError;
use bno_core::train::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) | DataError::BadMagic | DataError::BadFormat(_) => {
                CliError::Io(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<DmdError> for CliError {
    fn from(e: DmdError) -> Self {
        match e {
            DmdError::RankTooLarge { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<NeuralError> for CliError {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::NonFinite(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(_)
            | ModelError::BadMagic
            | ModelError::VersionMismatch { .. }
            | ModelError::BadCheckpoint(_) => CliError::Io(e.to_string()),
            ModelError::Dmd(d) => d.into(),
            ModelError::Neural(n) => n.into(),
            ModelError::Shape(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } => CliError::Numerical(e.to_string()),
            TrainError::EmptyTrainSplit | TrainError::BadSettings(_) => {
                CliError::Usage(e.to_string())
            }
            TrainError::Model(m) => m.into(),
            TrainError::Neural(n) => n.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::IndexOutOfRange { .. } | EvalError::Shape(_) => {
                CliError::Usage(e.to_string())
            }
            EvalError::Model(m) => m.into(),
            EvalError::Data(d) => d.into(),
        }
    }
}
