use std::path::PathBuf;

use fewbit_core::analog_ops::OpError;
use fewbit_core::capacity_engine::CapacityError;
use fewbit_core::code_construction::{ConstructionError, SynthesisError};
use fewbit_core::hybrid_sim::HybridError;
use fewbit_core::scalar_quantizer::QuantizerError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("root isolation did not converge: {0}")]
    IllConditioned(String),
    #[error("{0} point(s) did not converge")]
    NotConverged(usize),
    #[error("write failed: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Json(_) | CliError::Invalid(_) => 2,
            CliError::IllConditioned(_) => 3,
            CliError::NotConverged(_) => 4,
            CliError::Output(_) => 1,
        }
    }

    pub fn invalid(msg: impl std::fmt::Display) -> Self {
        CliError::Invalid(msg.to_string())
    }
}

impl From<OpError> for CliError {
    fn from(e: OpError) -> Self {
        match e {
            OpError::IllConditioned => CliError::IllConditioned(e.to_string()),
            e => CliError::invalid(e),
        }
    }
}

impl From<QuantizerError> for CliError {
    fn from(e: QuantizerError) -> Self {
        match e {
            QuantizerError::Op(op) => op.into(),
            e => CliError::invalid(e),
        }
    }
}

impl From<HybridError> for CliError {
    fn from(e: HybridError) -> Self {
        match e {
            HybridError::Op(op) => op.into(),
            e => CliError::invalid(e),
        }
    }
}

impl From<CapacityError> for CliError {
    fn from(e: CapacityError) -> Self {
        match e {
            CapacityError::NotConverged(_) => CliError::NotConverged(1),
            CapacityError::Quantizer(q) => q.into(),
            e => CliError::invalid(e),
        }
    }
}

impl From<ConstructionError> for CliError {
    fn from(e: ConstructionError) -> Self {
        CliError::invalid(e)
    }
}

impl From<SynthesisError> for CliError {
    fn from(e: SynthesisError) -> Self {
        CliError::invalid(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
