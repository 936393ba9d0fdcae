use std::fmt;

use xlqa_core::augment::AugmentError;
use xlqa_core::corpus::CorpusError;
use xlqa_core::trainer::TrainError;

pub const USAGE: i32 = 2;
pub const ADAPTER: i32 = 3;
pub const NUMERIC: i32 = 4;

/// A message and the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: USAGE, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<AugmentError> for CliError {
    fn from(e: AugmentError) -> Self {
        let code = match e {
            AugmentError::InvalidPlan(_) => USAGE,
            _ => ADAPTER,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let code = match e {
            TrainError::NonFiniteLoss(_) | TrainError::NonFiniteGradient { .. } => NUMERIC,
            _ => USAGE,
        };
        Self { code, message: e.to_string() }
    }
}
