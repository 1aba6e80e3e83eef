use std::fmt;

use dtpnet::forge::ForgeError;
use dtpnet::metrics::MetricError;
use dtpnet::model::ModelError;
use dtpnet::probe::ProbeError;
use dtpnet::trainer::{CheckpointError, TrainError};

pub const USAGE: u8 = 2;
pub const IO: u8 = 3;
pub const DIVERGED: u8 = 4;
pub const METRIC: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(USAGE, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(IO, message)
    }

    /// Prefixes the message with what was being done.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::io(e.to_string())
    }
}

impl From<ForgeError> for CliError {
    fn from(e: ForgeError) -> Self {
        let code = match e {
            ForgeError::Degenerate(_) | ForgeError::ZeroPowerArtifact => USAGE,
            _ => IO,
        };
        Self::new(code, e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let code = match e {
            ModelError::Config(_) | ModelError::UnknownVariant(_) => USAGE,
            _ => IO,
        };
        Self::new(code, e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        Self::new(METRIC, e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        Self::io(e.to_string())
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        match e {
            ProbeError::Model(m) => m.into(),
            ProbeError::Metric(m) => m.into(),
            ProbeError::Invalid(m) => Self::usage(m),
            other => Self::io(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => Self::usage(e.to_string()),
            TrainError::Diverged { .. } | TrainError::NonFiniteGradient { .. } => Self::new(DIVERGED, e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Metric(m) => m.into(),
            TrainError::EmptySplit(_) | TrainError::Shape(_) => Self::io(e.to_string()),
        }
    }
}
