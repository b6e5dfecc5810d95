use std::fmt;

use residual_racing::Error;

/// Failure category; determines the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Asset,
    Runtime,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub source: Error,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Config => 1,
            Kind::Asset => 2,
            Kind::Runtime => 3,
        }
    }

    /// Classifies an error raised while reading configs, checkpoints and track assets.
    pub fn loading(source: Error) -> Self {
        let kind = match source {
            Error::Config(_) | Error::InvalidParameter(_) => Kind::Config,
            _ => Kind::Asset,
        };
        Self { kind, source }
    }

    pub fn runtime(source: Error) -> Self {
        Self {
            kind: Kind::Runtime,
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            kind: Kind::Config,
            source: Error::Config(msg.into()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self.kind {
            Kind::Config => "configuration error",
            Kind::Asset => "asset error",
            Kind::Runtime => "runtime failure",
        };
        write!(f, "{label}: {}", self.source)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = std::result::Result<T, CliError>;
