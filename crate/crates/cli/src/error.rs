use std::fmt;

use eapred::pipeline::{ErrorKind, PipelineError};

/// Failure classes, each with its own exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Input,
    Config,
    Numerical,
    Comparability,
    Other,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Other => 1,
            Kind::Input => 2,
            Kind::Config => 3,
            Kind::Numerical => 4,
            Kind::Comparability => 5,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let kind = match e.kind() {
            ErrorKind::Input => Kind::Input,
            ErrorKind::Config => Kind::Config,
            ErrorKind::Numerical => Kind::Numerical,
            ErrorKind::Comparability => Kind::Comparability,
            ErrorKind::Other => Kind::Other,
        };
        Self::new(kind, e.to_string())
    }
}

macro_rules! via_pipeline {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                PipelineError::from(e).into()
            }
        }
    )*};
}

via_pipeline!(
    eapred::data::DataError,
    eapred::features::FeatureError,
    eapred::labeling::LabelError,
    eapred::models::ModelError,
    eapred::training::TrainError,
    eapred::evaluation::EvalError,
    eapred::sentiment::SentimentError
);

pub type CliResult<T> = Result<T, CliError>;
