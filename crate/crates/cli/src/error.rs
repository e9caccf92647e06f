use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: xxz_core::Error,
    },
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl From<xxz_core::Error> for CliError {
    fn from(e: xxz_core::Error) -> Self {
        CliError::Stage { stage: "model", source: e }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Tags a core error with the pipeline stage it came from.
pub fn stage(stage: &'static str) -> impl Fn(xxz_core::Error) -> CliError {
    move |source| CliError::Stage { stage, source }
}
