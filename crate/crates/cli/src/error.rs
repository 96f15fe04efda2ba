use claimcheck_core::analysis::AnalysisError;
use claimcheck_core::descriptors::DescriptorError;
use claimcheck_core::ingest::IngestError;
use claimcheck_core::render::RenderError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_MODEL: i32 = 4;

/// Failure classes, each with its own exit code.
#[derive(Error, Debug)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("model error: {0}")]
    Model(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Model(_) => EXIT_MODEL,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DescriptorError> for CliError {
    fn from(e: DescriptorError) -> Self {
        match e {
            DescriptorError::Preset { .. } => CliError::Config(e.to_string()),
            DescriptorError::ZeroVector(_) | DescriptorError::DescriptorMismatch { .. } => CliError::Data(e.to_string()),
            DescriptorError::ModelLoad { .. } | DescriptorError::ShapeMismatch { .. } | DescriptorError::Inference { .. } => {
                CliError::Model(e.to_string())
            }
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Descriptor(d) => d.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Io { .. } => CliError::Config(e.to_string()),
            RenderError::Empty(_) => CliError::Data(e.to_string()),
        }
    }
}
