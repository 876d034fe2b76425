//! Failure type of the binary and its exit codes.
//!
//! Each library module gets its own code so scripts can tell a bad config
//! from an unreadable mesh without parsing messages. Clap itself exits with 2
//! on usage errors.

use std::path::PathBuf;

use lesiontrack_core::annotations::AnnotationError;
use lesiontrack_core::correspondence::CorrespondenceError;
use lesiontrack_core::descriptors::DescriptorError;
use lesiontrack_core::evaluation::EvaluationError;
use lesiontrack_core::geodesics::GeodesicError;
use lesiontrack_core::mesh::MeshError;
use lesiontrack_core::pipeline::{ConfigError, PipelineError};
use lesiontrack_core::synth::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("unknown lesion label `{0}`")]
    UnknownLabel(String),
    #[error("{0}")]
    Usage(String),
}

pub const IO: i32 = 1;
pub const USAGE: i32 = 2;
pub const CONFIG: i32 = 3;
pub const MESH: i32 = 4;
pub const ANNOTATION: i32 = 5;
pub const GEODESIC: i32 = 6;
pub const DESCRIPTOR: i32 = 7;
pub const CORRESPONDENCE: i32 = 8;
pub const EVALUATION: i32 = 9;
pub const SYNTH: i32 = 10;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    pub fn format(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Self::Format {
            path: path.into(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } | Self::Format { .. } => IO,
            Self::Usage(_) => USAGE,
            Self::UnknownLabel(_) => ANNOTATION,
            Self::Config(_) => CONFIG,
            Self::Mesh(_) => MESH,
            Self::Annotation(_) => ANNOTATION,
            Self::Geodesic(_) => GEODESIC,
            Self::Descriptor(_) => DESCRIPTOR,
            Self::Pipeline(e) => match e {
                PipelineError::Config(_) => CONFIG,
                PipelineError::Annotation(_) => ANNOTATION,
                PipelineError::Geodesic(_) => GEODESIC,
                PipelineError::Descriptor(_) => DESCRIPTOR,
                PipelineError::Correspondence(CorrespondenceError::Geodesic(_)) => GEODESIC,
                PipelineError::Correspondence(CorrespondenceError::Descriptor(_)) => DESCRIPTOR,
                PipelineError::Correspondence(_)
                | PipelineError::NoLesions
                | PipelineError::ColorsUnresolved(_) => CORRESPONDENCE,
            },
            Self::Evaluation(_) => EVALUATION,
            Self::Synth(SynthError::Mesh(_)) => MESH,
            Self::Synth(SynthError::Annotation(_)) => ANNOTATION,
            Self::Synth(_) => SYNTH,
        }
    }
}
