use std::path::PathBuf;

use thiserror::Error;

use crate::cluster::ClusterError;
use crate::events::EventError;
use crate::importance::ImportanceError;
use crate::ingest::IngestError;
use crate::kinematics::KinematicsError;
use crate::synth::SynthError;
use crate::temporal::TemporalError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Events(#[from] EventError),
    #[error(transparent)]
    Temporal(#[from] TemporalError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Importance(#[from] ImportanceError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("every threshold had too few events to analyze")]
    InsufficientSample,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 configuration, 3 data, 4 insufficient sample.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Toml { .. } | Error::Synth(_) => 2,
            Error::Events(e) => match e {
                EventError::FeatureLengthMismatch { .. } => 3,
                _ => 2,
            },
            Error::Ingest(IngestError::ZeroChunkSize) => 2,
            Error::InsufficientSample => 4,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
