use std::io;
use std::path::PathBuf;

use evgate_core::codec::CodecError;
use evgate_core::filter::FilterError;
use evgate_core::flow::FlowConfigError;
use evgate_core::hots::{BankFormatError, HotsError};
use evgate_core::latency::LatencyError;
use evgate_core::repr::ReprError;
use evgate_core::synth::SynthError;
use evgate_core::ProcessorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: CodecError,
    },
    #[error("{path}: {source}")]
    Bank {
        path: PathBuf,
        #[source]
        source: BankFormatError,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("processor failed on batch {batch}: {source}")]
    Processor {
        batch: usize,
        #[source]
        source: ProcessorError,
    },
    #[error("stream has {available} events, need {needed}")]
    StreamTooShort { needed: usize, available: usize },
    #[error(transparent)]
    Latency(#[from] LatencyError),
    #[error(transparent)]
    Hots(#[from] HotsError),
    #[error(transparent)]
    Repr(#[from] ReprError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    FlowConfig(#[from] FlowConfigError),
    #[error("pipeline stage panicked")]
    StagePanicked,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for IO and file-format problems, 2 for usage, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse { .. } | Error::Codec { .. } | Error::Bank { .. } => 1,
            Error::Usage(_) | Error::Synth(_) | Error::FlowConfig(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
