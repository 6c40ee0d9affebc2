//! Runtime companion to `evgate-core`: the staged pipeline, execution
//! measurement, latency benchmarks, file formats and the command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod measure;
pub mod pipeline;

pub use error::{Error, Result};
pub use pipeline::{run_pipeline, Dispatch, PipelineOptions, PipelineRun, ReplayMode, Schedule, SharedLiveView};
