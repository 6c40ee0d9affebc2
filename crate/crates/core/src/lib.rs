//! Allocation-only building blocks for event-camera processing.
//!
//! Everything here is pure computation over in-memory event streams: the
//! packet codec, synthetic stream generators, the pre-processing filter
//! chain, the event buffer gate and live view, the accumulated-latency
//! model, aperture-robust optical flow, time-surface gesture features and
//! voxel-grid representations. IO, threads, clocks and the command line
//! live in the companion `evgate` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod buffer;
pub mod codec;
pub mod event;
pub mod filter;
pub mod flow;
pub mod grid;
pub mod hots;
pub mod latency;
pub mod repr;
pub mod synth;

pub use buffer::{BatchProcessor, EventBuffer, LiveView, ProcessorError};
pub use event::{
    compute_event_rate, validate_stream, Event, EventRate, Polarity, RateError, SensorGeometry, Violation,
};
