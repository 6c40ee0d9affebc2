//! The event buffer gate, the live-view bitmap and the processing interface
//! that batches are handed to.

use alloc::string::String;
use alloc::vec::Vec;
use core::mem;

use thiserror::Error;

use crate::event::{Event, SensorGeometry};
use crate::grid::PixelGrid;

/// Fixed-capacity accumulator that releases a batch exactly when it fills.
#[derive(Debug, Clone)]
pub struct EventBuffer {
    capacity: usize,
    contents: Vec<Event>,
}

impl EventBuffer {
    /// `capacity` is clamped to at least 1.
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        EventBuffer {
            capacity,
            contents: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.contents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contents.is_empty()
    }

    pub fn push(&mut self, event: Event) -> Option<Vec<Event>> {
        self.contents.push(event);
        if self.contents.len() == self.capacity {
            Some(mem::replace(&mut self.contents, Vec::with_capacity(self.capacity)))
        } else {
            None
        }
    }

    /// Empties the buffer, returning the residual events if there were any.
    pub fn flush(&mut self) -> Option<Vec<Event>> {
        if self.contents.is_empty() {
            None
        } else {
            Some(mem::take(&mut self.contents))
        }
    }
}

/// Default live-view persistence, about two 60 Hz display frames.
pub const DEFAULT_DECAY_WINDOW_US: u64 = 30_000;

/// Binary bitmap of recent activity at sensor resolution.
#[derive(Debug, Clone)]
pub struct LiveView {
    last_event: PixelGrid<Option<u64>>,
    decay_window_us: u64,
    frame_rate_hz: f64,
}

impl LiveView {
    pub fn new(geometry: SensorGeometry, decay_window_us: u64) -> Self {
        LiveView {
            last_event: PixelGrid::new(geometry, None),
            decay_window_us,
            frame_rate_hz: 60.0,
        }
    }

    pub fn with_frame_rate(mut self, hz: f64) -> Self {
        self.frame_rate_hz = hz;
        self
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.last_event.geometry()
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn decay_window_us(&self) -> u64 {
        self.decay_window_us
    }

    /// Out-of-bounds events are ignored.
    #[inline]
    pub fn update(&mut self, e: &Event) {
        if let Some(cell) = self.last_event.get_mut(e.x, e.y) {
            *cell = Some(e.t);
        }
    }

    /// Row-major bitmap: a pixel is set iff it fired within
    /// `decay_window_us` before `now_us` (inclusive).
    pub fn snapshot(&self, now_us: u64) -> Vec<bool> {
        self.last_event
            .as_slice()
            .iter()
            .map(|c| matches!(c, Some(t) if *t <= now_us && now_us - t <= self.decay_window_us))
            .collect()
    }
}

/// Failure reported by a batch processor.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{message}")]
pub struct ProcessorError {
    pub message: String,
}

impl ProcessorError {
    pub fn new(message: impl Into<String>) -> Self {
        ProcessorError {
            message: message.into(),
        }
    }
}

/// An algorithm invoked once per full event buffer.
pub trait BatchProcessor {
    type Output;

    fn process(&mut self, batch: &[Event]) -> Result<Self::Output, ProcessorError>;

    /// Whether a short final batch at end of stream should be processed.
    fn accepts_partial(&self) -> bool {
        false
    }

    fn name(&self) -> &str {
        "processor"
    }
}

/// Processor that only counts, for gate and harness tests.
#[derive(Debug, Clone, Default)]
pub struct CountingProcessor {
    pub invocations: usize,
    pub partial: bool,
}

impl BatchProcessor for CountingProcessor {
    type Output = usize;

    fn process(&mut self, batch: &[Event]) -> Result<usize, ProcessorError> {
        self.invocations += 1;
        Ok(batch.len())
    }

    fn accepts_partial(&self) -> bool {
        self.partial
    }

    fn name(&self) -> &str {
        "count"
    }
}

/// Returns every batch unchanged.
#[derive(Debug, Clone, Default)]
pub struct IdentityProcessor;

impl BatchProcessor for IdentityProcessor {
    type Output = Vec<Event>;

    fn process(&mut self, batch: &[Event]) -> Result<Vec<Event>, ProcessorError> {
        Ok(batch.to_vec())
    }

    fn name(&self) -> &str {
        "identity"
    }
}
