//! Frame representations of event batches: temporally interpolated voxel
//! grids, pluggable grayscale reconstruction, and the per-second frame-rate
//! trace of a buffered stream.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::buffer::{BatchProcessor, ProcessorError};
use crate::event::{Event, SensorGeometry};

pub const DEFAULT_BINS: usize = 5;
pub const DISPLAY_RATE_HZ: f64 = 60.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReprError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("voxel grid needs at least one bin")]
    NoBins,
    #[error("event at ({x}, {y}) lies outside the sensor")]
    OutOfBounds { x: u16, y: u16 },
    #[error("grid geometry {got} does not match backend geometry {expected}")]
    GeometryMismatch {
        expected: SensorGeometry,
        got: SensorGeometry,
    },
    #[error("backend failure: {0}")]
    BackendFailure(String),
}

/// `bins` stacked frames, values indexed `(b * height + y) * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub bins: usize,
    pub geometry: SensorGeometry,
    pub values: Vec<f64>,
    pub t_start: u64,
    pub t_end: u64,
}

impl VoxelGrid {
    pub fn zeros(bins: usize, geometry: SensorGeometry) -> Self {
        VoxelGrid {
            bins,
            geometry,
            values: vec![0.0; bins * geometry.pixel_count()],
            t_start: 0,
            t_end: 0,
        }
    }

    pub fn bin(&self, b: usize) -> &[f64] {
        let n = self.geometry.pixel_count();
        &self.values[b * n..(b + 1) * n]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Sum over bins, one value per pixel.
    pub fn collapsed(&self) -> Vec<f64> {
        let n = self.geometry.pixel_count();
        let mut out = vec![0.0; n];
        for b in 0..self.bins {
            for (o, v) in out.iter_mut().zip(self.bin(b)) {
                *o += v;
            }
        }
        out
    }
}

/// Splits each event's polarity sign between the two bins adjacent to its
/// normalised time `(bins - 1) * (t - t_start) / (t_end - t_start)`.
pub fn voxel_grid(batch: &[Event], bins: usize, geometry: SensorGeometry) -> Result<VoxelGrid, ReprError> {
    let (first, last) = match (batch.first(), batch.last()) {
        (Some(f), Some(l)) => (f.t, l.t),
        _ => return Err(ReprError::EmptyBatch),
    };
    if bins == 0 {
        return Err(ReprError::NoBins);
    }
    let mut grid = VoxelGrid::zeros(bins, geometry);
    grid.t_start = first;
    grid.t_end = last;
    let span = last.saturating_sub(first) as f64;
    let scale = (bins - 1) as f64;
    let plane = geometry.pixel_count();
    for e in batch {
        let px = geometry
            .index(e.x, e.y)
            .ok_or(ReprError::OutOfBounds { x: e.x, y: e.y })?;
        let ts = if span > 0.0 {
            scale * e.t.saturating_sub(first) as f64 / span
        } else {
            0.0
        };
        let lo = libm::floor(ts);
        let frac = ts - lo;
        let lo = (lo as usize).min(bins - 1);
        let sign = e.polarity.sign();
        if frac > 0.0 && lo + 1 < bins {
            grid.values[lo * plane + px] += sign * (1.0 - frac);
            grid.values[(lo + 1) * plane + px] += sign * frac;
        } else {
            grid.values[lo * plane + px] += sign;
        }
    }
    Ok(grid)
}

/// Grayscale frame in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub geometry: SensorGeometry,
    pub pixels: Vec<f64>,
}

impl Frame {
    pub fn at(&self, x: u16, y: u16) -> Option<f64> {
        self.geometry.index(x, y).map(|i| self.pixels[i])
    }

    /// Standard deviation of pixel intensities.
    pub fn contrast(&self) -> f64 {
        let n = self.pixels.len() as f64;
        let mean = self.pixels.iter().sum::<f64>() / n;
        libm::sqrt(self.pixels.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n)
    }
}

/// Turns voxel grids into grayscale frames.
pub trait ReconstructionBackend {
    fn id(&self) -> &str;
    fn run(&mut self, grid: &VoxelGrid) -> Result<Frame, ReprError>;
}

pub fn reconstruct(backend: &mut dyn ReconstructionBackend, grid: &VoxelGrid) -> Result<Frame, ReprError> {
    let frame = backend.run(grid)?;
    if frame.geometry != grid.geometry || frame.pixels.len() != grid.geometry.pixel_count() {
        return Err(ReprError::BackendFailure(alloc::format!(
            "{} returned a frame of the wrong shape",
            backend.id()
        )));
    }
    if frame.pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(ReprError::BackendFailure(alloc::format!(
            "{} returned values outside [0, 1]",
            backend.id()
        )));
    }
    Ok(frame)
}

/// Baseline reconstruction: a per-pixel integrator of signed event mass that
/// leaks towards mid-gray.
///
/// `F = clamp(0.5 + decay * (F_prev - 0.5) + gain * sum_b grid_b, 0, 1)`,
/// starting from `F = 0.5`.
#[derive(Debug, Clone)]
pub struct LeakyIntegrator {
    pub decay: f64,
    pub gain: f64,
    state: Option<Frame>,
}

pub fn leaky_integrator_backend(decay_per_frame: f64, gain: f64) -> Result<LeakyIntegrator, ReprError> {
    if !(0.0..=1.0).contains(&decay_per_frame) || !gain.is_finite() {
        return Err(ReprError::BackendFailure(String::from(
            "decay must lie in [0, 1] and gain must be finite",
        )));
    }
    Ok(LeakyIntegrator {
        decay: decay_per_frame,
        gain,
        state: None,
    })
}

impl LeakyIntegrator {
    pub fn reset(&mut self) {
        self.state = None;
    }
}

impl ReconstructionBackend for LeakyIntegrator {
    fn id(&self) -> &str {
        "leaky-integrator"
    }

    fn run(&mut self, grid: &VoxelGrid) -> Result<Frame, ReprError> {
        let g = grid.geometry;
        let mut state = match self.state.take() {
            Some(f) if f.geometry == g => f,
            _ => Frame {
                geometry: g,
                pixels: vec![0.5; g.pixel_count()],
            },
        };
        let drive = grid.collapsed();
        for (p, d) in state.pixels.iter_mut().zip(drive) {
            *p = (0.5 + self.decay * (*p - 0.5) + self.gain * d).clamp(0.0, 1.0);
        }
        self.state = Some(state.clone());
        Ok(state)
    }
}

/// Batch processor producing one reconstructed frame per batch.
pub struct FrameProcessor {
    pub bins: usize,
    pub geometry: SensorGeometry,
    pub backend: Box<dyn ReconstructionBackend + Send>,
}

impl BatchProcessor for FrameProcessor {
    type Output = Frame;

    fn process(&mut self, batch: &[Event]) -> Result<Frame, ProcessorError> {
        let grid =
            voxel_grid(batch, self.bins, self.geometry).map_err(|e| ProcessorError::new(alloc::format!("{e}")))?;
        reconstruct(self.backend.as_mut(), &grid).map_err(|e| ProcessorError::new(alloc::format!("{e}")))
    }

    fn name(&self) -> &str {
        "voxel"
    }
}

/// Frames emitted in each second of stream time.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRateTrace {
    pub counts: Vec<u64>,
    pub display_rate_hz: f64,
}

impl FrameRateTrace {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn peak(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn exceeds_display_rate(&self, second: usize) -> bool {
        self.counts
            .get(second)
            .is_some_and(|&c| c as f64 > self.display_rate_hz)
    }

    /// `second_index,frames,exceeds_display_rate` rows with header.
    pub fn to_csv(&self) -> String {
        use core::fmt::Write;
        let mut out = String::from("second_index,frames,exceeds_display_rate\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{i},{c},{}", self.exceeds_display_rate(i));
        }
        out
    }
}

/// Counts full buffers of `n` events per second of stream time, attributing
/// each frame to the second in which its last event arrives (measured from
/// the first event). Covers every second up to the last event.
pub fn frames_per_second_trace(stream: &[Event], n: usize) -> FrameRateTrace {
    let n = n.max(1);
    let mut counts = Vec::new();
    if let (Some(first), Some(last)) = (stream.first(), stream.last()) {
        counts = vec![0; ((last.t - first.t) / 1_000_000) as usize + 1];
        for chunk in stream.chunks_exact(n) {
            let s = ((chunk[n - 1].t - first.t) / 1_000_000) as usize;
            counts[s] += 1;
        }
    }
    FrameRateTrace {
        counts,
        display_rate_hz: DISPLAY_RATE_HZ,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::activity_profile_stream;

    fn g() -> SensorGeometry {
        SensorGeometry::new(8, 6).unwrap()
    }

    #[test]
    fn single_event_goes_to_bin_zero() {
        let v = voxel_grid(&[Event::on(42, 3, 2)], 5, g()).unwrap();
        assert_eq!(v.bin(0)[2 * 8 + 3], 1.0);
        assert_eq!(v.total(), 1.0);
        assert_eq!((v.t_start, v.t_end), (42, 42));
    }

    #[test]
    fn bilinear_midpoint() {
        let batch = [Event::on(0, 0, 0), Event::off(625, 1, 1), Event::on(1000, 0, 0)];
        let v = voxel_grid(&batch, 5, g()).unwrap();
        let px = 8 + 1;
        assert_eq!(v.bin(2)[px], -0.5);
        assert_eq!(v.bin(3)[px], -0.5);
        assert_eq!(v.bin(4)[0], 1.0);
        assert!((v.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn voxel_errors() {
        assert_eq!(voxel_grid(&[], 5, g()), Err(ReprError::EmptyBatch));
        assert_eq!(voxel_grid(&[Event::on(0, 0, 0)], 0, g()), Err(ReprError::NoBins));
        assert_eq!(
            voxel_grid(&[Event::on(0, 8, 0)], 5, g()),
            Err(ReprError::OutOfBounds { x: 8, y: 0 })
        );
    }

    fn zero_grid() -> VoxelGrid {
        VoxelGrid::zeros(5, g())
    }

    #[test]
    fn integrator_starts_mid_gray() {
        let mut b = leaky_integrator_backend(0.8, 0.1).unwrap();
        let f = reconstruct(&mut b, &zero_grid()).unwrap();
        assert!(f.pixels.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn frozen_integrator() {
        let mut b = leaky_integrator_backend(1.0, 0.0).unwrap();
        let v = voxel_grid(&[Event::on(0, 1, 1), Event::off(10, 2, 2)], 5, g()).unwrap();
        for _ in 0..5 {
            assert!(reconstruct(&mut b, &v).unwrap().pixels.iter().all(|&p| p == 0.5));
        }
    }

    #[test]
    fn memoryless_integrator() {
        let mut b = leaky_integrator_backend(0.0, 0.2).unwrap();
        let v = voxel_grid(&[Event::on(0, 1, 1), Event::on(10, 1, 1)], 5, g()).unwrap();
        reconstruct(&mut b, &v).unwrap();
        let f = reconstruct(&mut b, &zero_grid()).unwrap();
        assert!(f.pixels.iter().all(|&p| p == 0.5));
        let f = reconstruct(&mut b, &v).unwrap();
        assert!((f.at(1, 1).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn bright_spot() {
        let mut b = leaky_integrator_backend(0.9, 0.05).unwrap();
        let batch: Vec<Event> = (0..6).map(|i| Event::on(i * 10, 4, 3)).collect();
        let f = reconstruct(&mut b, &voxel_grid(&batch, 5, g()).unwrap()).unwrap();
        let mut ring = 0.0;
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                if dx != 0 || dy != 0 {
                    ring += f.at((4 + dx) as u16, (3 + dy) as u16).unwrap();
                }
            }
        }
        assert!(f.at(4, 3).unwrap() > ring / 8.0);
    }

    #[test]
    fn fps_uniform_stream() {
        let s = activity_profile_stream(g(), &[(3.0, 100_000.0)], 1);
        assert_eq!(frames_per_second_trace(&s, 5000).counts, vec![20, 20, 20]);
        assert_eq!(frames_per_second_trace(&s, 10_000).counts, vec![10, 10, 10]);
        let csv = frames_per_second_trace(&s, 1000).to_csv();
        assert!(csv.starts_with("second_index,frames,exceeds_display_rate\n0,100,true\n"));
    }

    #[test]
    fn fps_empty() {
        assert_eq!(frames_per_second_trace(&[], 10).counts, Vec::<u64>::new());
    }
}
