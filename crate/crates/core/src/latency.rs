//! Accumulated latency per second of a buffered event pipeline.
//!
//! With an input rate `R` (events/s), buffer size `N` and per-event camera
//! cost `lambda_cam` (s):
//!
//! ```text
//! L_cam    = R * lambda_cam
//! L_buffer = N / R
//! L_exec   = (R / N) * lambda_exec(N)
//! L        = L_cam + L_buffer + L_exec      real time iff L <= 1
//! ```
//!
//! All terms are dimensionless (seconds of latency accumulated per second).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum LatencyError {
    #[error("buffer latency is undefined at zero event rate")]
    ZeroRate,
    #[error("buffer size must be at least 1")]
    ZeroBufferSize,
    #[error("buffer size {n} outside the measured range {min}..={max}")]
    OutOfProfileRange { n: usize, min: usize, max: usize },
    #[error("execution profile has no samples")]
    EmptyProfile,
    #[error("invalid execution profile: {0}")]
    InvalidProfile(&'static str),
    #[error("invalid camera cost component")]
    InvalidCameraCost,
}

/// How buffering delay is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BufferModel {
    /// `N / R`.
    #[default]
    FillTime,
    /// Mean waiting time `N / (2R)` per event, times `R` events: `N / 2`.
    MeanWait,
}

impl BufferModel {
    pub fn name(self) -> &'static str {
        match self {
            BufferModel::FillTime => "fill-time",
            BufferModel::MeanWait => "mean-wait",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fill-time" | "paper" => Some(BufferModel::FillTime),
            "mean-wait" => Some(BufferModel::MeanWait),
            _ => None,
        }
    }
}

/// Per-packet transfer, decode and filter cost of the camera stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraCost {
    pub t_transfer: f64,
    pub t_decode: f64,
    pub t_filter: f64,
    pub n_packet: f64,
}

impl CameraCost {
    pub fn new(t_transfer: f64, t_decode: f64, t_filter: f64, n_packet: f64) -> Result<Self, LatencyError> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(ok(t_transfer) && ok(t_decode) && ok(t_filter) && n_packet > 0.0 && n_packet.is_finite()) {
            return Err(LatencyError::InvalidCameraCost);
        }
        Ok(CameraCost {
            t_transfer,
            t_decode,
            t_filter,
            n_packet,
        })
    }

    /// A cost expressed directly per event.
    pub fn per_event(lambda_cam: f64) -> Result<Self, LatencyError> {
        CameraCost::new(lambda_cam, 0.0, 0.0, 1.0)
    }

    /// Seconds per event.
    pub fn lambda_cam(&self) -> f64 {
        (self.t_transfer + self.t_decode + self.t_filter) / self.n_packet
    }
}

pub fn l_cam(rate: f64, lambda_cam: f64) -> f64 {
    rate * lambda_cam
}

pub fn l_buffer(rate: f64, n: usize) -> Result<f64, LatencyError> {
    l_buffer_with(rate, n, BufferModel::FillTime)
}

pub fn l_buffer_with(rate: f64, n: usize, model: BufferModel) -> Result<f64, LatencyError> {
    if n == 0 {
        return Err(LatencyError::ZeroBufferSize);
    }
    if !(rate > 0.0) {
        return Err(LatencyError::ZeroRate);
    }
    Ok(match model {
        BufferModel::FillTime => n as f64 * (1.0 / rate),
        BufferModel::MeanWait => n as f64 / 2.0,
    })
}

pub fn l_exec(rate: f64, n: usize, lambda_exec: f64) -> Result<f64, LatencyError> {
    if n == 0 {
        return Err(LatencyError::ZeroBufferSize);
    }
    Ok(rate / n as f64 * lambda_exec)
}

/// Measured execution latency (seconds per batch) against buffer size.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecProfile {
    samples: Vec<(usize, f64)>,
}

impl ExecProfile {
    /// Samples are sorted by `N`; sizes must be distinct and at least 1.
    pub fn new(mut samples: Vec<(usize, f64)>) -> Result<Self, LatencyError> {
        if samples.is_empty() {
            return Err(LatencyError::EmptyProfile);
        }
        samples.sort_by_key(|s| s.0);
        if samples[0].0 == 0 {
            return Err(LatencyError::InvalidProfile("buffer size 0"));
        }
        if samples.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(LatencyError::InvalidProfile("duplicate buffer size"));
        }
        if samples.iter().any(|s| !(s.1 >= 0.0 && s.1.is_finite())) {
            return Err(LatencyError::InvalidProfile("negative or non-finite latency"));
        }
        Ok(ExecProfile { samples })
    }

    /// Same latency at every listed size.
    pub fn constant(sizes: &[usize], lambda_exec: f64) -> Result<Self, LatencyError> {
        ExecProfile::new(sizes.iter().map(|&n| (n, lambda_exec)).collect())
    }

    pub fn samples(&self) -> &[(usize, f64)] {
        &self.samples
    }

    /// Linear interpolation between neighbouring samples; no extrapolation.
    pub fn lambda_at(&self, n: usize) -> Result<f64, LatencyError> {
        let first = self.samples[0];
        let last = self.samples[self.samples.len() - 1];
        if n < first.0 || n > last.0 {
            return Err(LatencyError::OutOfProfileRange {
                n,
                min: first.0,
                max: last.0,
            });
        }
        let hi = self.samples.partition_point(|s| s.0 < n);
        let (n1, l1) = self.samples[hi];
        if n1 == n {
            return Ok(l1);
        }
        let (n0, l0) = self.samples[hi - 1];
        let w = (n - n0) as f64 / (n1 - n0) as f64;
        Ok(l0 + w * (l1 - l0))
    }
}

/// The three latency terms and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyBreakdown {
    pub l_cam: f64,
    pub l_buffer: f64,
    pub l_exec: f64,
    pub l_total: f64,
    pub real_time: bool,
}

impl LatencyBreakdown {
    pub fn from_terms(l_cam: f64, l_buffer: f64, l_exec: f64) -> Self {
        let l_total = l_cam + l_buffer + l_exec;
        LatencyBreakdown {
            l_cam,
            l_buffer,
            l_exec,
            l_total,
            real_time: l_total <= 1.0,
        }
    }
}

pub fn l_total(
    camera: &CameraCost,
    profile: &ExecProfile,
    rate: f64,
    n: usize,
    model: BufferModel,
) -> Result<LatencyBreakdown, LatencyError> {
    let lambda_exec = profile.lambda_at(n)?;
    Ok(LatencyBreakdown::from_terms(
        l_cam(rate, camera.lambda_cam()),
        l_buffer_with(rate, n, model)?,
        l_exec(rate, n, lambda_exec)?,
    ))
}

/// One row of a latency sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub algorithm: String,
    pub rate: f64,
    pub n: usize,
    pub latency: LatencyBreakdown,
}

/// Evaluates the model over every `(R, N)` pair. Purely analytical: the
/// profile carries the measurements, `R` is imposed.
pub fn sweep_table(
    algorithm: &str,
    camera: &CameraCost,
    profile: &ExecProfile,
    rates: &[f64],
    sizes: &[usize],
    model: BufferModel,
) -> Result<Vec<SweepRow>, LatencyError> {
    let mut rows = Vec::with_capacity(rates.len() * sizes.len());
    for &rate in rates {
        for &n in sizes {
            rows.push(SweepRow {
                algorithm: String::from(algorithm),
                rate,
                n,
                latency: l_total(camera, profile, rate, n, model)?,
            });
        }
    }
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: &str = "algorithm,R,N,L_cam,L_buffer,L_exec,L_total,real_time";

/// CSV rendering with a header row; reals in scientific notation with ten
/// significant digits.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let l = &r.latency;
        let _ = writeln!(
            out,
            "{},{:.9e},{},{:.9e},{:.9e},{:.9e},{:.9e},{}",
            r.algorithm, r.rate, r.n, l.l_cam, l.l_buffer, l.l_exec, l.l_total, l.real_time
        );
    }
    out
}

/// Buffer size minimising `L_total` at the given rate (first one on ties).
pub fn argmin_n(rows: &[SweepRow], rate: f64) -> Option<&SweepRow> {
    rows.iter()
        .filter(|r| r.rate == rate)
        .fold(None, |best: Option<&SweepRow>, r| match best {
            Some(b) if b.latency.l_total <= r.latency.l_total => Some(b),
            _ => Some(r),
        })
}
