//! Synthetic event streams with known ground truth.
//!
//! Objects are rigid shapes translating at constant velocity. A pixel emits
//! when its centre enters the shape (ON) and, for shapes with area, when it
//! leaves again (OFF). Timestamps are rounded to whole microseconds.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::event::{Event, Polarity, SensorGeometry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthKind {
    /// Rectangle of `length` x `thickness` px whose long axis points at
    /// `angle_deg` (90 = vertical). Zero thickness gives a line that emits a
    /// single ON event per swept pixel.
    TranslatingBar {
        length: f64,
        thickness: f64,
        angle_deg: f64,
    },
    MovingBlob {
        radius: f64,
    },
    PoissonNoise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SynthKind,
    pub geometry: SensorGeometry,
    /// px/s; ignored for pure noise.
    pub velocity: (f64, f64),
    /// Object centre at t = 0, in pixels.
    pub start: (f64, f64),
    /// Background noise rate in events/s (the whole stream for `PoissonNoise`).
    pub rate: f64,
    pub duration_s: f64,
    pub seed: u64,
    /// Each edge crossing emits this many events, `burst_spacing_us` apart.
    pub events_per_crossing: u32,
    pub burst_spacing_us: u64,
    /// Uniform timing jitter of object events, +/- this many microseconds.
    pub jitter_us: f64,
    /// Pixels that fire periodically at `hot_pixel_rate` regardless of the scene.
    pub hot_pixels: Vec<(u16, u16)>,
    pub hot_pixel_rate: f64,
}

impl SyntheticSpec {
    pub fn new(kind: SynthKind, geometry: SensorGeometry) -> Self {
        let start = match kind {
            SynthKind::TranslatingBar { .. } | SynthKind::MovingBlob { .. } => {
                (geometry.width() as f64 / 2.0, geometry.height() as f64 / 2.0)
            }
            SynthKind::PoissonNoise => (0.0, 0.0),
        };
        SyntheticSpec {
            kind,
            geometry,
            velocity: (0.0, 0.0),
            start,
            rate: 0.0,
            duration_s: 1.0,
            seed: 0,
            events_per_crossing: 1,
            burst_spacing_us: 0,
            jitter_us: 0.0,
            hot_pixels: Vec::new(),
            hot_pixel_rate: 0.0,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(SynthError::InvalidSpec("duration must be positive"));
        }
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(SynthError::InvalidSpec("rate must be non-negative"));
        }
        if !(self.hot_pixel_rate >= 0.0 && self.hot_pixel_rate.is_finite()) {
            return Err(SynthError::InvalidSpec("hot pixel rate must be non-negative"));
        }
        if !(self.velocity.0.is_finite() && self.velocity.1.is_finite()) {
            return Err(SynthError::InvalidSpec("velocity must be finite"));
        }
        if self.events_per_crossing == 0 {
            return Err(SynthError::InvalidSpec("events per crossing must be at least 1"));
        }
        if !(self.jitter_us >= 0.0) {
            return Err(SynthError::InvalidSpec("jitter must be non-negative"));
        }
        match self.kind {
            SynthKind::TranslatingBar {
                length,
                thickness,
                angle_deg,
            } => {
                if !(length > 0.0 && thickness >= 0.0 && angle_deg.is_finite()) {
                    return Err(SynthError::InvalidSpec(
                        "bar needs positive length and non-negative thickness",
                    ));
                }
            }
            SynthKind::MovingBlob { radius } => {
                if !(radius > 0.0) {
                    return Err(SynthError::InvalidSpec("blob radius must be positive"));
                }
            }
            SynthKind::PoissonNoise => {}
        }
        for &(x, y) in &self.hot_pixels {
            if !self.geometry.contains(x, y) {
                return Err(SynthError::InvalidSpec("hot pixel outside the sensor"));
            }
        }
        Ok(())
    }
}

/// Ground truth aligned index-for-index with the generated events.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    /// True image velocity for object events, `None` for noise.
    pub velocity: Vec<Option<(f64, f64)>>,
    /// Dominant motion direction of the object, if any.
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyntheticStream {
    pub events: Vec<Event>,
    pub truth: GroundTruth,
}

/// Names the dominant direction of a velocity in image coordinates (y down).
pub fn direction_label(v: (f64, f64)) -> Option<&'static str> {
    if v.0 == 0.0 && v.1 == 0.0 {
        return None;
    }
    Some(if v.0.abs() >= v.1.abs() {
        if v.0 > 0.0 {
            "right"
        } else {
            "left"
        }
    } else if v.1 > 0.0 {
        "down"
    } else {
        "up"
    })
}

/// Time interval during which `|d . (q - v t)| <= h`, or `None` if never.
fn slab_interval(d: (f64, f64), q: (f64, f64), v: (f64, f64), h: f64) -> Option<(f64, f64)> {
    let dq = d.0 * q.0 + d.1 * q.1;
    let dv = d.0 * v.0 + d.1 * v.1;
    if dv == 0.0 {
        return (dq.abs() <= h).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let a = (dq - h) / dv;
    let b = (dq + h) / dv;
    Some(if a <= b { (a, b) } else { (b, a) })
}

/// Exact time, the event, and the true velocity at it.
type RawEvent = (f64, Event, Option<(f64, f64)>);

struct Emitter<'a> {
    spec: &'a SyntheticSpec,
    rng: &'a mut ChaCha8Rng,
    raw: Vec<RawEvent>,
}

impl Emitter<'_> {
    fn emit(&mut self, t_s: f64, x: u16, y: u16, polarity: Polarity, truth: Option<(f64, f64)>) {
        let spec = self.spec;
        for j in 0..spec.events_per_crossing {
            let mut t_us = t_s * 1e6 + (j as u64 * spec.burst_spacing_us) as f64;
            if spec.jitter_us > 0.0 {
                t_us += self.rng.gen_range(-spec.jitter_us..=spec.jitter_us);
            }
            let t_us = libm::round(t_us.max(0.0));
            if t_us > spec.duration_s * 1e6 {
                continue;
            }
            self.raw.push((t_us, Event::new(t_us as u64, x, y, polarity), truth));
        }
    }
}

/// Generates a stream and its ground truth. Deterministic given the spec.
pub fn synthesize(spec: &SyntheticSpec) -> Result<SyntheticStream, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g = spec.geometry;
    let v = spec.velocity;
    let duration = spec.duration_s;
    let moving = v.0 != 0.0 || v.1 != 0.0;

    let mut em = Emitter {
        spec,
        rng: &mut rng,
        raw: Vec::new(),
    };

    match spec.kind {
        SynthKind::TranslatingBar {
            length,
            thickness,
            angle_deg,
        } if moving => {
            let theta = angle_deg.to_radians();
            let axis = (libm::cos(theta), libm::sin(theta));
            let normal = (-axis.1, axis.0);
            for y in 0..g.height() {
                for x in 0..g.width() {
                    let q = (x as f64 - spec.start.0, y as f64 - spec.start.1);
                    let (Some(along), Some(across)) = (
                        slab_interval(axis, q, v, length / 2.0),
                        slab_interval(normal, q, v, thickness / 2.0),
                    ) else {
                        continue;
                    };
                    let enter = along.0.max(across.0).max(0.0);
                    let leave = along.1.min(across.1).min(duration);
                    if thickness == 0.0 {
                        // A line sweeps each pixel at a single instant.
                        if enter <= leave && enter > 0.0 && leave < duration {
                            em.emit(enter, x, y, Polarity::On, Some(v));
                        }
                        continue;
                    }
                    if enter >= leave {
                        continue;
                    }
                    if enter > 0.0 {
                        em.emit(enter, x, y, Polarity::On, Some(v));
                    }
                    if leave < duration {
                        em.emit(leave, x, y, Polarity::Off, Some(v));
                    }
                }
            }
        }
        SynthKind::MovingBlob { radius } if moving => {
            let vv = v.0 * v.0 + v.1 * v.1;
            for y in 0..g.height() {
                for x in 0..g.width() {
                    let q = (x as f64 - spec.start.0, y as f64 - spec.start.1);
                    let qv = q.0 * v.0 + q.1 * v.1;
                    let c = q.0 * q.0 + q.1 * q.1 - radius * radius;
                    let disc = qv * qv - vv * c;
                    if disc <= 0.0 {
                        continue;
                    }
                    let root = libm::sqrt(disc);
                    let enter = (qv - root) / vv;
                    let leave = (qv + root) / vv;
                    if leave <= 0.0 || enter >= duration {
                        continue;
                    }
                    if enter > 0.0 {
                        em.emit(enter, x, y, Polarity::On, Some(v));
                    }
                    if leave < duration {
                        em.emit(leave, x, y, Polarity::Off, Some(v));
                    }
                }
            }
        }
        _ => {}
    }

    let mut raw = em.raw;

    if spec.rate > 0.0 {
        let mut t = 0.0;
        loop {
            let u: f64 = rng.gen::<f64>();
            t += -libm::log(1.0 - u) / spec.rate;
            if t > duration {
                break;
            }
            let x = rng.gen_range(0..g.width());
            let y = rng.gen_range(0..g.height());
            let polarity = Polarity::from_bit(rng.gen::<bool>());
            let t_us = libm::floor(t * 1e6);
            raw.push((t_us, Event::new(t_us as u64, x, y, polarity), None));
        }
    }

    if spec.hot_pixel_rate > 0.0 {
        let period_us = 1e6 / spec.hot_pixel_rate;
        for (k, &(x, y)) in spec.hot_pixels.iter().enumerate() {
            let mut t_us = libm::floor(period_us * k as f64 / spec.hot_pixels.len() as f64);
            while t_us <= duration * 1e6 {
                let polarity = Polarity::from_bit((t_us as u64 / 7).is_multiple_of(2));
                raw.push((t_us, Event::new(t_us as u64, x, y, polarity), None));
                t_us = libm::floor(t_us + period_us.max(1.0));
            }
        }
    }

    raw.sort_by_key(|r| r.1.t);
    let mut stream = SyntheticStream {
        events: Vec::with_capacity(raw.len()),
        truth: GroundTruth {
            velocity: Vec::with_capacity(raw.len()),
            label: match spec.kind {
                SynthKind::PoissonNoise => None,
                _ => direction_label(v).map(String::from),
            },
        },
    };
    for (_, e, truth) in raw {
        stream.events.push(e);
        stream.truth.velocity.push(truth);
    }
    Ok(stream)
}

/// Piecewise-constant activity: each `(duration_s, rate)` segment contributes
/// `round(duration_s * rate)` evenly spaced events at uniformly random pixels.
pub fn activity_profile_stream(geometry: SensorGeometry, segments: &[(f64, f64)], seed: u64) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut start_us = 0u64;
    for &(duration_s, rate) in segments {
        let span_us = libm::round(duration_s * 1e6) as u64;
        let n = libm::round(duration_s * rate) as u64;
        for i in 0..n {
            let t = start_us + i * span_us / n;
            let x = rng.gen_range(0..geometry.width());
            let y = rng.gen_range(0..geometry.height());
            events.push(Event::new(t, x, y, Polarity::from_bit(rng.gen::<bool>())));
        }
        start_us += span_us;
    }
    events
}

/// The four motion classes of the synthetic gesture set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GestureDirection {
    Left,
    Right,
    Up,
    Down,
}

impl GestureDirection {
    pub const ALL: [GestureDirection; 4] = [
        GestureDirection::Left,
        GestureDirection::Right,
        GestureDirection::Up,
        GestureDirection::Down,
    ];

    pub fn label(self) -> &'static str {
        match self {
            GestureDirection::Left => "left",
            GestureDirection::Right => "right",
            GestureDirection::Up => "up",
            GestureDirection::Down => "down",
        }
    }

    fn unit(self) -> (f64, f64) {
        match self {
            GestureDirection::Left => (-1.0, 0.0),
            GestureDirection::Right => (1.0, 0.0),
            GestureDirection::Up => (0.0, -1.0),
            GestureDirection::Down => (0.0, 1.0),
        }
    }
}

/// A blob sweeping across the sensor in `direction`, with randomised size,
/// speed, path offset, edge bursts and background noise drawn from `seed`.
pub fn gesture_spec(direction: GestureDirection, geometry: SensorGeometry, seed: u64) -> SyntheticSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6765_7374_7572_6500);
    let (w, h) = (geometry.width() as f64, geometry.height() as f64);
    let radius = rng.gen_range(0.10..0.16) * w.min(h);
    let speed = rng.gen_range(0.9..1.3) * w.max(h);
    let u = direction.unit();
    let wobble = rng.gen_range(-0.08..0.08) * speed;
    let velocity = (u.0 * speed + u.1.abs() * wobble, u.1 * speed + u.0.abs() * wobble);
    let offset = rng.gen_range(-0.15..0.15);
    // Enter from the far side, cross the whole frame.
    let start = (
        w / 2.0 - u.0 * (w / 2.0 + radius) + u.1.abs() * offset * w,
        h / 2.0 - u.1 * (h / 2.0 + radius) + u.0.abs() * offset * h,
    );
    let travel = if u.0 != 0.0 { w } else { h } + 2.0 * radius;
    let mut spec = SyntheticSpec::new(SynthKind::MovingBlob { radius }, geometry);
    spec.velocity = velocity;
    spec.start = start;
    spec.duration_s = travel / speed;
    spec.rate = 0.02 * geometry.pixel_count() as f64 / spec.duration_s;
    spec.events_per_crossing = 3;
    spec.burst_spacing_us = 150;
    spec.jitter_us = 40.0;
    spec.seed = seed;
    spec
}
