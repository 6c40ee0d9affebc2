use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

/// Sign of the log-illuminance change that triggered an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    /// Channel index used by per-polarity state (`Off` = 0, `On` = 1).
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Polarity::Off => 0,
            Polarity::On => 1,
        }
    }

    /// +1 for `On`, -1 for `Off`.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Off => -1.0,
            Polarity::On => 1.0,
        }
    }

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Polarity::On
        } else {
            Polarity::Off
        }
    }
}

/// One change-detection sample. `t` is an absolute timestamp in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub const fn new(t: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Event { t, x, y, polarity }
    }

    pub const fn on(t: u64, x: u16, y: u16) -> Self {
        Event::new(t, x, y, Polarity::On)
    }

    pub const fn off(t: u64, x: u16, y: u16) -> Self {
        Event::new(t, x, y, Polarity::Off)
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum GeometryError {
    #[error("sensor geometry must be at least 1x1, got {width}x{height}")]
    Empty { width: u16, height: u16 },
}

/// Pixel array dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    width: u16,
    height: u16,
}

impl SensorGeometry {
    /// 304x240, the resolution of the reference ATIS sensor.
    pub const ATIS: SensorGeometry = SensorGeometry {
        width: 304,
        height: 240,
    };

    pub fn new(width: u16, height: u16) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::Empty { width, height });
        }
        Ok(SensorGeometry { width, height })
    }

    #[inline]
    pub fn width(&self) -> u16 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u16 {
        self.height
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    /// Row-major linear index, or `None` when out of bounds.
    #[inline]
    pub fn index(&self, x: u16, y: u16) -> Option<usize> {
        self.contains(x, y)
            .then(|| y as usize * self.width as usize + x as usize)
    }
}

impl fmt::Display for SensorGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Events per second.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EventRate(f64);

impl EventRate {
    pub fn new(rate: f64) -> Option<Self> {
        (rate >= 0.0 && rate.is_finite()).then_some(EventRate(rate))
    }

    #[inline]
    pub fn per_second(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum RateError {
    #[error("cannot compute an event rate from an empty stream")]
    EmptyStream,
    #[error("stream of {count} events spans zero time")]
    ZeroTimeSpan { count: usize },
}

/// Mean event rate `count / (t_last - t_first)` of a time-ordered stream.
pub fn compute_event_rate(events: &[Event]) -> Result<EventRate, RateError> {
    let (first, last) = match (events.first(), events.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(RateError::EmptyStream),
    };
    let span_us = last.t.saturating_sub(first.t);
    if span_us == 0 {
        return Err(RateError::ZeroTimeSpan { count: events.len() });
    }
    Ok(EventRate(events.len() as f64 * 1e6 / span_us as f64))
}

/// A problem found by [`validate_stream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    OutOfBounds { index: usize, x: u16, y: u16 },
    TimestampRegression { index: usize, previous: u64, t: u64 },
}

/// Lists every out-of-bounds coordinate and timestamp regression in `events`.
/// An empty report means every stage in this crate accepts the stream.
pub fn validate_stream(events: &[Event], geometry: SensorGeometry) -> Vec<Violation> {
    let mut report = Vec::new();
    let mut previous: Option<u64> = None;
    for (index, e) in events.iter().enumerate() {
        if !geometry.contains(e.x, e.y) {
            report.push(Violation::OutOfBounds { index, x: e.x, y: e.y });
        }
        if let Some(p) = previous {
            if e.t < p {
                report.push(Violation::TimestampRegression {
                    index,
                    previous: p,
                    t: e.t,
                });
            }
        }
        previous = Some(previous.map_or(e.t, |p| p.max(e.t)));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rate_is_count_over_span() {
        let events: Vec<Event> = (0..1000).map(|i| Event::on(i * 10_000 / 999, 0, 0)).collect();
        assert_eq!(events.last().unwrap().t - events[0].t, 10_000);
        let r = compute_event_rate(&events).unwrap();
        assert!((r.per_second() - 100_000.0).abs() < 1e-6);

        let two = [Event::on(0, 0, 0), Event::on(1_000_000, 1, 1)];
        assert_eq!(compute_event_rate(&two).unwrap().per_second(), 2.0);
    }

    #[test]
    fn navgesture_scale_rate() {
        // Average activity of the reference gesture recordings, 365.6k ev/s.
        let n = 365_600u64;
        let events: Vec<Event> = (0..n).map(|i| Event::on(i * 1_000_000 / (n - 1), 0, 0)).collect();
        let r = compute_event_rate(&events).unwrap().per_second();
        assert!((r - 365_600.0).abs() < 1e-6);
    }

    #[test]
    fn rate_errors() {
        assert_eq!(compute_event_rate(&[]), Err(RateError::EmptyStream));
        assert_eq!(
            compute_event_rate(&[Event::on(5, 0, 0)]),
            Err(RateError::ZeroTimeSpan { count: 1 })
        );
        assert_eq!(
            compute_event_rate(&[Event::on(5, 0, 0), Event::off(5, 1, 0)]),
            Err(RateError::ZeroTimeSpan { count: 2 })
        );
    }

    #[test]
    fn rate_invariant_under_time_shift() {
        let a = vec![Event::on(0, 0, 0), Event::on(7, 0, 0), Event::on(900, 0, 0)];
        let b: Vec<Event> = a
            .iter()
            .map(|e| Event {
                t: e.t + 123_456_789,
                ..*e
            })
            .collect();
        assert_eq!(compute_event_rate(&a), compute_event_rate(&b));
    }

    #[test]
    fn validation_reports() {
        let g = SensorGeometry::ATIS;
        assert!(validate_stream(&[Event::on(0, 303, 239), Event::on(0, 0, 0)], g).is_empty());
        assert_eq!(
            validate_stream(&[Event::on(0, 304, 10)], g),
            vec![Violation::OutOfBounds {
                index: 0,
                x: 304,
                y: 10
            }]
        );
        assert_eq!(
            validate_stream(&[Event::on(5, 1, 1), Event::on(3, 1, 1)], g),
            vec![Violation::TimestampRegression {
                index: 1,
                previous: 5,
                t: 3
            }]
        );
    }

    #[test]
    fn geometry_rejects_zero() {
        assert!(SensorGeometry::new(0, 5).is_err());
        assert!(SensorGeometry::new(5, 0).is_err());
        let g = SensorGeometry::new(4, 3).unwrap();
        assert_eq!(g.index(3, 2), Some(11));
        assert_eq!(g.index(4, 0), None);
    }
}
