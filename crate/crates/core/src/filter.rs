//! Pre-processing chain: hot-pixel mask, per-pixel refractory period and
//! spatiotemporal support filter, always applied in that order.
//!
//! Every stage is a causal scanner over a time-ordered stream. Stages drop
//! events but never reorder or modify them.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use thiserror::Error;

use crate::event::{Event, SensorGeometry};
use crate::grid::PixelGrid;

const NEVER: u64 = u64::MAX;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FilterError {
    #[error("event {index} at ({x}, {y}) lies outside the sensor")]
    OutOfBounds { index: usize, x: u16, y: u16 },
    #[error("hot-pixel calibration needs a stream spanning non-zero time")]
    ZeroTimeSpan,
}

/// Filter chain parameters.
///
/// `refractory_us == 0` makes the refractory stage a no-op. The spatiotemporal
/// stage is disabled when either `st_radius` or `st_window_us` is zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterConfig {
    pub refractory_us: u64,
    pub st_radius: u16,
    pub st_window_us: u64,
    pub hot_pixels: BTreeSet<(u16, u16)>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            refractory_us: 1000,
            st_radius: 1,
            st_window_us: 1000,
            hot_pixels: BTreeSet::new(),
        }
    }
}

impl FilterConfig {
    /// A configuration under which the chain is the identity.
    pub fn disabled() -> Self {
        FilterConfig {
            refractory_us: 0,
            st_radius: 0,
            st_window_us: 0,
            hot_pixels: BTreeSet::new(),
        }
    }

    pub fn spatiotemporal_enabled(&self) -> bool {
        self.st_radius > 0 && self.st_window_us > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RemovedByStage {
    pub hot_pixel: usize,
    pub refractory: usize,
    pub spatiotemporal: usize,
}

impl RemovedByStage {
    pub fn total(&self) -> usize {
        self.hot_pixel + self.refractory + self.spatiotemporal
    }
}

/// Conservation: `output_count + removed.total() == input_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FilterStats {
    pub input_count: usize,
    pub output_count: usize,
    pub removed: RemovedByStage,
}

impl FilterStats {
    pub fn kept_fraction(&self) -> f64 {
        if self.input_count == 0 {
            1.0
        } else {
            self.output_count as f64 / self.input_count as f64
        }
    }

    pub fn merge(&mut self, other: &FilterStats) {
        self.input_count += other.input_count;
        self.output_count += other.output_count;
        self.removed.hot_pixel += other.removed.hot_pixel;
        self.removed.refractory += other.removed.refractory;
        self.removed.spatiotemporal += other.removed.spatiotemporal;
    }
}

/// Pixels whose own event rate over the whole stream exceeds
/// `rate_threshold` events per second.
pub fn detect_hot_pixels(
    events: &[Event],
    geometry: SensorGeometry,
    rate_threshold: f64,
) -> Result<BTreeSet<(u16, u16)>, FilterError> {
    let span_us = match (events.first(), events.last()) {
        (Some(f), Some(l)) if l.t > f.t => l.t - f.t,
        _ => return Err(FilterError::ZeroTimeSpan),
    };
    let span_s = span_us as f64 * 1e-6;
    let mut counts = PixelGrid::new(geometry, 0u64);
    for (index, e) in events.iter().enumerate() {
        match counts.get_mut(e.x, e.y) {
            Some(c) => *c += 1,
            None => return Err(FilterError::OutOfBounds { index, x: e.x, y: e.y }),
        }
    }
    let width = geometry.width() as usize;
    Ok(counts
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c as f64 / span_s > rate_threshold)
        .map(|(i, _)| ((i % width) as u16, (i / width) as u16))
        .collect())
}

/// Keeps an event unless a kept event at the same pixel (any polarity) lies
/// strictly less than `refractory_us` earlier.
#[derive(Debug, Clone)]
pub struct Refractory {
    period_us: u64,
    last_kept: PixelGrid<u64>,
}

impl Refractory {
    pub fn new(geometry: SensorGeometry, period_us: u64) -> Self {
        Refractory {
            period_us,
            last_kept: PixelGrid::new(geometry, NEVER),
        }
    }

    /// `None` when the event lies outside the sensor.
    #[inline]
    pub fn accept(&mut self, e: &Event) -> Option<bool> {
        let last = self.last_kept.get_mut(e.x, e.y)?;
        if *last != NEVER && e.t.saturating_sub(*last) < self.period_us {
            return Some(false);
        }
        *last = e.t;
        Some(true)
    }
}

/// Keeps an event iff an earlier event reaching this stage (kept or not) fired
/// at another pixel within Chebyshev distance `radius` at most `window_us`
/// before it.
#[derive(Debug, Clone)]
pub struct Spatiotemporal {
    radius: i32,
    window_us: u64,
    last_seen: PixelGrid<u64>,
}

impl Spatiotemporal {
    pub fn new(geometry: SensorGeometry, radius: u16, window_us: u64) -> Self {
        Spatiotemporal {
            radius: radius as i32,
            window_us,
            last_seen: PixelGrid::new(geometry, NEVER),
        }
    }

    #[inline]
    pub fn accept(&mut self, e: &Event) -> Option<bool> {
        if !self.last_seen.geometry().contains(e.x, e.y) {
            return None;
        }
        let (cx, cy) = (e.x as i32, e.y as i32);
        let mut supported = false;
        'scan: for dy in -self.radius..=self.radius {
            for dx in -self.radius..=self.radius {
                if dx == 0 && dy == 0 {
                    continue;
                }
                if let Some(&t) = self.last_seen.get_signed(cx + dx, cy + dy) {
                    if t != NEVER && e.t.saturating_sub(t) <= self.window_us {
                        supported = true;
                        break 'scan;
                    }
                }
            }
        }
        *self.last_seen.get_mut(e.x, e.y)? = e.t;
        Some(supported)
    }
}

/// Streaming form of the full chain.
#[derive(Debug, Clone)]
pub struct FilterChain {
    hot_mask: Option<PixelGrid<bool>>,
    refractory: Option<Refractory>,
    spatiotemporal: Option<Spatiotemporal>,
    geometry: SensorGeometry,
    stats: FilterStats,
}

impl FilterChain {
    pub fn new(geometry: SensorGeometry, config: &FilterConfig) -> Self {
        let hot_mask = (!config.hot_pixels.is_empty()).then(|| {
            let mut mask = PixelGrid::new(geometry, false);
            for &(x, y) in &config.hot_pixels {
                if let Some(m) = mask.get_mut(x, y) {
                    *m = true;
                }
            }
            mask
        });
        FilterChain {
            hot_mask,
            refractory: (config.refractory_us > 0).then(|| Refractory::new(geometry, config.refractory_us)),
            spatiotemporal: config
                .spatiotemporal_enabled()
                .then(|| Spatiotemporal::new(geometry, config.st_radius, config.st_window_us)),
            geometry,
            stats: FilterStats::default(),
        }
    }

    /// Runs one event through every stage. `index` is only used for error
    /// reporting.
    pub fn accept(&mut self, index: usize, e: &Event) -> Result<bool, FilterError> {
        if !self.geometry.contains(e.x, e.y) {
            return Err(FilterError::OutOfBounds { index, x: e.x, y: e.y });
        }
        self.stats.input_count += 1;
        if let Some(mask) = &self.hot_mask {
            if mask.get(e.x, e.y) == Some(&true) {
                self.stats.removed.hot_pixel += 1;
                return Ok(false);
            }
        }
        if let Some(r) = &mut self.refractory {
            if r.accept(e) != Some(true) {
                self.stats.removed.refractory += 1;
                return Ok(false);
            }
        }
        if let Some(st) = &mut self.spatiotemporal {
            if st.accept(e) != Some(true) {
                self.stats.removed.spatiotemporal += 1;
                return Ok(false);
            }
        }
        self.stats.output_count += 1;
        Ok(true)
    }

    /// Filters `events` into `out`, returning how many were appended.
    pub fn run_into(
        &mut self,
        events: &[Event],
        first_index: usize,
        out: &mut Vec<Event>,
    ) -> Result<usize, FilterError> {
        let before = out.len();
        for (i, e) in events.iter().enumerate() {
            if self.accept(first_index + i, e)? {
                out.push(*e);
            }
        }
        Ok(out.len() - before)
    }

    pub fn stats(&self) -> FilterStats {
        self.stats
    }
}

/// Applies the configured chain to a whole stream.
pub fn apply_chain(
    events: &[Event],
    geometry: SensorGeometry,
    config: &FilterConfig,
) -> Result<(Vec<Event>, FilterStats), FilterError> {
    let mut chain = FilterChain::new(geometry, config);
    let mut out = Vec::with_capacity(events.len());
    chain.run_into(events, 0, &mut out)?;
    Ok((out, chain.stats()))
}

fn run_stage(
    events: &[Event],
    mut accept: impl FnMut(&Event) -> Option<bool>,
) -> Result<(Vec<Event>, usize), FilterError> {
    let mut out = Vec::with_capacity(events.len());
    for (index, e) in events.iter().enumerate() {
        match accept(e) {
            Some(true) => out.push(*e),
            Some(false) => {}
            None => return Err(FilterError::OutOfBounds { index, x: e.x, y: e.y }),
        }
    }
    let removed = events.len() - out.len();
    Ok((out, removed))
}

pub fn refractory_filter(
    events: &[Event],
    geometry: SensorGeometry,
    refractory_us: u64,
) -> Result<(Vec<Event>, FilterStats), FilterError> {
    let mut stage = Refractory::new(geometry, refractory_us);
    let (out, removed) = run_stage(events, |e| stage.accept(e))?;
    let stats = FilterStats {
        input_count: events.len(),
        output_count: out.len(),
        removed: RemovedByStage {
            refractory: removed,
            ..Default::default()
        },
    };
    Ok((out, stats))
}

pub fn spatiotemporal_filter(
    events: &[Event],
    geometry: SensorGeometry,
    st_radius: u16,
    st_window_us: u64,
) -> Result<(Vec<Event>, FilterStats), FilterError> {
    let mut stage = Spatiotemporal::new(geometry, st_radius, st_window_us);
    let (out, removed) = run_stage(events, |e| stage.accept(e))?;
    let stats = FilterStats {
        input_count: events.len(),
        output_count: out.len(),
        removed: RemovedByStage {
            spatiotemporal: removed,
            ..Default::default()
        },
    };
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const G: SensorGeometry = SensorGeometry::ATIS;

    #[test]
    fn refractory_window_and_boundary() {
        let (out, stats) = refractory_filter(&[Event::on(0, 5, 5), Event::on(500, 5, 5)], G, 1000).unwrap();
        assert_eq!(out, vec![Event::on(0, 5, 5)]);
        assert_eq!(stats.removed.refractory, 1);

        let both = [Event::on(0, 5, 5), Event::off(1000, 5, 5)];
        assert_eq!(refractory_filter(&both, G, 1000).unwrap().0, both.to_vec());

        let adjacent = [Event::on(0, 5, 5), Event::on(1, 6, 5)];
        assert_eq!(refractory_filter(&adjacent, G, 1000).unwrap().0, adjacent.to_vec());
    }

    #[test]
    fn refractory_measures_from_last_kept() {
        // 0 kept, 600 dropped, 1100 kept (1100 - 0 >= 1000) even though only
        // 500 after the dropped one.
        let s = [Event::on(0, 1, 1), Event::on(600, 1, 1), Event::on(1100, 1, 1)];
        let (out, _) = refractory_filter(&s, G, 1000).unwrap();
        assert_eq!(out, vec![s[0], s[2]]);
    }

    #[test]
    fn spatiotemporal_support() {
        let (out, _) = spatiotemporal_filter(&[Event::on(10, 3, 3)], G, 1, 1000).unwrap();
        assert!(out.is_empty());

        let pair = [Event::on(0, 3, 3), Event::on(500, 4, 3)];
        let (out, stats) = spatiotemporal_filter(&pair, G, 1, 1000).unwrap();
        assert_eq!(out, vec![pair[1]]);
        assert_eq!(stats.removed.spatiotemporal, 1);

        // Same pixel history does not count as support.
        let same = [Event::on(0, 3, 3), Event::on(500, 3, 3)];
        assert!(spatiotemporal_filter(&same, G, 1, 1000).unwrap().0.is_empty());

        // Window boundary is inclusive; beyond it the neighbour is stale.
        let edge = [Event::on(0, 3, 3), Event::on(1000, 4, 4), Event::on(2001, 5, 5)];
        assert_eq!(spatiotemporal_filter(&edge, G, 1, 1000).unwrap().0, vec![edge[1]]);
    }

    #[test]
    fn hot_pixels() {
        let mut events = Vec::new();
        for i in 0..10_000u64 {
            events.push(Event::on(i * 100, 7, 9));
        }
        let hot = detect_hot_pixels(&events, G, 1000.0).unwrap();
        assert_eq!(hot.into_iter().collect::<Vec<_>>(), vec![(7, 9)]);

        let sparse: Vec<Event> = (0..50u64).map(|i| Event::on(i * 20_000, (i % 300) as u16, 1)).collect();
        assert!(detect_hot_pixels(&sparse, G, 1000.0).unwrap().is_empty());

        assert_eq!(
            detect_hot_pixels(&[Event::on(1, 0, 0)], G, 1.0),
            Err(FilterError::ZeroTimeSpan)
        );
    }

    #[test]
    fn disabled_chain_is_identity() {
        let s = [Event::on(0, 1, 1), Event::on(1, 1, 1), Event::off(1, 200, 100)];
        let (out, stats) = apply_chain(&s, G, &FilterConfig::disabled()).unwrap();
        assert_eq!(out, s.to_vec());
        assert_eq!(stats.output_count, 3);
        assert_eq!(stats.removed.total(), 0);
    }

    #[test]
    fn chain_stage_order() {
        let mut cfg = FilterConfig::default();
        cfg.hot_pixels.insert((1, 1));
        let s = [
            Event::on(0, 1, 1),   // hot
            Event::on(0, 2, 1),   // isolated (hot pixel event never reaches ST stage)
            Event::on(100, 2, 1), // refractory
            Event::on(200, 3, 1), // supported by (2,1)
        ];
        let (out, stats) = apply_chain(&s, G, &cfg).unwrap();
        assert_eq!(out, vec![s[3]]);
        assert_eq!(
            stats.removed,
            RemovedByStage {
                hot_pixel: 1,
                refractory: 1,
                spatiotemporal: 1
            }
        );
    }

    #[test]
    fn out_of_bounds_is_reported() {
        let s = [Event::on(0, 304, 0)];
        assert_eq!(
            apply_chain(&s, G, &FilterConfig::default()),
            Err(FilterError::OutOfBounds { index: 0, x: 304, y: 0 })
        );
    }
}
