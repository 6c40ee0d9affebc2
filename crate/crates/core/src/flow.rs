//! Event-based optical flow with aperture-robust multi-scale correction.
//!
//! Three steps per event:
//!
//! 1. fit a plane `t = a*x + b*y + c` to the most recent same-polarity
//!    timestamps around the event, giving the local normal flow
//!    `(a, b) / (a^2 + b^2)`;
//! 2. for each spatial scale, average the speeds of the recent local flows
//!    within that Chebyshev radius and keep the scale with the largest mean;
//! 3. report the mean unit direction at that scale, scaled by its mean speed.
//!
//! Normal flow underestimates the speed of an edge by the cosine of the angle
//! between edge normal and motion, so pooling over the scale that maximises
//! mean speed favours neighbourhoods that see the true motion.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::buffer::{BatchProcessor, ProcessorError};
use crate::event::{Event, SensorGeometry};
use crate::grid::PixelGrid;

const NEVER: u64 = u64::MAX;
const DEGENERATE_GRADIENT: f64 = 1e-12;
const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum FlowError {
    #[error("plane fit has {support} supporting pixels, need {required} spanning two dimensions")]
    InsufficientSupport { support: usize, required: usize },
    #[error("fitted plane has no temporal gradient")]
    DegeneratePlane,
    #[error("local flow speed {speed} px/s exceeds the sanity cap")]
    Outlier { speed: f64 },
    #[error("no valid local flows around the event")]
    NoLocalFlows,
    #[error("event at ({x}, {y}) lies outside the sensor")]
    OutOfBounds { x: u16, y: u16 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub fit_radius: u16,
    pub fit_window_us: u64,
    pub min_support: usize,
    /// Ascending, non-empty.
    pub scale_set: Vec<u16>,
    pub max_speed: f64,
    /// Age limit of local flows taking part in the multi-scale pooling.
    pub pool_window_us: u64,
    /// One pass of dropping residuals above three RMS and refitting.
    pub trim_outliers: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            fit_radius: 3,
            fit_window_us: 20_000,
            min_support: 5,
            scale_set: vec![3, 5, 7, 9, 11],
            max_speed: 1e6,
            pool_window_us: 20_000,
            trim_outliers: true,
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FlowConfigError {
    #[error("scale set must be non-empty and strictly ascending")]
    BadScaleSet,
    #[error("min_support must be at least 3")]
    MinSupport,
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowConfigError> {
        if self.scale_set.is_empty() || self.scale_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FlowConfigError::BadScaleSet);
        }
        if self.min_support < 3 {
            return Err(FlowConfigError::MinSupport);
        }
        Ok(())
    }

    fn max_scale(&self) -> u16 {
        self.scale_set.last().copied().unwrap_or(0)
    }
}

/// Least-squares plane through local timestamps. Coordinates are pixel
/// offsets from the fitted event; `c` is the fitted time at the event pixel,
/// in microseconds relative to the event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub inlier_count: usize,
    pub residual_rms: f64,
}

/// Velocity in px/s. `scale` is the pooling radius chosen by the correction,
/// 0 for a plain normal flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowVector {
    pub vx: f64,
    pub vy: f64,
    pub speed: f64,
    pub scale: u16,
}

impl FlowVector {
    pub fn new(vx: f64, vy: f64, scale: u16) -> Self {
        FlowVector {
            vx,
            vy,
            speed: libm::sqrt(vx * vx + vy * vy),
            scale,
        }
    }

    /// Direction in radians, `atan2(vy, vx)`.
    pub fn angle(&self) -> f64 {
        libm::atan2(self.vy, self.vx)
    }
}

fn solve_plane(points: &[(f64, f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = points.len() as f64;
    let (mut mx, mut my, mut mt) = (0.0, 0.0, 0.0);
    for &(x, y, t) in points {
        mx += x;
        my += y;
        mt += t;
    }
    mx /= n;
    my /= n;
    mt /= n;
    let (mut sxx, mut sxy, mut syy, mut sxt, mut syt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, t) in points {
        let (dx, dy, dt) = (x - mx, y - my, t - mt);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxt += dx * dt;
        syt += dy * dt;
    }
    // Eigen-decomposition of the 2x2 scatter matrix; a rank-1 scatter (all
    // support on one line) takes the minimum-norm solution.
    let half_tr = (sxx + syy) / 2.0;
    let half_diff = (sxx - syy) / 2.0;
    let root = libm::sqrt(half_diff * half_diff + sxy * sxy);
    let l_max = half_tr + root;
    let l_min = half_tr - root;
    if l_max <= 0.0 {
        return None;
    }
    let (a, b) = if l_min > RANK_TOLERANCE * l_max {
        let det = sxx * syy - sxy * sxy;
        ((syy * sxt - sxy * syt) / det, (sxx * syt - sxy * sxt) / det)
    } else {
        let (ux, uy) = if sxx >= syy {
            (l_max - syy, sxy)
        } else {
            (sxy, l_max - sxx)
        };
        let norm = libm::sqrt(ux * ux + uy * uy);
        let (ux, uy) = (ux / norm, uy / norm);
        let k = (ux * sxt + uy * syt) / l_max;
        (k * ux, k * uy)
    };
    Some((a, b, mt - a * mx - b * my))
}

fn residual_rms(points: &[(f64, f64, f64)], (a, b, c): (f64, f64, f64)) -> f64 {
    let ss: f64 = points
        .iter()
        .map(|&(x, y, t)| {
            let r = t - (a * x + b * y + c);
            r * r
        })
        .sum();
    libm::sqrt(ss / points.len() as f64)
}

/// Fits `t = a*x + b*y + c` to `(x, y, t)` points.
pub fn fit_plane(points: &[(f64, f64, f64)], min_support: usize, trim_outliers: bool) -> Result<PlaneFit, FlowError> {
    let insufficient = FlowError::InsufficientSupport {
        support: points.len(),
        required: min_support,
    };
    if points.len() < min_support {
        return Err(insufficient);
    }
    let mut coeffs = solve_plane(points).ok_or(insufficient)?;
    let mut rms = residual_rms(points, coeffs);
    let mut inliers = points.len();
    if trim_outliers && rms > 0.0 {
        let (a, b, c) = coeffs;
        let kept: Vec<(f64, f64, f64)> = points
            .iter()
            .copied()
            .filter(|&(x, y, t)| libm::fabs(t - (a * x + b * y + c)) <= 3.0 * rms)
            .collect();
        if kept.len() < points.len() && kept.len() >= min_support {
            if let Some(refit) = solve_plane(&kept) {
                coeffs = refit;
                rms = residual_rms(&kept, coeffs);
                inliers = kept.len();
            }
        }
    }
    let (a, b, c) = coeffs;
    if libm::fabs(a) < DEGENERATE_GRADIENT && libm::fabs(b) < DEGENERATE_GRADIENT {
        return Err(FlowError::DegeneratePlane);
    }
    Ok(PlaneFit {
        a,
        b,
        c,
        inlier_count: inliers,
        residual_rms: rms,
    })
}

/// Velocity perpendicular to the fitted surface: `(a, b) / (a^2 + b^2)`,
/// converted from px/us to px/s.
pub fn normal_flow(plane: &PlaneFit) -> Result<FlowVector, FlowError> {
    let g = plane.a * plane.a + plane.b * plane.b;
    if !(g > 0.0) || (libm::fabs(plane.a) < DEGENERATE_GRADIENT && libm::fabs(plane.b) < DEGENERATE_GRADIENT) {
        return Err(FlowError::DegeneratePlane);
    }
    Ok(FlowVector {
        vx: plane.a / g * 1e6,
        vy: plane.b / g * 1e6,
        speed: 1e6 / libm::sqrt(g),
        scale: 0,
    })
}

/// A local flow at a pixel offset from the event being corrected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborFlow {
    pub dx: i32,
    pub dy: i32,
    pub flow: FlowVector,
}

#[derive(Debug, Clone, Copy, Default)]
struct RingSum {
    count: usize,
    speed: f64,
    ux: f64,
    uy: f64,
}

impl RingSum {
    #[inline]
    fn add(&mut self, speed: f64, ux: f64, uy: f64) {
        self.count += 1;
        self.speed += speed;
        self.ux += ux;
        self.uy += uy;
    }
}

/// Steps 2 and 3 on per-ring sums (ring `d` holds flows at Chebyshev
/// distance exactly `d`).
fn select_scale(rings: &[RingSum], scales: &[u16], fallback: (f64, f64)) -> Result<FlowVector, FlowError> {
    let mut acc = RingSum::default();
    let mut next_ring = 0usize;
    let mut best: Option<(f64, RingSum, u16)> = None;
    for &s in scales {
        while next_ring <= s as usize && next_ring < rings.len() {
            let r = rings[next_ring];
            acc.count += r.count;
            acc.speed += r.speed;
            acc.ux += r.ux;
            acc.uy += r.uy;
            next_ring += 1;
        }
        if acc.count == 0 {
            continue;
        }
        let mean = acc.speed / acc.count as f64;
        if best.is_none_or(|(m, _, _)| mean > m) {
            best = Some((mean, acc, s));
        }
    }
    let (mean_speed, sum, scale) = best.ok_or(FlowError::NoLocalFlows)?;
    let norm = libm::sqrt(sum.ux * sum.ux + sum.uy * sum.uy);
    let (dx, dy) = if norm > 0.0 {
        (sum.ux / norm, sum.uy / norm)
    } else {
        fallback
    };
    Ok(FlowVector {
        vx: mean_speed * dx,
        vy: mean_speed * dy,
        speed: mean_speed,
        scale,
    })
}

fn unit(f: &FlowVector) -> (f64, f64) {
    if f.speed > 0.0 {
        (f.vx / f.speed, f.vy / f.speed)
    } else {
        (0.0, 0.0)
    }
}

/// Multi-scale correction of the flow at an event from the valid local flows
/// around it. Flows beyond the largest scale are ignored; ties in mean speed
/// go to the smallest scale.
pub fn arms_correct(neighbors: &[NeighborFlow], config: &FlowConfig) -> Result<FlowVector, FlowError> {
    let max_scale = config.max_scale() as i32;
    let mut rings = vec![RingSum::default(); max_scale as usize + 1];
    let mut fallback = (0.0, 0.0);
    for nb in neighbors {
        let d = nb.dx.abs().max(nb.dy.abs());
        if d > max_scale {
            continue;
        }
        let (ux, uy) = unit(&nb.flow);
        if d == 0 {
            fallback = (ux, uy);
        }
        rings[d as usize].add(nb.flow.speed, ux, uy);
    }
    select_scale(&rings, &config.scale_set, fallback)
}

#[derive(Debug, Clone, Copy)]
struct StoredFlow {
    t: u64,
    speed: f64,
    ux: f64,
    uy: f64,
}

/// Rolling per-pixel state carried across batches: the latest timestamp per
/// pixel and polarity, and the latest valid local flow per pixel.
#[derive(Debug, Clone)]
pub struct FlowState {
    times: PixelGrid<[u64; 2]>,
    flows: PixelGrid<Option<StoredFlow>>,
    points: Vec<(f64, f64, f64)>,
    rings: Vec<RingSum>,
}

impl FlowState {
    pub fn new(geometry: SensorGeometry) -> Self {
        FlowState {
            times: PixelGrid::new(geometry, [NEVER; 2]),
            flows: PixelGrid::new(geometry, None),
            points: Vec::with_capacity(64),
            rings: Vec::new(),
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.times.geometry()
    }

    /// Records `e` in the timestamp index.
    pub fn record(&mut self, e: &Event) -> Result<(), FlowError> {
        let cell = self
            .times
            .get_mut(e.x, e.y)
            .ok_or(FlowError::OutOfBounds { x: e.x, y: e.y })?;
        cell[e.polarity.index()] = e.t;
        Ok(())
    }

    /// Step 1 on the current index (which must already contain `e`).
    pub fn local_plane_fit(&mut self, e: &Event, config: &FlowConfig) -> Result<PlaneFit, FlowError> {
        let r = config.fit_radius as i32;
        let pol = e.polarity.index();
        let (cx, cy) = (e.x as i32, e.y as i32);
        self.points.clear();
        for dy in -r..=r {
            for dx in -r..=r {
                if let Some(cell) = self.times.get_signed(cx + dx, cy + dy) {
                    let t = cell[pol];
                    if t != NEVER && t <= e.t && e.t - t <= config.fit_window_us {
                        self.points.push((dx as f64, dy as f64, t as f64 - e.t as f64));
                    }
                }
            }
        }
        fit_plane(&self.points, config.min_support, config.trim_outliers)
    }

    /// Local normal flow at `e`, stored for later pooling when valid.
    pub fn local_flow(&mut self, e: &Event, config: &FlowConfig) -> Result<FlowVector, FlowError> {
        let plane = self.local_plane_fit(e, config)?;
        let flow = normal_flow(&plane)?;
        if flow.speed > config.max_speed {
            return Err(FlowError::Outlier { speed: flow.speed });
        }
        let (ux, uy) = unit(&flow);
        if let Some(slot) = self.flows.get_mut(e.x, e.y) {
            *slot = Some(StoredFlow {
                t: e.t,
                speed: flow.speed,
                ux,
                uy,
            });
        }
        Ok(flow)
    }

    /// Steps 2 and 3 around `e` over the stored local flows.
    pub fn corrected_flow(
        &mut self,
        e: &Event,
        own: &FlowVector,
        config: &FlowConfig,
    ) -> Result<FlowVector, FlowError> {
        let max_scale = config.max_scale() as i32;
        self.rings.clear();
        self.rings.resize(max_scale as usize + 1, RingSum::default());
        let (cx, cy) = (e.x as i32, e.y as i32);
        let g = self.flows.geometry();
        let (w, h) = (g.width() as i32, g.height() as i32);
        let flows = self.flows.as_slice();
        for y in (cy - max_scale).max(0)..=(cy + max_scale).min(h - 1) {
            let dy = (y - cy).abs();
            let row = &flows[(y * w) as usize..((y + 1) * w) as usize];
            for x in (cx - max_scale).max(0)..=(cx + max_scale).min(w - 1) {
                if let Some(f) = &row[x as usize] {
                    if f.t <= e.t && e.t - f.t <= config.pool_window_us {
                        let d = dy.max((x - cx).abs()) as usize;
                        self.rings[d].add(f.speed, f.ux, f.uy);
                    }
                }
            }
        }
        select_scale(&self.rings, &config.scale_set, unit(own))
    }

    /// Full per-event path: index update, local fit, correction.
    pub fn process_event(&mut self, e: &Event, config: &FlowConfig) -> Result<FlowVector, FlowError> {
        self.record(e)?;
        let own = self.local_flow(e, config)?;
        self.corrected_flow(e, &own, config)
    }
}

/// Tally of events that produced no flow vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlowFailures {
    pub insufficient_support: usize,
    pub degenerate: usize,
    pub outliers: usize,
    pub no_local_flows: usize,
    pub out_of_bounds: usize,
}

impl FlowFailures {
    fn count(&mut self, e: FlowError) {
        match e {
            FlowError::InsufficientSupport { .. } => self.insufficient_support += 1,
            FlowError::DegeneratePlane => self.degenerate += 1,
            FlowError::Outlier { .. } => self.outliers += 1,
            FlowError::NoLocalFlows => self.no_local_flows += 1,
            FlowError::OutOfBounds { .. } => self.out_of_bounds += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.insufficient_support + self.degenerate + self.outliers + self.no_local_flows + self.out_of_bounds
    }
}

/// Per-event results of one batch, aligned with the batch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowBatch {
    pub vectors: Vec<Option<FlowVector>>,
    pub failures: FlowFailures,
}

/// Processes a batch in order against the rolling state. Output per event
/// does not depend on how the stream is cut into batches.
pub fn flow_batch(batch: &[Event], state: &mut FlowState, config: &FlowConfig) -> FlowBatch {
    let mut out = FlowBatch {
        vectors: Vec::with_capacity(batch.len()),
        failures: FlowFailures::default(),
    };
    for e in batch {
        match state.process_event(e, config) {
            Ok(v) => out.vectors.push(Some(v)),
            Err(err) => {
                out.failures.count(err);
                out.vectors.push(None);
            }
        }
    }
    out
}

/// Batch processor wrapping [`flow_batch`].
#[derive(Debug, Clone)]
pub struct FlowProcessor {
    pub state: FlowState,
    pub config: FlowConfig,
}

impl FlowProcessor {
    pub fn new(geometry: SensorGeometry, config: FlowConfig) -> Self {
        FlowProcessor {
            state: FlowState::new(geometry),
            config,
        }
    }
}

impl BatchProcessor for FlowProcessor {
    type Output = FlowBatch;

    fn process(&mut self, batch: &[Event]) -> Result<FlowBatch, ProcessorError> {
        Ok(flow_batch(batch, &mut self.state, &self.config))
    }

    fn accepts_partial(&self) -> bool {
        true
    }

    fn name(&self) -> &str {
        "flow"
    }
}

/// Smallest absolute difference between two angles, in degrees.
pub fn angular_error_deg(a: f64, b: f64) -> f64 {
    let mut d = libm::fmod(libm::fabs(a - b), 2.0 * core::f64::consts::PI);
    if d > core::f64::consts::PI {
        d = 2.0 * core::f64::consts::PI - d;
    }
    d.to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_plane_in_a_row() {
        let pts: Vec<_> = (0..5).map(|x| (x as f64, 0.0, 1000.0 * x as f64)).collect();
        let p = fit_plane(&pts, 5, true).unwrap();
        assert!((p.a - 1000.0).abs() < 1e-9);
        assert!(p.b.abs() < 1e-9);
        assert!(p.residual_rms < 1e-9);
        assert_eq!(p.inlier_count, 5);
    }

    #[test]
    fn single_pixel_support_is_rejected() {
        let pts = [(2.0, 3.0, 0.0); 6];
        assert!(matches!(
            fit_plane(&pts, 5, true),
            Err(FlowError::InsufficientSupport { .. })
        ));
        assert!(matches!(
            fit_plane(&pts[..3], 5, true),
            Err(FlowError::InsufficientSupport { .. })
        ));
    }

    #[test]
    fn flat_plane_is_degenerate() {
        let pts: Vec<_> = (0..9).map(|i| ((i % 3) as f64, (i / 3) as f64, 7.0)).collect();
        assert_eq!(fit_plane(&pts, 5, true), Err(FlowError::DegeneratePlane));
    }

    #[test]
    fn trimming_rejects_a_stray_point() {
        let mut pts: Vec<_> = (0..25)
            .map(|i| {
                (
                    (i % 5) as f64,
                    (i / 5) as f64,
                    500.0 * (i % 5) as f64 - 200.0 * (i / 5) as f64,
                )
            })
            .collect();
        pts[7].2 += 20_000.0;
        let p = fit_plane(&pts, 5, true).unwrap();
        assert_eq!(p.inlier_count, 24);
        assert!((p.a - 500.0).abs() < 1e-6 && (p.b + 200.0).abs() < 1e-6);
    }

    #[test]
    fn normal_flow_units() {
        let mk = |a, b| PlaneFit {
            a,
            b,
            c: 0.0,
            inlier_count: 5,
            residual_rms: 0.0,
        };
        let v = normal_flow(&mk(1000.0, 0.0)).unwrap();
        assert!((v.vx - 1000.0).abs() < 1e-9 && v.vy == 0.0 && (v.speed - 1000.0).abs() < 1e-9);
        let v = normal_flow(&mk(0.0, 2000.0)).unwrap();
        assert!(v.vx == 0.0 && (v.vy - 500.0).abs() < 1e-9);
        assert_eq!(normal_flow(&mk(0.0, 0.0)), Err(FlowError::DegeneratePlane));
    }

    fn nb(dx: i32, dy: i32, vx: f64, vy: f64) -> NeighborFlow {
        NeighborFlow {
            dx,
            dy,
            flow: FlowVector::new(vx, vy, 0),
        }
    }

    #[test]
    fn constant_field_returns_itself_at_smallest_scale() {
        let mut flows = Vec::new();
        for dy in -11..=11 {
            for dx in -11..=11 {
                flows.push(nb(dx, dy, 250.0, 0.0));
            }
        }
        let v = arms_correct(&flows, &FlowConfig::default()).unwrap();
        assert!((v.vx - 250.0).abs() < 1e-9 && v.vy.abs() < 1e-9);
        assert_eq!(v.scale, 3);
    }

    #[test]
    fn single_scale_is_plain_mean() {
        let cfg = FlowConfig {
            scale_set: vec![2],
            ..FlowConfig::default()
        };
        let flows = [nb(0, 0, 100.0, 0.0), nb(1, 1, 0.0, 300.0), nb(5, 0, 1e4, 0.0)];
        let v = arms_correct(&flows, &cfg).unwrap();
        assert_eq!(v.scale, 2);
        assert!((v.speed - 200.0).abs() < 1e-9);
        let s = core::f64::consts::FRAC_1_SQRT_2;
        assert!((v.vx - 200.0 * s).abs() < 1e-9 && (v.vy - 200.0 * s).abs() < 1e-9);
    }

    #[test]
    fn larger_scale_wins_on_higher_mean_speed() {
        let flows = [nb(0, 0, 100.0, 0.0), nb(4, 0, 0.0, 900.0)];
        let v = arms_correct(&flows, &FlowConfig::default()).unwrap();
        assert_eq!(v.scale, 5);
        assert!((v.speed - 500.0).abs() < 1e-9);
        assert_eq!(arms_correct(&[], &FlowConfig::default()), Err(FlowError::NoLocalFlows));
    }

    #[test]
    fn angular_error_wraps() {
        assert!((angular_error_deg(0.1, -0.1).to_radians() - 0.2).abs() < 1e-12);
        assert!((angular_error_deg(3.0, -3.0) - (2.0 * core::f64::consts::PI - 6.0).to_degrees()).abs() < 1e-9);
    }
}
