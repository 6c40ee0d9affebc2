//! Time-surface gesture features: linearly decaying local surfaces, online
//! prototype clustering, prototype-activation histograms and kNN
//! classification.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::buffer::{BatchProcessor, ProcessorError};
use crate::event::{Event, SensorGeometry};
use crate::filter::{FilterChain, FilterConfig, FilterError};
use crate::grid::PixelGrid;

const NEVER: u64 = u64::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HotsError {
    #[error("training data yielded {got} surfaces, need at least {needed} distinct ones")]
    InsufficientData { needed: usize, got: usize },
    #[error("no events left in the window after filtering")]
    EmptyWindow,
    #[error("{got} training signatures, need at least {needed}")]
    NotEnoughTrainingData { needed: usize, got: usize },
    #[error("surface of length {got} does not match bank surface length {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HotsConfig {
    /// Surface half-width in pixels.
    pub radius: u16,
    /// Linear decay horizon in microseconds.
    pub tau_us: u64,
    pub prototypes: usize,
    /// Odd.
    pub k_nn: usize,
    /// Base learning rate; a prototype updated `n` times moves by `alpha0 / (1 + n)`.
    pub alpha0: f64,
    /// Length of a gesture capture, measured from its first event.
    pub window_us: u64,
}

impl Default for HotsConfig {
    fn default() -> Self {
        HotsConfig {
            radius: 4,
            tau_us: 20_000,
            prototypes: 32,
            k_nn: 3,
            alpha0: 1.0,
            window_us: 2_000_000,
        }
    }
}

impl HotsConfig {
    pub fn validate(&self) -> Result<(), HotsError> {
        if self.radius < 1 {
            return Err(HotsError::InvalidConfig("radius must be at least 1"));
        }
        if self.tau_us == 0 {
            return Err(HotsError::InvalidConfig("tau must be positive"));
        }
        if self.prototypes < 2 {
            return Err(HotsError::InvalidConfig("need at least 2 prototypes"));
        }
        if self.k_nn.is_multiple_of(2) {
            return Err(HotsError::InvalidConfig("k_nn must be odd"));
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return Err(HotsError::InvalidConfig("alpha0 must be in (0, 1]"));
        }
        Ok(())
    }

    pub fn surface_len(&self) -> usize {
        surface_len(self.radius)
    }
}

/// Number of cells in a two-channel surface of half-width `radius`.
pub fn surface_len(radius: u16) -> usize {
    let side = 2 * radius as usize + 1;
    2 * side * side
}

/// Surface values laid out as `[polarity][dy][dx]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSurface {
    pub values: Vec<f64>,
    pub center: (u16, u16),
    pub t_ref: u64,
}

/// Latest timestamp per pixel and polarity.
#[derive(Debug, Clone)]
pub struct TimeSurfaceState {
    times: PixelGrid<[u64; 2]>,
}

impl TimeSurfaceState {
    pub fn new(geometry: SensorGeometry) -> Self {
        TimeSurfaceState {
            times: PixelGrid::new(geometry, [NEVER; 2]),
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.times.geometry()
    }

    /// Out-of-bounds events are ignored.
    #[inline]
    pub fn update(&mut self, e: &Event) {
        if let Some(cell) = self.times.get_mut(e.x, e.y) {
            cell[e.polarity.index()] = e.t;
        }
    }

    pub fn last_time(&self, x: u16, y: u16, channel: usize) -> Option<u64> {
        self.times.get(x, y).map(|c| c[channel]).filter(|&t| t != NEVER)
    }

    /// Writes the surface around `(cx, cy)` at time `t_ref` into `out`, which
    /// must hold `surface_len(radius)` values.
    pub fn surface_into(&self, cx: u16, cy: u16, t_ref: u64, radius: u16, tau_us: u64, out: &mut [f64]) {
        let r = radius as i32;
        let side = (2 * r + 1) as usize;
        let tau = tau_us as f64;
        for (row, dy) in (-r..=r).enumerate() {
            for (col, dx) in (-r..=r).enumerate() {
                let cell = self.times.get_signed(cx as i32 + dx, cy as i32 + dy);
                for ch in 0..2 {
                    let v = match cell {
                        Some(c) if c[ch] != NEVER && c[ch] <= t_ref => {
                            let v = 1.0 - (t_ref - c[ch]) as f64 / tau;
                            if v > 0.0 {
                                v
                            } else {
                                0.0
                            }
                        }
                        _ => 0.0,
                    };
                    out[ch * side * side + row * side + col] = v;
                }
            }
        }
    }

    /// Applies `e` and returns the surface it triggers.
    pub fn time_surface(&mut self, e: &Event, radius: u16, tau_us: u64) -> TimeSurface {
        self.update(e);
        let mut values = vec![0.0; surface_len(radius)];
        self.surface_into(e.x, e.y, e.t, radius, tau_us, &mut values);
        TimeSurface {
            values,
            center: (e.x, e.y),
            t_ref: e.t,
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance, or `None` once the partial sum exceeds `bound`.
/// Accumulation order matches [`squared_distance`], so an accepted value is
/// bit-identical to it.
#[inline]
fn squared_distance_below(a: &[f64], b: &[f64], bound: f64) -> Option<f64> {
    let mut acc = 0.0;
    for (ca, cb) in a.chunks(18).zip(b.chunks(18)) {
        for (x, y) in ca.iter().zip(cb) {
            acc += (x - y) * (x - y);
        }
        if acc > bound {
            return None;
        }
    }
    Some(acc)
}

/// Index and squared distance of the nearest row, lowest index on ties.
fn nearest_row(rows: &[Vec<f64>], surface: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, p) in rows.iter().enumerate() {
        if let Some(d) = squared_distance_below(surface, p, best.1) {
            if d < best.1 {
                best = (j, d);
            }
        }
    }
    best
}

/// Learned prototypes with the surface parameters they were learned under.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    pub radius: u16,
    pub tau_us: u64,
    pub prototypes: Vec<Vec<f64>>,
    pub activation_counts: Vec<u64>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BankFormatError {
    #[error("missing HOTS magic")]
    BadMagic,
    #[error("file is {got} bytes, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("bank must hold at least one prototype")]
    Empty,
    #[error("prototype value is not finite")]
    NonFinite,
}

pub const BANK_MAGIC: &[u8; 4] = b"HOTS";
const BANK_HEADER_BYTES: usize = 4 + 4 + 4 + 8;

impl PrototypeBank {
    pub fn new(radius: u16, tau_us: u64, prototypes: Vec<Vec<f64>>) -> Result<Self, HotsError> {
        let expected = surface_len(radius);
        if prototypes.is_empty() {
            return Err(HotsError::InsufficientData { needed: 1, got: 0 });
        }
        if let Some(p) = prototypes.iter().find(|p| p.len() != expected) {
            return Err(HotsError::ShapeMismatch { expected, got: p.len() });
        }
        let k = prototypes.len();
        Ok(PrototypeBank {
            radius,
            tau_us,
            prototypes,
            activation_counts: vec![0; k],
        })
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn surface_len(&self) -> usize {
        surface_len(self.radius)
    }

    /// Nearest prototype and its Euclidean distance, lowest index on ties.
    pub fn nearest(&self, surface: &[f64]) -> (usize, f64) {
        let (j, d) = nearest_row(&self.prototypes, surface);
        (j, libm::sqrt(d))
    }

    /// Like [`nearest`](Self::nearest), counting the activation.
    pub fn match_prototype(&mut self, surface: &[f64]) -> Result<(usize, f64), HotsError> {
        if surface.len() != self.surface_len() {
            return Err(HotsError::ShapeMismatch {
                expected: self.surface_len(),
                got: surface.len(),
            });
        }
        let (j, d) = self.nearest(surface);
        self.activation_counts[j] += 1;
        Ok((j, d))
    }

    /// `HOTS`, K (u32), radius (u32), tau in us (u64), then every prototype
    /// value as f64, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BANK_HEADER_BYTES + 8 * self.len() * self.surface_len());
        out.extend_from_slice(BANK_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.radius as u32).to_le_bytes());
        out.extend_from_slice(&self.tau_us.to_le_bytes());
        for p in &self.prototypes {
            for v in p {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BankFormatError> {
        if bytes.len() < BANK_HEADER_BYTES {
            return Err(BankFormatError::Length {
                expected: BANK_HEADER_BYTES,
                got: bytes.len(),
            });
        }
        if &bytes[..4] != BANK_MAGIC {
            return Err(BankFormatError::BadMagic);
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let k = u32_at(4) as usize;
        let radius = u32_at(8);
        let tau_us = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        if k == 0 {
            return Err(BankFormatError::Empty);
        }
        let radius = u16::try_from(radius).map_err(|_| BankFormatError::Length {
            expected: BANK_HEADER_BYTES,
            got: bytes.len(),
        })?;
        let len = surface_len(radius);
        let expected = k
            .checked_mul(len)
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(BANK_HEADER_BYTES))
            .unwrap_or(usize::MAX);
        if bytes.len() != expected {
            return Err(BankFormatError::Length {
                expected,
                got: bytes.len(),
            });
        }
        let mut values = bytes[BANK_HEADER_BYTES..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut prototypes = Vec::with_capacity(k);
        for _ in 0..k {
            let p: Vec<f64> = values.by_ref().take(len).collect();
            if p.iter().any(|v| !v.is_finite()) {
                return Err(BankFormatError::NonFinite);
            }
            prototypes.push(p);
        }
        Ok(PrototypeBank {
            radius,
            tau_us,
            prototypes,
            activation_counts: vec![0; k],
        })
    }
}

/// Online clustering over a sequence of surfaces.
#[derive(Debug, Clone)]
pub struct PrototypeLearner {
    radius: u16,
    tau_us: u64,
    k: usize,
    alpha0: f64,
    prototypes: Vec<Vec<f64>>,
    updates: Vec<u64>,
    seen: usize,
}

impl PrototypeLearner {
    pub fn new(config: &HotsConfig) -> Self {
        PrototypeLearner {
            radius: config.radius,
            tau_us: config.tau_us,
            k: config.prototypes,
            alpha0: config.alpha0,
            prototypes: Vec::with_capacity(config.prototypes),
            updates: Vec::with_capacity(config.prototypes),
            seen: 0,
        }
    }

    /// Surfaces seen so far.
    pub fn seen(&self) -> usize {
        self.seen
    }

    /// Until K distinct surfaces have been seen, each new distinct surface
    /// becomes a prototype; every other surface moves its nearest prototype
    /// towards it.
    pub fn feed(&mut self, surface: &[f64]) {
        self.seen += 1;
        if self.prototypes.len() < self.k && !self.prototypes.iter().any(|p| p.as_slice() == surface) {
            self.prototypes.push(surface.to_vec());
            self.updates.push(1);
            return;
        }
        let (j, _) = nearest_row(&self.prototypes, surface);
        let alpha = self.alpha0 / (1.0 + self.updates[j] as f64);
        for (p, s) in self.prototypes[j].iter_mut().zip(surface) {
            *p += alpha * (s - *p);
        }
        self.updates[j] += 1;
    }

    pub fn finish(self) -> Result<PrototypeBank, HotsError> {
        if self.prototypes.len() < self.k {
            return Err(HotsError::InsufficientData {
                needed: self.k,
                got: self.prototypes.len(),
            });
        }
        PrototypeBank::new(self.radius, self.tau_us, self.prototypes)
    }
}

fn capture(events: &[Event], window_us: u64) -> &[Event] {
    match events.first() {
        Some(first) => {
            let end = events.partition_point(|e| e.t - first.t < window_us);
            &events[..end]
        }
        None => events,
    }
}

/// Learns a bank from training captures. Each capture is filtered and run
/// through a fresh surface state; `seed` fixes the order in which captures
/// are presented.
pub fn learn_prototypes<S: AsRef<[Event]>>(
    training: &[S],
    geometry: SensorGeometry,
    config: &HotsConfig,
    filter: &FilterConfig,
    seed: u64,
) -> Result<PrototypeBank, HotsError> {
    config.validate()?;
    let mut order: Vec<usize> = (0..training.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut learner = PrototypeLearner::new(config);
    let mut surface = vec![0.0; config.surface_len()];
    for i in order {
        let mut state = TimeSurfaceState::new(geometry);
        let mut chain = FilterChain::new(geometry, filter);
        for (idx, e) in capture(training[i].as_ref(), config.window_us).iter().enumerate() {
            if !chain.accept(idx, e)? {
                continue;
            }
            state.update(e);
            state.surface_into(e.x, e.y, e.t, config.radius, config.tau_us, &mut surface);
            learner.feed(&surface);
        }
    }
    learner.finish()
}

/// Prototype-activation histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GestureSignature {
    pub histogram: Vec<u64>,
}

impl GestureSignature {
    pub fn zeros(k: usize) -> Self {
        GestureSignature { histogram: vec![0; k] }
    }

    pub fn total(&self) -> u64 {
        self.histogram.iter().sum()
    }

    /// Histogram divided by its total; all zeros when empty.
    pub fn normalized(&self) -> Vec<f64> {
        let total = self.total();
        self.histogram
            .iter()
            .map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 })
            .collect()
    }

    pub fn add(&mut self, other: &GestureSignature) {
        for (a, b) in self.histogram.iter_mut().zip(&other.histogram) {
            *a += b;
        }
    }
}

/// Incremental signature computation carrying filter and surface state
/// across batches.
#[derive(Debug, Clone)]
pub struct SignatureBuilder {
    state: TimeSurfaceState,
    chain: FilterChain,
    signature: GestureSignature,
    surface: Vec<f64>,
    consumed: usize,
}

impl SignatureBuilder {
    pub fn new(geometry: SensorGeometry, bank: &PrototypeBank, filter: &FilterConfig) -> Self {
        SignatureBuilder {
            state: TimeSurfaceState::new(geometry),
            chain: FilterChain::new(geometry, filter),
            signature: GestureSignature::zeros(bank.len()),
            surface: vec![0.0; bank.surface_len()],
            consumed: 0,
        }
    }

    /// Filters, updates and matches every event of `batch`. Returns how many
    /// events survived the filters.
    pub fn push_batch(&mut self, batch: &[Event], bank: &mut PrototypeBank) -> Result<usize, HotsError> {
        let mut kept = 0;
        for e in batch {
            let index = self.consumed;
            self.consumed += 1;
            if !self.chain.accept(index, e)? {
                continue;
            }
            kept += 1;
            self.state.update(e);
            self.state
                .surface_into(e.x, e.y, e.t, bank.radius, bank.tau_us, &mut self.surface);
            let (j, _) = bank.match_prototype(&self.surface)?;
            self.signature.histogram[j] += 1;
        }
        Ok(kept)
    }

    pub fn signature(&self) -> &GestureSignature {
        &self.signature
    }

    pub fn filter_stats(&self) -> crate::filter::FilterStats {
        self.chain.stats()
    }

    pub fn finish(self) -> Result<GestureSignature, HotsError> {
        if self.signature.total() == 0 {
            return Err(HotsError::EmptyWindow);
        }
        Ok(self.signature)
    }
}

/// Signature of one gesture capture (the first `window_us` of `events`).
pub fn signature(
    events: &[Event],
    bank: &mut PrototypeBank,
    geometry: SensorGeometry,
    config: &HotsConfig,
    filter: &FilterConfig,
) -> Result<GestureSignature, HotsError> {
    let mut builder = SignatureBuilder::new(geometry, bank, filter);
    builder.push_batch(capture(events, config.window_us), bank)?;
    builder.finish()
}

/// Batch processor accumulating a signature.
#[derive(Debug, Clone)]
pub struct SignatureProcessor {
    pub builder: SignatureBuilder,
    pub bank: PrototypeBank,
}

impl SignatureProcessor {
    pub fn new(geometry: SensorGeometry, bank: PrototypeBank, filter: &FilterConfig) -> Self {
        SignatureProcessor {
            builder: SignatureBuilder::new(geometry, &bank, filter),
            bank,
        }
    }
}

impl BatchProcessor for SignatureProcessor {
    type Output = usize;

    fn process(&mut self, batch: &[Event]) -> Result<usize, ProcessorError> {
        self.builder
            .push_batch(batch, &mut self.bank)
            .map_err(|e| ProcessorError::new(alloc::format!("{e}")))
    }

    fn accepts_partial(&self) -> bool {
        true
    }

    fn name(&self) -> &str {
        "hots"
    }
}

/// Result of a kNN vote. `neighbors` holds `(training index, distance)`
/// nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification<L> {
    pub label: L,
    pub neighbors: Vec<(usize, f64)>,
}

/// Majority vote among the `k` nearest training signatures by Euclidean
/// distance between normalised histograms. A tied vote goes to whichever
/// tied class has the single nearest neighbour.
pub fn knn_classify<L: Clone + Ord>(
    query: &GestureSignature,
    training: &[(GestureSignature, L)],
    k: usize,
) -> Result<Classification<L>, HotsError> {
    if k == 0 || training.len() < k {
        return Err(HotsError::NotEnoughTrainingData {
            needed: k.max(1),
            got: training.len(),
        });
    }
    let q = query.normalized();
    let mut dists: Vec<(usize, f64)> = training
        .iter()
        .enumerate()
        .map(|(i, (s, _))| {
            let n = s.normalized();
            if n.len() != q.len() {
                return Err(HotsError::ShapeMismatch {
                    expected: q.len(),
                    got: n.len(),
                });
            }
            Ok((i, libm::sqrt(squared_distance(&q, &n))))
        })
        .collect::<Result<_, _>>()?;
    dists.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    dists.truncate(k);

    // Per class: votes and rank of its nearest neighbour.
    let mut votes: BTreeMap<&L, (usize, usize)> = BTreeMap::new();
    for (rank, &(i, _)) in dists.iter().enumerate() {
        let entry = votes.entry(&training[i].1).or_insert((0, rank));
        entry.0 += 1;
    }
    let (label, _) = votes
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .expect("k >= 1");
    Ok(Classification {
        label: label.clone(),
        neighbors: dists,
    })
}

/// One row of the filtering study.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterLevelResult {
    pub filter: FilterConfig,
    pub kept_fraction: f64,
    pub accuracy: f64,
}

/// For each filter level: learn a bank on the filtered training captures,
/// classify the filtered test captures, and report the fraction of events
/// the filters kept (over all captures) with the test accuracy.
pub fn accuracy_vs_filtering<S: AsRef<[Event]>, L: Clone + Ord>(
    train: &[(S, L)],
    test: &[(S, L)],
    geometry: SensorGeometry,
    levels: &[FilterConfig],
    config: &HotsConfig,
    seed: u64,
) -> Result<Vec<FilterLevelResult>, HotsError> {
    if test.is_empty() {
        return Err(HotsError::NotEnoughTrainingData { needed: 1, got: 0 });
    }
    let mut rows = Vec::with_capacity(levels.len());
    for level in levels {
        let streams: Vec<&[Event]> = train.iter().map(|(s, _)| s.as_ref()).collect();
        let mut bank = learn_prototypes(&streams, geometry, config, level, seed)?;
        let (mut input, mut output) = (0usize, 0usize);
        let mut describe = |events: &[Event], bank: &mut PrototypeBank| -> Result<GestureSignature, HotsError> {
            let mut b = SignatureBuilder::new(geometry, bank, level);
            b.push_batch(capture(events, config.window_us), bank)?;
            let stats = b.filter_stats();
            input += stats.input_count;
            output += stats.output_count;
            Ok(b.signature().clone())
        };
        let mut train_sigs = Vec::with_capacity(train.len());
        for (s, l) in train {
            train_sigs.push((describe(s.as_ref(), &mut bank)?, l.clone()));
        }
        let mut correct = 0usize;
        for (s, l) in test {
            let sig = describe(s.as_ref(), &mut bank)?;
            if knn_classify(&sig, &train_sigs, config.k_nn)?.label == *l {
                correct += 1;
            }
        }
        rows.push(FilterLevelResult {
            filter: level.clone(),
            kept_fraction: if input == 0 { 1.0 } else { output as f64 / input as f64 },
            accuracy: correct as f64 / test.len() as f64,
        });
    }
    Ok(rows)
}
