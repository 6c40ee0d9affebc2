//! Latency sweeps over buffer size and event rate for a chosen algorithm.

use std::fmt::Write as _;
use std::hint::black_box;

use evgate_core::buffer::CountingProcessor;
use evgate_core::filter::FilterConfig;
use evgate_core::flow::{FlowConfig, FlowProcessor};
use evgate_core::hots::{learn_prototypes, HotsConfig, SignatureProcessor};
use evgate_core::latency::{argmin_n, sweep_table, BufferModel, CameraCost, ExecProfile, SweepRow};
use evgate_core::repr::{leaky_integrator_backend, FrameProcessor, DEFAULT_BINS};
use evgate_core::synth::{gesture_spec, synthesize, GestureDirection};
use evgate_core::{BatchProcessor, Event, ProcessorError, SensorGeometry};

use crate::error::{Error, Result};
use crate::measure::{measure_camera_cost, measure_exec_profile, tile_stream, MeasureOptions};

pub const DEFAULT_SIZES: [usize; 6] = [100, 500, 1000, 5000, 20_000, 100_000];
pub const DEFAULT_RATES: [f64; 3] = [113_900.0, 365_600.0, 624_390.0];
const HOTS_TRAINING_EVENTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Flow,
    Hots,
    Voxel,
    /// Does no work per event.
    Constant,
    /// Touches every event once.
    Linear,
}

impl Algorithm {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "flow" => Algorithm::Flow,
            "hots" => Algorithm::Hots,
            "voxel" => Algorithm::Voxel,
            "constant" => Algorithm::Constant,
            "linear" => Algorithm::Linear,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Flow => "flow",
            Algorithm::Hots => "hots",
            Algorithm::Voxel => "voxel",
            Algorithm::Constant => "constant",
            Algorithm::Linear => "linear",
        }
    }
}

/// Hashes every event's fields; cost grows linearly with the batch.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearProcessor;

impl BatchProcessor for LinearProcessor {
    type Output = u64;

    fn process(&mut self, batch: &[Event]) -> std::result::Result<u64, ProcessorError> {
        let mut acc = 0u64;
        for e in batch {
            let mut h = black_box(e).t ^ ((e.x as u64) << 16) ^ e.y as u64;
            for _ in 0..16 {
                h = (h ^ (h >> 29)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            }
            acc = acc.wrapping_add(black_box(h));
        }
        Ok(acc)
    }

    fn name(&self) -> &str {
        "linear"
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub algorithm: Algorithm,
    pub geometry: SensorGeometry,
    pub sizes: Vec<usize>,
    pub rates: Vec<f64>,
    pub measure: MeasureOptions,
    pub buffer_model: BufferModel,
    /// Filter applied when measuring the camera stage.
    pub filter: FilterConfig,
    /// Per-event camera cost; measured on the stream when absent.
    pub lambda_cam: Option<f64>,
    pub seed: u64,
}

impl BenchOptions {
    pub fn new(algorithm: Algorithm, geometry: SensorGeometry) -> Self {
        BenchOptions {
            algorithm,
            geometry,
            sizes: DEFAULT_SIZES.to_vec(),
            rates: DEFAULT_RATES.to_vec(),
            measure: MeasureOptions::default(),
            buffer_model: BufferModel::FillTime,
            filter: FilterConfig::default(),
            lambda_cam: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub algorithm: Algorithm,
    pub camera: CameraCost,
    pub profile: ExecProfile,
    pub rows: Vec<SweepRow>,
}

impl BenchReport {
    /// One line per rate: the best buffer size and whether any size runs in
    /// real time.
    pub fn summary(&self) -> String {
        let mut rates: Vec<f64> = self.rows.iter().map(|r| r.rate).collect();
        rates.dedup();
        let mut out = String::new();
        for rate in rates {
            let Some(best) = argmin_n(&self.rows, rate) else {
                continue;
            };
            let real_time = self.rows.iter().any(|r| r.rate == rate && r.latency.real_time);
            let _ = writeln!(
                out,
                "{} R={rate:.0}: argmin N={} L_total={:.6e} real-time {}",
                self.algorithm.name(),
                best.n,
                best.latency.l_total,
                if real_time { "achievable" } else { "not achievable" }
            );
        }
        out
    }
}

/// Four synthetic gestures at `geometry`, one per direction, back to back.
pub fn default_bench_stream(geometry: SensorGeometry, seed: u64) -> Result<Vec<Event>> {
    let mut out: Vec<Event> = Vec::new();
    for (i, d) in GestureDirection::ALL.into_iter().enumerate() {
        let s = synthesize(&gesture_spec(d, geometry, seed.wrapping_add(i as u64)))?.events;
        let offset = out.last().map_or(0, |e| e.t + 1);
        let t0 = s.first().map_or(0, |e| e.t);
        out.extend(s.into_iter().map(|e| Event {
            t: e.t - t0 + offset,
            ..e
        }));
    }
    Ok(out)
}

fn profile_for(options: &BenchOptions, stream: &[Event]) -> Result<ExecProfile> {
    let g = options.geometry;
    let m = options.measure;
    let sizes = &options.sizes;
    match options.algorithm {
        Algorithm::Flow => measure_exec_profile(|| FlowProcessor::new(g, FlowConfig::default()), stream, sizes, m),
        Algorithm::Hots => {
            let prefix = &stream[..stream.len().min(HOTS_TRAINING_EVENTS)];
            let bank = learn_prototypes(
                &[prefix],
                g,
                &HotsConfig::default(),
                &FilterConfig::disabled(),
                options.seed,
            )?;
            let filter = FilterConfig::disabled();
            measure_exec_profile(|| SignatureProcessor::new(g, bank.clone(), &filter), stream, sizes, m)
        }
        Algorithm::Voxel => measure_exec_profile(
            || FrameProcessor {
                bins: DEFAULT_BINS,
                geometry: g,
                backend: Box::new(leaky_integrator_backend(0.9, 0.05).expect("valid parameters")),
            },
            stream,
            sizes,
            m,
        ),
        Algorithm::Constant => measure_exec_profile(CountingProcessor::default, stream, sizes, m),
        Algorithm::Linear => measure_exec_profile(|| LinearProcessor, stream, sizes, m),
    }
}

/// Measures the camera cost and execution profile on `stream` (tiled if too
/// short), then evaluates the latency model over every rate and size.
pub fn run_bench(stream: &[Event], options: &BenchOptions) -> Result<BenchReport> {
    if stream.is_empty() {
        return Err(Error::StreamTooShort {
            needed: 1,
            available: 0,
        });
    }
    if options.sizes.is_empty() || options.rates.is_empty() {
        return Err(Error::Usage("bench needs at least one buffer size and one rate".into()));
    }
    let max_n = options.sizes.iter().copied().max().unwrap_or(1);
    let needed = max_n.saturating_mul(options.measure.repetitions.max(1) + options.measure.warmup);
    let stream = tile_stream(stream, needed);
    let camera = match options.lambda_cam {
        Some(l) => CameraCost::per_event(l)?,
        None => measure_camera_cost(
            &stream,
            options.geometry,
            &options.filter,
            evgate_core::codec::MAX_EVENTS_PER_PACKET,
        )?,
    };
    let profile = profile_for(options, &stream)?;
    let rows = sweep_table(
        options.algorithm.name(),
        &camera,
        &profile,
        &options.rates,
        &options.sizes,
        options.buffer_model,
    )?;
    Ok(BenchReport {
        algorithm: options.algorithm,
        camera,
        profile,
        rows,
    })
}
