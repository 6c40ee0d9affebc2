//! Staged stream processing: a packet source, a decode/filter stage that also
//! feeds the live view and the buffer gate, and a processing stage invoked once
//! per full batch.

use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use evgate_core::buffer::DEFAULT_DECAY_WINDOW_US;
use evgate_core::codec::{self, EventPacket, MAX_EVENTS_PER_PACKET};
use evgate_core::filter::{FilterChain, FilterConfig, FilterStats};
use evgate_core::{BatchProcessor, Event, EventBuffer, LiveView, ProcessorError, SensorGeometry};

use crate::error::{Error, Result};

/// How the source releases packets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplayMode {
    AsFastAsPossible,
    /// Each packet is released once its last timestamp has elapsed on the
    /// wall clock, with stream time divided by `speed`.
    TimestampPaced {
        speed: f64,
    },
}

/// How the stages are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// One thread per stage, connected by bounded queues.
    Threaded,
    /// Stage functions called round-robin on the calling thread.
    SingleThread,
}

/// How a full batch is handed to the processor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dispatch {
    /// Called directly on the processing stage's thread.
    Inline,
    /// A worker thread is started for every batch and joined before the next.
    ThreadPerBatch,
}

impl Dispatch {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "inline" => Some(Dispatch::Inline),
            "thread" | "thread-per-batch" => Some(Dispatch::ThreadPerBatch),
            _ => None,
        }
    }
}

/// Runs one batch under `dispatch`, returning the result and its wall time.
pub fn dispatch_batch<P>(
    processor: &mut P,
    batch: &[Event],
    dispatch: Dispatch,
) -> (std::result::Result<P::Output, ProcessorError>, Duration)
where
    P: BatchProcessor + Send,
    P::Output: Send,
{
    let start = Instant::now();
    let out = match dispatch {
        Dispatch::Inline => processor.process(batch),
        Dispatch::ThreadPerBatch => thread::scope(|s| {
            s.spawn(|| processor.process(batch))
                .join()
                .unwrap_or_else(|_| Err(ProcessorError::new("processing thread panicked")))
        }),
    };
    (out, start.elapsed())
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub geometry: SensorGeometry,
    pub buffer_size: usize,
    pub filter: FilterConfig,
    pub replay: ReplayMode,
    pub schedule: Schedule,
    pub dispatch: Dispatch,
    /// Capacity of each inter-stage queue; a full queue blocks its producer.
    pub queue_depth: usize,
    pub packet_events: usize,
    pub decay_window_us: u64,
}

impl PipelineOptions {
    pub fn new(geometry: SensorGeometry, buffer_size: usize) -> Self {
        PipelineOptions {
            geometry,
            buffer_size,
            filter: FilterConfig::disabled(),
            replay: ReplayMode::AsFastAsPossible,
            schedule: Schedule::Threaded,
            dispatch: Dispatch::ThreadPerBatch,
            queue_depth: 64,
            packet_events: MAX_EVENTS_PER_PACKET,
            decay_window_us: DEFAULT_DECAY_WINDOW_US,
        }
    }
}

/// Live view shared between the filter stage and any observer. Snapshots are
/// taken under the same lock as updates, so a frame is never torn.
#[derive(Debug, Clone)]
pub struct SharedLiveView(Arc<Mutex<LiveView>>);

impl SharedLiveView {
    pub fn new(view: LiveView) -> Self {
        SharedLiveView(Arc::new(Mutex::new(view)))
    }

    pub fn snapshot(&self, now_us: u64) -> Vec<bool> {
        self.lock().snapshot(now_us)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, LiveView> {
        self.0.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn update_all(&self, events: &[Event]) {
        let mut view = self.lock();
        for e in events {
            view.update(e);
        }
    }
}

/// Accumulated wall-clock time per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    /// Packet encoding and hand-off.
    pub source: Duration,
    /// Decoding, filtering, live-view updates and gating.
    pub filter: Duration,
    /// Processor invocations, dispatch included.
    pub process: Duration,
}

#[derive(Debug, Clone)]
pub struct PipelineRun<O> {
    pub batches_emitted: usize,
    pub events_in: usize,
    pub events_filtered: usize,
    pub filter_stats: FilterStats,
    /// One result per full batch, in order.
    pub results: Vec<O>,
    /// Result on the short final batch, if the processor takes partial batches.
    pub partial: Option<O>,
    pub residual: usize,
    /// Residual events dropped because the processor takes only full batches.
    pub discarded_partial: usize,
    pub batch_exec: Vec<Duration>,
    /// Timestamp of the last event of each full batch.
    pub batch_end_us: Vec<u64>,
    pub first_event_us: Option<u64>,
    pub timings: StageTimings,
    pub wall: Duration,
}

impl<O> PipelineRun<O> {
    /// Full batches completed in each second of stream time, counted from the
    /// first event.
    pub fn batches_per_second(&self) -> Vec<u64> {
        let Some(t0) = self.first_event_us else {
            return Vec::new();
        };
        let mut counts = Vec::new();
        for &t in &self.batch_end_us {
            let s = ((t - t0) / 1_000_000) as usize;
            if counts.len() <= s {
                counts.resize(s + 1, 0);
            }
            counts[s] += 1;
        }
        counts
    }
}

/// Decode, filter, live-view and gating state of the middle stage.
struct FilterStage<'a> {
    chain: FilterChain,
    gate: EventBuffer,
    live: Option<&'a SharedLiveView>,
    consumed: usize,
    kept: Vec<Event>,
    elapsed: Duration,
}

impl<'a> FilterStage<'a> {
    fn new(options: &PipelineOptions, live: Option<&'a SharedLiveView>) -> Self {
        FilterStage {
            chain: FilterChain::new(options.geometry, &options.filter),
            gate: EventBuffer::new(options.buffer_size),
            live,
            consumed: 0,
            kept: Vec::new(),
            elapsed: Duration::ZERO,
        }
    }

    /// Returns the batches completed by this packet.
    fn packet(&mut self, bytes: &[u8]) -> Result<Vec<Vec<Event>>> {
        let start = Instant::now();
        let packet = codec::decode_packet(bytes).map_err(|source| Error::Codec {
            path: "<pipeline>".into(),
            source,
        })?;
        self.kept.clear();
        self.chain.run_into(&packet.events, self.consumed, &mut self.kept)?;
        self.consumed += packet.events.len();
        if let Some(live) = self.live {
            live.update_all(&self.kept);
        }
        let batches = self.kept.iter().filter_map(|e| self.gate.push(*e)).collect();
        self.elapsed += start.elapsed();
        Ok(batches)
    }
}

fn encode(seq: u32, events: &[Event]) -> Vec<u8> {
    codec::encode_packet(&EventPacket::new(seq, events.to_vec())).expect("packets are sized to fit")
}

fn pace(replay: ReplayMode, start: Instant, t0: u64, packet: &[Event]) {
    if let (ReplayMode::TimestampPaced { speed }, Some(last)) = (replay, packet.last()) {
        let due = Duration::from_secs_f64((last.t - t0) as f64 / 1e6 / speed.max(f64::MIN_POSITIVE));
        let now = start.elapsed();
        if due > now {
            thread::sleep(due - now);
        }
    }
}

struct Collector<O> {
    results: Vec<O>,
    batch_exec: Vec<Duration>,
    batch_end_us: Vec<u64>,
    process: Duration,
}

impl<O> Collector<O> {
    fn take<P>(&mut self, processor: &mut P, batch: Vec<Event>, dispatch: Dispatch) -> Result<()>
    where
        P: BatchProcessor<Output = O> + Send,
        O: Send,
    {
        let (out, dt) = dispatch_batch(processor, &batch, dispatch);
        let out = out.map_err(|source| Error::Processor {
            batch: self.results.len(),
            source,
        })?;
        self.results.push(out);
        self.batch_exec.push(dt);
        self.batch_end_us.push(batch.last().map_or(0, |e| e.t));
        self.process += dt;
        Ok(())
    }
}

/// Streams `source` through the stages. Results do not depend on the schedule
/// or replay mode, only timings do.
pub fn run_pipeline<P>(
    source: &[Event],
    options: &PipelineOptions,
    processor: &mut P,
    live: Option<&SharedLiveView>,
) -> Result<PipelineRun<P::Output>>
where
    P: BatchProcessor + Send,
    P::Output: Send,
{
    let wall_start = Instant::now();
    let per_packet = options.packet_events.clamp(1, MAX_EVENTS_PER_PACKET);
    let t0 = source.first().map_or(0, |e| e.t);
    let mut collector = Collector {
        results: Vec::new(),
        batch_exec: Vec::new(),
        batch_end_us: Vec::new(),
        process: Duration::ZERO,
    };
    let mut stage = FilterStage::new(options, live);
    let mut source_time = Duration::ZERO;

    match options.schedule {
        Schedule::SingleThread => {
            for (seq, packet) in source.chunks(per_packet).enumerate() {
                pace(options.replay, wall_start, t0, packet);
                let s = Instant::now();
                let bytes = encode(seq as u32, packet);
                source_time += s.elapsed();
                for batch in stage.packet(&bytes)? {
                    collector.take(processor, batch, Dispatch::Inline)?;
                }
            }
        }
        Schedule::Threaded => {
            let depth = options.queue_depth.max(1);
            let (packet_tx, packet_rx): (SyncSender<Vec<u8>>, Receiver<Vec<u8>>) = sync_channel(depth);
            let (batch_tx, batch_rx) = sync_channel::<Vec<Event>>(depth);
            let replay = options.replay;
            let outcome = thread::scope(|s| {
                let producer = s.spawn(move || {
                    let mut spent = Duration::ZERO;
                    for (seq, packet) in source.chunks(per_packet).enumerate() {
                        pace(replay, wall_start, t0, packet);
                        let st = Instant::now();
                        let bytes = encode(seq as u32, packet);
                        spent += st.elapsed();
                        if packet_tx.send(bytes).is_err() {
                            break;
                        }
                    }
                    spent
                });
                let stage_ref = &mut stage;
                let transformer = s.spawn(move || -> Result<()> {
                    for bytes in packet_rx {
                        for batch in stage_ref.packet(&bytes)? {
                            if batch_tx.send(batch).is_err() {
                                return Ok(());
                            }
                        }
                    }
                    Ok(())
                });
                let mut consumer = Ok(());
                for batch in batch_rx.iter() {
                    if let Err(e) = collector.take(processor, batch, options.dispatch) {
                        consumer = Err(e);
                        break;
                    }
                }
                // Dropping the receiver unblocks the upstream stages on error.
                drop(batch_rx);
                let transformed = transformer.join().map_err(|_| Error::StagePanicked)?;
                source_time = producer.join().map_err(|_| Error::StagePanicked)?;
                consumer.and(transformed)
            });
            outcome?;
        }
    }

    let residual_batch = stage.gate.flush();
    let residual = residual_batch.as_ref().map_or(0, Vec::len);
    let mut partial = None;
    let mut discarded_partial = 0;
    if let Some(batch) = residual_batch {
        if processor.accepts_partial() {
            let (out, dt) = dispatch_batch(processor, &batch, Dispatch::Inline);
            collector.process += dt;
            partial = Some(out.map_err(|source| Error::Processor {
                batch: collector.results.len(),
                source,
            })?);
        } else {
            discarded_partial = batch.len();
        }
    }

    let stats = stage.chain.stats();
    Ok(PipelineRun {
        batches_emitted: collector.results.len(),
        events_in: source.len(),
        events_filtered: stats.output_count,
        filter_stats: stats,
        results: collector.results,
        partial,
        residual,
        discarded_partial,
        batch_exec: collector.batch_exec,
        batch_end_us: collector.batch_end_us,
        first_event_us: source.first().map(|e| e.t),
        timings: StageTimings {
            source: source_time,
            filter: stage.elapsed,
            process: collector.process,
        },
        wall: wall_start.elapsed(),
    })
}
