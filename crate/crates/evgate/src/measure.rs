//! Wall-clock measurement of per-batch execution cost and camera-stage cost.

use std::time::{Duration, Instant};

use evgate_core::codec::{self, MAX_EVENTS_PER_PACKET};
use evgate_core::filter::{FilterChain, FilterConfig};
use evgate_core::latency::{CameraCost, ExecProfile};
use evgate_core::{BatchProcessor, Event, SensorGeometry};

use crate::error::{Error, Result};
use crate::pipeline::{dispatch_batch, Dispatch};

pub const DEFAULT_WARMUP: usize = 3;

/// Options for [`measure_exec_profile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasureOptions {
    pub repetitions: usize,
    pub warmup: usize,
    pub dispatch: Dispatch,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        MeasureOptions {
            repetitions: 5,
            warmup: DEFAULT_WARMUP,
            dispatch: Dispatch::ThreadPerBatch,
        }
    }
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2
    }
}

/// Per-batch latency for every size in `sizes`. For each size a fresh processor
/// consumes consecutive batches from the start of `stream`; the first
/// `warmup` are discarded and the median of the next `repetitions` is kept.
pub fn measure_exec_profile<P, F>(
    mut make: F,
    stream: &[Event],
    sizes: &[usize],
    options: MeasureOptions,
) -> Result<ExecProfile>
where
    F: FnMut() -> P,
    P: BatchProcessor + Send,
    P::Output: Send,
{
    let reps = options.repetitions.max(1);
    let per_size = reps + options.warmup;
    if let Some(&max_n) = sizes.iter().max() {
        let needed = max_n.saturating_mul(per_size);
        if stream.len() < needed {
            return Err(Error::StreamTooShort {
                needed,
                available: stream.len(),
            });
        }
    }
    if sizes.contains(&0) {
        return Err(Error::Usage("buffer size must be at least 1".into()));
    }
    // Sizes take turns batch by batch so that slow drift in machine speed
    // affects all of them alike.
    let mut processors: Vec<P> = sizes.iter().map(|_| make()).collect();
    let mut times: Vec<Vec<Duration>> = vec![Vec::with_capacity(reps); sizes.len()];
    for i in 0..per_size {
        for (j, &n) in sizes.iter().enumerate() {
            let batch = &stream[i * n..(i + 1) * n];
            let (out, dt) = dispatch_batch(&mut processors[j], batch, options.dispatch);
            out.map_err(|source| Error::Processor { batch: i, source })?;
            if i >= options.warmup {
                times[j].push(dt);
            }
        }
    }
    let samples = sizes
        .iter()
        .zip(times)
        .map(|(&n, t)| (n, median(t).as_secs_f64()))
        .collect();
    Ok(ExecProfile::new(samples)?)
}

/// Repeats `stream` until it holds at least `min_events`, shifting each copy
/// in time so timestamps stay non-decreasing.
pub fn tile_stream(stream: &[Event], min_events: usize) -> Vec<Event> {
    if stream.is_empty() || stream.len() >= min_events {
        return stream.to_vec();
    }
    let t0 = stream[0].t;
    let span = stream[stream.len() - 1].t - t0 + 1;
    let mut out = Vec::with_capacity(min_events + stream.len());
    let mut offset = 0u64;
    while out.len() < min_events {
        out.extend(stream.iter().map(|e| Event {
            t: e.t - t0 + offset,
            ..*e
        }));
        offset += span;
    }
    out
}

/// Measured camera-stage cost: copying each encoded packet stands in for the
/// transfer, then decoding and filtering are timed separately.
pub fn measure_camera_cost(
    events: &[Event],
    geometry: SensorGeometry,
    filter: &FilterConfig,
    packet_events: usize,
) -> Result<CameraCost> {
    let per_packet = packet_events.clamp(1, MAX_EVENTS_PER_PACKET);
    let packets = codec::packetize(events, per_packet);
    if packets.is_empty() {
        return Err(Error::StreamTooShort {
            needed: 1,
            available: 0,
        });
    }
    let encoded: Vec<Vec<u8>> = packets
        .iter()
        .map(|p| codec::encode_packet(p).expect("packetize respects the size cap"))
        .collect();
    let mut chain = FilterChain::new(geometry, filter);
    let (mut transfer, mut decode, mut filtering) = (Duration::ZERO, Duration::ZERO, Duration::ZERO);
    let mut kept = Vec::with_capacity(per_packet);
    let mut index = 0;
    for bytes in &encoded {
        let s = Instant::now();
        let copy = std::hint::black_box(bytes.clone());
        transfer += s.elapsed();
        let s = Instant::now();
        let packet = codec::decode_packet(&copy).map_err(|source| Error::Codec {
            path: "<measure>".into(),
            source,
        })?;
        decode += s.elapsed();
        let s = Instant::now();
        kept.clear();
        chain.run_into(&packet.events, index, &mut kept)?;
        filtering += s.elapsed();
        index += packet.events.len();
    }
    let count = encoded.len() as f64;
    Ok(CameraCost::new(
        transfer.as_secs_f64() / count,
        decode.as_secs_f64() / count,
        filtering.as_secs_f64() / count,
        events.len() as f64 / count,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use evgate_core::buffer::CountingProcessor;

    #[test]
    fn tiling_keeps_order() {
        let s: Vec<Event> = (0..10).map(|i| Event::on(100 + i * 5, 0, 0)).collect();
        let t = tile_stream(&s, 25);
        assert_eq!(t.len(), 30);
        assert!(t.windows(2).all(|w| w[0].t <= w[1].t));
        assert_eq!(t[10].t, 46);
    }

    #[test]
    fn short_stream_is_rejected() {
        let s: Vec<Event> = (0..100).map(|i| Event::on(i, 0, 0)).collect();
        let err =
            measure_exec_profile(CountingProcessor::default, &s, &[10, 50], MeasureOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::StreamTooShort {
                needed: 400,
                available: 100
            }
        ));
    }

    #[test]
    fn camera_cost_is_positive() {
        let s: Vec<Event> = (0..5000).map(|i| Event::on(i, (i % 30) as u16, 3)).collect();
        let g = SensorGeometry::new(30, 5).unwrap();
        let c = measure_camera_cost(&s, g, &FilterConfig::default(), 1023).unwrap();
        assert!(c.lambda_cam() > 0.0);
        assert!((c.n_packet - 5000.0 / 5.0).abs() < 1e-9);
    }
}
