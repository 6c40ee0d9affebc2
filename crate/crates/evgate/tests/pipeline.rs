use evgate::pipeline::{run_pipeline, Dispatch, PipelineOptions, ReplayMode, Schedule, SharedLiveView};
use evgate_core::buffer::{CountingProcessor, IdentityProcessor};
use evgate_core::filter::{apply_chain, FilterConfig};
use evgate_core::flow::{FlowConfig, FlowProcessor};
use evgate_core::repr::frames_per_second_trace;
use evgate_core::synth::{
    activity_profile_stream, gesture_spec, synthesize, GestureDirection, SynthKind, SyntheticSpec,
};
use evgate_core::{Event, LiveView, SensorGeometry};

fn g() -> SensorGeometry {
    SensorGeometry::new(64, 48).unwrap()
}

fn gesture() -> Vec<Event> {
    synthesize(&gesture_spec(GestureDirection::Left, g(), 3))
        .unwrap()
        .events
}

fn options(n: usize) -> PipelineOptions {
    PipelineOptions::new(g(), n)
}

#[test]
fn ten_thousand_events_in_batches_of_a_thousand() {
    let s: Vec<Event> = (0..10_000u64)
        .map(|i| Event::on(i, (i % 64) as u16, (i % 48) as u16))
        .collect();
    let mut p = CountingProcessor::default();
    let run = run_pipeline(&s, &options(1000), &mut p, None).unwrap();
    assert_eq!(p.invocations, 10);
    assert_eq!(run.results, vec![1000; 10]);
}

#[test]
fn identity_reproduces_the_filtered_prefix() {
    let s = gesture();
    let filter = FilterConfig::default();
    let (filtered, _) = apply_chain(&s, g(), &filter).unwrap();
    let n = 200;
    let opts = PipelineOptions { filter, ..options(n) };
    let run = run_pipeline(&s, &opts, &mut IdentityProcessor, None).unwrap();
    assert_eq!(run.events_filtered, filtered.len());
    assert_eq!(run.batches_emitted, filtered.len() / n);
    assert_eq!(run.batches_emitted * n + run.residual, run.events_filtered);
    assert_eq!(run.results.concat(), filtered[..run.batches_emitted * n]);
}

#[test]
fn flushing_does_not_change_full_batches() {
    let s = gesture();
    let mut with = CountingProcessor {
        partial: true,
        ..Default::default()
    };
    let mut without = CountingProcessor::default();
    let a = run_pipeline(&s, &options(700), &mut with, None).unwrap();
    let b = run_pipeline(&s, &options(700), &mut without, None).unwrap();
    assert_eq!(a.results, b.results);
    assert_eq!(a.partial, Some(s.len() % 700));
    assert_eq!(b.partial, None);
    assert_eq!(b.discarded_partial, s.len() % 700);
}

#[test]
fn schedule_replay_and_dispatch_do_not_change_results() {
    let s = gesture();
    let reference = {
        let mut p = FlowProcessor::new(g(), FlowConfig::default());
        let o = PipelineOptions {
            schedule: Schedule::SingleThread,
            ..options(500)
        };
        run_pipeline(&s, &o, &mut p, None).unwrap()
    };
    let variants = [
        (
            Schedule::Threaded,
            ReplayMode::AsFastAsPossible,
            Dispatch::ThreadPerBatch,
            64,
        ),
        (Schedule::Threaded, ReplayMode::AsFastAsPossible, Dispatch::Inline, 1),
        (
            Schedule::Threaded,
            ReplayMode::TimestampPaced { speed: 20.0 },
            Dispatch::Inline,
            4,
        ),
        (
            Schedule::SingleThread,
            ReplayMode::TimestampPaced { speed: 20.0 },
            Dispatch::Inline,
            64,
        ),
    ];
    for (schedule, replay, dispatch, queue_depth) in variants {
        let mut p = FlowProcessor::new(g(), FlowConfig::default());
        let o = PipelineOptions {
            schedule,
            replay,
            dispatch,
            queue_depth,
            ..options(500)
        };
        let run = run_pipeline(&s, &o, &mut p, None).unwrap();
        assert_eq!(run.results, reference.results);
        assert_eq!(run.partial, reference.partial);
    }
}

#[test]
fn paced_replay_takes_stream_time() {
    let s: Vec<Event> = (0..200u64).map(|i| Event::on(i * 1000, 1, 1)).collect();
    let o = PipelineOptions {
        replay: ReplayMode::TimestampPaced { speed: 1.0 },
        packet_events: 10,
        ..options(50)
    };
    let run = run_pipeline(&s, &o, &mut CountingProcessor::default(), None).unwrap();
    assert!(run.wall.as_secs_f64() >= 0.19, "{:?}", run.wall);
}

#[test]
fn live_view_tracks_a_translating_bar() {
    let mut spec = SyntheticSpec::new(
        SynthKind::TranslatingBar {
            length: 30.0,
            thickness: 0.0,
            angle_deg: 90.0,
        },
        g(),
    );
    spec.velocity = (1000.0, 0.0);
    spec.start = (5.0, 24.0);
    spec.duration_s = 0.04;
    let s = synthesize(&spec).unwrap().events;
    let live = SharedLiveView::new(LiveView::new(g(), 1000));
    let o = PipelineOptions {
        schedule: Schedule::SingleThread,
        ..options(100)
    };
    let mut probes = 0;
    for cut in [s.len() / 4, s.len() / 2, 3 * s.len() / 4, s.len()] {
        let live = SharedLiveView::new(LiveView::new(g(), 1000));
        run_pipeline(&s[..cut], &o, &mut CountingProcessor::default(), Some(&live)).unwrap();
        let now = s[cut - 1].t;
        let truth_x = spec.start.0 + spec.velocity.0 * now as f64 * 1e-6;
        let bitmap = live.snapshot(now);
        let set: Vec<usize> = (0..bitmap.len()).filter(|&i| bitmap[i]).collect();
        assert!(!set.is_empty());
        for i in set {
            let x = (i % 64) as f64;
            assert!((x - truth_x).abs() <= 1.0 + 1e-9, "pixel x {x} vs bar at {truth_x}");
        }
        probes += 1;
    }
    assert_eq!(probes, 4);
    // The shared view is readable while nothing updates it.
    assert!(live.snapshot(0).iter().all(|&b| !b));
}

#[test]
fn batch_rate_peaks_during_a_burst() {
    let s = activity_profile_stream(g(), &[(1.0, 20_000.0), (1.5, 400_000.0), (1.0, 20_000.0)], 5);
    let mut per_n = Vec::new();
    for n in [5000, 10_000] {
        let run = run_pipeline(&s, &options(n), &mut CountingProcessor::default(), None).unwrap();
        let per_second = run.batches_per_second();
        let trace = frames_per_second_trace(&s, n);
        assert_eq!(per_second[..], trace.counts[..per_second.len()]);
        per_n.push(per_second);
    }
    let peak5 = *per_n[0].iter().max().unwrap();
    assert!(peak5 > 60, "{:?}", per_n[0]);
    assert!(per_n[0][1] > per_n[0][0] && per_n[1][1] >= per_n[1][0]);
    assert!(per_n[0][1] >= 2 * per_n[1][1] - 1);
}
