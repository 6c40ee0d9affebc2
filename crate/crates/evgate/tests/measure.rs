use evgate::bench::LinearProcessor;
use evgate::measure::{measure_exec_profile, MeasureOptions};
use evgate::pipeline::Dispatch;
use evgate_core::buffer::CountingProcessor;
use evgate_core::Event;

fn stream(n: u64) -> Vec<Event> {
    (0..n)
        .map(|i| Event::on(i, (i % 300) as u16, (i % 200) as u16))
        .collect()
}

// Both profiles are measured from one test so they do not compete for cores.
#[test]
fn dummy_profiles() {
    constant_work_gives_a_flat_profile();
    linear_work_gives_a_proportional_profile();
}

fn constant_work_gives_a_flat_profile() {
    let s = stream(1_200_000);
    let sizes = [100, 1000, 10_000, 100_000];
    let opts = MeasureOptions {
        repetitions: 9,
        warmup: 3,
        dispatch: Dispatch::ThreadPerBatch,
    };
    let p = measure_exec_profile(CountingProcessor::default, &s, &sizes, opts).unwrap();
    let l: Vec<f64> = p.samples().iter().map(|s| s.1).collect();
    // A thread start dominates; it must not grow with the batch the way
    // per-event work would (1000x over this range).
    let (lo, hi) = l.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi / lo < 20.0, "{l:?}");
    assert!(hi < 5e-3, "{l:?}");
}

fn linear_work_gives_a_proportional_profile() {
    let s = stream(3_400_000);
    let sizes = [12_500, 25_000, 50_000, 100_000, 200_000];
    let opts = MeasureOptions {
        repetitions: 15,
        warmup: 2,
        dispatch: Dispatch::Inline,
    };
    let p = measure_exec_profile(|| LinearProcessor, &s, &sizes, opts).unwrap();
    let pts = p.samples();
    // Least-squares slope of a line through the origin.
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), &(n, l)| (a + n as f64 * l, b + (n as f64).powi(2)));
    let slope = sxy / sxx;
    for &(n, l) in pts {
        let per_event = l / n as f64;
        assert!(
            (per_event / slope - 1.0).abs() <= 0.2,
            "N={n}: {per_event:e} vs fit {slope:e}: {pts:?}"
        );
    }
}
