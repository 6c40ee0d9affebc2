use evgate_core::flow::{angular_error_deg, fit_plane, flow_batch, FlowConfig, FlowState, FlowVector};
use evgate_core::synth::{gesture_spec, synthesize, GestureDirection, SynthKind, SyntheticSpec};
use evgate_core::{Event, SensorGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn run(events: &[Event], geometry: SensorGeometry, cfg: &FlowConfig) -> Vec<Option<FlowVector>> {
    let mut st = FlowState::new(geometry);
    flow_batch(events, &mut st, cfg).vectors
}

fn bar(angle_deg: f64, length: f64, thickness: f64, v: (f64, f64), jitter_us: f64) -> SyntheticSpec {
    let mut spec = SyntheticSpec::new(
        SynthKind::TranslatingBar {
            length,
            thickness,
            angle_deg,
        },
        SensorGeometry::ATIS,
    );
    spec.velocity = v;
    spec.start = (60.0, 120.0);
    spec.duration_s = 0.15;
    spec.jitter_us = jitter_us;
    spec.seed = 11;
    spec
}

#[test]
fn noisy_plane_monte_carlo() {
    let (a, b) = (800.0, -300.0);
    let noise = Normal::new(0.0, 50.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let pts: Vec<(f64, f64, f64)> = (-3..=3)
            .flat_map(|y| (-3..=3).map(move |x| (x as f64, y as f64)))
            .map(|(x, y)| (x, y, a * x + b * y + noise.sample(&mut rng)))
            .collect();
        let p = fit_plane(&pts, 5, true).unwrap();
        assert!((p.a - a).abs() <= 0.1 * a.abs(), "a = {}", p.a);
        assert!((p.b - b).abs() <= 0.1 * b.abs(), "b = {}", p.b);
    }
}

#[test]
fn translating_bar_recovers_motion() {
    let s = synthesize(&bar(90.0, 200.0, 10.0, (1000.0, 0.0), 30.0)).unwrap();
    let out = run(&s.events, SensorGeometry::ATIS, &FlowConfig::default());
    let (mut ang, mut speed): (Vec<f64>, Vec<f64>) = out
        .iter()
        .zip(&s.truth.velocity)
        .filter_map(|(v, t)| Some((v.as_ref()?, t.as_ref()?)))
        .map(|(v, _)| (angular_error_deg(v.angle(), 0.0), v.speed / 1000.0))
        .unzip();
    assert!(ang.len() > s.events.len() / 2);
    ang.sort_by(f64::total_cmp);
    speed.sort_by(f64::total_cmp);
    assert!(ang[ang.len() / 2] < 10.0);
    assert!((speed[speed.len() / 2] - 1.0).abs() < 0.2);
}

#[test]
fn rotation_equivariance() {
    let g = SensorGeometry::new(64, 48).unwrap();
    let mut spec = SyntheticSpec::new(
        SynthKind::TranslatingBar {
            length: 30.0,
            thickness: 0.0,
            angle_deg: 70.0,
        },
        g,
    );
    spec.velocity = (600.0, 250.0);
    spec.start = (15.0, 20.0);
    spec.duration_s = 0.06;
    let events = synthesize(&spec).unwrap().events;
    // (x, y) -> (H - 1 - y, x) maps velocity (vx, vy) to (-vy, vx).
    let rg = SensorGeometry::new(48, 64).unwrap();
    let rotated: Vec<Event> = events
        .iter()
        .map(|e| Event {
            x: g.height() - 1 - e.y,
            y: e.x,
            ..*e
        })
        .collect();
    let cfg = FlowConfig::default();
    let a = run(&events, g, &cfg);
    let b = run(&rotated, rg, &cfg);
    let mut compared = 0;
    for (u, v) in a.iter().zip(&b) {
        match (u, v) {
            (Some(u), Some(v)) => {
                assert!((-u.vy - v.vx).abs() <= 1e-6 * u.speed.max(1.0));
                assert!((u.vx - v.vy).abs() <= 1e-6 * u.speed.max(1.0));
                assert_eq!(u.scale, v.scale);
                compared += 1;
            }
            (None, None) => {}
            _ => panic!("validity differs under rotation"),
        }
    }
    assert!(compared > 100);
}

#[test]
fn time_translation_invariance() {
    let s = synthesize(&gesture_spec(
        GestureDirection::Up,
        SensorGeometry::new(64, 48).unwrap(),
        4,
    ))
    .unwrap();
    let g = SensorGeometry::new(64, 48).unwrap();
    let shifted: Vec<Event> = s
        .events
        .iter()
        .map(|e| Event {
            t: e.t + 3_000_000_000,
            ..*e
        })
        .collect();
    let cfg = FlowConfig::default();
    assert_eq!(run(&s.events, g, &cfg), run(&shifted, g, &cfg));
}

#[test]
fn batch_partition_invariance() {
    let g = SensorGeometry::new(64, 48).unwrap();
    let s = synthesize(&gesture_spec(GestureDirection::Left, g, 9)).unwrap();
    let cfg = FlowConfig::default();
    let whole = run(&s.events, g, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [1usize, 7, 500] {
        let mut st = FlowState::new(g);
        let mut out = Vec::new();
        for chunk in s.events.chunks(n) {
            out.extend(flow_batch(chunk, &mut st, &cfg).vectors);
        }
        assert_eq!(out, whole, "N = {n}");
    }
    // Irregular cuts as well.
    let mut st = FlowState::new(g);
    let mut out = Vec::new();
    let mut rest = &s.events[..];
    while !rest.is_empty() {
        let k = rng.gen_range(1..=rest.len().min(300));
        out.extend(flow_batch(&rest[..k], &mut st, &cfg).vectors);
        rest = &rest[k..];
    }
    assert_eq!(out, whole);
}

#[test]
fn blob_moving_right_has_dominant_direction() {
    let g = SensorGeometry::ATIS;
    let s = synthesize(&gesture_spec(GestureDirection::Right, g, 21)).unwrap();
    let cfg = FlowConfig::default();
    for n in [2000usize, 5000] {
        let mut st = FlowState::new(g);
        let (mut good_batches, mut batches) = (0usize, 0usize);
        let (mut rightward, mut total) = (0usize, 0usize);
        for chunk in s.events.chunks(n) {
            let vs: Vec<FlowVector> = flow_batch(chunk, &mut st, &cfg).vectors.into_iter().flatten().collect();
            if vs.len() < 50 {
                continue;
            }
            let (sx, sy) = vs
                .iter()
                .fold((0.0, 0.0), |(x, y), v| (x + v.vx / v.speed, y + v.vy / v.speed));
            batches += 1;
            if angular_error_deg(sy.atan2(sx), 0.0) <= 15.0 {
                good_batches += 1;
            }
            total += vs.len();
            rightward += vs.iter().filter(|v| v.vx > 0.0).count();
        }
        assert!(
            good_batches as f64 >= 0.8 * batches as f64,
            "N = {n}: {good_batches}/{batches}"
        );
        assert!(rightward as f64 >= 0.8 * total as f64, "N = {n}: {rightward}/{total}");
    }
}
