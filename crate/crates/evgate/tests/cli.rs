use std::path::Path;
use std::process::{Command, Output};

use evgate::formats::read_events;
use evgate_core::compute_event_rate;

fn evgate(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evgate"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = evgate(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const BAR: &[&str] = &[
    "synth",
    "--kind",
    "bar",
    "--vx",
    "1000",
    "--duration",
    "0.5",
    "--geometry",
    "304x240",
    "--seed",
    "1",
];

#[test]
fn synth_is_deterministic_and_readable() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &[BAR, &["-o", "a.evp"]].concat());
    ok(d.path(), &[BAR, &["-o", "b.evp"]].concat());
    let a = std::fs::read(d.path().join("a.evp")).unwrap();
    assert_eq!(a, std::fs::read(d.path().join("b.evp")).unwrap());
    let info = ok(d.path(), &["info", "a.evp"]);
    let events = read_events(&d.path().join("a.evp")).unwrap();
    assert!(info.contains(&format!("events: {}", events.len())));
    let rate = compute_event_rate(&events).unwrap().per_second();
    assert!(info.contains(&format!("mean_rate_ev_per_s: {rate:.3}")), "{info}");
    assert!(info.contains("geometry: 304x240"));
}

#[test]
fn zero_rate_noise_is_an_empty_stream() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--kind", "noise", "--rate", "0", "-o", "n.csv"]);
    assert!(read_events(&d.path().join("n.csv")).unwrap().is_empty());
}

#[test]
fn filter_never_adds_events() {
    let d = tempfile::tempdir().unwrap();
    ok(
        d.path(),
        &[
            "synth",
            "--kind",
            "gesture",
            "--geometry",
            "64x48",
            "--seed",
            "4",
            "-o",
            "g.evp",
        ],
    );
    let msg = ok(
        d.path(),
        &[
            "filter",
            "g.evp",
            "--geometry",
            "64x48",
            "--refractory-us",
            "1000",
            "-o",
            "f.evp",
        ],
    );
    let before = read_events(&d.path().join("g.evp")).unwrap().len();
    let after = read_events(&d.path().join("f.evp")).unwrap().len();
    assert!(after <= before);
    assert!(msg.starts_with(&format!("in {before} out {after}")), "{msg}");
}

#[test]
fn train_then_classify_a_held_out_left_motion() {
    let d = tempfile::tempdir().unwrap();
    let geo = ["--geometry", "64x48"];
    let off = ["--refractory-us", "0", "--st-radius", "0"];
    let mut samples = Vec::new();
    for dir in ["left", "right", "up", "down"] {
        for seed in [10, 20, 30] {
            let file = format!("{dir}{seed}.evp");
            let seed = seed.to_string();
            ok(
                d.path(),
                &[
                    &[
                        "synth",
                        "--kind",
                        "gesture",
                        "--direction",
                        dir,
                        "--seed",
                        &seed,
                        "-o",
                        &file,
                    ],
                    &geo[..],
                ]
                .concat(),
            );
            samples.push(format!("{dir}={file}"));
        }
    }
    let mut args: Vec<&str> = vec!["gesture-train"];
    args.extend(samples.iter().map(String::as_str));
    args.extend(geo);
    args.extend(off);
    args.extend(["-o", "bank.hots"]);
    ok(d.path(), &args);
    assert!(d.path().join("bank.hots.csv").exists());
    ok(
        d.path(),
        &[
            &[
                "synth",
                "--kind",
                "gesture",
                "--direction",
                "left",
                "--seed",
                "999",
                "-o",
                "q.evp",
            ],
            &geo[..],
        ]
        .concat(),
    );
    let out = ok(
        d.path(),
        &[
            &["gesture-classify", "q.evp", "--bank", "bank.hots"],
            &geo[..],
            &off[..],
        ]
        .concat(),
    );
    assert!(out.starts_with("label: left\n"), "{out}");
    for class in ["left", "right", "up", "down"] {
        assert!(out.contains(&format!("distance {class}: ")));
    }
}

#[test]
fn config_file_composes_with_flags() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(
        d.path().join("run.ini"),
        "# shared settings\nrefractory_us = 250\nst_radius = 0\ngeometry = 64x48\nbins = 3\n",
    )
    .unwrap();
    ok(
        d.path(),
        &["synth", "--kind", "gesture", "--geometry", "64x48", "-o", "g.evp"],
    );
    ok(
        d.path(),
        &[
            "filter",
            "g.evp",
            "--config",
            "run.ini",
            "--refractory-us",
            "500",
            "-o",
            "f.evp",
        ],
    );
    let echoed = std::fs::read_to_string(d.path().join("f.evp.run.ini")).unwrap();
    assert!(echoed.contains("refractory_us = 500"), "{echoed}");
    assert!(echoed.contains("st_radius = 0"));
    assert!(echoed.contains("geometry = 64x48"));

    std::fs::write(d.path().join("bad.ini"), "no_such_setting = 1\n").unwrap();
    let out = evgate(d.path(), &["info", "g.evp", "--config", "bad.ini"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(evgate(d.path(), &["info", "missing.evp"]).status.code(), Some(1));
    assert_eq!(
        evgate(d.path(), &["synth", "--kind", "nope", "-o", "x.evp"])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(d.path().join("bad.csv"), "t_us,x,y,p\n5,1,1,1\n4,1,1,1\n").unwrap();
    assert_eq!(evgate(d.path(), &["info", "bad.csv"]).status.code(), Some(1));
    std::fs::write(d.path().join("far.csv"), "t_us,x,y,p\n5,400,1,1\n").unwrap();
    assert_eq!(
        evgate(d.path(), &["flow", "far.csv", "-o", "f.csv"]).status.code(),
        Some(2)
    );
}

#[test]
fn bench_reports_every_size_and_rate() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(
        d.path(),
        &[
            "bench",
            "--algorithm",
            "constant",
            "--geometry",
            "64x48",
            "--sizes",
            "1,10,100",
            "--rates",
            "1e5,2e5",
            "--repetitions",
            "3",
            "--lambda-cam",
            "1.6e-6",
            "-o",
            "b.csv",
        ],
    );
    let csv = std::fs::read_to_string(d.path().join("b.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("algorithm,R,N,L_cam,L_buffer,L_exec,L_total,real_time")
    );
    assert_eq!(lines.count(), 6);
    assert_eq!(out.matches("argmin N=").count(), 2);
    assert!(d.path().join("b.csv.run.ini").exists());
}
