//! The `evgate` command line.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use evgate_core::filter::{detect_hot_pixels, FilterConfig};
use evgate_core::flow::{FlowConfig, FlowProcessor, FlowVector};
use evgate_core::hots::{knn_classify, learn_prototypes, HotsConfig, SignatureProcessor};
use evgate_core::latency::{sweep_csv, BufferModel};
use evgate_core::repr::{leaky_integrator_backend, FrameProcessor, FrameRateTrace, DEFAULT_BINS, DISPLAY_RATE_HZ};
use evgate_core::synth::{gesture_spec, synthesize, GestureDirection, SynthKind, SyntheticSpec};
use evgate_core::{compute_event_rate, validate_stream, Event, LiveView, SensorGeometry};

use crate::bench::{default_bench_stream, run_bench, Algorithm, BenchOptions};
use crate::config::{effective_config, expand_args};
use crate::error::{Error, Result};
use crate::formats::{self, StreamFormat};
use crate::measure::MeasureOptions;
use crate::pipeline::{run_pipeline, Dispatch, PipelineOptions, Schedule};

/// Stdout line that ignores a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn parse_geometry(s: &str) -> std::result::Result<SensorGeometry, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let w: u16 = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    let h: u16 = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    SensorGeometry::new(w, h).map_err(|e| e.to_string())
}

fn parse_buffer_model(s: &str) -> std::result::Result<BufferModel, String> {
    BufferModel::parse(s).ok_or_else(|| "expected `fill-time` or `mean-wait`".into())
}

fn parse_dispatch(s: &str) -> std::result::Result<Dispatch, String> {
    Dispatch::parse(s).ok_or_else(|| "expected `inline` or `thread`".into())
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    Algorithm::parse(s).ok_or_else(|| "expected flow, hots, voxel, constant or linear".into())
}

fn parse_pixel(s: &str) -> std::result::Result<(u16, u16), String> {
    let (x, y) = s.split_once(':').ok_or("expected X:Y")?;
    Ok((
        x.trim().parse().map_err(|e| format!("{e}"))?,
        y.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

fn parse_labelled(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (l, p) = s.split_once('=').ok_or("expected LABEL=PATH")?;
    if l.is_empty() {
        return Err("empty label".into());
    }
    Ok((l.to_string(), PathBuf::from(p)))
}

#[derive(Debug, Parser)]
#[command(
    name = "evgate",
    version,
    about = "Event-camera stream processing with buffer-gated batching"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Sensor size as WIDTHxHEIGHT.
    #[arg(long, global = true, default_value = "304x240", value_parser = parse_geometry)]
    pub geometry: SensorGeometry,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// INI file of `key = value` settings; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Events per batch handed to the processing stage.
    #[arg(long, global = true, default_value_t = 5000)]
    pub buffer_size: usize,
    /// Run every stage on the calling thread.
    #[arg(long, global = true)]
    pub single_thread: bool,
    #[arg(long, global = true, default_value = "fill-time", value_parser = parse_buffer_model)]
    pub buffer_model: BufferModel,
}

#[derive(Debug, Args, Clone)]
pub struct FilterArgs {
    /// Per-pixel refractory period; 0 disables.
    #[arg(long, default_value_t = 1000)]
    pub refractory_us: u64,
    /// Neighbourhood radius of the spatiotemporal filter; 0 disables.
    #[arg(long, default_value_t = 1)]
    pub st_radius: u16,
    #[arg(long, default_value_t = 1000)]
    pub st_window_us: u64,
    /// Mask pixels firing faster than this many events/s (measured on the input).
    #[arg(long)]
    pub hot_pixel_rate_threshold: Option<f64>,
    /// Explicit hot pixel, X:Y; repeatable.
    #[arg(long = "hot-pixel", value_parser = parse_pixel)]
    pub hot_pixel: Vec<(u16, u16)>,
}

impl FilterArgs {
    fn config(&self, events: &[Event], geometry: SensorGeometry) -> Result<FilterConfig> {
        let mut hot_pixels: std::collections::BTreeSet<(u16, u16)> = self.hot_pixel.iter().copied().collect();
        if let Some(th) = self.hot_pixel_rate_threshold {
            if events.len() >= 2 {
                hot_pixels.extend(detect_hot_pixels(events, geometry, th)?);
            }
        }
        Ok(FilterConfig {
            refractory_us: self.refractory_us,
            st_radius: self.st_radius,
            st_window_us: self.st_window_us,
            hot_pixels,
        })
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kind {
    Bar,
    Blob,
    Noise,
    Gesture,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl From<Direction> for GestureDirection {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Left => GestureDirection::Left,
            Direction::Right => GestureDirection::Right,
            Direction::Up => GestureDirection::Up,
            Direction::Down => GestureDirection::Down,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Generate a synthetic stream.
    Synth {
        #[arg(long, value_enum, default_value = "bar")]
        kind: Kind,
        #[arg(long, default_value_t = 1000.0)]
        vx: f64,
        #[arg(long, default_value_t = 0.0)]
        vy: f64,
        /// Noise rate in events/s (the whole stream for `noise`).
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long, default_value_t = 200.0)]
        length: f64,
        #[arg(long, default_value_t = 4.0)]
        thickness: f64,
        /// Orientation of the bar's long axis in degrees (90 is vertical).
        #[arg(long, default_value_t = 90.0)]
        angle: f64,
        #[arg(long, default_value_t = 20.0)]
        radius: f64,
        #[arg(long)]
        start_x: Option<f64>,
        #[arg(long)]
        start_y: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        jitter_us: f64,
        /// Gesture direction, for `--kind gesture`.
        #[arg(long, value_enum, default_value = "right")]
        direction: Direction,
        /// Output file, `.evp` or `.csv`.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Describe an event file.
    Info { input: PathBuf },
    /// Run the filter chain and write the surviving events.
    Filter {
        input: PathBuf,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Optical flow per event; writes CSV and an optional colour image.
    Flow {
        input: PathBuf,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long, default_value_t = 3)]
        fit_radius: u16,
        #[arg(long, default_value_t = 20_000)]
        fit_window_us: u64,
        #[arg(long, default_value_t = 5)]
        min_support: usize,
        #[arg(long, default_value_t = 1e6)]
        max_speed: f64,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Learn prototypes and reference signatures from labelled recordings.
    GestureTrain {
        /// Training recordings as LABEL=PATH.
        #[arg(required = true, value_parser = parse_labelled)]
        samples: Vec<(String, PathBuf)>,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        hots: HotsArgs,
        /// Bank file; signatures go to `<bank>.csv`.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Classify a recording against a trained bank.
    GestureClassify {
        input: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        hots: HotsArgs,
    },
    /// Voxel grids and reconstructed frames, one per batch.
    Voxel {
        input: PathBuf,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long, default_value_t = 0.9)]
        decay: f64,
        #[arg(long, default_value_t = 0.05)]
        gain: f64,
        /// Output directory.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Live-view bitmaps at the display rate.
    Render {
        input: PathBuf,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long, default_value_t = 30_000)]
        decay_window_us: u64,
        #[arg(long, default_value_t = DISPLAY_RATE_HZ)]
        fps: f64,
        #[arg(long)]
        max_frames: Option<usize>,
        /// Output directory.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Accumulated-latency sweep over buffer sizes and event rates.
    Bench {
        /// Recording to draw batches from; synthetic gestures when absent.
        input: Option<PathBuf>,
        #[arg(long, default_value = "flow", value_parser = parse_algorithm)]
        algorithm: Algorithm,
        #[arg(long, value_delimiter = ',', default_values_t = crate::bench::DEFAULT_SIZES)]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = crate::bench::DEFAULT_RATES)]
        rates: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, default_value_t = crate::measure::DEFAULT_WARMUP)]
        warmup: usize,
        #[arg(long, default_value = "thread", value_parser = parse_dispatch)]
        dispatch: Dispatch,
        /// Per-event camera cost in seconds; measured when absent.
        #[arg(long)]
        lambda_cam: Option<f64>,
        #[command(flatten)]
        filter: FilterArgs,
        /// CSV report.
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Args, Clone)]
pub struct HotsArgs {
    #[arg(long, default_value_t = 32)]
    pub prototypes: usize,
    #[arg(long = "surface-radius", default_value_t = 4)]
    pub surface_radius: u16,
    #[arg(long, default_value_t = 20_000)]
    pub tau_us: u64,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 2_000_000)]
    pub window_us: u64,
}

impl HotsArgs {
    fn config(&self) -> HotsConfig {
        HotsConfig {
            radius: self.surface_radius,
            tau_us: self.tau_us,
            prototypes: self.prototypes,
            k_nn: self.k,
            window_us: self.window_us,
            ..HotsConfig::default()
        }
    }
}

fn read(path: &Path) -> Result<Vec<Event>> {
    formats::read_events(path)
}

fn check_bounds(events: &[Event], geometry: SensorGeometry, path: &Path) -> Result<()> {
    match events.iter().position(|e| !geometry.contains(e.x, e.y)) {
        Some(i) => Err(Error::Usage(format!(
            "{}: event {i} at ({}, {}) lies outside the {geometry} sensor; set --geometry",
            path.display(),
            events[i].x,
            events[i].y
        ))),
        None => Ok(()),
    }
}

fn pipeline_options(g: &GlobalArgs, filter: FilterConfig) -> Result<PipelineOptions> {
    if g.buffer_size == 0 {
        return Err(Error::Usage("--buffer-size must be at least 1".into()));
    }
    Ok(PipelineOptions {
        filter,
        schedule: if g.single_thread {
            Schedule::SingleThread
        } else {
            Schedule::Threaded
        },
        ..PipelineOptions::new(g.geometry, g.buffer_size)
    })
}

fn sidecar(output: &Path, config: &str) -> Result<()> {
    let mut p = output.as_os_str().to_owned();
    p.push(".run.ini");
    formats::write_file(Path::new(&p), config.as_bytes())
}

fn window(events: &[Event], window_us: u64) -> &[Event] {
    match events.first() {
        Some(f) => &events[..events.partition_point(|e| e.t - f.t < window_us)],
        None => events,
    }
}

/// Parses `args` (program name first), applies any `--config` file and runs
/// the chosen subcommand.
pub fn run<I: IntoIterator<Item = String>>(args: I) -> Result<()> {
    let mut cmd = Cli::command();
    cmd.build();
    let args = expand_args(&cmd, args.into_iter().collect())?;
    let matches = match cmd.clone().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            if e.use_stderr() {
                return Err(Error::Usage(e.render().to_string()));
            }
            let _ = e.print();
            return Ok(());
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Error::Usage(e.to_string()))?;
    let effective = effective_config(&cmd, &matches);
    execute(cli, &effective)
}

fn execute(cli: Cli, effective: &str) -> Result<()> {
    let g = &cli.global;
    let geometry = g.geometry;
    match cli.command {
        Cmd::Synth {
            kind,
            vx,
            vy,
            rate,
            duration,
            length,
            thickness,
            angle,
            radius,
            start_x,
            start_y,
            jitter_us,
            direction,
            output,
        } => {
            let mut spec = match kind {
                Kind::Gesture => gesture_spec(direction.into(), geometry, g.seed),
                Kind::Bar => SyntheticSpec::new(
                    SynthKind::TranslatingBar {
                        length,
                        thickness,
                        angle_deg: angle,
                    },
                    geometry,
                ),
                Kind::Blob => SyntheticSpec::new(SynthKind::MovingBlob { radius }, geometry),
                Kind::Noise => SyntheticSpec::new(SynthKind::PoissonNoise, geometry),
            };
            if !matches!(kind, Kind::Gesture) {
                spec.velocity = (vx, vy);
                spec.rate = rate;
                spec.duration_s = duration;
                spec.jitter_us = jitter_us;
                spec.seed = g.seed;
                if let Some(x) = start_x {
                    spec.start.0 = x;
                }
                if let Some(y) = start_y {
                    spec.start.1 = y;
                }
            }
            let stream = synthesize(&spec)?;
            formats::write_stream(&output, &stream.events, StreamFormat::from_path(&output))?;
            sidecar(&output, effective)?;
            let achieved = compute_event_rate(&stream.events).map_or(0.0, |r| r.per_second());
            say!(
                "{} events, {achieved:.1} ev/s -> {}",
                stream.events.len(),
                output.display()
            );
        }
        Cmd::Info { input } => {
            let loaded = formats::read_stream(&input, StreamFormat::from_path(&input))?;
            let ev = &loaded.events;
            let duration = match (ev.first(), ev.last()) {
                (Some(f), Some(l)) => (l.t - f.t) as f64 * 1e-6,
                _ => 0.0,
            };
            let rate = compute_event_rate(ev).map_or(0.0, |r| r.per_second());
            let (mut mx, mut my) = (0u16, 0u16);
            for e in ev {
                mx = mx.max(e.x);
                my = my.max(e.y);
            }
            say!("file: {}", input.display());
            say!("geometry: {geometry}");
            say!("events: {}", ev.len());
            say!("packets: {}", loaded.boundaries.len());
            say!("duration_s: {duration:.6}");
            say!("mean_rate_ev_per_s: {rate:.3}");
            if !ev.is_empty() {
                say!("coordinate_extent: {}x{}", mx as u32 + 1, my as u32 + 1);
            }
            say!("violations: {}", validate_stream(ev, geometry).len());
        }
        Cmd::Filter { input, filter, output } => {
            let events = read(&input)?;
            check_bounds(&events, geometry, &input)?;
            let cfg = filter.config(&events, geometry)?;
            let start = Instant::now();
            let (kept, stats) = evgate_core::filter::apply_chain(&events, geometry, &cfg)?;
            let dt = start.elapsed();
            formats::write_stream(&output, &kept, StreamFormat::from_path(&output))?;
            sidecar(&output, effective)?;
            let r = &stats.removed;
            say!(
                "in {} out {} kept {:.4} removed hot {} refractory {} spatiotemporal {} in {:.3} ms",
                stats.input_count,
                stats.output_count,
                stats.kept_fraction(),
                r.hot_pixel,
                r.refractory,
                r.spatiotemporal,
                dt.as_secs_f64() * 1e3
            );
        }
        Cmd::Flow {
            input,
            filter,
            fit_radius,
            fit_window_us,
            min_support,
            max_speed,
            image,
            output,
        } => {
            let events = read(&input)?;
            check_bounds(&events, geometry, &input)?;
            let options = pipeline_options(g, filter.config(&events, geometry)?)?;
            let cfg = FlowConfig {
                fit_radius,
                fit_window_us,
                min_support,
                max_speed,
                ..FlowConfig::default()
            };
            cfg.validate()?;
            let mut processor = FlowProcessor::new(geometry, cfg);
            let mut kept = Vec::with_capacity(events.len());
            let run = {
                let mut collector = Collecting {
                    inner: &mut processor,
                    seen: &mut kept,
                };
                run_pipeline(&events, &options, &mut collector, None)?
            };
            let mut failures = 0usize;
            let mut paired: Vec<(Event, FlowVector)> = Vec::new();
            let batches = run.results.iter().chain(run.partial.iter());
            for (e, v) in kept.iter().zip(batches.flat_map(|b| {
                failures += b.failures.total();
                b.vectors.iter()
            })) {
                if let Some(v) = v {
                    paired.push((*e, *v));
                }
            }
            formats::write_file(&output, formats::flow_csv(&paired).as_bytes())?;
            if let Some(img) = &image {
                formats::write_file(img, &formats::flow_ppm(geometry, &paired))?;
            }
            sidecar(&output, effective)?;
            say!(
                "events {} filtered {} batches {} vectors {} failures {} process {:.3} ms wall {:.3} ms",
                run.events_in,
                run.events_filtered,
                run.batches_emitted,
                paired.len(),
                failures,
                run.timings.process.as_secs_f64() * 1e3,
                run.wall.as_secs_f64() * 1e3
            );
        }
        Cmd::GestureTrain {
            samples,
            filter,
            hots,
            output,
        } => {
            let cfg = hots.config();
            cfg.validate()?;
            let mut streams = Vec::with_capacity(samples.len());
            for (label, path) in &samples {
                let events = read(path)?;
                check_bounds(&events, geometry, path)?;
                streams.push((label.clone(), events));
            }
            let fcfg = filter.config(&[], geometry)?;
            let captures: Vec<&[Event]> = streams.iter().map(|(_, s)| window(s, cfg.window_us)).collect();
            let bank = learn_prototypes(&captures, geometry, &cfg, &fcfg, g.seed)?;
            let mut rows = Vec::with_capacity(streams.len());
            for ((label, _), capture) in streams.iter().zip(&captures) {
                rows.push((describe(capture, &bank, g, &fcfg)?, label.clone()));
            }
            formats::write_bank(&output, &bank)?;
            let mut sig_path = output.as_os_str().to_owned();
            sig_path.push(".csv");
            formats::write_file(Path::new(&sig_path), formats::signatures_csv(&rows).as_bytes())?;
            sidecar(&output, effective)?;
            say!(
                "{} prototypes from {} recordings -> {}",
                bank.len(),
                rows.len(),
                output.display()
            );
        }
        Cmd::GestureClassify {
            input,
            bank,
            filter,
            hots,
        } => {
            let cfg = hots.config();
            let trained = formats::read_bank(&bank)?;
            let mut sig_path = bank.as_os_str().to_owned();
            sig_path.push(".csv");
            let sig_path = PathBuf::from(sig_path);
            let text = fs::read_to_string(&sig_path).map_err(|e| Error::io(&sig_path, e))?;
            let reference = formats::parse_signatures_csv(&text, &sig_path)?;
            let events = read(&input)?;
            check_bounds(&events, geometry, &input)?;
            let fcfg = filter.config(&[], geometry)?;
            let query = describe(window(&events, cfg.window_us), &trained, g, &fcfg)?;
            let result = knn_classify(&query, &reference, cfg.k_nn)?;
            let q = query.normalized();
            let mut per_class: BTreeMap<&str, f64> = BTreeMap::new();
            for (sig, label) in &reference {
                let d = sig
                    .normalized()
                    .iter()
                    .zip(&q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let best = per_class.entry(label).or_insert(f64::INFINITY);
                *best = best.min(d);
            }
            say!("label: {}", result.label);
            for (label, d) in per_class {
                say!("distance {label}: {d:.6}");
            }
        }
        Cmd::Voxel {
            input,
            filter,
            bins,
            decay,
            gain,
            output,
        } => {
            let events = read(&input)?;
            check_bounds(&events, geometry, &input)?;
            let options = pipeline_options(g, filter.config(&events, geometry)?)?;
            let backend = leaky_integrator_backend(decay, gain)?;
            let mut processor = FrameProcessor {
                bins,
                geometry,
                backend: Box::new(backend),
            };
            let run = run_pipeline(&events, &options, &mut processor, None)?;
            fs::create_dir_all(&output).map_err(|e| Error::io(&output, e))?;
            for (i, frame) in run.results.iter().enumerate() {
                formats::write_file(&output.join(format!("frame_{i:05}.pgm")), &formats::frame_pgm(frame))?;
            }
            let mut counts = run.batches_per_second();
            if let (Some(f), Some(l)) = (events.first(), events.last()) {
                counts.resize(((l.t - f.t) / 1_000_000) as usize + 1, 0);
            }
            let trace = FrameRateTrace {
                counts,
                display_rate_hz: DISPLAY_RATE_HZ,
            };
            formats::write_file(&output.join("fps.csv"), trace.to_csv().as_bytes())?;
            sidecar(&output.join("voxel"), effective)?;
            say!(
                "frames {} peak {}/s residual {} process {:.3} ms -> {}",
                run.batches_emitted,
                trace.peak(),
                run.residual,
                run.timings.process.as_secs_f64() * 1e3,
                output.display()
            );
        }
        Cmd::Render {
            input,
            filter,
            decay_window_us,
            fps,
            max_frames,
            output,
        } => {
            if !(fps > 0.0) {
                return Err(Error::Usage("--fps must be positive".into()));
            }
            let events = read(&input)?;
            check_bounds(&events, geometry, &input)?;
            let cfg = filter.config(&events, geometry)?;
            let (kept, _) = evgate_core::filter::apply_chain(&events, geometry, &cfg)?;
            fs::create_dir_all(&output).map_err(|e| Error::io(&output, e))?;
            let mut view = LiveView::new(geometry, decay_window_us).with_frame_rate(fps);
            let period = 1e6 / fps;
            let t0 = events.first().map_or(0, |e| e.t);
            let mut frames = 0usize;
            let mut next = 1usize;
            let mut idx = 0usize;
            let end = events.last().map_or(0, |e| e.t);
            loop {
                let tick = t0 + (next as f64 * period).round() as u64;
                while idx < kept.len() && kept[idx].t <= tick {
                    view.update(&kept[idx]);
                    idx += 1;
                }
                if tick > end + period as u64 || max_frames.is_some_and(|m| frames >= m) {
                    break;
                }
                let bitmap = view.snapshot(tick);
                formats::write_file(
                    &output.join(format!("live_{frames:05}.pgm")),
                    &formats::liveview_pgm(geometry, &bitmap),
                )?;
                frames += 1;
                next += 1;
            }
            sidecar(&output.join("render"), effective)?;
            say!("{frames} frames at {fps} Hz -> {}", output.display());
        }
        Cmd::Bench {
            input,
            algorithm,
            sizes,
            rates,
            repetitions,
            warmup,
            dispatch,
            lambda_cam,
            filter,
            output,
        } => {
            let events = match &input {
                Some(p) => {
                    let ev = read(p)?;
                    check_bounds(&ev, geometry, p)?;
                    ev
                }
                None => default_bench_stream(geometry, g.seed)?,
            };
            let mut options = BenchOptions::new(algorithm, geometry);
            options.sizes = sizes;
            options.rates = rates;
            options.measure = MeasureOptions {
                repetitions,
                warmup,
                dispatch,
            };
            options.buffer_model = g.buffer_model;
            options.filter = filter.config(&events, geometry)?;
            options.lambda_cam = lambda_cam;
            options.seed = g.seed;
            let report = run_bench(&events, &options)?;
            formats::write_file(&output, sweep_csv(&report.rows).as_bytes())?;
            sidecar(&output, effective)?;
            say!("lambda_cam {:.6e} s/event", report.camera.lambda_cam());
            say!("{}", report.summary().trim_end());
        }
    }
    Ok(())
}

/// Signature of one capture through the staged pipeline.
fn describe(
    capture: &[Event],
    bank: &evgate_core::hots::PrototypeBank,
    g: &GlobalArgs,
    filter: &FilterConfig,
) -> Result<evgate_core::hots::GestureSignature> {
    let options = pipeline_options(g, filter.clone())?;
    let mut processor = SignatureProcessor::new(g.geometry, bank.clone(), &FilterConfig::disabled());
    run_pipeline(capture, &options, &mut processor, None)?;
    Ok(processor.builder.signature().clone())
}

/// Records every batch it forwards, so outputs can be matched to events.
struct Collecting<'a, P> {
    inner: &'a mut P,
    seen: &'a mut Vec<Event>,
}

impl<P: evgate_core::BatchProcessor> evgate_core::BatchProcessor for Collecting<'_, P> {
    type Output = P::Output;

    fn process(&mut self, batch: &[Event]) -> std::result::Result<P::Output, evgate_core::ProcessorError> {
        self.seen.extend_from_slice(batch);
        self.inner.process(batch)
    }

    fn accepts_partial(&self) -> bool {
        self.inner.accepts_partial()
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
