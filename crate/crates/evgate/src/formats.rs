//! Event files, images and model files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use evgate_core::codec::{self, MAX_EVENTS_PER_PACKET};
use evgate_core::flow::FlowVector;
use evgate_core::hots::{GestureSignature, PrototypeBank};
use evgate_core::repr::Frame;
use evgate_core::{Event, Polarity, SensorGeometry};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "t_us,x,y,p";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamFormat {
    PacketBinary,
    Csv,
}

impl StreamFormat {
    /// `.csv` is CSV, anything else the packet format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => StreamFormat::Csv,
            _ => StreamFormat::PacketBinary,
        }
    }
}

/// Events plus the index at which each packet starts (packet files only).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadedStream {
    pub events: Vec<Event>,
    pub boundaries: Vec<usize>,
}

pub fn read_stream(path: &Path, format: StreamFormat) -> Result<LoadedStream> {
    match format {
        StreamFormat::PacketBinary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let decoded = codec::decode_stream(&bytes).map_err(|source| Error::Codec {
                path: path.to_owned(),
                source,
            })?;
            Ok(LoadedStream {
                events: decoded.events,
                boundaries: decoded.boundaries,
            })
        }
        StreamFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Ok(LoadedStream {
                events: parse_csv(&text, path)?,
                boundaries: Vec::new(),
            })
        }
    }
}

pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    Ok(read_stream(path, StreamFormat::from_path(path))?.events)
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Vec<Event>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(err(1, format!("expected header `{CSV_HEADER}`"))),
    }
    let mut events = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(err(line_no, format!("expected 4 fields, found {}", fields.len())));
        }
        let t = fields[0]
            .parse::<u64>()
            .map_err(|e| err(line_no, format!("t_us: {e}")))?;
        let x = fields[1].parse::<u16>().map_err(|e| err(line_no, format!("x: {e}")))?;
        let y = fields[2].parse::<u16>().map_err(|e| err(line_no, format!("y: {e}")))?;
        let polarity = match fields[3] {
            "0" => Polarity::Off,
            "1" => Polarity::On,
            other => return Err(err(line_no, format!("polarity must be 0 or 1, found `{other}`"))),
        };
        if let Some(prev) = events.last().map(|e: &Event| e.t) {
            if t < prev {
                return Err(err(line_no, format!("timestamp {t} precedes {prev}")));
            }
        }
        events.push(Event::new(t, x, y, polarity));
    }
    Ok(events)
}

pub fn csv_string(events: &[Event]) -> String {
    let mut out = String::with_capacity(16 * events.len() + 16);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for e in events {
        let _ = writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.polarity.index());
    }
    out
}

pub fn write_stream(path: &Path, events: &[Event], format: StreamFormat) -> Result<()> {
    let bytes = match format {
        StreamFormat::PacketBinary => {
            codec::encode_stream(events, MAX_EVENTS_PER_PACKET).map_err(|source| Error::Codec {
                path: path.to_owned(),
                source,
            })?
        }
        StreamFormat::Csv => csv_string(events).into_bytes(),
    };
    write_file(path, &bytes)
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<()> {
    write_stream(path, events, StreamFormat::from_path(path))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Binary greymap (P5, maxval 255).
pub fn pgm(geometry: SensorGeometry, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", geometry.width(), geometry.height()).into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Binary pixmap (P6, maxval 255), `rgb` holding three bytes per pixel.
pub fn ppm(geometry: SensorGeometry, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", geometry.width(), geometry.height()).into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// Set pixels are 255, clear ones 0.
pub fn liveview_pgm(geometry: SensorGeometry, bitmap: &[bool]) -> Vec<u8> {
    let px: Vec<u8> = bitmap.iter().map(|&b| if b { 255 } else { 0 }).collect();
    pgm(geometry, &px)
}

/// Intensity in `[0, 1]` to a byte, rounding half up.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn frame_pgm(frame: &Frame) -> Vec<u8> {
    let px: Vec<u8> = frame.pixels.iter().map(|&v| quantize(v)).collect();
    pgm(frame.geometry, &px)
}

/// HSV with `h` in degrees and `s`, `v` in `[0, 1]`.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [quantize(r + m), quantize(g + m), quantize(b + m)]
}

/// Colour-coded flow: hue is direction (0 degrees red), value is speed
/// relative to the 95th percentile. The latest vector per pixel wins;
/// pixels without flow are black.
pub fn flow_ppm(geometry: SensorGeometry, flows: &[(Event, FlowVector)]) -> Vec<u8> {
    let mut speeds: Vec<f64> = flows.iter().map(|(_, v)| v.speed).collect();
    speeds.sort_by(f64::total_cmp);
    let p95 = speeds
        .get(((speeds.len() as f64 * 0.95) as usize).min(speeds.len().saturating_sub(1)))
        .copied()
        .unwrap_or(1.0)
        .max(f64::MIN_POSITIVE);
    let mut rgb = vec![0u8; 3 * geometry.pixel_count()];
    for (e, v) in flows {
        if let Some(i) = geometry.index(e.x, e.y) {
            let hue = v.angle().to_degrees();
            rgb[3 * i..3 * i + 3].copy_from_slice(&hsv_to_rgb(hue, 1.0, (v.speed / p95).min(1.0)));
        }
    }
    ppm(geometry, &rgb)
}

pub fn flow_csv(flows: &[(Event, FlowVector)]) -> String {
    let mut out = String::from("t_us,x,y,p,vx,vy,speed,scale\n");
    for (e, v) in flows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6e},{:.6e},{:.6e},{}",
            e.t,
            e.x,
            e.y,
            e.polarity.index(),
            v.vx,
            v.vy,
            v.speed,
            v.scale
        );
    }
    out
}

pub fn read_bank(path: &Path) -> Result<PrototypeBank> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    PrototypeBank::from_bytes(&bytes).map_err(|source| Error::Bank {
        path: path.to_owned(),
        source,
    })
}

pub fn write_bank(path: &Path, bank: &PrototypeBank) -> Result<()> {
    write_file(path, &bank.to_bytes())
}

/// One `label,c0,c1,...` row per signature, with a header.
pub fn signatures_csv(rows: &[(GestureSignature, String)]) -> String {
    let k = rows.first().map_or(0, |r| r.0.histogram.len());
    let mut out = String::from("label");
    for j in 0..k {
        let _ = write!(out, ",c{j}");
    }
    out.push('\n');
    for (sig, label) in rows {
        out.push_str(label);
        for c in &sig.histogram {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_signatures_csv(text: &str, path: &Path) -> Result<Vec<(GestureSignature, String)>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let k = match lines.next() {
        Some((_, h)) if h.starts_with("label") => h.split(',').count() - 1,
        _ => return Err(err(1, "expected a `label,c0,...` header".into())),
    };
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label = fields.next().unwrap_or_default().to_string();
        let histogram = fields
            .map(|f| f.trim().parse::<u64>().map_err(|e| err(i + 1, e.to_string())))
            .collect::<Result<Vec<u64>>>()?;
        if histogram.len() != k {
            return Err(err(i + 1, format!("expected {k} counts, found {}", histogram.len())));
        }
        rows.push((GestureSignature { histogram }, label));
    }
    Ok(rows)
}
