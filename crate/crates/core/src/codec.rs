//! Bit-exact packet container for event transfer.
//!
//! Layout, all little-endian:
//!
//! ```text
//! header  (16 bytes): magic 0x45565031 u32 | seq u32 | count u32 | reserved u32 = 0
//! record  (16 bytes): t u64 | x u16 | y u16 | polarity u8 (0 off, 1 on) | 3 reserved bytes = 0
//! ```
//!
//! A packet never exceeds [`MAX_PACKET_BYTES`], so it holds at most
//! [`MAX_EVENTS_PER_PACKET`] events. A stream file is a plain concatenation of
//! packets with contiguous sequence numbers.

use alloc::vec::Vec;

use thiserror::Error;

use crate::event::{Event, Polarity};

pub const MAGIC: u32 = 0x4556_5031;
pub const HEADER_BYTES: usize = 16;
pub const RECORD_BYTES: usize = 16;
pub const MAX_PACKET_BYTES: usize = 16 * 1024;
pub const MAX_EVENTS_PER_PACKET: usize = (MAX_PACKET_BYTES - HEADER_BYTES) / RECORD_BYTES;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("packet of {events} events needs {bytes} bytes, limit is {MAX_PACKET_BYTES}")]
    PacketTooLarge { events: usize, bytes: usize },
    #[error("bad magic 0x{found:08x} at byte {offset}")]
    BadMagic { offset: usize, found: u32 },
    #[error("truncated packet at byte {offset}: need {needed} bytes, have {available}")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("packet declares {declared} bytes but {actual} were supplied")]
    CountMismatch { declared: usize, actual: usize },
    #[error("timestamp regression at record {index}: {t} after {previous}")]
    NonMonotoneTimestamps { index: usize, previous: u64, t: u64 },
    #[error("malformed record {index}: {reason}")]
    InvalidRecord { index: usize, reason: &'static str },
    #[error("non-zero reserved header field in packet at byte {offset}")]
    ReservedHeader { offset: usize },
    #[error("packet sequence gap: expected {expected}, found {found}")]
    SeqGap { expected: u32, found: u32 },
}

/// A sequence-numbered group of time-ordered events.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventPacket {
    pub seq: u32,
    pub events: Vec<Event>,
}

impl EventPacket {
    pub fn new(seq: u32, events: Vec<Event>) -> Self {
        EventPacket { seq, events }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_BYTES + self.events.len() * RECORD_BYTES
    }
}

fn check_monotone(events: &[Event]) -> Result<(), CodecError> {
    for (index, pair) in events.windows(2).enumerate() {
        if pair[1].t < pair[0].t {
            return Err(CodecError::NonMonotoneTimestamps {
                index: index + 1,
                previous: pair[0].t,
                t: pair[1].t,
            });
        }
    }
    Ok(())
}

/// Appends the encoding of `packet` to `out`.
pub fn encode_packet_into(packet: &EventPacket, out: &mut Vec<u8>) -> Result<(), CodecError> {
    let bytes = packet.encoded_len();
    if bytes > MAX_PACKET_BYTES {
        return Err(CodecError::PacketTooLarge {
            events: packet.events.len(),
            bytes,
        });
    }
    check_monotone(&packet.events)?;
    out.reserve(bytes);
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.extend_from_slice(&packet.seq.to_le_bytes());
    out.extend_from_slice(&(packet.events.len() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for e in &packet.events {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.polarity.index() as u8);
        out.extend_from_slice(&[0, 0, 0]);
    }
    Ok(())
}

pub fn encode_packet(packet: &EventPacket) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(packet.encoded_len().min(MAX_PACKET_BYTES));
    encode_packet_into(packet, &mut out)?;
    Ok(out)
}

#[inline]
fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

#[inline]
fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

#[inline]
fn le_u64(b: &[u8], at: usize) -> u64 {
    let mut a = [0u8; 8];
    a.copy_from_slice(&b[at..at + 8]);
    u64::from_le_bytes(a)
}

/// Decodes the packet starting at `bytes[0]` and returns it together with the
/// number of bytes it occupies. Trailing bytes are left for the caller.
fn decode_prefix(bytes: &[u8], offset: usize) -> Result<(EventPacket, usize), CodecError> {
    if bytes.len() < HEADER_BYTES {
        return Err(CodecError::Truncated {
            offset,
            needed: HEADER_BYTES,
            available: bytes.len(),
        });
    }
    let magic = le_u32(bytes, 0);
    if magic != MAGIC {
        return Err(CodecError::BadMagic { offset, found: magic });
    }
    if le_u32(bytes, 12) != 0 {
        return Err(CodecError::ReservedHeader { offset });
    }
    let seq = le_u32(bytes, 4);
    let count = le_u32(bytes, 8) as usize;
    let needed = count
        .checked_mul(RECORD_BYTES)
        .and_then(|n| n.checked_add(HEADER_BYTES))
        .unwrap_or(usize::MAX);
    if needed > MAX_PACKET_BYTES {
        return Err(CodecError::PacketTooLarge {
            events: count,
            bytes: needed,
        });
    }
    if bytes.len() < needed {
        return Err(CodecError::Truncated {
            offset,
            needed,
            available: bytes.len(),
        });
    }
    let mut events = Vec::with_capacity(count);
    for (index, rec) in bytes[HEADER_BYTES..needed].chunks_exact(RECORD_BYTES).enumerate() {
        let polarity = match rec[12] {
            0 => Polarity::Off,
            1 => Polarity::On,
            _ => {
                return Err(CodecError::InvalidRecord {
                    index,
                    reason: "polarity byte must be 0 or 1",
                })
            }
        };
        if rec[13..16] != [0, 0, 0] {
            return Err(CodecError::InvalidRecord {
                index,
                reason: "reserved bytes must be zero",
            });
        }
        events.push(Event {
            t: le_u64(rec, 0),
            x: le_u16(rec, 8),
            y: le_u16(rec, 10),
            polarity,
        });
    }
    check_monotone(&events)?;
    Ok((EventPacket { seq, events }, needed))
}

/// Exact inverse of [`encode_packet`]; any byte sequence outside its image is
/// rejected.
pub fn decode_packet(bytes: &[u8]) -> Result<EventPacket, CodecError> {
    let (packet, used) = decode_prefix(bytes, 0)?;
    if used != bytes.len() {
        return Err(CodecError::CountMismatch {
            declared: used,
            actual: bytes.len(),
        });
    }
    Ok(packet)
}

/// Events of a multi-packet stream plus the index at which each packet's
/// events begin.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecodedStream {
    pub events: Vec<Event>,
    pub boundaries: Vec<usize>,
}

impl DecodedStream {
    pub fn packet_count(&self) -> usize {
        self.boundaries.len()
    }
}

/// Splits a concatenation of packets. Sequence numbers must be contiguous and
/// timestamps must not regress across packet boundaries.
pub fn decode_stream(bytes: &[u8]) -> Result<DecodedStream, CodecError> {
    let mut out = DecodedStream::default();
    let mut offset = 0;
    let mut expected: Option<u32> = None;
    while offset < bytes.len() {
        let (packet, used) = decode_prefix(&bytes[offset..], offset)?;
        if let Some(exp) = expected {
            if packet.seq != exp {
                return Err(CodecError::SeqGap {
                    expected: exp,
                    found: packet.seq,
                });
            }
        }
        expected = Some(packet.seq.wrapping_add(1));
        if let (Some(prev), Some(first)) = (out.events.last(), packet.events.first()) {
            if first.t < prev.t {
                return Err(CodecError::NonMonotoneTimestamps {
                    index: out.events.len(),
                    previous: prev.t,
                    t: first.t,
                });
            }
        }
        out.boundaries.push(out.events.len());
        out.events.extend_from_slice(&packet.events);
        offset += used;
    }
    Ok(out)
}

/// Cuts a time-ordered stream into packets of at most `per_packet` events
/// with sequence numbers starting at 0. An empty stream yields one empty
/// packet so that the result is never a zero-length file.
pub fn packetize(events: &[Event], per_packet: usize) -> Vec<EventPacket> {
    let per_packet = per_packet.clamp(1, MAX_EVENTS_PER_PACKET);
    if events.is_empty() {
        return alloc::vec![EventPacket::new(0, Vec::new())];
    }
    events
        .chunks(per_packet)
        .enumerate()
        .map(|(i, c)| EventPacket::new(i as u32, c.to_vec()))
        .collect()
}

/// Encodes a whole stream as concatenated packets.
pub fn encode_stream(events: &[Event], per_packet: usize) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(HEADER_BYTES + events.len() * RECORD_BYTES);
    for p in packetize(events, per_packet) {
        encode_packet_into(&p, &mut out)?;
    }
    Ok(out)
}
