//! Wire formats of the pulse path.
//!
//! Three encodings live here:
//!
//! - the 24-bit pulse payload: 9-bit label (3-bit channel, 6-bit neuron)
//!   plus 15-bit timestamp, big-endian over three octets;
//! - serial packets between FPGA and chip: a one-octet header, one or two
//!   pulse payloads, and a CRC-8 octet. On the wire every packet is framed
//!   with two idle chunks, so a single-pulse packet occupies 7 chunks of
//!   8 ns = 56 ns and a double-pulse packet 10 chunks = 80 ns;
//! - the playback image: little-endian 32-bit words, tagged in the top three
//!   bits, holding release groups of up to 184 pulses for up to 8 chips.

use crate::error::Error;
use crate::timebase::{FpgaTick, HicannTimestamp, TimePoint, FPGA_CLOCK_NS, TIMESTAMP_BITS};
use serde::{Deserialize, Serialize};

/// Chips addressable per FPGA.
pub const HICANNS_PER_FPGA: u8 = 8;

/// Label width inside a pulse payload.
pub const LABEL_BITS: u32 = 9;

/// Payload bits per pulse, used for throughput figures.
pub const BITS_PER_PULSE: u64 = (LABEL_BITS + TIMESTAMP_BITS) as u64;

/// Maximum pulses in one playback release group.
pub const MAX_GROUP_PULSES: usize = 184;

/// Pulse capacity of one playback/trace memory bank.
pub const MEMORY_CAPACITY_PULSES: u64 = 125_000_000;

/// Byte capacity of one playback/trace memory bank (512 MiB).
pub const MEMORY_CAPACITY_BYTES: u64 = 512 * 1024 * 1024;

/// One pulse as it travels between modules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseEvent {
    /// Chip index on its FPGA, 0..=7.
    pub hicann: u8,
    /// 9-bit source label: channel (top 3 bits) and neuron (low 6 bits).
    pub label9: u16,
    /// 15-bit timestamp on the 4 ns grid.
    pub ts: HicannTimestamp,
}

impl PulseEvent {
    pub fn new(hicann: u8, label9: u16, ts: HicannTimestamp) -> Result<Self, Error> {
        if hicann >= HICANNS_PER_FPGA {
            return Err(Error::domain(format!(
                "hicann index {hicann} out of range 0..8"
            )));
        }
        if label9 >= 1 << LABEL_BITS {
            return Err(Error::domain(format!("label {label9} wider than 9 bits")));
        }
        if ts >= 1 << TIMESTAMP_BITS {
            return Err(Error::domain(format!("timestamp {ts} wider than 15 bits")));
        }
        Ok(PulseEvent { hicann, label9, ts })
    }

    /// Merger-tree channel carried in the top three label bits.
    pub fn channel(&self) -> u8 {
        (self.label9 >> 6) as u8
    }

    /// Neuron index carried in the low six label bits.
    pub fn neuron(&self) -> u8 {
        (self.label9 & 0x3F) as u8
    }
}

// ---------------------------------------------------------------------------
// 24-bit pulse payload
// ---------------------------------------------------------------------------

/// Packs label and timestamp into the 24-bit big-endian payload.
pub fn encode_pulse(label9: u16, ts: HicannTimestamp) -> [u8; 3] {
    debug_assert!(label9 < 1 << LABEL_BITS && ts < 1 << TIMESTAMP_BITS);
    let v = ((label9 as u32) << TIMESTAMP_BITS) | ts as u32;
    [(v >> 16) as u8, (v >> 8) as u8, v as u8]
}

/// Inverse of [`encode_pulse`]. Every 24-bit value is a valid payload.
pub fn decode_pulse(bytes: [u8; 3]) -> (u16, HicannTimestamp) {
    let v = ((bytes[0] as u32) << 16) | ((bytes[1] as u32) << 8) | bytes[2] as u32;
    (
        (v >> TIMESTAMP_BITS) as u16,
        (v & ((1 << TIMESTAMP_BITS) - 1)) as HicannTimestamp,
    )
}

// ---------------------------------------------------------------------------
// Serial packets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketKind {
    Single,
    Double,
}

impl PacketKind {
    pub fn header(self) -> u8 {
        match self {
            PacketKind::Single => 0x01,
            PacketKind::Double => 0x02,
        }
    }

    pub fn pulse_count(self) -> usize {
        match self {
            PacketKind::Single => 1,
            PacketKind::Double => 2,
        }
    }

    /// Octets on the wire: header + payloads + CRC.
    pub fn len_octets(self) -> usize {
        1 + 3 * self.pulse_count() + 1
    }
}

/// CRC-8, polynomial 0x07, init 0x00, no reflection, over header and payload.
pub fn crc8(bytes: &[u8]) -> u8 {
    let mut crc = 0u8;
    for &b in bytes {
        crc ^= b;
        for _ in 0..8 {
            crc = if crc & 0x80 != 0 {
                (crc << 1) ^ 0x07
            } else {
                crc << 1
            };
        }
    }
    crc
}

/// Encodes one packet. `pulses` must hold one or two `(label9, ts)` pairs.
pub fn encode_packet(pulses: &[(u16, HicannTimestamp)]) -> Result<Vec<u8>, Error> {
    let kind = match pulses.len() {
        1 => PacketKind::Single,
        2 => PacketKind::Double,
        n => {
            return Err(Error::domain(format!(
                "packet carries 1 or 2 pulses, got {n}"
            )))
        }
    };
    let mut out = Vec::with_capacity(kind.len_octets());
    out.push(kind.header());
    for &(label9, ts) in pulses {
        if label9 >= 1 << LABEL_BITS || ts >= 1 << TIMESTAMP_BITS {
            return Err(Error::domain(format!(
                "pulse ({label9}, {ts}) exceeds field widths"
            )));
        }
        out.extend_from_slice(&encode_pulse(label9, ts));
    }
    out.push(crc8(&out));
    Ok(out)
}

/// Decodes the packet starting at `bytes[0]`, returning the pulses and the
/// number of octets consumed. Offsets in errors are absolute in `bytes`.
pub fn decode_packet(bytes: &[u8]) -> Result<(Vec<(u16, HicannTimestamp)>, usize), Error> {
    decode_packet_at(bytes, 0)
}

fn decode_packet_at(
    bytes: &[u8],
    at: usize,
) -> Result<(Vec<(u16, HicannTimestamp)>, usize), Error> {
    let Some(&header) = bytes.get(at) else {
        return Err(Error::format(at, "empty input, expected packet header"));
    };
    let kind = match header {
        0x01 => PacketKind::Single,
        0x02 => PacketKind::Double,
        other => {
            return Err(Error::format(
                at,
                format!("unknown packet header 0x{other:02x}"),
            ));
        }
    };
    let len = kind.len_octets();
    if bytes.len() < at + len {
        return Err(Error::format(
            bytes.len(),
            format!(
                "truncated packet: need {len} octets, have {}",
                bytes.len() - at
            ),
        ));
    }
    let body = &bytes[at..at + len];
    let expected = crc8(&body[..len - 1]);
    if body[len - 1] != expected {
        return Err(Error::format(
            at + len - 1,
            format!(
                "crc mismatch: stored 0x{:02x}, computed 0x{expected:02x}",
                body[len - 1]
            ),
        ));
    }
    let mut pulses = Vec::with_capacity(kind.pulse_count());
    for i in 0..kind.pulse_count() {
        let o = 1 + 3 * i;
        pulses.push(decode_pulse([body[o], body[o + 1], body[o + 2]]));
    }
    Ok((pulses, len))
}

/// Decodes a concatenation of packets, e.g. a captured stream dump.
pub fn decode_packet_stream(bytes: &[u8]) -> Result<Vec<Vec<(u16, HicannTimestamp)>>, Error> {
    let mut out = Vec::new();
    let mut at = 0;
    while at < bytes.len() {
        let (pulses, used) = decode_packet_at(bytes, at)?;
        out.push(pulses);
        at += used;
    }
    Ok(out)
}

/// Wire occupancy of one packet: its chunks plus two idle chunks, each one
/// 8 ns FPGA cycle. Single: (5+2)*8 = 56 ns. Double: (8+2)*8 = 80 ns.
pub fn packet_occupancy(kind: PacketKind) -> TimePoint {
    (kind.len_octets() as TimePoint + 2) * FPGA_CLOCK_NS
}

// ---------------------------------------------------------------------------
// Playback image
// ---------------------------------------------------------------------------

const TAG_SHIFT: u32 = 29;
const TAG_HEADER: u32 = 0b000;
const TAG_GROUP: u32 = 0b001;
const TAG_PULSE: u32 = 0b010;
/// Header word: tag 000 plus format version 1 in the low bits.
const HEADER_WORD: u32 = 0x0000_0001;
/// Release ticks must fit the 29 bits below the tag.
pub const MAX_RELEASE_TICK: FpgaTick = (1 << TAG_SHIFT) - 1;

/// One pulse inside a release group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPulse {
    pub hicann: u8,
    pub label9: u16,
    pub ts: HicannTimestamp,
}

impl GroupPulse {
    /// 14-bit on-wire label: chip index, 9-bit label, two reserved zero bits.
    pub fn label14(&self) -> u16 {
        ((self.hicann as u16) << 11) | (self.label9 << 2)
    }
}

/// Pulses sharing one release window; the j-th pulse leaves on cycle
/// `release_tick + j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseGroup {
    pub release_tick: FpgaTick,
    pub pulses: Vec<GroupPulse>,
}

/// A full playback memory image.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaybackImage {
    pub groups: Vec<PulseGroup>,
}

impl PlaybackImage {
    pub fn pulse_count(&self) -> u64 {
        self.groups.iter().map(|g| g.pulses.len() as u64).sum()
    }

    /// Encoded size: one header word, one word per group, one per pulse.
    pub fn word_count(&self) -> u64 {
        1 + self.groups.len() as u64 + self.pulse_count()
    }

    pub fn byte_count(&self) -> u64 {
        4 * self.word_count()
    }

    /// Checks the structural invariants shared by encode and the engine:
    /// non-empty groups of at most 184 pulses, strictly increasing release
    /// ticks, all fields within their wire widths.
    pub fn validate(&self) -> Result<(), Error> {
        let mut prev_tick: Option<FpgaTick> = None;
        for (gi, group) in self.groups.iter().enumerate() {
            if group.pulses.is_empty() {
                return Err(Error::validation(format!("group {gi} is empty")));
            }
            if group.pulses.len() > MAX_GROUP_PULSES {
                return Err(Error::validation(format!(
                    "group {gi} holds {} pulses, limit is {MAX_GROUP_PULSES}",
                    group.pulses.len()
                )));
            }
            if group.release_tick > MAX_RELEASE_TICK {
                return Err(Error::validation(format!(
                    "group {gi} release tick {} exceeds {MAX_RELEASE_TICK}",
                    group.release_tick
                )));
            }
            if let Some(prev) = prev_tick {
                if group.release_tick <= prev {
                    return Err(Error::validation(format!(
                        "group {gi} release tick {} does not increase over {prev}",
                        group.release_tick
                    )));
                }
            }
            prev_tick = Some(group.release_tick);
            for (pi, p) in group.pulses.iter().enumerate() {
                if p.hicann >= HICANNS_PER_FPGA
                    || p.label9 >= 1 << LABEL_BITS
                    || p.ts >= 1 << TIMESTAMP_BITS
                {
                    return Err(Error::validation(format!(
                        "group {gi} pulse {pi} has out-of-range fields"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Enforces the two memory bounds of one playback bank.
    pub fn capacity_check(&self) -> Result<(), Error> {
        let pulses = self.pulse_count();
        if pulses > MEMORY_CAPACITY_PULSES {
            return Err(Error::capacity(format!(
                "{pulses} pulses exceed the {MEMORY_CAPACITY_PULSES}-pulse bank"
            )));
        }
        let bytes = self.byte_count();
        if bytes > MEMORY_CAPACITY_BYTES {
            return Err(Error::capacity(format!(
                "{bytes} bytes exceed the {MEMORY_CAPACITY_BYTES}-byte bank"
            )));
        }
        Ok(())
    }
}

/// Bytes needed for `n_pulses` densely grouped pulses (184 per group), with
/// the same capacity bounds as [`PlaybackImage::capacity_check`].
pub fn memory_budget(n_pulses: u64) -> Result<u64, Error> {
    if n_pulses > MEMORY_CAPACITY_PULSES {
        return Err(Error::capacity(format!(
            "{n_pulses} pulses exceed the {MEMORY_CAPACITY_PULSES}-pulse bank"
        )));
    }
    let groups = n_pulses.div_ceil(MAX_GROUP_PULSES as u64);
    let bytes = 4 * (1 + groups + n_pulses);
    if bytes > MEMORY_CAPACITY_BYTES {
        return Err(Error::capacity(format!(
            "{bytes} bytes exceed the {MEMORY_CAPACITY_BYTES}-byte bank"
        )));
    }
    Ok(bytes)
}

/// Encodes an image to its little-endian 32-bit word stream.
pub fn encode_playback_image(image: &PlaybackImage) -> Result<Vec<u8>, Error> {
    image.validate()?;
    image.capacity_check()?;
    let mut out = Vec::with_capacity(image.byte_count() as usize);
    let mut push = |w: u32| out.extend_from_slice(&w.to_le_bytes());
    push(HEADER_WORD);
    for group in &image.groups {
        push((TAG_GROUP << TAG_SHIFT) | group.release_tick);
        for p in &group.pulses {
            push((TAG_PULSE << TAG_SHIFT) | ((p.label14() as u32) << TIMESTAMP_BITS) | p.ts as u32);
        }
    }
    Ok(out)
}

/// Decodes a word stream back into an image. Offsets in errors are word
/// indices. The two reserved label bits are ignored.
pub fn decode_playback_image(bytes: &[u8]) -> Result<PlaybackImage, Error> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::format(
            bytes.len() / 4,
            format!(
                "image length {} is not a whole number of 32-bit words",
                bytes.len()
            ),
        ));
    }
    let words: Vec<u32> = bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if words.is_empty() {
        return Err(Error::format(0, "empty image, expected header word"));
    }
    if words[0] != HEADER_WORD {
        return Err(Error::format(
            0,
            format!("bad header word 0x{:08x}", words[0]),
        ));
    }
    let mut image = PlaybackImage::default();
    for (wi, &word) in words.iter().enumerate().skip(1) {
        let tag = word >> TAG_SHIFT;
        match tag {
            TAG_GROUP => {
                image.groups.push(PulseGroup {
                    release_tick: word & MAX_RELEASE_TICK,
                    pulses: Vec::new(),
                });
            }
            TAG_PULSE => {
                let Some(group) = image.groups.last_mut() else {
                    return Err(Error::format(wi, "pulse word before any group word"));
                };
                let label14 = ((word >> TIMESTAMP_BITS) & 0x3FFF) as u16;
                group.pulses.push(GroupPulse {
                    hicann: (label14 >> 11) as u8,
                    label9: (label14 >> 2) & 0x1FF,
                    ts: (word & ((1 << TIMESTAMP_BITS) - 1)) as HicannTimestamp,
                });
            }
            TAG_HEADER => {
                return Err(Error::format(wi, "unexpected header word inside image"));
            }
            other => {
                return Err(Error::format(wi, format!("unknown word tag 0b{other:03b}")));
            }
        }
    }
    image.validate().map_err(|e| match e {
        Error::Validation(msg) => Error::format(words.len(), msg),
        other => other,
    })?;
    Ok(image)
}
