//! Trace module: records upstream pulses into a replay memory.
//!
//! Eight per-channel FIFOs buffer arrivals; a drain process moves at most
//! two records per 8 ns cycle into memory, scanning channels round-robin
//! starting after the last one served. Memory holds a bounded number of
//! entries. Because stored timestamps are only 15 bits, the module appends
//! a marker entry every counter wrap so offline unwrapping can recover
//! absolute times. Marker order against same-instant storage matters: the
//! caller runs the wrap marker before any drain at the same instant, which
//! makes "markers preceding a record" equal the storage time's full wrap
//! count; a record whose timestamp is ahead of its storage phase was
//! stamped just before the last counted wrap and steps one epoch back.

use crate::error::Error;
use crate::link::FabricPulse;
use crate::spikegen::SpikeTrain;
use crate::timebase::{tech_to_bio, TimePoint, WRAP_PERIOD_NS};
use std::collections::VecDeque;

pub const TRACE_CHANNELS: usize = 8;
pub const DRAINS_PER_CYCLE: usize = 2;

/// One stored pulse. `pulse_id` is simulation bookkeeping carried next to
/// the record; the hardware-visible content is channel, label and stamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub channel: u8,
    pub label9: u16,
    pub ts: u16,
    /// Storage instant: when the drain moved the record into memory.
    pub record_ns: TimePoint,
    pub pulse_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEntry {
    Pulse(TraceRecord),
    /// Appended when the shared 15-bit counter wraps.
    WrapMarker {
        at_ns: TimePoint,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraceStats {
    pub arrived: u64,
    pub fifo_dropped: u64,
    pub memory_dropped: u64,
    pub recorded: u64,
    pub markers: u64,
}

/// What one drain cycle did. `wrote` and `lost` carry pulse ids for fate
/// bookkeeping; `backlog` tells the scheduler whether another cycle is due.
#[derive(Debug, Clone, Default)]
pub struct DrainReport {
    pub wrote: Vec<u32>,
    pub lost: Vec<u32>,
    pub backlog: bool,
}

#[derive(Debug, Clone)]
pub struct TraceModule {
    fifos: [VecDeque<FabricPulse>; TRACE_CHANNELS],
    fifo_depth: usize,
    pub memory: Vec<TraceEntry>,
    capacity: u64,
    /// Channel the round-robin scan starts at: one past the last served.
    rr_next: usize,
    /// Pending drain cycle, owned here so callers never double-schedule.
    pub drain_at: Option<TimePoint>,
    pub stats: TraceStats,
}

/// Index of a pulse entry in trace memory.
pub type RecordIndex = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TracePush {
    Queued,
    DroppedFifo,
}

impl TraceModule {
    pub fn new(fifo_depth: usize, capacity: u64) -> Self {
        TraceModule {
            fifos: Default::default(),
            fifo_depth,
            memory: Vec::new(),
            capacity,
            rr_next: 0,
            drain_at: None,
            stats: TraceStats::default(),
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn push(&mut self, channel: u8, pulse: FabricPulse) -> TracePush {
        self.stats.arrived += 1;
        let fifo = &mut self.fifos[channel as usize];
        if fifo.len() == self.fifo_depth {
            self.stats.fifo_dropped += 1;
            return TracePush::DroppedFifo;
        }
        fifo.push_back(pulse);
        TracePush::Queued
    }

    pub fn backlog(&self) -> bool {
        self.fifos.iter().any(|f| !f.is_empty())
    }

    /// Runs one drain cycle at `now`: up to [`DRAINS_PER_CYCLE`] records
    /// move from the FIFOs to memory, scanned round-robin from after the
    /// channel served last. A record finding memory full is lost.
    pub fn drain_cycle(&mut self, now: TimePoint) -> DrainReport {
        let mut report = DrainReport::default();
        for _ in 0..DRAINS_PER_CYCLE {
            let mut served = None;
            for k in 0..TRACE_CHANNELS {
                let ch = (self.rr_next + k) % TRACE_CHANNELS;
                if let Some(pulse) = self.fifos[ch].pop_front() {
                    served = Some(ch);
                    if (self.memory.len() as u64) < self.capacity {
                        self.memory.push(TraceEntry::Pulse(TraceRecord {
                            channel: ch as u8,
                            label9: pulse.label9,
                            ts: pulse.ts,
                            record_ns: now,
                            pulse_id: pulse.id,
                        }));
                        self.stats.recorded += 1;
                        report.wrote.push(pulse.id);
                    } else {
                        self.stats.memory_dropped += 1;
                        report.lost.push(pulse.id);
                    }
                    break;
                }
            }
            match served {
                Some(ch) => self.rr_next = (ch + 1) % TRACE_CHANNELS,
                None => break,
            }
        }
        report.backlog = self.backlog();
        report
    }

    /// Appends the wrap marker for the counter period ending at `now`.
    /// A marker consumes a memory entry like any record.
    pub fn wrap_marker(&mut self, now: TimePoint) {
        if (self.memory.len() as u64) < self.capacity {
            self.memory.push(TraceEntry::WrapMarker { at_ns: now });
            self.stats.markers += 1;
        } else {
            self.stats.memory_dropped += 1;
        }
    }
}

/// A trace record with its absolute time recovered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnwrappedRecord {
    pub channel: u8,
    pub label9: u16,
    pub ts: u16,
    pub stamp_ns: TimePoint,
    pub bio_ms: f64,
    pub pulse_id: u32,
    /// Position of the entry in trace memory.
    pub index: RecordIndex,
}

/// Recovers absolute stamp times from memory order and wrap markers.
///
/// The epoch of a record is the number of markers before it, minus one
/// when the stored timestamp exceeds the counter phase at the record's
/// storage instant: such a pulse was stamped before the wrap the module
/// had already counted. Stamp-to-storage transit is far below one counter
/// period, so the comparison is unambiguous.
pub fn unwrap_records(memory: &[TraceEntry]) -> Result<Vec<UnwrappedRecord>, Error> {
    let mut out = Vec::new();
    let mut epoch: u64 = 0;
    for (index, entry) in memory.iter().enumerate() {
        match *entry {
            TraceEntry::WrapMarker { .. } => epoch += 1,
            TraceEntry::Pulse(r) => {
                let phase = r.record_ns % WRAP_PERIOD_NS;
                let ts_ns = r.ts as u64 * 4;
                let e = if ts_ns > phase {
                    epoch.checked_sub(1).ok_or_else(|| {
                        Error::consistency(format!(
                            "record at index {index} stamped {ts_ns} ns into the period but arrived at phase {phase} ns before any wrap"
                        ))
                    })?
                } else {
                    epoch
                };
                let stamp_ns = e * WRAP_PERIOD_NS + ts_ns;
                out.push(UnwrappedRecord {
                    channel: r.channel,
                    label9: r.label9,
                    ts: r.ts,
                    stamp_ns,
                    bio_ms: tech_to_bio(stamp_ns),
                    pulse_id: r.pulse_id,
                    index: index as RecordIndex,
                });
            }
        }
    }
    Ok(out)
}

/// Groups unwrapped records into per-source spike trains, sorted by time.
/// The channel index doubles as the chip index.
pub fn to_spike_trains(records: &[UnwrappedRecord]) -> Result<Vec<SpikeTrain>, Error> {
    let mut by_source: std::collections::BTreeMap<(u8, u16), Vec<f64>> =
        std::collections::BTreeMap::new();
    for r in records {
        by_source
            .entry((r.channel, r.label9))
            .or_default()
            .push(r.bio_ms);
    }
    by_source
        .into_iter()
        .map(|((hicann, label9), times)| SpikeTrain::new(hicann, label9, times))
        .collect()
}

/// CSV export: one line per record, absolute times recovered.
pub fn records_to_csv(records: &[UnwrappedRecord]) -> String {
    let mut out = String::from("channel,label9,timestamp,time_ms\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.channel, r.label9, r.ts, r.bio_ms
        ));
    }
    out
}
