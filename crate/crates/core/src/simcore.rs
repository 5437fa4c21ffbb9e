//! Discrete-event engine tying the path together.
//!
//! One run models one controller board: a playback module feeding eight
//! downstream channels, eight chips, eight upstream mergers, and a shared
//! trace module. Events carry integer nanosecond times. Simultaneous
//! events dispatch in a fixed class order chosen so that capacity freed at
//! an instant is visible to arrivals at that same instant, and so trace
//! storage sees wrap markers first and new arrivals last:
//!
//! 1. packet completions
//! 2. playback releases
//! 3. chip-side activity (arrivals, background emissions)
//! 4. wrap markers
//! 5. trace drain cycles
//! 6. trace arrivals
//!
//! Within a class, ties dispatch in scheduling order. Every run over the
//! same plan replays the identical event sequence; the digest over the
//! dispatched stream pins that down.

use crate::error::Error;
use crate::events::packet_occupancy;
use crate::hicann::{ChipOutcome, Hicann, HicannStats};
use crate::link::{ChannelStats, DownChannel, FabricPulse, Offer, UpChannel};
use crate::playback::{flat_schedule, pack, PackResult, PackingReport, GROUP_GAP_TICKS};
use crate::spikegen::SpikeTrain;
use crate::timebase::{bio_to_tech, wrap_timestamp, TimePoint, WRAP_PERIOD_NS};
use crate::trace::{RecordIndex, TraceModule, TracePush};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub const N_CHANNELS: usize = 8;

/// Quiet time appended after the last stimulus so every in-flight pulse
/// reaches a terminal stage before the run ends.
const DRAIN_MARGIN_NS: u64 = 1_000_000;

/// Fabric and module parameters. Defaults follow the modeled hardware.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Downstream FIFO slots per channel, in-flight pulse included.
    pub fifo_depth: usize,
    /// Upstream merger slots per channel, in-flight pulses included.
    pub merger_depth: usize,
    /// Fixed one-way latency between serializer completion and the far end.
    pub link_latency_ns: u64,
    /// Subtracted from desired release times when packing.
    pub delay_compensation_ns: u64,
    /// Extra on-chip path before a looped pulse is restamped.
    pub loopback_detour_ns: u64,
    pub trace_fifo_depth: usize,
    pub trace_capacity: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            fifo_depth: 16,
            merger_depth: 16,
            link_latency_ns: 174,
            delay_compensation_ns: 0,
            loopback_detour_ns: 0,
            trace_fifo_depth: 64,
            trace_capacity: 125_000_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.fifo_depth == 0 || self.merger_depth == 0 || self.trace_fifo_depth == 0 {
            return Err(Error::validation("queue depths must be at least 1"));
        }
        if self.trace_capacity == 0 {
            return Err(Error::validation("trace capacity must be at least 1"));
        }
        Ok(())
    }
}

/// How a pulse entered the fabric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PulseOrigin {
    Playback,
    Background,
}

/// Ground-truth identity of one stimulus pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentPulse {
    pub hicann: u8,
    pub label9: u16,
    pub bio_ms: f64,
    pub origin: PulseOrigin,
}

/// Terminal stage of one stimulus pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    Pending,
    /// Stored in trace memory at this entry index.
    Traced {
        record: RecordIndex,
    },
    DroppedDownFifo {
        at_ns: TimePoint,
    },
    DroppedUpMerger {
        at_ns: TimePoint,
    },
    DroppedTraceFifo {
        at_ns: TimePoint,
    },
    DroppedTraceMemory {
        at_ns: TimePoint,
    },
    /// Consumed on the chip (loopback off).
    ChipDelivered {
        at_ns: TimePoint,
    },
    /// Still in the fabric when the run hit its horizon.
    InFlightAtCutoff,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageCounts {
    pub sent: u64,
    pub traced: u64,
    pub dropped_down_fifo: u64,
    pub dropped_up_merger: u64,
    pub dropped_trace_fifo: u64,
    pub dropped_trace_memory: u64,
    pub chip_delivered: u64,
    pub in_flight: u64,
}

impl StageCounts {
    pub fn dropped(&self) -> u64 {
        self.dropped_down_fifo
            + self.dropped_up_merger
            + self.dropped_trace_fifo
            + self.dropped_trace_memory
    }
}

/// Per-pulse ground truth for a whole run. `fate[i]` belongs to `sent[i]`.
#[derive(Debug, Clone, Default)]
pub struct GroundTruthLog {
    pub sent: Vec<SentPulse>,
    pub fate: Vec<Fate>,
}

impl GroundTruthLog {
    pub fn stage_counts(&self) -> StageCounts {
        let mut c = StageCounts {
            sent: self.sent.len() as u64,
            ..StageCounts::default()
        };
        for fate in &self.fate {
            match fate {
                Fate::Pending => unreachable!("finalize left a pending fate"),
                Fate::Traced { .. } => c.traced += 1,
                Fate::DroppedDownFifo { .. } => c.dropped_down_fifo += 1,
                Fate::DroppedUpMerger { .. } => c.dropped_up_merger += 1,
                Fate::DroppedTraceFifo { .. } => c.dropped_trace_fifo += 1,
                Fate::DroppedTraceMemory { .. } => c.dropped_trace_memory += 1,
                Fate::ChipDelivered { .. } => c.chip_delivered += 1,
                Fate::InFlightAtCutoff => c.in_flight += 1,
            }
        }
        c
    }

    /// Every pulse must land in exactly one terminal stage.
    pub fn assert_conserved(&self) {
        assert_eq!(self.sent.len(), self.fate.len());
        let c = self.stage_counts();
        assert_eq!(
            c.sent,
            c.traced + c.dropped() + c.chip_delivered + c.in_flight,
            "stage counts do not add up"
        );
    }
}

/// A complete stimulus description for one run.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub config: SimConfig,
    /// Packed playback program, if the run injects downstream pulses.
    pub playback: Option<PackResult>,
    /// Replays of the playback image, back to back. 1 plays it once.
    pub repeats: u32,
    /// On-chip background sources. Times must sit on the 4 ns grid.
    pub background: Vec<SpikeTrain>,
    /// Loop arriving pulses back upstream instead of sinking them.
    pub loopback: bool,
}

impl ExperimentPlan {
    /// Downstream-only run: pulses terminate on the chips.
    pub fn downstream(trains: &[SpikeTrain], config: SimConfig) -> Result<Self, Error> {
        config.validate()?;
        let playback = pack(trains, config.delay_compensation_ns)?;
        Ok(ExperimentPlan {
            config,
            playback: Some(playback),
            repeats: 1,
            background: Vec::new(),
            loopback: false,
        })
    }

    /// Full round trip: playback in, loopback on, trace out.
    pub fn loopback(trains: &[SpikeTrain], config: SimConfig) -> Result<Self, Error> {
        let mut plan = Self::downstream(trains, config)?;
        plan.loopback = true;
        Ok(plan)
    }

    /// Upstream-only run: background generators feed the mergers.
    pub fn upstream(background: Vec<SpikeTrain>, config: SimConfig) -> Result<Self, Error> {
        config.validate()?;
        for train in &background {
            if train.hicann as usize >= N_CHANNELS {
                return Err(Error::domain(format!(
                    "chip index {} out of range 0..=7",
                    train.hicann
                )));
            }
            if train.label9 > 0x1FF {
                return Err(Error::domain(format!(
                    "label {} exceeds 9 bits",
                    train.label9
                )));
            }
        }
        Ok(ExperimentPlan {
            config,
            playback: None,
            repeats: 1,
            background,
            loopback: false,
        })
    }
}

/// Everything a run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: GroundTruthLog,
    pub trace: TraceModule,
    pub down: Vec<ChannelStats>,
    pub up: Vec<ChannelStats>,
    pub chips: Vec<HicannStats>,
    pub packing: Option<PackingReport>,
    /// FNV-1a over the dispatched event stream.
    pub digest: u64,
    pub events_dispatched: u64,
    pub end_ns: TimePoint,
}

// Dispatch class order; see the module doc.
const CLASS_CHANNEL: u8 = 0;
const CLASS_PLAYBACK: u8 = 1;
const CLASS_CHIP: u8 = 2;
const CLASS_MARKER: u8 = 3;
const CLASS_DRAIN: u8 = 4;
const CLASS_TRACE_ARRIVE: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    PlaybackNext,
    BackgroundNext {
        ch: u8,
    },
    DownTxDone {
        ch: u8,
    },
    ChipArrive {
        ch: u8,
        pulse: FabricPulse,
    },
    UpTxDone {
        ch: u8,
    },
    TraceArrive {
        ch: u8,
        first: FabricPulse,
        second: Option<FabricPulse>,
    },
    TraceDrain,
    WrapMarker,
}

impl Action {
    fn tag(&self) -> u8 {
        match self {
            Action::PlaybackNext => 0,
            Action::BackgroundNext { .. } => 1,
            Action::DownTxDone { .. } => 2,
            Action::ChipArrive { .. } => 3,
            Action::UpTxDone { .. } => 4,
            Action::TraceArrive { .. } => 5,
            Action::TraceDrain => 6,
            Action::WrapMarker => 7,
        }
    }

    fn channel(&self) -> u8 {
        match self {
            Action::BackgroundNext { ch }
            | Action::DownTxDone { ch }
            | Action::ChipArrive { ch, .. }
            | Action::UpTxDone { ch }
            | Action::TraceArrive { ch, .. } => *ch,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: TimePoint,
    class: u8,
    seq: u64,
    action: Action,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.class, self.seq) == (other.time, other.class, other.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // Reversed: BinaryHeap is a max-heap, we pop the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.class, other.seq).cmp(&(self.time, self.class, self.seq))
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

/// One playback release, flattened out of the image.
#[derive(Debug, Clone, Copy)]
struct FlatPulse {
    release_ns: TimePoint,
    ch: u8,
    label9: u16,
    ts: u16,
}

/// One background emission.
#[derive(Debug, Clone, Copy)]
struct Emission {
    at_ns: TimePoint,
    label9: u16,
    id: u32,
}

struct Engine {
    config: SimConfig,
    now: TimePoint,
    seq: u64,
    heap: BinaryHeap<Scheduled>,
    horizon: TimePoint,

    flat: Vec<FlatPulse>,
    flat_cursor: usize,
    background: Vec<Vec<Emission>>,
    background_cursor: Vec<usize>,

    down: Vec<DownChannel>,
    up: Vec<UpChannel>,
    chips: Vec<Hicann>,
    trace: TraceModule,
    log: GroundTruthLog,

    digest: Fnv,
    events_dispatched: u64,
}

/// Runs a plan to completion.
pub fn run(plan: &ExperimentPlan) -> Result<RunOutcome, Error> {
    plan.config.validate()?;
    if plan.repeats == 0 {
        return Err(Error::validation("repeats must be at least 1"));
    }

    let mut log = GroundTruthLog::default();
    let mut flat = Vec::new();
    if let Some(pb) = &plan.playback {
        let base = flat_schedule(&pb.image);
        if base.len() != pb.bio_times.len() {
            return Err(Error::consistency(
                "playback image and bio times disagree on pulse count",
            ));
        }
        let period_ticks = pb
            .image
            .groups
            .last()
            .map(|g| g.release_tick as u64 + g.pulses.len() as u64 + GROUP_GAP_TICKS)
            .unwrap_or(0);
        let period_ns = fpga_tick_to_ns_u64(period_ticks);
        for rep in 0..plan.repeats as u64 {
            let offset_ns = rep * period_ns;
            let offset_ms = offset_ns as f64 / 100.0;
            for (f, &bio) in base.iter().zip(&pb.bio_times) {
                flat.push(FlatPulse {
                    release_ns: f.release_ns + offset_ns,
                    ch: f.hicann,
                    label9: f.label9,
                    ts: if rep == 0 {
                        f.ts
                    } else {
                        wrap_timestamp(bio_to_tech(bio + offset_ms)?)
                    },
                });
                log.sent.push(SentPulse {
                    hicann: f.hicann,
                    label9: f.label9,
                    bio_ms: bio + offset_ms,
                    origin: PulseOrigin::Playback,
                });
            }
            if period_ticks == 0 {
                break;
            }
        }
    }

    let mut background: Vec<Vec<Emission>> = vec![Vec::new(); N_CHANNELS];
    for train in &plan.background {
        for &bio in &train.times {
            let at_ns = bio_to_tech(bio)?;
            if at_ns % 4 != 0 {
                return Err(Error::domain(format!(
                    "background emission at {bio} ms is off the 4 ns chip grid"
                )));
            }
            let id = log.sent.len() as u32;
            log.sent.push(SentPulse {
                hicann: train.hicann,
                label9: train.label9,
                bio_ms: bio,
                origin: PulseOrigin::Background,
            });
            background[train.hicann as usize].push(Emission {
                at_ns,
                label9: train.label9,
                id,
            });
        }
    }
    for emissions in &mut background {
        emissions.sort_by_key(|e| (e.at_ns, e.id));
    }

    log.fate = vec![Fate::Pending; log.sent.len()];

    let last_stimulus = flat
        .last()
        .map(|f| f.release_ns)
        .into_iter()
        .chain(background.iter().filter_map(|b| b.last().map(|e| e.at_ns)))
        .max()
        .unwrap_or(0);
    let horizon = last_stimulus + DRAIN_MARGIN_NS;

    let mut engine = Engine {
        config: plan.config.clone(),
        now: 0,
        seq: 0,
        heap: BinaryHeap::new(),
        horizon,
        flat,
        flat_cursor: 0,
        background,
        background_cursor: vec![0; N_CHANNELS],
        down: (0..N_CHANNELS)
            .map(|_| DownChannel::new(plan.config.fifo_depth))
            .collect(),
        up: (0..N_CHANNELS)
            .map(|_| UpChannel::new(plan.config.merger_depth))
            .collect(),
        chips: (0..N_CHANNELS)
            .map(|_| Hicann::new(plan.loopback, plan.config.loopback_detour_ns))
            .collect(),
        trace: TraceModule::new(plan.config.trace_fifo_depth, plan.config.trace_capacity),
        log,
        digest: Fnv::new(),
        events_dispatched: 0,
    };
    engine.prime();
    engine.drive();
    Ok(engine.finish(plan.playback.as_ref().map(|p| p.report)))
}

fn fpga_tick_to_ns_u64(tick: u64) -> u64 {
    tick * crate::timebase::FPGA_CLOCK_NS
}

impl Engine {
    fn schedule(&mut self, time: TimePoint, class: u8, action: Action) {
        assert!(
            time >= self.now,
            "scheduled {action:?} at {time} ns, {} ns in the past",
            self.now - time.min(self.now)
        );
        self.heap.push(Scheduled {
            time,
            class,
            seq: self.seq,
            action,
        });
        self.seq += 1;
    }

    fn prime(&mut self) {
        if let Some(first) = self.flat.first() {
            let t = first.release_ns;
            self.schedule(t, CLASS_PLAYBACK, Action::PlaybackNext);
        }
        for ch in 0..N_CHANNELS {
            if let Some(first) = self.background[ch].first() {
                let t = first.at_ns;
                self.schedule(t, CLASS_CHIP, Action::BackgroundNext { ch: ch as u8 });
            }
        }
        let mut wrap = WRAP_PERIOD_NS;
        while wrap <= self.horizon {
            self.schedule(wrap, CLASS_MARKER, Action::WrapMarker);
            wrap += WRAP_PERIOD_NS;
        }
    }

    fn drive(&mut self) {
        while let Some(ev) = self.heap.pop() {
            if ev.time > self.horizon {
                break;
            }
            assert!(ev.time >= self.now, "event time ran backwards");
            self.now = ev.time;
            self.events_dispatched += 1;
            self.digest.write(&ev.time.to_le_bytes());
            self.digest
                .write(&[ev.class, ev.action.tag(), ev.action.channel()]);
            self.dispatch(ev.action);
        }
    }

    fn dispatch(&mut self, action: Action) {
        match action {
            Action::PlaybackNext => self.playback_next(),
            Action::BackgroundNext { ch } => self.background_next(ch as usize),
            Action::DownTxDone { ch } => self.down_tx_done(ch as usize),
            Action::ChipArrive { ch, pulse } => self.chip_arrive(ch as usize, pulse),
            Action::UpTxDone { ch } => self.up_tx_done(ch as usize),
            Action::TraceArrive { ch, first, second } => {
                self.trace_arrive(ch as usize, first, second)
            }
            Action::TraceDrain => self.trace_drain(),
            Action::WrapMarker => self.trace.wrap_marker(self.now),
        }
    }

    fn playback_next(&mut self) {
        while self.flat_cursor < self.flat.len()
            && self.flat[self.flat_cursor].release_ns == self.now
        {
            let f = self.flat[self.flat_cursor];
            let id = self.flat_cursor as u32;
            self.flat_cursor += 1;
            let pulse = FabricPulse {
                id,
                label9: f.label9,
                ts: f.ts,
            };
            let ch = f.ch as usize;
            match self.down[ch].offer(pulse) {
                Offer::Started(kind) => {
                    self.schedule(
                        self.now + packet_occupancy(kind),
                        CLASS_CHANNEL,
                        Action::DownTxDone { ch: f.ch },
                    );
                }
                Offer::Queued => {}
                Offer::Dropped => {
                    self.log.fate[id as usize] = Fate::DroppedDownFifo { at_ns: self.now }
                }
            }
        }
        if self.flat_cursor < self.flat.len() {
            let t = self.flat[self.flat_cursor].release_ns;
            self.schedule(t, CLASS_PLAYBACK, Action::PlaybackNext);
        }
    }

    fn background_next(&mut self, ch: usize) {
        while self.background_cursor[ch] < self.background[ch].len()
            && self.background[ch][self.background_cursor[ch]].at_ns == self.now
        {
            let e = self.background[ch][self.background_cursor[ch]];
            self.background_cursor[ch] += 1;
            let pulse = FabricPulse {
                id: e.id,
                label9: e.label9,
                ts: wrap_timestamp(self.now),
            };
            self.offer_upstream(ch, pulse);
        }
        if self.background_cursor[ch] < self.background[ch].len() {
            let t = self.background[ch][self.background_cursor[ch]].at_ns;
            self.schedule(t, CLASS_CHIP, Action::BackgroundNext { ch: ch as u8 });
        }
    }

    fn offer_upstream(&mut self, ch: usize, pulse: FabricPulse) {
        match self.up[ch].offer(pulse) {
            Offer::Started(kind) => {
                self.schedule(
                    self.now + packet_occupancy(kind),
                    CLASS_CHANNEL,
                    Action::UpTxDone { ch: ch as u8 },
                );
            }
            Offer::Queued => {}
            Offer::Dropped => {
                self.log.fate[pulse.id as usize] = Fate::DroppedUpMerger { at_ns: self.now }
            }
        }
    }

    fn down_tx_done(&mut self, ch: usize) {
        let (pulse, restarted) = self.down[ch].tx_done();
        if restarted {
            self.schedule(
                self.now + packet_occupancy(crate::events::PacketKind::Single),
                CLASS_CHANNEL,
                Action::DownTxDone { ch: ch as u8 },
            );
        }
        self.schedule(
            self.now + self.config.link_latency_ns,
            CLASS_CHIP,
            Action::ChipArrive {
                ch: ch as u8,
                pulse,
            },
        );
    }

    fn chip_arrive(&mut self, ch: usize, pulse: FabricPulse) {
        match self.chips[ch].on_pulse(self.now, pulse) {
            ChipOutcome::Loop(p) => self.offer_upstream(ch, p),
            ChipOutcome::Sink => {
                self.log.fate[pulse.id as usize] = Fate::ChipDelivered { at_ns: self.now }
            }
        }
    }

    fn up_tx_done(&mut self, ch: usize) {
        let (delivered, next) = self.up[ch].tx_done();
        if let Some(kind) = next {
            self.schedule(
                self.now + packet_occupancy(kind),
                CLASS_CHANNEL,
                Action::UpTxDone { ch: ch as u8 },
            );
        }
        self.schedule(
            self.now + self.config.link_latency_ns,
            CLASS_TRACE_ARRIVE,
            Action::TraceArrive {
                ch: ch as u8,
                first: delivered.first,
                second: delivered.second,
            },
        );
    }

    fn trace_arrive(&mut self, ch: usize, first: FabricPulse, second: Option<FabricPulse>) {
        for pulse in std::iter::once(first).chain(second) {
            if self.trace.push(ch as u8, pulse) == TracePush::DroppedFifo {
                self.log.fate[pulse.id as usize] = Fate::DroppedTraceFifo { at_ns: self.now };
            }
        }
        self.ensure_drain_scheduled();
    }

    /// Drain cycles run on the 8 ns grid, strictly after the records they
    /// serve arrived: a record arriving exactly on a cycle boundary is
    /// eligible from the next cycle.
    fn ensure_drain_scheduled(&mut self) {
        if self.trace.drain_at.is_none() && self.trace.backlog() {
            let next = self.now - self.now % 8 + 8;
            self.trace.drain_at = Some(next);
            self.schedule(next, CLASS_DRAIN, Action::TraceDrain);
        }
    }

    fn trace_drain(&mut self) {
        self.trace.drain_at = None;
        let base = self.trace.memory.len();
        let report = self.trace.drain_cycle(self.now);
        for (k, &id) in report.wrote.iter().enumerate() {
            self.log.fate[id as usize] = Fate::Traced {
                record: (base + k) as RecordIndex,
            };
        }
        for &id in &report.lost {
            self.log.fate[id as usize] = Fate::DroppedTraceMemory { at_ns: self.now };
        }
        if report.backlog {
            let next = self.now + 8;
            self.trace.drain_at = Some(next);
            self.schedule(next, CLASS_DRAIN, Action::TraceDrain);
        }
    }

    fn finish(mut self, packing: Option<PackingReport>) -> RunOutcome {
        for fate in &mut self.log.fate {
            if *fate == Fate::Pending {
                *fate = Fate::InFlightAtCutoff;
            }
        }
        self.log.assert_conserved();
        RunOutcome {
            log: self.log,
            trace: self.trace,
            down: self.down.iter().map(|c| c.stats).collect(),
            up: self.up.iter().map(|c| c.stats).collect(),
            chips: self.chips.iter().map(|c| c.stats).collect(),
            packing,
            digest: self.digest.0,
            events_dispatched: self.events_dispatched,
            end_ns: self.now,
        }
    }
}
