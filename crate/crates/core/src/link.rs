//! Serial channel pair between the controller and one chip.
//!
//! Both directions serialize packets octet by octet at one octet per 8 ns
//! cycle, with two idle octets of framing overhead per packet
//! ([`packet_occupancy`]). The downstream side sends single-pulse packets
//! out of a FIFO; the upstream side merges pulses into a queue and packs
//! two per packet when at least two are waiting as a transmission starts.
//! In both directions, queue slots stay occupied until the packet finishes:
//! capacity counts the in-flight pulses.

use crate::events::{packet_occupancy, PacketKind};
use std::collections::VecDeque;

/// A pulse traveling through the fabric. `id` indexes the originating
/// stimulus record and rides along for bookkeeping only; on the wire a
/// pulse is just `label9` and `ts`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FabricPulse {
    pub id: u32,
    pub label9: u16,
    pub ts: u16,
}

/// What happened to a pulse offered to a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Offer {
    /// Queued and the serializer was idle: a packet transmission begins
    /// now, finishing after the kind's occupancy.
    Started(PacketKind),
    /// Queued behind an ongoing transmission.
    Queued,
    /// Queue full, pulse lost.
    Dropped,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChannelStats {
    pub offered: u64,
    pub dropped_full: u64,
    pub single_packets: u64,
    pub double_packets: u64,
}

impl ChannelStats {
    pub fn accepted(&self) -> u64 {
        self.offered - self.dropped_full
    }

    /// Nanoseconds of line time consumed by completed packets.
    pub fn busy_ns(&self) -> u64 {
        self.single_packets * packet_occupancy(PacketKind::Single)
            + self.double_packets * packet_occupancy(PacketKind::Double)
    }
}

/// Controller-to-chip direction: a FIFO drained one pulse per packet.
#[derive(Debug, Clone)]
pub struct DownChannel {
    fifo: VecDeque<FabricPulse>,
    depth: usize,
    busy: bool,
    pub stats: ChannelStats,
}

impl DownChannel {
    pub fn new(depth: usize) -> Self {
        DownChannel {
            fifo: VecDeque::with_capacity(depth),
            depth,
            busy: false,
            stats: ChannelStats::default(),
        }
    }

    pub fn occupancy(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_idle(&self) -> bool {
        !self.busy
    }

    pub fn offer(&mut self, pulse: FabricPulse) -> Offer {
        self.stats.offered += 1;
        if self.fifo.len() == self.depth {
            self.stats.dropped_full += 1;
            return Offer::Dropped;
        }
        self.fifo.push_back(pulse);
        if self.busy {
            Offer::Queued
        } else {
            self.busy = true;
            Offer::Started(PacketKind::Single)
        }
    }

    /// Completes the in-flight packet. Returns the delivered pulse and
    /// whether the serializer immediately started on the next one.
    pub fn tx_done(&mut self) -> (FabricPulse, bool) {
        debug_assert!(self.busy);
        let pulse = self
            .fifo
            .pop_front()
            .expect("transmission completed on empty fifo");
        self.stats.single_packets += 1;
        self.busy = !self.fifo.is_empty();
        (pulse, self.busy)
    }
}

/// Pulses released by one completed upstream packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivered {
    pub first: FabricPulse,
    pub second: Option<FabricPulse>,
}

/// Chip-to-controller direction: a merger queue drained by an adaptive
/// serializer. The packet format is chosen when a transmission starts and
/// never upgraded mid-flight.
#[derive(Debug, Clone)]
pub struct UpChannel {
    queue: VecDeque<FabricPulse>,
    depth: usize,
    tx: Option<PacketKind>,
    pub stats: ChannelStats,
}

impl UpChannel {
    pub fn new(depth: usize) -> Self {
        UpChannel {
            queue: VecDeque::with_capacity(depth),
            depth,
            tx: None,
            stats: ChannelStats::default(),
        }
    }

    pub fn occupancy(&self) -> usize {
        self.queue.len()
    }

    pub fn is_idle(&self) -> bool {
        self.tx.is_none()
    }

    fn pick_kind(&self) -> PacketKind {
        if self.queue.len() >= 2 {
            PacketKind::Double
        } else {
            PacketKind::Single
        }
    }

    pub fn offer(&mut self, pulse: FabricPulse) -> Offer {
        self.stats.offered += 1;
        if self.queue.len() == self.depth {
            self.stats.dropped_full += 1;
            return Offer::Dropped;
        }
        self.queue.push_back(pulse);
        if self.tx.is_some() {
            Offer::Queued
        } else {
            let kind = self.pick_kind();
            self.tx = Some(kind);
            Offer::Started(kind)
        }
    }

    /// Completes the in-flight packet, releasing its pulses. Returns what
    /// was delivered and the kind of the next packet if one started.
    pub fn tx_done(&mut self) -> (Delivered, Option<PacketKind>) {
        let kind = self
            .tx
            .take()
            .expect("transmission completed on idle serializer");
        match kind {
            PacketKind::Single => self.stats.single_packets += 1,
            PacketKind::Double => self.stats.double_packets += 1,
        }
        let first = self
            .queue
            .pop_front()
            .expect("completed packet with empty queue");
        let second = match kind {
            PacketKind::Single => None,
            PacketKind::Double => Some(
                self.queue
                    .pop_front()
                    .expect("double packet with one queued pulse"),
            ),
        };
        let next = if self.queue.is_empty() {
            None
        } else {
            let kind = self.pick_kind();
            self.tx = Some(kind);
            Some(kind)
        };
        (Delivered { first, second }, next)
    }
}
