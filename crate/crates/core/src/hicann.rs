//! Chip-side pulse handling.
//!
//! Arriving pulses either terminate on the chip or, with loopback enabled,
//! re-enter the upstream merger with a fresh timestamp. The chip stamps on
//! its own 4 ns clock, so a loopback stamp is the arrival time (plus the
//! configured detour) aligned down to the clock grid and wrapped to 15 bits.
//! Background generators stamp the same way at their emission instants.

use crate::link::FabricPulse;
use crate::timebase::{wrap_timestamp, TimePoint};

/// Timestamp a pulse re-emitted at `arrival_ns` picks up.
pub fn loopback_stamp(arrival_ns: TimePoint, detour_ns: u64) -> u16 {
    wrap_timestamp(arrival_ns + detour_ns)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HicannStats {
    pub received: u64,
    pub looped: u64,
    pub sunk: u64,
}

/// One chip's configuration and counters.
#[derive(Debug, Clone)]
pub struct Hicann {
    pub loopback: bool,
    /// Extra on-chip path length a looped pulse sees before restamping.
    pub loopback_detour_ns: u64,
    pub stats: HicannStats,
}

/// Where an arriving pulse went.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChipOutcome {
    /// Forward into the upstream merger, restamped.
    Loop(FabricPulse),
    /// Consumed on the chip.
    Sink,
}

impl Hicann {
    pub fn new(loopback: bool, loopback_detour_ns: u64) -> Self {
        Hicann {
            loopback,
            loopback_detour_ns,
            stats: HicannStats::default(),
        }
    }

    pub fn on_pulse(&mut self, now: TimePoint, pulse: FabricPulse) -> ChipOutcome {
        self.stats.received += 1;
        if self.loopback {
            self.stats.looped += 1;
            ChipOutcome::Loop(FabricPulse {
                id: pulse.id,
                label9: pulse.label9,
                ts: loopback_stamp(now, self.loopback_detour_ns),
            })
        } else {
            self.stats.sunk += 1;
            ChipOutcome::Sink
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timebase::WRAP_PERIOD_NS;

    #[test]
    fn loopback_restamps_on_grid() {
        let mut chip = Hicann::new(true, 0);
        let pulse = FabricPulse {
            id: 9,
            label9: 300,
            ts: 12345,
        };
        match chip.on_pulse(230, pulse) {
            ChipOutcome::Loop(out) => {
                assert_eq!(out.label9, 300);
                assert_eq!(out.id, 9);
                // 230 ns sits between grid points 228 and 232.
                assert_eq!(out.ts, 57);
            }
            ChipOutcome::Sink => panic!("loopback disabled?"),
        }
        assert_eq!(chip.stats.looped, 1);
    }

    #[test]
    fn stamp_wraps_at_counter_period() {
        assert_eq!(loopback_stamp(WRAP_PERIOD_NS, 0), 0);
        assert_eq!(loopback_stamp(WRAP_PERIOD_NS + 5, 0), 1);
        assert_eq!(loopback_stamp(3 * WRAP_PERIOD_NS - 4, 0), (1 << 15) - 1);
        // Detour applies before the wrap.
        assert_eq!(loopback_stamp(WRAP_PERIOD_NS - 4, 8), 1);
    }

    #[test]
    fn sink_consumes_without_forwarding() {
        let mut chip = Hicann::new(false, 0);
        let pulse = FabricPulse {
            id: 1,
            label9: 2,
            ts: 3,
        };
        assert_eq!(chip.on_pulse(100, pulse), ChipOutcome::Sink);
        assert_eq!(chip.stats.sunk, 1);
        assert_eq!(chip.stats.looped, 0);
    }
}
