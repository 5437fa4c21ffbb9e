//! Time domains and clock grids.
//!
//! All engine time is technical time in integer nanoseconds ([`TimePoint`]).
//! Biological time is expressed in milliseconds (`f64`) and maps onto the
//! technical side through the fixed acceleration factor of 10^4:
//! 1 ms biological = 100 ns technical.
//!
//! Two clock grids matter. The FPGA side runs on 8 ns cycles ([`FpgaTick`]);
//! the chip side stamps pulses on a 4 ns grid with a 15-bit counter that
//! wraps every 2^15 * 4 ns = 131072 ns ([`HicannTimestamp`]).

use crate::error::Error;

/// Technical time in integer nanoseconds since experiment start.
pub type TimePoint = u64;

/// Index of an 8 ns FPGA clock cycle.
pub type FpgaTick = u32;

/// 15-bit chip-side timestamp on the 4 ns grid.
pub type HicannTimestamp = u16;

/// Speedup of the technical time domain over the biological one.
pub const ACCELERATION: u64 = 10_000;

/// FPGA clock period in ns (125 MHz).
pub const FPGA_CLOCK_NS: u64 = 8;

/// Chip clock period in ns (250 MHz).
pub const HICANN_CLOCK_NS: u64 = 4;

/// Width of the chip-side timestamp counter.
pub const TIMESTAMP_BITS: u32 = 15;

/// Tech-ns period after which the 15-bit timestamp counter wraps.
pub const WRAP_PERIOD_NS: u64 = (1 << TIMESTAMP_BITS) * HICANN_CLOCK_NS;

/// Converts biological milliseconds to technical nanoseconds, rounding to the
/// nearest ns with ties away from zero. Negative input is a domain error.
pub fn bio_to_tech(bio_ms: f64) -> Result<TimePoint, Error> {
    if !bio_ms.is_finite() {
        return Err(Error::domain(format!(
            "bio time must be finite, got {bio_ms}"
        )));
    }
    if bio_ms < 0.0 {
        return Err(Error::domain(format!(
            "bio time must be non-negative, got {bio_ms} ms"
        )));
    }
    // 1 ms bio = 100 ns tech; f64::round ties away from zero.
    Ok((bio_ms * 100.0).round() as TimePoint)
}

/// Converts technical nanoseconds to biological milliseconds.
pub fn tech_to_bio(t: TimePoint) -> f64 {
    t as f64 / 100.0
}

/// Latest FPGA cycle starting at or before `t`.
pub fn to_fpga_tick_floor(t: TimePoint) -> FpgaTick {
    (t / FPGA_CLOCK_NS) as FpgaTick
}

/// Earliest FPGA cycle starting at or after `t`. Release logic uses this:
/// a pulse must never go out before its requested time.
pub fn to_fpga_tick_ceil(t: TimePoint) -> FpgaTick {
    (t.div_ceil(FPGA_CLOCK_NS)) as FpgaTick
}

/// Start time of an FPGA cycle.
pub fn fpga_tick_to_ns(tick: FpgaTick) -> TimePoint {
    tick as TimePoint * FPGA_CLOCK_NS
}

/// Aligns a time point down onto the 4 ns chip clock grid.
pub fn align_hicann(t: TimePoint) -> TimePoint {
    t - (t % HICANN_CLOCK_NS)
}

/// 15-bit timestamp for a time point. Input off the 4 ns grid is floored
/// onto it first, which is how the engine aligns all chip-side events.
pub fn wrap_timestamp(t: TimePoint) -> HicannTimestamp {
    ((t / HICANN_CLOCK_NS) & ((1 << TIMESTAMP_BITS) - 1)) as HicannTimestamp
}

/// Overflow epoch of a time point: how many wrap periods have elapsed.
pub fn epoch_of(t: TimePoint) -> u32 {
    (t / WRAP_PERIOD_NS) as u32
}

/// Reconstructs absolute technical time from an epoch and a 15-bit timestamp.
pub fn unwrap_timestamp(epoch: u32, ts: HicannTimestamp) -> TimePoint {
    debug_assert!(ts < (1 << TIMESTAMP_BITS));
    epoch as TimePoint * WRAP_PERIOD_NS + ts as TimePoint * HICANN_CLOCK_NS
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn bio_to_tech_examples() {
        assert_eq!(bio_to_tech(1.0).unwrap(), 100);
        assert_eq!(bio_to_tech(0.0).unwrap(), 0);
        // 12.5 ns rounds away from zero.
        assert_eq!(bio_to_tech(0.125).unwrap(), 13);
        assert_eq!(bio_to_tech(0.56).unwrap(), 56);
        assert!(bio_to_tech(-1.0).is_err());
        assert!(bio_to_tech(f64::NAN).is_err());
    }

    #[test]
    fn tech_to_bio_examples() {
        assert_eq!(tech_to_bio(56), 0.56);
        assert_eq!(tech_to_bio(840), 8.4);
        assert_eq!(tech_to_bio(1), 0.01);
        assert_eq!(tech_to_bio(0), 0.0);
    }

    #[test]
    fn round_trip_on_centi_ms_grid() {
        // Any whole number of nanoseconds survives the round trip exactly.
        for n in [0u64, 1, 3, 56, 99, 100, 131072, 1_000_000_007] {
            let bio = n as f64 / 100.0;
            assert_eq!(bio_to_tech(bio).unwrap(), n);
            assert_eq!(tech_to_bio(n), bio);
        }
    }

    #[test]
    fn conversion_is_monotonic() {
        let mut rng = SplitMix64::new(7);
        let mut times: Vec<f64> = (0..4096).map(|_| rng.next_f64() * 1e6).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ns: Vec<TimePoint> = times.iter().map(|&t| bio_to_tech(t).unwrap()).collect();
        for pair in ns.windows(2) {
            assert!(pair[0] <= pair[1]);
        }
    }

    #[test]
    fn fpga_tick_rounding() {
        assert_eq!(to_fpga_tick_floor(12), 1);
        assert_eq!(to_fpga_tick_ceil(12), 2);
        assert_eq!(to_fpga_tick_floor(16), 2);
        assert_eq!(to_fpga_tick_ceil(16), 2);
        assert_eq!(to_fpga_tick_ceil(0), 0);
        assert_eq!(fpga_tick_to_ns(5), 40);
    }

    #[test]
    fn timestamp_wrap_examples() {
        assert_eq!(wrap_timestamp(0), 0);
        assert_eq!(wrap_timestamp(4), 1);
        assert_eq!(wrap_timestamp(131072), 0);
        assert_eq!(wrap_timestamp(131076), 1);
        // Off-grid input floors onto the grid.
        assert_eq!(wrap_timestamp(131073), 0);
        assert_eq!(wrap_timestamp(7), 1);
    }

    #[test]
    fn timestamp_wrap_period_property() {
        let mut rng = SplitMix64::new(11);
        for _ in 0..10_000 {
            let t = rng.next_u64() % (1 << 40);
            assert_eq!(wrap_timestamp(t + WRAP_PERIOD_NS), wrap_timestamp(t));
            let aligned = align_hicann(t);
            assert_eq!(
                unwrap_timestamp(epoch_of(aligned), wrap_timestamp(aligned)),
                aligned
            );
        }
    }
}
