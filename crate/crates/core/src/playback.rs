//! Packing spike trains into a playback program.
//!
//! The playback module walks the image one 8 ns cycle at a time: a group
//! header is parsed in its own cycle, then each pulse word releases one
//! pulse per cycle. A group starting at tick `g` therefore releases its
//! j-th pulse at tick `g + j`, and the next group cannot start before the
//! current one ends plus a fixed header overhead.
//!
//! The packer is greedy: pulses sorted by desired release tick join the
//! open group as long as the group has room and their slot is not earlier
//! than desired. Nothing is ever dropped here; a pulse that cannot release
//! on time is shifted later, and the shift is reported.

use crate::error::Error;
use crate::events::{GroupPulse, PlaybackImage, PulseGroup, MAX_GROUP_PULSES};
use crate::spikegen::SpikeTrain;
use crate::timebase::{bio_to_tech, fpga_tick_to_ns, to_fpga_tick_ceil, wrap_timestamp, TimePoint};

/// Ticks between the end of one group and the earliest start of the next:
/// header parsing and inter-group bookkeeping.
pub const GROUP_GAP_TICKS: u64 = 6;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PackingReport {
    pub pulses: usize,
    pub groups: usize,
    /// Pulses released later than desired.
    pub shifted: usize,
    pub max_shift_ns: u64,
    pub image_bytes: usize,
    pub span_ticks: u64,
}

/// A packed program: the image plus per-pulse bookkeeping, index-aligned
/// with the image's pulses in group order.
#[derive(Debug, Clone)]
pub struct PackResult {
    pub image: PlaybackImage,
    /// Original bio times, one per pulse, in image order.
    pub bio_times: Vec<f64>,
    pub report: PackingReport,
}

/// Packs trains into an image. `delay_compensation_ns` shifts every
/// desired release earlier, clamped at time zero, to pre-pay downstream
/// fabric latency.
pub fn pack(trains: &[SpikeTrain], delay_compensation_ns: u64) -> Result<PackResult, Error> {
    struct Staged {
        desired_tick: u64,
        hicann: u8,
        label9: u16,
        ts: u16,
        bio_ms: f64,
    }
    let mut staged = Vec::new();
    for train in trains {
        if train.hicann > 7 {
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
        for &bio_ms in &train.times {
            let t = bio_to_tech(bio_ms)?;
            let desired_tick = to_fpga_tick_ceil(t.saturating_sub(delay_compensation_ns)) as u64;
            staged.push(Staged {
                desired_tick,
                hicann: train.hicann,
                label9: train.label9,
                ts: wrap_timestamp(t),
                bio_ms,
            });
        }
    }
    staged.sort_by_key(|s| s.desired_tick);

    let mut groups: Vec<PulseGroup> = Vec::new();
    let mut bio_times = Vec::with_capacity(staged.len());
    let mut report = PackingReport {
        pulses: staged.len(),
        ..PackingReport::default()
    };
    let mut i = 0;
    let mut min_start = 0u64;
    while i < staged.len() {
        let g = staged[i].desired_tick.max(min_start);
        let mut pulses = Vec::new();
        while i < staged.len()
            && pulses.len() < MAX_GROUP_PULSES
            && staged[i].desired_tick <= g + pulses.len() as u64
        {
            let s = &staged[i];
            let release = g + pulses.len() as u64;
            let shift = release - s.desired_tick;
            if shift > 0 {
                report.shifted += 1;
                report.max_shift_ns = report.max_shift_ns.max(fpga_tick_to_ns(shift as u32));
            }
            pulses.push(GroupPulse {
                hicann: s.hicann,
                label9: s.label9,
                ts: s.ts,
            });
            bio_times.push(s.bio_ms);
            i += 1;
        }
        min_start = g + pulses.len() as u64 + GROUP_GAP_TICKS;
        let release_tick = u32::try_from(g).map_err(|_| {
            Error::capacity(format!("release tick {g} exceeds the 29-bit tick field"))
        })?;
        groups.push(PulseGroup {
            release_tick,
            pulses,
        });
    }

    if let (Some(first), Some(last)) = (groups.first(), groups.last()) {
        report.span_ticks =
            last.release_tick as u64 + last.pulses.len() as u64 - first.release_tick as u64;
    }
    report.groups = groups.len();
    let image = PlaybackImage { groups };
    if report.pulses > 0 {
        image.validate()?;
        image.capacity_check()?;
    }
    report.image_bytes = image.byte_count() as usize;
    Ok(PackResult {
        image,
        bio_times,
        report,
    })
}

/// One pulse of the flattened release schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlatRelease {
    pub release_ns: TimePoint,
    pub hicann: u8,
    pub label9: u16,
    pub ts: u16,
}

/// Expands an image into per-pulse release instants, image order.
pub fn flat_schedule(image: &PlaybackImage) -> Vec<FlatRelease> {
    let mut out = Vec::with_capacity(image.pulse_count() as usize);
    for group in &image.groups {
        for (j, p) in group.pulses.iter().enumerate() {
            out.push(FlatRelease {
                release_ns: fpga_tick_to_ns(group.release_tick) + fpga_tick_to_ns(j as u32),
                hicann: p.hicann,
                label9: p.label9,
                ts: p.ts,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train(label9: u16, times: Vec<f64>) -> SpikeTrain {
        SpikeTrain::new(0, label9, times).unwrap()
    }

    #[test]
    fn sparse_spikes_become_singleton_groups() {
        // 1 kHz regular: one pulse every 100 ns, far beyond group reach.
        let r = pack(&[train(5, vec![1.0, 2.0, 3.0])], 0).unwrap();
        assert_eq!(r.report.groups, 3);
        assert_eq!(r.report.shifted, 0);
        let ticks: Vec<u32> = r.image.groups.iter().map(|g| g.release_tick).collect();
        assert_eq!(ticks, vec![13, 25, 38]);
        let flat = flat_schedule(&r.image);
        assert_eq!(flat[0].release_ns, 104);
        assert_eq!(r.bio_times, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn coincident_pulses_share_a_group_with_unit_spacing() {
        let trains: Vec<SpikeTrain> = (0..4).map(|l| train(l, vec![1.0])).collect();
        let r = pack(&trains, 0).unwrap();
        assert_eq!(r.report.groups, 1);
        let flat = flat_schedule(&r.image);
        let times: Vec<u64> = flat.iter().map(|f| f.release_ns).collect();
        assert_eq!(times, vec![104, 112, 120, 128]);
        // Three of four releases slipped behind their desired tick.
        assert_eq!(r.report.shifted, 3);
        assert_eq!(r.report.max_shift_ns, 24);
    }

    #[test]
    fn group_size_cap_forces_split_and_gap() {
        let trains: Vec<SpikeTrain> = (0..200).map(|l| train(l, vec![1.0])).collect();
        let r = pack(&trains, 0).unwrap();
        assert_eq!(r.report.groups, 2);
        let g0 = &r.image.groups[0];
        let g1 = &r.image.groups[1];
        assert_eq!(g0.pulses.len(), MAX_GROUP_PULSES);
        assert_eq!(g1.pulses.len(), 200 - MAX_GROUP_PULSES);
        assert_eq!(
            g1.release_tick as u64,
            g0.release_tick as u64 + MAX_GROUP_PULSES as u64 + GROUP_GAP_TICKS
        );
    }

    #[test]
    fn nothing_is_dropped_only_shifted() {
        // 10 kHz regular on one label: desired ticks collide with group
        // occupancy over and over; every pulse must still appear.
        let times: Vec<f64> = (0..1000).map(|k| k as f64 * 0.1).collect();
        let r = pack(&[train(0, times)], 0).unwrap();
        assert_eq!(r.image.pulse_count(), 1000);
        assert_eq!(r.bio_times.len(), 1000);
        let flat = flat_schedule(&r.image);
        for w in flat.windows(2) {
            assert!(w[1].release_ns > w[0].release_ns);
        }
        // Desired rate (one per 10 ns) collides with group occupancy, so
        // shifts accumulate but releases never run early.
        for (f, &bio) in flat.iter().zip(&r.bio_times) {
            assert!(f.release_ns >= bio_to_tech(bio).unwrap());
        }
        assert!(r.report.shifted > 0);
    }

    #[test]
    fn compensation_shifts_releases_earlier() {
        let r0 = pack(&[train(0, vec![10.0])], 0).unwrap();
        let r1 = pack(&[train(0, vec![10.0])], 230).unwrap();
        assert_eq!(r0.image.groups[0].release_tick, 125);
        assert_eq!(r1.image.groups[0].release_tick, 97); // ceil((1000-230)/8)
                                                         // Clamped at zero rather than releasing before the run starts.
        let r2 = pack(&[train(0, vec![0.5])], 230).unwrap();
        assert_eq!(r2.image.groups[0].release_tick, 0);
    }

    #[test]
    fn timestamps_carry_the_intended_grid_time() {
        let r = pack(&[train(3, vec![0.125])], 0).unwrap();
        // 12.5 ns rounds to 13 ns embedded time, grid-aligned stamp 12 ns.
        assert_eq!(r.image.groups[0].pulses[0].ts, 3);
        assert_eq!(r.image.groups[0].release_tick, 2);
    }

    #[test]
    fn rejects_out_of_range_sources() {
        let bad = SpikeTrain {
            hicann: 8,
            label9: 0,
            times: vec![1.0],
        };
        assert!(pack(&[bad], 0).is_err());
        let bad = SpikeTrain {
            hicann: 0,
            label9: 512,
            times: vec![1.0],
        };
        assert!(pack(&[bad], 0).is_err());
    }

    #[test]
    fn empty_input_packs_to_empty_image() {
        let r = pack(&[], 0).unwrap();
        assert_eq!(r.report.groups, 0);
        assert_eq!(r.image.pulse_count(), 0);
    }
}
