//! Offline evaluation of runs: matching, loss, delay, rates, regularity.

use crate::error::Error;
use crate::simcore::{GroundTruthLog, RunOutcome, SentPulse};
use crate::timebase::{bio_to_tech, tech_to_bio, to_fpga_tick_ceil, TimePoint};
use crate::trace::{unwrap_records, UnwrappedRecord};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    Some((values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt())
}

/// Coefficient of variation: population standard deviation over mean.
pub fn cv(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    if m == 0.0 {
        return None;
    }
    Some(std_dev(values)? / m)
}

/// CV of the inter-spike intervals of a sorted time list.
pub fn cv_isi(times_ms: &[f64]) -> Option<f64> {
    if times_ms.len() < 3 {
        return None;
    }
    let isis: Vec<f64> = times_ms.windows(2).map(|w| w[1] - w[0]).collect();
    cv(&isis)
}

/// Pulses per second on the technical clock, from first to last event.
pub fn tech_rate(times_ns: &[TimePoint]) -> Option<f64> {
    if times_ns.len() < 2 {
        return None;
    }
    let span = (times_ns[times_ns.len() - 1] - times_ns[0]) as f64;
    if span == 0.0 {
        return None;
    }
    Some((times_ns.len() - 1) as f64 * 1e9 / span)
}

/// One traced pulse tied back to its stimulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelaySample {
    pub pulse_id: u32,
    pub hicann: u8,
    pub label9: u16,
    pub sent_ms: f64,
    pub stamp_ms: f64,
    pub delay_ms: f64,
}

/// Pairs every trace record with its stimulus pulse through the
/// simulation's ground-truth ids.
pub fn oracle_delays(log: &GroundTruthLog, records: &[UnwrappedRecord]) -> Vec<DelaySample> {
    records
        .iter()
        .map(|r| {
            let sent = &log.sent[r.pulse_id as usize];
            DelaySample {
                pulse_id: r.pulse_id,
                hicann: sent.hicann,
                label9: sent.label9,
                sent_ms: sent.bio_ms,
                stamp_ms: r.bio_ms,
                delay_ms: r.bio_ms - sent.bio_ms,
            }
        })
        .collect()
}

/// Delay an isolated pulse picks up on the way to its chip stamp: release
/// on the next 8 ns tick, one packet of serialization, the link, then the
/// stamp grid. Everything beyond this is queueing.
pub fn uncontended_delay_ms(sent_ms: f64, link_latency_ns: u64) -> Result<f64, Error> {
    let t = bio_to_tech(sent_ms)?;
    let release = to_fpga_tick_ceil(t) as u64 * 8;
    let arrival = release + 56 + link_latency_ns;
    let stamp = arrival - arrival % 4;
    Ok(tech_to_bio(stamp) - sent_ms)
}

/// Loss and delay figures for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosSummary {
    pub sent: u64,
    pub traced: u64,
    pub dropped_down_fifo: u64,
    pub dropped_up_merger: u64,
    pub dropped_trace_fifo: u64,
    pub dropped_trace_memory: u64,
    pub chip_delivered: u64,
    pub in_flight: u64,
    pub loss_fraction: f64,
    pub mean_delay_ms: Option<f64>,
    pub jitter_ms: Option<f64>,
    pub min_delay_ms: Option<f64>,
    pub max_delay_ms: Option<f64>,
}

/// Summarizes a run. Loss counts every sent pulse that did not reach a
/// terminal delivery (trace memory, or the chip when nothing loops back).
pub fn summarize(out: &RunOutcome) -> Result<QosSummary, Error> {
    let c = out.log.stage_counts();
    let records = unwrap_records(&out.trace.memory)?;
    let delays: Vec<f64> = oracle_delays(&out.log, &records)
        .iter()
        .map(|s| s.delay_ms)
        .collect();
    let delivered = c.traced + c.chip_delivered;
    let loss_fraction = if c.sent == 0 {
        0.0
    } else {
        (c.sent - delivered) as f64 / c.sent as f64
    };
    Ok(QosSummary {
        sent: c.sent,
        traced: c.traced,
        dropped_down_fifo: c.dropped_down_fifo,
        dropped_up_merger: c.dropped_up_merger,
        dropped_trace_fifo: c.dropped_trace_fifo,
        dropped_trace_memory: c.dropped_trace_memory,
        chip_delivered: c.chip_delivered,
        in_flight: c.in_flight,
        loss_fraction,
        mean_delay_ms: mean(&delays),
        jitter_ms: std_dev(&delays),
        min_delay_ms: delays
            .iter()
            .copied()
            .min_by(|a, b| a.partial_cmp(b).unwrap()),
        max_delay_ms: delays
            .iter()
            .copied()
            .max_by(|a, b| a.partial_cmp(b).unwrap()),
    })
}

/// Result of matching trace output against stimulus without ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlindMatch {
    /// `(sent index, record index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    /// Sent pulses no record claimed: lost.
    pub unmatched_sent: Vec<usize>,
    /// Records matching no stimulus in the window: spurious.
    pub unmatched_records: Vec<usize>,
}

/// Matches trace records to stimulus pulses per source, in time order:
/// each record takes the earliest unmatched sent pulse of its source whose
/// implied delay lies in `[0, window_ms]`. Sent pulses skipped over are
/// lost. Ids are never consulted, so this mirrors what a user of the real
/// system can reconstruct; the ground-truth ids let tests audit it.
pub fn blind_match(sent: &[SentPulse], records: &[UnwrappedRecord], window_ms: f64) -> BlindMatch {
    let mut sent_by_source: BTreeMap<(u8, u16), Vec<usize>> = BTreeMap::new();
    for (i, s) in sent.iter().enumerate() {
        sent_by_source
            .entry((s.hicann, s.label9))
            .or_default()
            .push(i);
    }
    for list in sent_by_source.values_mut() {
        list.sort_by(|&a, &b| sent[a].bio_ms.partial_cmp(&sent[b].bio_ms).unwrap());
    }
    let mut rec_by_source: BTreeMap<(u8, u16), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        rec_by_source
            .entry((r.channel, r.label9))
            .or_default()
            .push(i);
    }

    let mut out = BlindMatch::default();
    for (source, recs) in &rec_by_source {
        let empty = Vec::new();
        let sents = sent_by_source.get(source).unwrap_or(&empty);
        let mut cursor = 0;
        for &ri in recs {
            let t = records[ri].bio_ms;
            // Skip stimulus pulses already out of reach: lost.
            while cursor < sents.len() && t - sent[sents[cursor]].bio_ms > window_ms {
                out.unmatched_sent.push(sents[cursor]);
                cursor += 1;
            }
            if cursor < sents.len() && t >= sent[sents[cursor]].bio_ms {
                out.pairs.push((sents[cursor], ri));
                cursor += 1;
            } else {
                out.unmatched_records.push(ri);
            }
        }
        out.unmatched_sent.extend(&sents[cursor..]);
    }
    // Sources that produced no records at all.
    for (source, sents) in &sent_by_source {
        if !rec_by_source.contains_key(source) {
            out.unmatched_sent.extend(sents);
        }
    }
    out.pairs.sort_unstable();
    out.unmatched_sent.sort_unstable();
    out.unmatched_records.sort_unstable();
    out
}

/// Histogram with fixed bins; the last element counts overflow.
pub fn histogram(values: &[f64], bin_width: f64, n_bins: usize) -> Vec<u64> {
    let mut bins = vec![0u64; n_bins + 1];
    for &v in values {
        let k = (v / bin_width).floor();
        if k >= 0.0 && (k as usize) < n_bins {
            bins[k as usize] += 1;
        } else {
            bins[n_bins] += 1;
        }
    }
    bins
}

/// Spike counts per time bin across a set of trains, covering
/// `[0, duration_ms)`.
pub fn network_activity(
    trains: &[crate::spikegen::SpikeTrain],
    bin_ms: f64,
    duration_ms: f64,
) -> Vec<u64> {
    let n_bins = (duration_ms / bin_ms).ceil() as usize;
    let mut bins = vec![0u64; n_bins];
    for train in trains {
        for &t in &train.times {
            let k = (t / bin_ms).floor() as usize;
            if k < n_bins {
                bins[k] += 1;
            }
        }
    }
    bins
}

/// Pearson correlation of two equal-length series. `None` when the lengths
/// differ, fewer than two samples exist, or either side has no variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ma = mean(a)?;
    let mb = mean(b)?;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}
