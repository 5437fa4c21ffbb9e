//! Neurons-per-chip benchmark: how densely a fixed population can be
//! packed onto chips before the off-wafer path distorts or loses spikes.
//!
//! The population is a fixed surrogate network. Placing `nph` neurons on
//! each chip fills chips block by block, eight chips per board; boards run
//! one after the other, each as an independent loopback experiment, and
//! the results merge. Fewer neurons per chip means more boards and more
//! aggregate bandwidth; more neurons per chip concentrates traffic on
//! fewer channels.

use crate::analysis::{cv_isi, mean, network_activity, oracle_delays, pearson, std_dev};
use crate::error::Error;
use crate::simcore::{run, ExperimentPlan, SimConfig};
use crate::spikegen::{updown_surrogate, SpikeTrain, SurrogateParams};
use crate::trace::unwrap_records;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const CHIPS_PER_BOARD: u32 = 8;

/// Where one neuron lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub fpga: u32,
    /// Chip index on its board.
    pub hicann: u8,
    pub label9: u16,
}

/// Block placement: neuron `i` goes to chip `i / nph`, label `i % nph`.
pub fn place(neuron: u32, nph: u32) -> Placement {
    let chip = neuron / nph;
    Placement {
        fpga: chip / CHIPS_PER_BOARD,
        hicann: (chip % CHIPS_PER_BOARD) as u8,
        label9: ((neuron % nph) % 512) as u16,
    }
}

fn neuron_of(fpga: u32, hicann: u8, label9: u16, nph: u32) -> u32 {
    (fpga * CHIPS_PER_BOARD + hicann as u32) * nph + label9 as u32
}

#[derive(Debug, Clone)]
pub struct BenchParams {
    pub nph: u32,
    pub surrogate: SurrogateParams,
    pub config: SimConfig,
}

impl BenchParams {
    pub fn new(nph: u32) -> Self {
        BenchParams {
            nph,
            surrogate: SurrogateParams::default(),
            config: SimConfig::default(),
        }
    }
}

/// Merged results of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub nph: u32,
    pub n_neurons: u32,
    pub n_hicanns: u32,
    pub n_fpgas: u32,
    pub sent: u64,
    pub traced: u64,
    pub lost: u64,
    pub loss_fraction: f64,
    pub dropped_down_fifo: u64,
    pub dropped_up_merger: u64,
    pub dropped_trace_fifo: u64,
    pub dropped_trace_memory: u64,
    pub mean_delay_ms: Option<f64>,
    pub jitter_ms: Option<f64>,
    /// Median per-neuron CV of the stimulus.
    pub median_cv_in: Option<f64>,
    /// Median per-neuron CV of what the trace recovered.
    pub median_cv_out: Option<f64>,
    pub mean_cv_in: Option<f64>,
    pub mean_cv_out: Option<f64>,
    /// Pearson correlation of the sent and traced 10 ms activity series.
    pub activity_correlation: Option<f64>,
    pub playback_shifted: u64,
    pub max_shift_ns: u64,
}

/// Bin width for the population activity series.
pub const ACTIVITY_BIN_MS: f64 = 10.0;

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(values[values.len() / 2])
}

/// Runs one sweep point on the configured surrogate population.
pub fn run_point(params: &BenchParams) -> Result<BenchPoint, Error> {
    let population = updown_surrogate(&params.surrogate)?;
    run_point_on(
        &population,
        params.surrogate.duration_ms,
        params.nph,
        &params.config,
    )
}

/// Runs one sweep point on an explicit population: place, run each board,
/// merge. Train order defines neuron ids; hicann/label fields are
/// overwritten by placement.
pub fn run_point_on(
    population: &[SpikeTrain],
    duration_ms: f64,
    nph: u32,
    config: &SimConfig,
) -> Result<BenchPoint, Error> {
    if nph == 0 {
        return Err(Error::domain("neurons per chip must be at least 1"));
    }
    if nph > 512 {
        return Err(Error::domain(
            "more than 512 neurons per chip cannot keep distinct labels",
        ));
    }
    if population.is_empty() {
        return Err(Error::domain("population holds no trains"));
    }
    let n_neurons = population.len() as u32;
    let n_hicanns = n_neurons.div_ceil(nph);
    let n_fpgas = n_hicanns.div_ceil(CHIPS_PER_BOARD);

    let mut boards: BTreeMap<u32, Vec<SpikeTrain>> = BTreeMap::new();
    for (i, train) in population.iter().enumerate() {
        let p = place(i as u32, nph);
        boards.entry(p.fpga).or_default().push(SpikeTrain {
            hicann: p.hicann,
            label9: p.label9,
            times: train.times.clone(),
        });
    }

    let mut point = BenchPoint {
        nph,
        n_neurons,
        n_hicanns,
        n_fpgas,
        sent: 0,
        traced: 0,
        lost: 0,
        loss_fraction: 0.0,
        dropped_down_fifo: 0,
        dropped_up_merger: 0,
        dropped_trace_fifo: 0,
        dropped_trace_memory: 0,
        mean_delay_ms: None,
        jitter_ms: None,
        median_cv_in: None,
        median_cv_out: None,
        mean_cv_in: None,
        mean_cv_out: None,
        activity_correlation: None,
        playback_shifted: 0,
        max_shift_ns: 0,
    };
    let mut delays: Vec<f64> = Vec::new();
    let mut out_times: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let n_bins = (duration_ms / ACTIVITY_BIN_MS).ceil() as usize;
    let mut traced_activity = vec![0.0f64; n_bins];

    for (fpga, trains) in &boards {
        let plan = ExperimentPlan::loopback(trains, config.clone())?;
        let out = run(&plan)?;
        let c = out.log.stage_counts();
        point.sent += c.sent;
        point.traced += c.traced;
        point.dropped_down_fifo += c.dropped_down_fifo;
        point.dropped_up_merger += c.dropped_up_merger;
        point.dropped_trace_fifo += c.dropped_trace_fifo;
        point.dropped_trace_memory += c.dropped_trace_memory;
        if let Some(report) = &out.packing {
            point.playback_shifted += report.shifted as u64;
            point.max_shift_ns = point.max_shift_ns.max(report.max_shift_ns);
        }
        let records = unwrap_records(&out.trace.memory)?;
        for sample in oracle_delays(&out.log, &records) {
            delays.push(sample.delay_ms);
            let neuron = neuron_of(*fpga, sample.hicann, sample.label9, nph);
            out_times.entry(neuron).or_default().push(sample.stamp_ms);
            let bin = (sample.stamp_ms / ACTIVITY_BIN_MS) as usize;
            if bin < n_bins {
                traced_activity[bin] += 1.0;
            }
        }
    }

    point.lost = point.sent - point.traced;
    point.loss_fraction = if point.sent == 0 {
        0.0
    } else {
        point.lost as f64 / point.sent as f64
    };
    point.mean_delay_ms = mean(&delays);
    point.jitter_ms = std_dev(&delays);
    let cv_in: Vec<f64> = population.iter().filter_map(|t| cv_isi(&t.times)).collect();
    let cv_out: Vec<f64> = out_times
        .values_mut()
        .filter_map(|times| {
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cv_isi(times)
        })
        .collect();
    point.mean_cv_in = mean(&cv_in);
    point.mean_cv_out = mean(&cv_out);
    point.median_cv_in = median(cv_in);
    point.median_cv_out = median(cv_out);
    let sent_activity: Vec<f64> = network_activity(population, ACTIVITY_BIN_MS, duration_ms)
        .iter()
        .map(|&c| c as f64)
        .collect();
    point.activity_correlation = pearson(&sent_activity, &traced_activity);
    Ok(point)
}

/// Sweep points used when the caller names none.
pub const DEFAULT_SWEEP: [u32; 10] = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50];

pub fn sweep(
    nphs: &[u32],
    surrogate: &SurrogateParams,
    config: &SimConfig,
) -> Result<Vec<BenchPoint>, Error> {
    nphs.iter()
        .map(|&nph| {
            run_point(&BenchParams {
                nph,
                surrogate: surrogate.clone(),
                config: config.clone(),
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn sweep_csv(points: &[BenchPoint]) -> String {
    let mut out = String::from(
        "nph,n_neurons,n_hicanns,n_fpgas,sent,traced,lost,loss_fraction,\
         dropped_down_fifo,dropped_up_merger,dropped_trace_fifo,dropped_trace_memory,\
         mean_delay_ms,jitter_ms,median_cv_in,median_cv_out,mean_cv_in,mean_cv_out,\
         activity_correlation,playback_shifted,max_shift_ns\n",
    );
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            p.nph,
            p.n_neurons,
            p.n_hicanns,
            p.n_fpgas,
            p.sent,
            p.traced,
            p.lost,
            p.loss_fraction,
            p.dropped_down_fifo,
            p.dropped_up_merger,
            p.dropped_trace_fifo,
            p.dropped_trace_memory,
            opt(p.mean_delay_ms),
            opt(p.jitter_ms),
            opt(p.median_cv_in),
            opt(p.median_cv_out),
            opt(p.mean_cv_in),
            opt(p.mean_cv_out),
            opt(p.activity_correlation),
            p.playback_shifted,
            p.max_shift_ns,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_placement_fills_chips_in_order() {
        assert_eq!(
            place(0, 25),
            Placement {
                fpga: 0,
                hicann: 0,
                label9: 0
            }
        );
        assert_eq!(
            place(24, 25),
            Placement {
                fpga: 0,
                hicann: 0,
                label9: 24
            }
        );
        assert_eq!(
            place(25, 25),
            Placement {
                fpga: 0,
                hicann: 1,
                label9: 0
            }
        );
        assert_eq!(
            place(199, 25),
            Placement {
                fpga: 0,
                hicann: 7,
                label9: 24
            }
        );
        assert_eq!(
            place(200, 25),
            Placement {
                fpga: 1,
                hicann: 0,
                label9: 0
            }
        );
        assert_eq!(
            place(499, 25),
            Placement {
                fpga: 2,
                hicann: 3,
                label9: 24
            }
        );
    }

    #[test]
    fn placement_round_trips() {
        for nph in [1u32, 7, 25, 50, 512] {
            for neuron in [0u32, 1, 13, 120, 499] {
                let p = place(neuron, nph);
                assert_eq!(neuron_of(p.fpga, p.hicann, p.label9, nph), neuron);
            }
        }
    }

    #[test]
    fn small_point_runs_and_conserves() {
        let params = BenchParams {
            nph: 4,
            surrogate: SurrogateParams {
                n_neurons: 24,
                duration_ms: 500.0,
                initial_ai_ms: 50.0,
                seed: 3,
                ..SurrogateParams::default()
            },
            config: SimConfig::default(),
        };
        let point = run_point(&params).unwrap();
        assert_eq!(point.n_hicanns, 6);
        assert_eq!(point.n_fpgas, 1);
        assert!(point.sent > 0);
        assert_eq!(point.sent, point.traced + point.lost);
        assert!(point.mean_delay_ms.unwrap() > 2.0);
        assert!(point.median_cv_in.is_some());
        assert!(point.median_cv_out.is_some());
        // Nearly lossless at this density, so the traced activity series
        // tracks what was sent.
        assert!(point.activity_correlation.unwrap() > 0.9);
    }

    #[test]
    fn sweep_csv_lists_one_line_per_point() {
        let surrogate = SurrogateParams {
            n_neurons: 16,
            duration_ms: 300.0,
            initial_ai_ms: 50.0,
            ..SurrogateParams::default()
        };
        let points = sweep(&[4, 8], &surrogate, &SimConfig::default()).unwrap();
        assert_eq!(points.len(), 2);
        assert!(points[0].n_fpgas >= points[1].n_fpgas);
        let csv = sweep_csv(&points);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("nph,"));
    }

    #[test]
    fn rejects_degenerate_packing() {
        assert!(run_point(&BenchParams::new(0)).is_err());
        assert!(run_point(&BenchParams::new(513)).is_err());
    }
}
