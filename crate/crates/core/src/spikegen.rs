//! Spike train construction.
//!
//! All stimulus flows through [`SpikeTrain`]: biological spike times in ms,
//! strictly increasing, bound to one source (chip index plus 9-bit label).
//! Stochastic generators take a master seed and a source id and draw from
//! the split stream [`SplitMix64::for_source`], so a train's content does
//! not depend on how many other trains exist or the order they are built.

use crate::error::Error;
use crate::rng::SplitMix64;
use crate::timebase::{ACCELERATION, HICANN_CLOCK_NS};
use serde::{Deserialize, Serialize};

/// Bio milliseconds per chip clock tick (4 ns technical).
const TICK_MS: f64 = HICANN_CLOCK_NS as f64 * ACCELERATION as f64 / 1e6;

/// One source's spike times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeTrain {
    pub hicann: u8,
    pub label9: u16,
    /// Bio times in ms, strictly increasing.
    pub times: Vec<f64>,
}

impl SpikeTrain {
    /// Sorts `times` and validates: finite, non-negative, no exact duplicates.
    pub fn new(hicann: u8, label9: u16, mut times: Vec<f64>) -> Result<Self, Error> {
        for &t in &times {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::domain(format!(
                    "spike time {t} is not a finite non-negative ms value"
                )));
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if let Some(w) = times.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::validation(format!(
                "duplicate spike time {} ms",
                w[0]
            )));
        }
        Ok(SpikeTrain {
            hicann,
            label9,
            times,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Inter-spike intervals in ms.
    pub fn isis(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Nudges `t` above `prev` so accumulated float sums stay strictly increasing.
fn strictly_after(t: f64, prev: f64) -> f64 {
    if t > prev {
        t
    } else {
        prev.next_up()
    }
}

/// Regular train: spikes at `phase + k/rate`, for every time below `duration`.
pub fn regular(rate_hz: f64, phase_ms: f64, duration_ms: f64) -> Result<Vec<f64>, Error> {
    if !rate_hz.is_finite() || rate_hz <= 0.0 {
        return Err(Error::domain(format!(
            "rate must be positive, got {rate_hz} Hz"
        )));
    }
    if phase_ms < 0.0 || !phase_ms.is_finite() {
        return Err(Error::domain(format!(
            "phase must be non-negative, got {phase_ms} ms"
        )));
    }
    let isi = 1000.0 / rate_hz;
    let mut times = Vec::new();
    let mut k = 0u64;
    loop {
        let t = phase_ms + k as f64 * isi;
        if t >= duration_ms {
            break;
        }
        times.push(t);
        k += 1;
    }
    Ok(times)
}

/// Poisson train: exponential inter-spike intervals with mean `1000/rate` ms.
pub fn poisson(
    rate_hz: f64,
    duration_ms: f64,
    seed: u64,
    source_id: u64,
) -> Result<Vec<f64>, Error> {
    if !rate_hz.is_finite() || rate_hz <= 0.0 {
        return Err(Error::domain(format!(
            "rate must be positive, got {rate_hz} Hz"
        )));
    }
    let mean_isi = 1000.0 / rate_hz;
    let mut rng = SplitMix64::for_source(seed, source_id);
    let mut times = Vec::new();
    let mut t = rng.exp(mean_isi);
    let mut prev = -1.0;
    while t < duration_ms {
        t = strictly_after(t, prev);
        if t >= duration_ms {
            break;
        }
        times.push(t);
        prev = t;
        t += rng.exp(mean_isi);
    }
    Ok(times)
}

/// On-chip background generator emulation. Events sit on the 4 ns chip
/// clock grid; intervals are counted in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BegMode {
    /// Fixed period in ticks.
    Regular { period_ticks: u32 },
    /// Geometric intervals on the tick grid (minimum one tick) with the
    /// given mean, approximating the hardware's LFSR-driven mode.
    PseudoRandom { mean_ticks: f64 },
}

/// Generates a background-generator train. The first event falls one
/// interval after start, matching a counter that runs from zero.
pub fn beg(mode: BegMode, duration_ms: f64, seed: u64, source_id: u64) -> Result<Vec<f64>, Error> {
    let mut times = Vec::new();
    let mut tick = 0u64;
    let mut rng = SplitMix64::for_source(seed, source_id);
    loop {
        let step = match mode {
            BegMode::Regular { period_ticks } => {
                if period_ticks == 0 {
                    return Err(Error::domain("generator period must be at least one tick"));
                }
                period_ticks as u64
            }
            BegMode::PseudoRandom { mean_ticks } => {
                if mean_ticks.is_nan() || mean_ticks < 1.0 {
                    return Err(Error::domain(format!(
                        "mean interval must be at least one tick, got {mean_ticks}"
                    )));
                }
                rng.geometric_min1(mean_ticks)
            }
        };
        tick += step;
        let t = tick as f64 * TICK_MS;
        if t >= duration_ms {
            return Ok(times);
        }
        times.push(t);
    }
}

// ---------------------------------------------------------------------------
// Network activity surrogate
// ---------------------------------------------------------------------------

/// Parameters of the two-state network surrogate: a population that switches
/// between a high-rate Up state and a quiet Down state under one shared
/// Markov modulation, preceded by an asynchronous-irregular warm-up window.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateParams {
    pub n_neurons: u32,
    /// Fraction of neurons labeled excitatory; the rest are inhibitory and
    /// fire faster by a fixed internal factor, as interneurons do.
    pub frac_excitatory: f64,
    /// Excitatory Up-state rate in Hz (bio).
    pub up_rate_hz: f64,
    /// Excitatory Down-state rate in Hz (bio).
    pub down_rate_hz: f64,
    /// Mean state dwells. An infinite dwell pins its state once entered:
    /// an infinite Up dwell degenerates into plain Poisson firing.
    pub mean_up_ms: f64,
    pub mean_down_ms: f64,
    /// Length of the initial asynchronous window at stationary mean rates.
    pub initial_ai_ms: f64,
    pub duration_ms: f64,
    pub seed: u64,
}

/// Inhibitory over excitatory rate factor.
const INHIBITORY_RATE_SCALE: f64 = 1.5;

/// Sigma of the log-normal per-neuron rate spread (mean stays 1).
const RATE_SPREAD_SIGMA: f64 = 0.45;

/// Reserved source id for the shared state sequence.
const STATE_STREAM_ID: u64 = u64::MAX;

impl Default for SurrogateParams {
    /// Tuned so 500 neurons carry a total mean rate near 19.9 kHz with
    /// clearly bimodal 10 ms binned activity and per-neuron CVs above 1.
    fn default() -> Self {
        SurrogateParams {
            n_neurons: 500,
            frac_excitatory: 0.8,
            up_rate_hz: 49.0,
            down_rate_hz: 20.5,
            mean_up_ms: 55.0,
            mean_down_ms: 45.0,
            initial_ai_ms: 200.0,
            duration_ms: 10_000.0,
            seed: 1,
        }
    }
}

/// One interval of the shared modulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateInterval {
    pub start_ms: f64,
    pub end_ms: f64,
    pub up: bool,
}

/// Draws the shared Up/Down sequence covering `[initial_ai, duration)`.
pub fn surrogate_state_sequence(params: &SurrogateParams) -> Vec<StateInterval> {
    let mut rng = SplitMix64::for_source(params.seed, STATE_STREAM_ID);
    let mut out = Vec::new();
    let mut t = params.initial_ai_ms;
    let mut up = true;
    while t < params.duration_ms {
        let mean = if up {
            params.mean_up_ms
        } else {
            params.mean_down_ms
        };
        let end = if mean.is_finite() {
            (t + rng.exp(mean)).min(params.duration_ms)
        } else {
            params.duration_ms
        };
        out.push(StateInterval {
            start_ms: t,
            end_ms: end,
            up,
        });
        t = end;
        up = !up;
    }
    out
}

/// Builds the surrogate population. Trains are keyed by neuron index via
/// `label9 = id % 512` on `hicann = 0`; callers remap for real placements.
pub fn updown_surrogate(params: &SurrogateParams) -> Result<Vec<SpikeTrain>, Error> {
    if params.n_neurons == 0 {
        return Err(Error::domain("surrogate needs at least one neuron"));
    }
    if !(0.0..=1.0).contains(&params.frac_excitatory) {
        return Err(Error::domain("frac_excitatory must lie in [0, 1]"));
    }
    if params.up_rate_hz < 0.0 || params.down_rate_hz < 0.0 {
        return Err(Error::domain("state rates must be non-negative"));
    }
    let states = surrogate_state_sequence(params);
    let n_exc = (params.n_neurons as f64 * params.frac_excitatory).round() as u32;
    // Stationary Up-state weight of the modulation; a pinned state takes
    // all the weight.
    let up_weight = if !params.mean_up_ms.is_finite() {
        1.0
    } else if !params.mean_down_ms.is_finite() {
        0.0
    } else {
        params.mean_up_ms / (params.mean_up_ms + params.mean_down_ms)
    };

    let mut trains = Vec::with_capacity(params.n_neurons as usize);
    for id in 0..params.n_neurons {
        let mut rng = SplitMix64::for_source(params.seed, id as u64);
        let role_scale = if id < n_exc {
            1.0
        } else {
            INHIBITORY_RATE_SCALE
        };
        let spread = rng.lognormal_mean1_scaled(1.0, RATE_SPREAD_SIGMA);
        let up_rate = params.up_rate_hz * role_scale * spread;
        let down_rate = params.down_rate_hz * role_scale * spread;
        let ai_rate = up_rate * up_weight + down_rate * (1.0 - up_weight);

        let mut times = Vec::new();
        let mut prev = -1.0;
        let emit = |rng: &mut SplitMix64,
                    start: f64,
                    end: f64,
                    rate: f64,
                    times: &mut Vec<f64>,
                    prev: &mut f64| {
            if rate <= 0.0 {
                return;
            }
            let mean_isi = 1000.0 / rate;
            let mut t = start + rng.exp(mean_isi);
            while t < end {
                t = strictly_after(t, *prev);
                if t >= end {
                    break;
                }
                times.push(t);
                *prev = t;
                t += rng.exp(mean_isi);
            }
        };
        emit(
            &mut rng,
            0.0,
            params.initial_ai_ms.min(params.duration_ms),
            ai_rate,
            &mut times,
            &mut prev,
        );
        for s in &states {
            let rate = if s.up { up_rate } else { down_rate };
            emit(&mut rng, s.start_ms, s.end_ms, rate, &mut times, &mut prev);
        }
        trains.push(SpikeTrain {
            hicann: 0,
            label9: (id % 512) as u16,
            times,
        });
    }
    Ok(trains)
}

// ---------------------------------------------------------------------------
// Spike files
// ---------------------------------------------------------------------------

/// One source from a spike file.
#[derive(Debug, Clone, PartialEq)]
pub struct FileTrain {
    pub neuron_id: u32,
    pub times: Vec<f64>,
}

/// Parses the `neuron_id,time_ms` CSV format. Lines may arrive out of time
/// order and are sorted per neuron; an exact duplicate (same neuron, same
/// time) is rejected. `#` comments, blank lines, and one optional header
/// line are allowed.
pub fn parse_spike_file(text: &str) -> Result<Vec<FileTrain>, Error> {
    let mut per_neuron: std::collections::BTreeMap<u32, Vec<f64>> =
        std::collections::BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if idx == 0 && line.eq_ignore_ascii_case("neuron_id,time_ms") {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(id_s), Some(t_s), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(
                lineno,
                format!("expected 'neuron_id,time_ms', got '{raw}'"),
            ));
        };
        let id: u32 = id_s
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad neuron id '{}'", id_s.trim())))?;
        let t: f64 = t_s
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad time '{}'", t_s.trim())))?;
        if !t.is_finite() || t < 0.0 {
            return Err(Error::parse(
                lineno,
                format!("time {t} must be a finite non-negative ms value"),
            ));
        }
        per_neuron.entry(id).or_default().push(t);
    }
    let mut out = Vec::with_capacity(per_neuron.len());
    for (neuron_id, mut times) in per_neuron {
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if let Some(w) = times.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::validation(format!(
                "neuron {neuron_id} spikes twice at {} ms",
                w[0]
            )));
        }
        out.push(FileTrain { neuron_id, times });
    }
    Ok(out)
}

/// Writes trains in the format [`parse_spike_file`] reads.
pub fn write_spike_file(trains: &[FileTrain]) -> String {
    let mut out = String::from("neuron_id,time_ms\n");
    for train in trains {
        for &t in &train.times {
            out.push_str(&format!("{},{}\n", train.neuron_id, t));
        }
    }
    out
}
