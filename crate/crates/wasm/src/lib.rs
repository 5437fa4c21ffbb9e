//! Browser-facing wrappers around the transport model. Every export takes
//! plain scalars, runs a bounded experiment, and returns a JSON string so a
//! static page can drive the engine and plot the result without bindings for
//! each type. Errors come back as `{"error": "..."}` instead of throwing,
//! which keeps the calling side uniform.
//!
//! The crate also builds natively (the exports are ordinary functions there),
//! so the same payloads are covered by `cargo test`.

use pulsecomm::analysis::{cv_isi, oracle_delays, summarize, tech_rate};
use pulsecomm::benchmark::run_point_on;
use pulsecomm::events::BITS_PER_PULSE;
use pulsecomm::simcore::{run, ExperimentPlan, RunOutcome, SimConfig};
use pulsecomm::spikegen::{self, BegMode, SpikeTrain, SurrogateParams};
use pulsecomm::trace::unwrap_records;
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

/// Keeps a single button press from freezing the page for minutes.
const MAX_DURATION_MS: f64 = 20_000.0;
const MAX_RATES: usize = 24;
const MAX_BENCH_POINTS: usize = 12;

/// Sorted trace stamps in ns, for rate figures.
fn traced_stamps(out: &RunOutcome) -> Result<Vec<u64>, pulsecomm::Error> {
    let records = unwrap_records(&out.trace.memory)?;
    let mut stamps: Vec<u64> = records.iter().map(|r| r.stamp_ns).collect();
    stamps.sort_unstable();
    Ok(stamps)
}

fn parse_rates(csv: &str) -> Result<Vec<f64>, String> {
    let mut rates = Vec::new();
    for part in csv.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let rate: f64 = part
            .parse()
            .map_err(|_| format!("`{part}` is not a rate in kHz"))?;
        if !(0.05..=30.0).contains(&rate) {
            return Err(format!(
                "rate {rate} kHz is outside the supported 0.05..=30 range"
            ));
        }
        rates.push(rate);
    }
    if rates.is_empty() {
        return Err("no rates given".into());
    }
    if rates.len() > MAX_RATES {
        return Err(format!("at most {MAX_RATES} rates per sweep"));
    }
    Ok(rates)
}

fn check_duration(duration_ms: f64) -> Result<(), String> {
    if !(50.0..=MAX_DURATION_MS).contains(&duration_ms) {
        return Err(format!(
            "duration must lie in 50..={MAX_DURATION_MS} ms (bio)"
        ));
    }
    Ok(())
}

fn reply(result: Result<Value, String>) -> String {
    let value = match result {
        Ok(v) => v,
        Err(msg) => json!({ "error": msg }),
    };
    value.to_string()
}

fn err_str(e: pulsecomm::Error) -> String {
    e.to_string()
}

/// One sweep row shared by both directions.
fn qos_row(rate_khz: f64, effective_khz: f64, out: &RunOutcome) -> Result<Value, pulsecomm::Error> {
    let q = summarize(out)?;
    let stamps = traced_stamps(out)?;
    let mpps = tech_rate(&stamps).map(|r| r / 1e6).unwrap_or(0.0);
    Ok(json!({
        "rate_khz": rate_khz,
        "effective_khz": effective_khz,
        "sent": q.sent,
        "traced": q.traced,
        "loss_fraction": q.loss_fraction,
        "traced_mpulses_per_s": mpps,
        "traced_mbit_per_s": mpps * BITS_PER_PULSE as f64,
        "mean_delay_ms": q.mean_delay_ms,
        "jitter_ms": q.jitter_ms,
    }))
}

fn characterize_inner(
    direction: &str,
    kind: &str,
    rates_csv: &str,
    duration_ms: f64,
    seed: u32,
) -> Result<Value, String> {
    check_duration(duration_ms)?;
    let rates = parse_rates(rates_csv)?;
    let config = SimConfig::default();
    let mut rows = Vec::new();
    for &rate_khz in &rates {
        let (effective_khz, out) = match (direction, kind) {
            ("downstream", "regular") => {
                let times =
                    spikegen::regular(rate_khz * 1000.0, 0.0, duration_ms).map_err(err_str)?;
                let train = SpikeTrain::new(0, 0, times).map_err(err_str)?;
                let plan = ExperimentPlan::loopback(&[train], config.clone()).map_err(err_str)?;
                (rate_khz, run(&plan).map_err(err_str)?)
            }
            ("downstream", "poisson") => {
                let times = spikegen::poisson(rate_khz * 1000.0, duration_ms, seed as u64, 0)
                    .map_err(err_str)?;
                let train = SpikeTrain::new(0, 0, times).map_err(err_str)?;
                let plan = ExperimentPlan::loopback(&[train], config.clone()).map_err(err_str)?;
                (rate_khz, run(&plan).map_err(err_str)?)
            }
            ("upstream", "regular") => {
                // 1 kHz bio is a 25-tick generator period; the grid makes
                // the realized rate snap to the nearest divisor.
                let period = (25.0 / rate_khz).round().max(1.0) as u32;
                let mode = BegMode::Regular {
                    period_ticks: period,
                };
                let times = spikegen::beg(mode, duration_ms, seed as u64, 0).map_err(err_str)?;
                let train = SpikeTrain::new(0, 0, times).map_err(err_str)?;
                let plan =
                    ExperimentPlan::upstream(vec![train], config.clone()).map_err(err_str)?;
                (25.0 / period as f64, run(&plan).map_err(err_str)?)
            }
            ("upstream", "poisson") => {
                if rate_khz > 25.0 {
                    return Err("generator rates above 25 kHz need a sub-tick period".into());
                }
                let mode = BegMode::PseudoRandom {
                    mean_ticks: 25.0 / rate_khz,
                };
                let times = spikegen::beg(mode, duration_ms, seed as u64, 0).map_err(err_str)?;
                let train = SpikeTrain::new(0, 0, times).map_err(err_str)?;
                let plan =
                    ExperimentPlan::upstream(vec![train], config.clone()).map_err(err_str)?;
                (rate_khz, run(&plan).map_err(err_str)?)
            }
            ("downstream", _) | ("upstream", _) => {
                return Err(format!(
                    "unknown kind `{kind}` (expected regular or poisson)"
                ));
            }
            _ => {
                return Err(format!(
                    "unknown direction `{direction}` (expected downstream or upstream)"
                ));
            }
        };
        rows.push(qos_row(rate_khz, effective_khz, &out).map_err(err_str)?);
    }
    Ok(json!({
        "direction": direction,
        "kind": kind,
        "duration_ms": duration_ms,
        "rows": rows,
    }))
}

/// Sweeps one channel over a rate grid and reports throughput, loss, and
/// delay per rate. `direction` picks the loopback path ("downstream") or the
/// on-chip generator path ("upstream"); `kind` is "regular" or "poisson".
#[wasm_bindgen]
pub fn characterize(
    direction: &str,
    kind: &str,
    rates_csv: &str,
    duration_ms: f64,
    seed: u32,
) -> String {
    reply(characterize_inner(
        direction,
        kind,
        rates_csv,
        duration_ms,
        seed,
    ))
}

/// Caps the scatter payload; the page cannot usefully draw more anyway.
const MAX_PROFILE_POINTS: usize = 4000;

fn delay_profile_inner(
    kind: &str,
    rate_khz: f64,
    duration_ms: f64,
    seed: u32,
) -> Result<Value, String> {
    check_duration(duration_ms)?;
    if !(0.05..=30.0).contains(&rate_khz) {
        return Err(format!(
            "rate {rate_khz} kHz is outside the supported 0.05..=30 range"
        ));
    }
    let times = match kind {
        "regular" => spikegen::regular(rate_khz * 1000.0, 0.0, duration_ms).map_err(err_str)?,
        "poisson" => {
            spikegen::poisson(rate_khz * 1000.0, duration_ms, seed as u64, 0).map_err(err_str)?
        }
        _ => {
            return Err(format!(
                "unknown kind `{kind}` (expected regular or poisson)"
            ))
        }
    };
    let train = SpikeTrain::new(0, 0, times).map_err(err_str)?;
    let plan = ExperimentPlan::loopback(&[train], SimConfig::default()).map_err(err_str)?;
    let out = run(&plan).map_err(err_str)?;
    let q = summarize(&out).map_err(err_str)?;
    let records = unwrap_records(&out.trace.memory).map_err(err_str)?;
    let mut samples = oracle_delays(&out.log, &records);
    samples.sort_by(|a, b| a.sent_ms.total_cmp(&b.sent_ms));
    let stride = samples.len().div_ceil(MAX_PROFILE_POINTS).max(1);
    let points: Vec<[f64; 2]> = samples
        .iter()
        .step_by(stride)
        .map(|s| [s.sent_ms, s.delay_ms])
        .collect();
    Ok(json!({
        "kind": kind,
        "rate_khz": rate_khz,
        "summary": q,
        "stride": stride,
        "points": points,
    }))
}

/// Runs one loopback experiment and returns (sent time, delay) pairs plus
/// the usual loss and delay summary, downsampled to a plottable size.
#[wasm_bindgen]
pub fn delay_profile(kind: &str, rate_khz: f64, duration_ms: f64, seed: u32) -> String {
    reply(delay_profile_inner(kind, rate_khz, duration_ms, seed))
}

fn bench_points_inner(
    nph_csv: &str,
    n_neurons: u32,
    duration_ms: f64,
    seed: u32,
) -> Result<Value, String> {
    if !(200.0..=5000.0).contains(&duration_ms) {
        return Err("bench duration must lie in 200..=5000 ms (bio)".into());
    }
    if !(8..=500).contains(&n_neurons) {
        return Err("population size must lie in 8..=500".into());
    }
    let mut nphs = Vec::new();
    for part in nph_csv.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let nph: u32 = part
            .parse()
            .map_err(|_| format!("`{part}` is not a neurons-per-chip count"))?;
        nphs.push(nph);
    }
    if nphs.is_empty() {
        return Err("no sweep points given".into());
    }
    if nphs.len() > MAX_BENCH_POINTS {
        return Err(format!("at most {MAX_BENCH_POINTS} sweep points"));
    }
    let surrogate = SurrogateParams {
        n_neurons,
        duration_ms,
        seed: seed as u64,
        ..SurrogateParams::default()
    };
    let population = spikegen::updown_surrogate(&surrogate).map_err(err_str)?;
    let sent_cv = {
        let cvs: Vec<f64> = population.iter().filter_map(|t| cv_isi(&t.times)).collect();
        cvs.iter().sum::<f64>() / cvs.len().max(1) as f64
    };
    let config = SimConfig::default();
    let mut rows = Vec::new();
    for &nph in &nphs {
        let p = run_point_on(&population, duration_ms, nph, &config).map_err(err_str)?;
        rows.push(json!({
            "nph": p.nph,
            "n_hicanns": p.n_hicanns,
            "sent": p.sent,
            "traced": p.traced,
            "loss_fraction": p.loss_fraction,
            "mean_cv_in": p.mean_cv_in,
            "mean_cv_out": p.mean_cv_out,
            "activity_correlation": p.activity_correlation,
            "mean_delay_ms": p.mean_delay_ms,
        }));
    }
    Ok(json!({
        "n_neurons": n_neurons,
        "duration_ms": duration_ms,
        "population_mean_cv": sent_cv,
        "rows": rows,
    }))
}

/// Maps one surrogate population onto chips at several packing densities and
/// reports loss and ISI distortion per density.
#[wasm_bindgen]
pub fn bench_points(nph_csv: &str, n_neurons: u32, duration_ms: f64, seed: u32) -> String {
    reply(bench_points_inner(nph_csv, n_neurons, duration_ms, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parsed(payload: String) -> Value {
        serde_json::from_str(&payload).expect("export returned invalid JSON")
    }

    #[test]
    fn downstream_sweep_reports_loss_onset_and_saturation() {
        let v = parsed(characterize("downstream", "regular", "1.0, 2.5", 1000.0, 1));
        let rows = v["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0]["loss_fraction"], 0.0);
        assert!(rows[1]["loss_fraction"].as_f64().unwrap() > 0.2);
        let mpps = rows[1]["traced_mpulses_per_s"].as_f64().unwrap();
        assert!((mpps - 1e3 / 56.0).abs() < 0.2, "saturation off: {mpps}");
    }

    #[test]
    fn upstream_regular_snaps_to_the_tick_grid() {
        let v = parsed(characterize("upstream", "regular", "2.5", 1000.0, 1));
        let row = &v["rows"][0];
        assert_eq!(row["effective_khz"], 2.5);
        let mpps = row["traced_mpulses_per_s"].as_f64().unwrap();
        assert!((mpps - 25.0).abs() < 0.3, "double-packet rate off: {mpps}");
        let snapped = parsed(characterize("upstream", "regular", "1.9", 1000.0, 1));
        let eff = snapped["rows"][0]["effective_khz"].as_f64().unwrap();
        assert!((eff - 25.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn bad_inputs_come_back_as_error_payloads() {
        for payload in [
            characterize("sideways", "regular", "1.0", 1000.0, 1),
            characterize("downstream", "renewal", "1.0", 1000.0, 1),
            characterize("downstream", "regular", "", 1000.0, 1),
            characterize("downstream", "regular", "1.0", 5.0, 1),
            delay_profile("regular", 99.0, 1000.0, 1),
            bench_points("", 200, 1000.0, 1),
            bench_points("10", 2, 1000.0, 1),
        ] {
            let v = parsed(payload);
            assert!(v["error"].is_string(), "expected an error payload, got {v}");
        }
    }

    #[test]
    fn delay_profile_keeps_the_uncontended_band_at_low_rate() {
        let v = parsed(delay_profile("regular", 1.0, 2000.0, 1));
        assert_eq!(v["summary"]["loss_fraction"], 0.0);
        let points = v["points"].as_array().unwrap();
        assert!(!points.is_empty());
        for p in points {
            let delay = p[1].as_f64().unwrap();
            assert!((2.2..2.4).contains(&delay), "delay out of band: {delay}");
        }
    }

    #[test]
    fn bench_rows_echo_the_sweep_and_see_distortion_at_high_packing() {
        let v = parsed(bench_points("10,45", 120, 800.0, 1));
        let rows = v["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0]["nph"], 10);
        assert_eq!(rows[1]["nph"], 45);
        assert!(rows[0]["sent"].as_u64().unwrap() > 0);
        let sparse = rows[0]["loss_fraction"].as_f64().unwrap();
        let dense = rows[1]["loss_fraction"].as_f64().unwrap();
        assert!(dense > sparse, "packing 45 should lose more than 10");
    }
}
