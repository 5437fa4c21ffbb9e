//! The experiment subcommands. Each one prepares a run directory, fans its
//! sweep points over the worker pool, writes CSV outputs, then consolidates
//! the directory through the report generator so every run ends with a
//! summary and plot-ready data.

use crate::config::{RunConfig, TrainKind};
use crate::pool::parallel_map;
use crate::report;
use anyhow::{Context, Result};
use pulsecomm::analysis::{cv_isi, mean, oracle_delays, summarize, tech_rate};
use pulsecomm::benchmark::run_point_on;
use pulsecomm::events::BITS_PER_PULSE;
use pulsecomm::simcore::{run, ExperimentPlan, RunOutcome};
use pulsecomm::spikegen::{self, BegMode, SpikeTrain};
use pulsecomm::trace::{records_to_csv, unwrap_records, UnwrappedRecord};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Traced arrival instants in tech ns, time ordered.
fn sorted_stamps(records: &[UnwrappedRecord]) -> Vec<u64> {
    let mut stamps: Vec<u64> = records.iter().map(|r| r.stamp_ns).collect();
    stamps.sort_unstable();
    stamps
}

fn rate_mpps(stamps: &[u64]) -> f64 {
    tech_rate(stamps).unwrap_or(0.0) / 1e6
}

fn min_isi_ns(stamps: &[u64]) -> Option<u64> {
    stamps.windows(2).map(|w| w[1] - w[0]).min()
}

/// Mean per-channel CV of the traced trains.
fn traced_cv(records: &[UnwrappedRecord]) -> Option<f64> {
    let mut by_channel: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_channel.entry(r.channel).or_default().push(r.bio_ms);
    }
    let cvs: Vec<f64> = by_channel
        .values_mut()
        .filter_map(|times| {
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cv_isi(times)
        })
        .collect();
    mean(&cvs)
}

fn sent_cv(trains: &[SpikeTrain]) -> Option<f64> {
    let cvs: Vec<f64> = trains.iter().filter_map(|t| cv_isi(&t.times)).collect();
    mean(&cvs)
}

// ---------------------------------------------------------------------------
// char-downstream
// ---------------------------------------------------------------------------

struct DownRow {
    kind: TrainKind,
    rate_khz: f64,
    seed: u64,
    sent: u64,
    traced: u64,
    loss_fraction: f64,
    traced_mpps: f64,
    mean_delay_ms: Option<f64>,
    jitter_ms: Option<f64>,
    min_delay_ms: Option<f64>,
    max_delay_ms: Option<f64>,
    min_isi_ns: Option<u64>,
    cv_sent: Option<f64>,
    cv_traced: Option<f64>,
}

fn down_trains(
    cfg: &RunConfig,
    kind: TrainKind,
    rate_khz: f64,
    seed: u64,
) -> Result<Vec<SpikeTrain>> {
    (0..cfg.hicanns as u8)
        .map(|ch| {
            let times = match kind {
                TrainKind::Regular => spikegen::regular(rate_khz * 1000.0, 0.0, cfg.duration_ms)?,
                TrainKind::Poisson => {
                    spikegen::poisson(rate_khz * 1000.0, cfg.duration_ms, seed, ch as u64)?
                }
            };
            Ok(SpikeTrain::new(ch, 0, times)?)
        })
        .collect()
}

fn down_task(cfg: &RunConfig, kind: TrainKind, rate_khz: f64, seed: u64) -> Result<DownRow> {
    let trains = down_trains(cfg, kind, rate_khz, seed)?;
    let out = run(&ExperimentPlan::loopback(&trains, cfg.fabric.clone())?)?;
    let q = summarize(&out)?;
    let records = unwrap_records(&out.trace.memory)?;
    let stamps = sorted_stamps(&records);
    Ok(DownRow {
        kind,
        rate_khz,
        seed,
        sent: q.sent,
        traced: q.traced,
        loss_fraction: q.loss_fraction,
        traced_mpps: rate_mpps(&stamps),
        mean_delay_ms: q.mean_delay_ms,
        jitter_ms: q.jitter_ms,
        min_delay_ms: q.min_delay_ms,
        max_delay_ms: q.max_delay_ms,
        min_isi_ns: min_isi_ns(&stamps),
        cv_sent: sent_cv(&trains),
        cv_traced: traced_cv(&records),
    })
}

pub fn char_downstream(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.prepare_run_dir("char-downstream")?;
    let mut tasks: Vec<(TrainKind, f64, u64)> = Vec::new();
    for &rate in &cfg.rates_khz {
        tasks.push((TrainKind::Regular, rate, 0));
    }
    for &rate in &cfg.rates_khz {
        for &seed in &cfg.seeds {
            tasks.push((TrainKind::Poisson, rate, seed));
        }
    }
    let rows = parallel_map(cfg.jobs, tasks.len(), |i| {
        let (kind, rate, seed) = tasks[i];
        down_task(cfg, kind, rate, seed)
            .with_context(|| format!("{} sweep at {rate} kHz, seed {seed}", kind.name()))
    });
    let rows: Vec<DownRow> = rows.into_iter().collect::<Result<_>>()?;

    let mut qos = String::from(
        "kind,rate_khz,seed,hicanns,sent,traced,lost,loss_fraction,traced_mpulses_per_s,\
         traced_mbit_per_s,mean_delay_ms,jitter_ms,min_delay_ms,max_delay_ms,min_traced_isi_ns\n",
    );
    let mut cv = String::from("kind,rate_khz,seed,cv_sent,cv_traced\n");
    for r in &rows {
        writeln!(
            qos,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.kind.name(),
            r.rate_khz,
            r.seed,
            cfg.hicanns,
            r.sent,
            r.traced,
            r.sent - r.traced,
            r.loss_fraction,
            r.traced_mpps,
            r.traced_mpps * BITS_PER_PULSE as f64,
            opt(r.mean_delay_ms),
            opt(r.jitter_ms),
            opt(r.min_delay_ms),
            opt(r.max_delay_ms),
            r.min_isi_ns.map(|v| v.to_string()).unwrap_or_default(),
        )?;
        writeln!(
            cv,
            "{},{},{},{},{}",
            r.kind.name(),
            r.rate_khz,
            r.seed,
            opt(r.cv_sent),
            opt(r.cv_traced),
        )?;
    }
    write_file(&dir, "qos.csv", &qos)?;
    write_file(&dir, "cv.csv", &cv)?;
    report::generate(&dir)?;
    println!("char-downstream: {} runs -> {}", rows.len(), dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// char-upstream
// ---------------------------------------------------------------------------

struct UpRow {
    kind: &'static str,
    requested_khz: f64,
    effective_khz: f64,
    seed: u64,
    sent: u64,
    traced: u64,
    loss_fraction: f64,
    traced_mpps: f64,
}

fn up_task(cfg: &RunConfig, kind: &'static str, rate_khz: f64, seed: u64) -> Result<UpRow> {
    // The generator runs on a 4 ns tick, so regular rates quantize to an
    // integer tick period; pseudo-random draws keep the requested mean.
    let (mode, effective_khz) = match kind {
        "regular" => {
            let period = (25.0 / rate_khz).round().max(1.0) as u32;
            (
                BegMode::Regular {
                    period_ticks: period,
                },
                25.0 / period as f64,
            )
        }
        _ => (
            BegMode::PseudoRandom {
                mean_ticks: 25.0 / rate_khz,
            },
            rate_khz,
        ),
    };
    let trains: Result<Vec<SpikeTrain>> = (0..cfg.hicanns as u8)
        .map(|ch| {
            let times = spikegen::beg(mode, cfg.duration_ms, seed, ch as u64)?;
            Ok(SpikeTrain::new(ch, 0, times)?)
        })
        .collect();
    let out = run(&ExperimentPlan::upstream(trains?, cfg.fabric.clone())?)?;
    let q = summarize(&out)?;
    let records = unwrap_records(&out.trace.memory)?;
    let stamps = sorted_stamps(&records);
    Ok(UpRow {
        kind,
        requested_khz: rate_khz,
        effective_khz,
        seed,
        sent: q.sent,
        traced: q.traced,
        loss_fraction: q.loss_fraction,
        traced_mpps: rate_mpps(&stamps),
    })
}

pub fn char_upstream(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.prepare_run_dir("char-upstream")?;
    let mut tasks: Vec<(&'static str, f64, u64)> = Vec::new();
    for &rate in &cfg.rates_khz {
        tasks.push(("regular", rate, 0));
    }
    for &rate in &cfg.rates_khz {
        for &seed in &cfg.seeds {
            tasks.push(("pseudorandom", rate, seed));
        }
    }
    let rows = parallel_map(cfg.jobs, tasks.len(), |i| {
        let (kind, rate, seed) = tasks[i];
        up_task(cfg, kind, rate, seed)
            .with_context(|| format!("{kind} sweep at {rate} kHz, seed {seed}"))
    });
    let rows: Vec<UpRow> = rows.into_iter().collect::<Result<_>>()?;

    let mut csv = String::from(
        "kind,requested_khz,effective_khz,seed,hicanns,sent,traced,lost,loss_fraction,\
         traced_mpulses_per_s,traced_mbit_per_s\n",
    );
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.kind,
            r.requested_khz,
            r.effective_khz,
            r.seed,
            cfg.hicanns,
            r.sent,
            r.traced,
            r.sent - r.traced,
            r.loss_fraction,
            r.traced_mpps,
            r.traced_mpps * BITS_PER_PULSE as f64,
        )?;
    }
    write_file(&dir, "throughput.csv", &csv)?;
    report::generate(&dir)?;
    println!("char-upstream: {} runs -> {}", rows.len(), dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// loopback
// ---------------------------------------------------------------------------

pub fn loopback(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.prepare_run_dir("loopback")?;
    let rate_khz = cfg.rates_khz[0];
    let seed = cfg.seeds[0];
    let trains = down_trains(cfg, cfg.train, rate_khz, seed)?;
    let out: RunOutcome = run(&ExperimentPlan::loopback(&trains, cfg.fabric.clone())?)?;
    let q = summarize(&out)?;
    let records = unwrap_records(&out.trace.memory)?;

    write_file(&dir, "records.csv", &records_to_csv(&records))?;
    let mut delays = String::from("pulse_id,hicann,label9,sent_ms,stamp_ms,delay_ms\n");
    for s in oracle_delays(&out.log, &records) {
        writeln!(
            delays,
            "{},{},{},{},{},{}",
            s.pulse_id, s.hicann, s.label9, s.sent_ms, s.stamp_ms, s.delay_ms
        )?;
    }
    write_file(&dir, "delays.csv", &delays)?;
    write_file(
        &dir,
        "qos.json",
        &(serde_json::to_string_pretty(&q)? + "\n"),
    )?;
    report::generate(&dir)?;
    println!(
        "loopback: {} at {rate_khz} kHz, sent {}, traced {}, loss {:.6} -> {}",
        cfg.train.name(),
        q.sent,
        q.traced,
        q.loss_fraction,
        dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

/// Loads `neuron_id,bio_ms` lines into per-neuron trains, ids dense from 0.
fn load_spike_file(path: &Path) -> Result<(Vec<SpikeTrain>, f64)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading spike file {}", path.display()))?;
    let mut by_neuron: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut t_max = 0.0f64;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("neuron")) {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(id), Some(t), None) = (fields.next(), fields.next(), fields.next()) else {
            anyhow::bail!(
                "{}:{}: expected `neuron_id,bio_ms`",
                path.display(),
                lineno + 1
            );
        };
        let id: u32 = id
            .trim()
            .parse()
            .with_context(|| format!("{}:{}: bad neuron id", path.display(), lineno + 1))?;
        let t: f64 = t
            .trim()
            .parse()
            .with_context(|| format!("{}:{}: bad spike time", path.display(), lineno + 1))?;
        t_max = t_max.max(t);
        by_neuron.entry(id).or_default().push(t);
    }
    if by_neuron.is_empty() {
        anyhow::bail!("{}: no spikes found", path.display());
    }
    let trains: Result<Vec<SpikeTrain>> = by_neuron
        .into_values()
        .map(|mut times| {
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Ok(SpikeTrain::new(0, 0, times)?)
        })
        .collect();
    Ok((trains?, t_max + 20.0))
}

pub fn bench(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.prepare_run_dir("bench")?;
    let (population, duration_ms) = match &cfg.spike_file {
        Some(path) => load_spike_file(path)?,
        None => (
            spikegen::updown_surrogate(&cfg.surrogate)?,
            cfg.surrogate.duration_ms,
        ),
    };
    let points = parallel_map(cfg.jobs, cfg.nph.len(), |i| {
        let nph = cfg.nph[i];
        run_point_on(&population, duration_ms, nph, &cfg.fabric)
            .with_context(|| format!("bench point at {nph} neurons per chip"))
    });
    let points: Vec<_> = points.into_iter().collect::<Result<_>>()?;

    write_file(&dir, "sweep.csv", &pulsecomm::benchmark::sweep_csv(&points))?;
    for p in &points {
        let point_dir = dir.join(format!("nph_{:03}", p.nph));
        std::fs::create_dir_all(&point_dir)
            .with_context(|| format!("creating {}", point_dir.display()))?;
        std::fs::write(
            point_dir.join("point.json"),
            serde_json::to_string_pretty(p)? + "\n",
        )?;
    }
    report::generate(&dir)?;
    println!("bench: {} points -> {}", points.len(), dir.display());
    Ok(())
}
