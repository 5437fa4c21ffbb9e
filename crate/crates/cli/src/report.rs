//! Turns a run directory into a consolidated summary plus plot-ready CSVs.
//! Works from the files alone, so it can re-run on any directory at any
//! time and always produces the same outputs for the same inputs.

use anyhow::{bail, Context, Result};
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

struct Table {
    path: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn load(path: &Path) -> Result<Table> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines().enumerate();
        let (_, first) = lines
            .next()
            .with_context(|| format!("{}: empty file", path.display()))?;
        let header: Vec<String> = first.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            if fields.len() != header.len() {
                bail!(
                    "{}:{}: {} fields where the header names {}",
                    path.display(),
                    lineno + 1,
                    fields.len(),
                    header.len()
                );
            }
            rows.push(fields);
        }
        Ok(Table {
            path: path.display().to_string(),
            header,
            rows,
        })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{}: no column named {name}", self.path))
    }

    fn f64(&self, row: usize, col: usize) -> Result<f64> {
        let cell = &self.rows[row][col];
        cell.parse().with_context(|| {
            format!(
                "{}:{}: `{cell}` is not a number ({})",
                self.path,
                row + 2,
                self.header[col]
            )
        })
    }

    /// Empty cells become None; anything else must parse.
    fn opt_f64(&self, row: usize, col: usize) -> Result<Option<f64>> {
        if self.rows[row][col].is_empty() {
            return Ok(None);
        }
        self.f64(row, col).map(Some)
    }
}

/// Accumulates seed repetitions of one sweep point.
#[derive(Default)]
struct Acc {
    n: f64,
    sums: Vec<f64>,
    counts: Vec<f64>,
}

impl Acc {
    fn add(&mut self, values: &[Option<f64>]) {
        if self.sums.is_empty() {
            self.sums = vec![0.0; values.len()];
            self.counts = vec![0.0; values.len()];
        }
        self.n += 1.0;
        for (i, v) in values.iter().enumerate() {
            if let Some(v) = v {
                self.sums[i] += v;
                self.counts[i] += 1.0;
            }
        }
    }

    fn mean(&self, i: usize) -> Option<f64> {
        (self.counts[i] > 0.0).then(|| self.sums[i] / self.counts[i])
    }
}

/// Group key ordered by kind, then rate. Rates are positive, so their bit
/// patterns order like the numbers.
type Key = (String, u64);

fn group(
    table: &Table,
    kind_col: &str,
    rate_col: &str,
    value_cols: &[&str],
) -> Result<BTreeMap<Key, (f64, Acc)>> {
    let kc = table.col(kind_col)?;
    let rc = table.col(rate_col)?;
    let vcs: Vec<usize> = value_cols
        .iter()
        .map(|c| table.col(c))
        .collect::<Result<_>>()?;
    let mut out: BTreeMap<Key, (f64, Acc)> = BTreeMap::new();
    for row in 0..table.rows.len() {
        let rate = table.f64(row, rc)?;
        let values: Vec<Option<f64>> = vcs
            .iter()
            .map(|&c| table.opt_f64(row, c))
            .collect::<Result<_>>()?;
        let entry = out
            .entry((table.rows[row][kc].clone(), rate.to_bits()))
            .or_insert((rate, Acc::default()));
        entry.1.add(&values);
    }
    Ok(out)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_plot(dir: &Path, name: &str, content: String, written: &mut Vec<String>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    written.push(name.to_string());
    Ok(())
}

/// Rate-sweep digest: max mean throughput plus the first rate whose mean
/// loss clears the measurement floor.
fn sweep_digest(groups: &BTreeMap<Key, (f64, Acc)>, mpps_idx: usize, loss_idx: usize) -> Value {
    let mut kinds: Map<String, Value> = Map::new();
    let mut by_kind: BTreeMap<&str, Vec<&(f64, Acc)>> = BTreeMap::new();
    for ((kind, _), entry) in groups {
        by_kind.entry(kind).or_default().push(entry);
    }
    for (kind, entries) in by_kind {
        let saturation = entries
            .iter()
            .filter_map(|(_, acc)| acc.mean(mpps_idx))
            .fold(0.0f64, f64::max);
        let onset = entries
            .iter()
            .find(|(_, acc)| acc.mean(loss_idx).unwrap_or(0.0) > 1e-4)
            .map(|(rate, _)| *rate);
        kinds.insert(
            kind.to_string(),
            json!({
                "rates_swept": entries.len(),
                "saturation_mpulses_per_s": saturation,
                "loss_onset_khz": onset,
            }),
        );
    }
    Value::Object(kinds)
}

pub fn generate(run_dir: &Path) -> Result<()> {
    let mut summary: Map<String, Value> = Map::new();
    let mut sources: Vec<String> = Vec::new();
    let mut written: Vec<String> = Vec::new();

    let qos_path = run_dir.join("qos.csv");
    if qos_path.is_file() {
        sources.push("qos.csv".into());
        let table = Table::load(&qos_path)?;
        let groups = group(
            &table,
            "kind",
            "rate_khz",
            &[
                "traced_mpulses_per_s",
                "traced_mbit_per_s",
                "loss_fraction",
                "mean_delay_ms",
                "jitter_ms",
            ],
        )?;
        let mut thr = String::from("kind,rate_khz,traced_mpulses_per_s,traced_mbit_per_s\n");
        let mut loss = String::from("kind,rate_khz,loss_fraction\n");
        let mut delay = String::from("kind,rate_khz,mean_delay_ms,jitter_ms\n");
        for ((kind, _), (rate, acc)) in &groups {
            writeln!(
                thr,
                "{kind},{rate},{},{}",
                cell(acc.mean(0)),
                cell(acc.mean(1))
            )?;
            writeln!(loss, "{kind},{rate},{}", cell(acc.mean(2)))?;
            writeln!(
                delay,
                "{kind},{rate},{},{}",
                cell(acc.mean(3)),
                cell(acc.mean(4))
            )?;
        }
        write_plot(run_dir, "plot_downstream_throughput.csv", thr, &mut written)?;
        write_plot(run_dir, "plot_downstream_loss.csv", loss, &mut written)?;
        write_plot(run_dir, "plot_downstream_delay.csv", delay, &mut written)?;
        summary.insert("downstream".into(), sweep_digest(&groups, 0, 2));
    }

    let cv_path = run_dir.join("cv.csv");
    if cv_path.is_file() {
        sources.push("cv.csv".into());
        let table = Table::load(&cv_path)?;
        let groups = group(&table, "kind", "rate_khz", &["cv_sent", "cv_traced"])?;
        let mut cv = String::from("kind,rate_khz,cv_sent,cv_traced\n");
        for ((kind, _), (rate, acc)) in &groups {
            writeln!(
                cv,
                "{kind},{rate},{},{}",
                cell(acc.mean(0)),
                cell(acc.mean(1))
            )?;
        }
        write_plot(run_dir, "plot_cv.csv", cv, &mut written)?;
    }

    let up_path = run_dir.join("throughput.csv");
    if up_path.is_file() {
        sources.push("throughput.csv".into());
        let table = Table::load(&up_path)?;
        let groups = group(
            &table,
            "kind",
            "requested_khz",
            &[
                "effective_khz",
                "traced_mpulses_per_s",
                "traced_mbit_per_s",
                "loss_fraction",
            ],
        )?;
        let mut thr = String::from(
            "kind,requested_khz,effective_khz,traced_mpulses_per_s,traced_mbit_per_s\n",
        );
        let mut loss = String::from("kind,requested_khz,effective_khz,loss_fraction\n");
        for ((kind, _), (rate, acc)) in &groups {
            writeln!(
                thr,
                "{kind},{rate},{},{},{}",
                cell(acc.mean(0)),
                cell(acc.mean(1)),
                cell(acc.mean(2))
            )?;
            writeln!(
                loss,
                "{kind},{rate},{},{}",
                cell(acc.mean(0)),
                cell(acc.mean(3))
            )?;
        }
        write_plot(run_dir, "plot_upstream_throughput.csv", thr, &mut written)?;
        write_plot(run_dir, "plot_upstream_loss.csv", loss, &mut written)?;
        summary.insert("upstream".into(), sweep_digest(&groups, 1, 3));
    }

    let sweep_path = run_dir.join("sweep.csv");
    if sweep_path.is_file() {
        sources.push("sweep.csv".into());
        let table = Table::load(&sweep_path)?;
        let cols = [
            "nph",
            "loss_fraction",
            "mean_cv_in",
            "mean_cv_out",
            "activity_correlation",
        ];
        let idx: Vec<usize> = cols.iter().map(|c| table.col(c)).collect::<Result<_>>()?;
        let mut plot =
            String::from("nph,loss_fraction,mean_cv_in,mean_cv_out,activity_correlation\n");
        let mut first_lossy: Option<f64> = None;
        let mut max_loss = 0.0f64;
        for row in 0..table.rows.len() {
            let nph = table.f64(row, idx[0])?;
            let loss = table.f64(row, idx[1])?;
            max_loss = max_loss.max(loss);
            if loss > 0.005 && first_lossy.is_none() {
                first_lossy = Some(nph);
            }
            writeln!(
                plot,
                "{nph},{loss},{},{},{}",
                cell(table.opt_f64(row, idx[2])?),
                cell(table.opt_f64(row, idx[3])?),
                cell(table.opt_f64(row, idx[4])?),
            )?;
        }
        write_plot(run_dir, "plot_bench.csv", plot, &mut written)?;
        summary.insert(
            "bench".into(),
            json!({
                "points": table.rows.len(),
                "max_loss_fraction": max_loss,
                "first_nph_above_half_percent_loss": first_lossy,
            }),
        );
    }

    let qos_json = run_dir.join("qos.json");
    if qos_json.is_file() {
        sources.push("qos.json".into());
        let text = std::fs::read_to_string(&qos_json)
            .with_context(|| format!("reading {}", qos_json.display()))?;
        let value: Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", qos_json.display()))?;
        summary.insert("loopback".into(), value);
    }

    let delays_path = run_dir.join("delays.csv");
    if delays_path.is_file() {
        sources.push("delays.csv".into());
        let table = Table::load(&delays_path)?;
        let dc = table.col("delay_ms")?;
        let mut delays = Vec::with_capacity(table.rows.len());
        for row in 0..table.rows.len() {
            delays.push(table.f64(row, dc)?);
        }
        if !delays.is_empty() {
            const BIN_MS: f64 = 0.02;
            let lo = (delays.iter().copied().fold(f64::INFINITY, f64::min) / BIN_MS).floor();
            let hi = (delays.iter().copied().fold(f64::NEG_INFINITY, f64::max) / BIN_MS).floor();
            let mut bins = vec![0u64; (hi - lo) as usize + 1];
            for d in &delays {
                bins[((d / BIN_MS).floor() - lo) as usize] += 1;
            }
            let mut hist = String::from("delay_ms,count\n");
            for (i, count) in bins.iter().enumerate() {
                writeln!(hist, "{},{count}", (lo + i as f64) * BIN_MS)?;
            }
            write_plot(run_dir, "plot_delay_hist.csv", hist, &mut written)?;
        }
    }

    if sources.is_empty() {
        bail!(
            "{}: no run outputs found (expected one of qos.csv, cv.csv, throughput.csv, \
             sweep.csv, qos.json, delays.csv)",
            run_dir.display()
        );
    }
    summary.insert("sources".into(), json!(sources));
    summary.insert("plot_files".into(), json!(written));
    let path = run_dir.join("summary.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&Value::Object(summary))? + "\n",
    )
    .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn report(run_dir: &Path) -> Result<()> {
    if !run_dir.is_dir() {
        bail!("{} is not a directory", run_dir.display());
    }
    generate(run_dir)?;
    println!("report: wrote summary.json -> {}", run_dir.display());
    Ok(())
}
