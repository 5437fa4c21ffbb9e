//! Run configuration: defaults, JSON file, flag overrides, and the snapshot
//! written next to every run's outputs. Precedence is flag over file over
//! default, and a run can always be repeated from its snapshot alone.

use anyhow::{bail, Context, Result};
use pulsecomm::benchmark::DEFAULT_SWEEP;
use pulsecomm::simcore::SimConfig;
use pulsecomm::spikegen::SurrogateParams;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Stimulus for the single-run loopback command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainKind {
    Regular,
    Poisson,
}

impl TrainKind {
    pub fn name(self) -> &'static str {
        match self {
            TrainKind::Regular => "regular",
            TrainKind::Poisson => "poisson",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds for stochastic stimuli; seed-averaged sweeps run once per seed.
    pub seeds: Vec<u64>,
    /// Chips driven per experiment: 1 or 8.
    pub hicanns: u32,
    /// Bio rate grid in kHz.
    pub rates_khz: Vec<f64>,
    /// Bio duration of every run in ms.
    pub duration_ms: f64,
    /// Stimulus kind for the loopback command.
    pub train: TrainKind,
    /// Neurons-per-chip grid for the bench command.
    pub nph: Vec<u32>,
    /// Worker threads running sweep points.
    pub jobs: usize,
    /// Output root. Falls back to $PULSECOMM_OUT_DIR, then ./runs.
    pub out_dir: Option<PathBuf>,
    /// Bench population as CSV lines `neuron_id,bio_ms`, replacing the
    /// surrogate when set.
    pub spike_file: Option<PathBuf>,
    pub surrogate: SurrogateParams,
    pub fabric: SimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seeds: vec![1, 2, 3, 4, 5],
            hicanns: 1,
            // Dense near the loss onsets, sparser toward saturation.
            rates_khz: vec![
                0.5, 0.75, 1.0, 1.25, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0, 2.1, 2.2, 2.3, 2.4, 2.5, 2.75,
                3.0,
            ],
            duration_ms: 20_000.0,
            train: TrainKind::Regular,
            nph: DEFAULT_SWEEP.to_vec(),
            jobs: 1,
            out_dir: None,
            spike_file: None,
            surrogate: SurrogateParams::default(),
            fabric: SimConfig::default(),
        }
    }
}

/// Flags shared by every experiment subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    /// JSON config file; explicit flags override its keys.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Replace the seed list with this one seed (also seeds the bench
    /// surrogate).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output root directory.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Chips per experiment: 1 or 8.
    #[arg(long)]
    pub hicanns: Option<u32>,
    /// Comma-separated bio rate grid in kHz.
    #[arg(long, value_delimiter = ',', value_name = "KHZ,..")]
    pub rates: Option<Vec<f64>>,
    /// Worker threads running sweep points.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl RunConfig {
    /// Applies the precedence chain and validates the result.
    pub fn effective(args: &CommonArgs) -> Result<RunConfig> {
        let mut cfg: RunConfig = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = args.seed {
            cfg.seeds = vec![seed];
            cfg.surrogate.seed = seed;
        }
        if let Some(dir) = &args.out_dir {
            cfg.out_dir = Some(dir.clone());
        }
        if let Some(h) = args.hicanns {
            cfg.hicanns = h;
        }
        if let Some(rates) = &args.rates {
            cfg.rates_khz = rates.clone();
        }
        if let Some(jobs) = args.jobs {
            cfg.jobs = jobs;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("config key seeds: need at least one seed");
        }
        if self.hicanns != 1 && self.hicanns != 8 {
            bail!("config key hicanns: must be 1 or 8, got {}", self.hicanns);
        }
        if self.rates_khz.is_empty() {
            bail!("config key rates_khz: the rate grid is empty");
        }
        for &r in &self.rates_khz {
            if !r.is_finite() || r <= 0.0 {
                bail!("config key rates_khz: {r} is not a positive finite rate");
            }
        }
        if !self.duration_ms.is_finite() || self.duration_ms <= 0.0 {
            bail!(
                "config key duration_ms: must be positive, got {}",
                self.duration_ms
            );
        }
        if self.nph.is_empty() {
            bail!("config key nph: the sweep grid is empty");
        }
        if self.jobs == 0 {
            bail!("config key jobs: need at least one worker");
        }
        self.fabric
            .validate()
            .map_err(|e| anyhow::anyhow!("config key fabric: {e}"))?;
        Ok(())
    }

    /// Output root after the environment fallback.
    pub fn out_root(&self) -> PathBuf {
        if let Some(dir) = &self.out_dir {
            return dir.clone();
        }
        match std::env::var("PULSECOMM_OUT_DIR") {
            Ok(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => PathBuf::from("runs"),
        }
    }

    /// Creates `<out root>/<command>` and snapshots the effective config
    /// into it, with the resolved root pinned so the snapshot stands alone.
    pub fn prepare_run_dir(&self, command: &str) -> Result<PathBuf> {
        let root = self.out_root();
        let dir = root.join(command);
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("creating run directory {}", dir.display()))?;
        let mut snap = self.clone();
        snap.out_dir = Some(root);
        let text = serde_json::to_string_pretty(&snap)?;
        std::fs::write(dir.join("config.json"), text + "\n")
            .with_context(|| format!("writing {}", dir.join("config.json").display()))?;
        Ok(dir)
    }
}
