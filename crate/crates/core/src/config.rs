//! Run configuration: one TOML file that fully determines a run.
//!
//! ```toml
//! seed = 42
//! output_dir = "out"
//!
//! [interferometer]
//! coherence_length_mm = 1.0
//! max_visibility = 0.95
//!
//! [loss]
//! gamma = 0.05
//!
//! [phantom]
//! source = "generate"
//! n_shards = 8
//! gamma_max = 0.3
//!
//! [scan]
//! trials_per_frame = 100000
//!
//! [dip_sweep]
//! dz_min_mm = -3.0
//! dz_max_mm = 3.0
//! n_points = 61
//! pixels = [[0, 0], [16, 16]]
//! trials_per_point = 1000000
//!
//! [fisher_sweep]
//! n_points = 91
//! n_trials = 100000
//! mc_repeats = 200
//! ```
//!
//! Every section except `[interferometer]` is optional. `[phantom]` either
//! generates shards (`source = "generate"` plus generator fields) or loads a
//! fixture (`source = "file"`, `path = ...`, relative to the config file).

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detection::LossModel;
use crate::error::{Error, Result};
use crate::hom::InterferometerConfig;
use crate::phantom::{generate_shards, PhantomGrid, ShardGenerator};
use crate::scan::{Region, ScanPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub interferometer: InterferometerConfig,
    /// Loss common to every pixel.
    #[serde(default = "LossModel::lossless")]
    pub loss: LossModel,
    #[serde(default)]
    pub phantom: PhantomSource,
    #[serde(default)]
    pub scan: ScanSettings,
    #[serde(default)]
    pub dip_sweep: DipSweepSettings,
    #[serde(default)]
    pub fisher_sweep: FisherSweepSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PhantomSource {
    /// Random shards; the phantom seed defaults to the run seed.
    Generate {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(flatten)]
        params: ShardGenerator,
    },
    File { path: PathBuf },
}

impl Default for PhantomSource {
    fn default() -> Self {
        PhantomSource::Generate {
            seed: None,
            params: ShardGenerator::default(),
        }
    }
}

/// Where the scan takes its global maximum visibility α from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSource {
    /// Pooled counts of uncovered pixels; falls back to the configured value
    /// when the region has none.
    #[default]
    Blank,
    /// `interferometer.max_visibility` as configured.
    Nominal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSettings {
    pub dip_dz_mm: f64,
    /// Defaults to 5·l_c.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_dz_mm: Option<f64>,
    pub trials_per_frame: u64,
    pub accidental_rate: f64,
    /// Defaults to the full phantom.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    pub alpha_source: AlphaSource,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            dip_dz_mm: 0.0,
            baseline_dz_mm: None,
            trials_per_frame: 100_000,
            accidental_rate: 0.0,
            region: None,
            alpha_source: AlphaSource::Blank,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DipSweepSettings {
    pub dz_min_mm: f64,
    pub dz_max_mm: f64,
    pub n_points: usize,
    /// Pixels (x, y) to sweep; an empty list sweeps pixel (0, 0).
    pub pixels: Vec<[usize; 2]>,
    /// Sampled counts per delay; 0 emits only the exact curves.
    pub trials_per_point: u64,
}

impl Default for DipSweepSettings {
    fn default() -> Self {
        Self {
            dz_min_mm: -3.0,
            dz_max_mm: 3.0,
            n_points: 61,
            pixels: Vec::new(),
            trials_per_point: 0,
        }
    }
}

impl DipSweepSettings {
    pub fn delays(&self) -> Vec<f64> {
        linspace(self.dz_min_mm, self.dz_max_mm, self.n_points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FisherSweepSettings {
    pub theta_min: f64,
    pub theta_max: f64,
    pub n_points: usize,
    pub dz_mm: f64,
    /// Loss values to sweep; empty means the run's `loss`.
    pub gammas: Vec<f64>,
    /// Trials per acquisition for the CRB and the Monte Carlo runs.
    pub n_trials: u64,
    /// Repetitions per angle for the empirical variance; 0 disables it.
    pub mc_repeats: usize,
}

impl Default for FisherSweepSettings {
    fn default() -> Self {
        Self {
            theta_min: 0.0,
            theta_max: FRAC_PI_2,
            n_points: 91,
            dz_mm: 0.0,
            gammas: Vec::new(),
            n_trials: 100_000,
            mc_repeats: 0,
        }
    }
}

impl FisherSweepSettings {
    pub fn angles(&self) -> Vec<f64> {
        linspace(self.theta_min, self.theta_max, self.n_points)
    }
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Config(m),
        other => other,
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file. A relative phantom fixture path is resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let PhantomSource::File { path: fixture } = &mut cfg.phantom {
            if fixture.is_relative() {
                if let Some(dir) = path.parent() {
                    *fixture = dir.join(&*fixture);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.interferometer.validate().map_err(config_err)?;
        let s = &self.scan;
        if s.trials_per_frame == 0 {
            return Err(Error::Config("scan.trials_per_frame must be positive".into()));
        }
        if !(0.0..=1.0).contains(&s.accidental_rate) {
            return Err(Error::Config("scan.accidental_rate must lie in [0, 1]".into()));
        }
        let d = &self.dip_sweep;
        if d.n_points < 4 || !(d.dz_max_mm > d.dz_min_mm) {
            return Err(Error::Config("dip_sweep needs n_points >= 4 and dz_max_mm > dz_min_mm".into()));
        }
        let f = &self.fisher_sweep;
        if f.n_points == 0 || !(f.theta_max >= f.theta_min) || f.n_trials == 0 {
            return Err(Error::Config(
                "fisher_sweep needs n_points >= 1, theta_max >= theta_min and n_trials >= 1".into(),
            ));
        }
        for &g in &f.gammas {
            LossModel::new(g).map_err(config_err)?;
        }
        Ok(())
    }

    /// Builds or loads the phantom described by `[phantom]`.
    pub fn phantom(&self) -> Result<PhantomGrid> {
        match &self.phantom {
            PhantomSource::Generate { seed, params } => {
                generate_shards(seed.unwrap_or(self.seed), params).map_err(config_err)
            }
            PhantomSource::File { path } => PhantomGrid::load(path),
        }
    }

    pub fn scan_plan(&self, grid: &PhantomGrid) -> Result<ScanPlan> {
        let s = &self.scan;
        let mut plan = ScanPlan::new(grid, &self.interferometer, s.trials_per_frame);
        plan.dip_dz_mm = s.dip_dz_mm;
        if let Some(b) = s.baseline_dz_mm {
            plan.baseline_dz_mm = b;
        }
        plan.accidental_rate = s.accidental_rate;
        plan.system_loss = self.loss;
        if let Some(r) = s.region {
            plan.region = r;
        }
        plan.validate(grid, &self.interferometer).map_err(config_err)?;
        Ok(plan)
    }
}
