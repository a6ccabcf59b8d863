//! Implementations of the `hompol` subcommands.
//!
//! Every command is a pure function of the [`RunConfig`] (seed included) and
//! writes into an output directory; reruns overwrite files with identical
//! bytes regardless of the worker-thread count.
//!
//! Output files:
//!
//! | command        | files |
//! |----------------|-------|
//! | `phantom`      | `phantom.toml` |
//! | `dip-sweep`    | `dip_x{X}_y{Y}.csv` (`dz_mm,coincidence_probability`), `dip_study.csv`, `dip_fits.csv` |
//! | `fisher-sweep` | `fisher_sweep.csv` (`gamma,theta_rad,fisher,crb_variance,mc_variance,mc_inverse_variance_per_trial`) |
//! | `scan`         | map grids, `frame_dip.csv`, `frame_baseline.csv`, truth grids, `classical.csv`, `phantom.toml`, `manifest.json` |

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{AlphaSource, RunConfig};
use crate::detection::{CountTriple, LossModel};
use crate::error::{Error, Result};
use crate::hom::coincidence_mixture;
use crate::inference::{crb_variance, fisher_information, EstimateFlag};
use crate::io::{ensure_dir, read_grid, read_json, read_table, write_grid, write_json, write_table, Grid};
use crate::montecarlo::{mean_and_variance, repeat_experiment, RandomStream, TrialPlan};
use crate::phantom::PhantomGrid;
use crate::scan::{
    acquire_frame, build_maps, calibrate_from_blank, classical_reference, dip_position_study, Region, ScanFrame,
    BASELINE_FRAME_STREAM, DIP_FRAME_STREAM,
};

/// Stream index of the dip-sweep Monte Carlo.
pub const DIP_SWEEP_STREAM: u64 = 1 << 48;
/// First stream index of the Fisher-sweep Monte Carlo.
pub const FISHER_SWEEP_STREAM: u64 = 1 << 52;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PHANTOM_FILE: &str = "phantom.toml";

/// Runs `f` on a dedicated pool of `threads` workers (0 = one per core).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Loads a config and applies the command-line overrides. Returns the
/// config and the output directory (`--out`, else `output_dir`, else `out`).
pub fn resolve(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

/// Writes the configured phantom as a fixture file.
pub fn cmd_phantom(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let grid = cfg.phantom()?;
    ensure_dir(out)?;
    let path = out.join(PHANTOM_FILE);
    grid.save(&path)?;
    Ok(path)
}

fn fmt_row(values: impl IntoIterator<Item = String>) -> Vec<String> {
    values.into_iter().collect()
}

/// Exact dip curves of the configured pixels and, with `trials_per_point > 0`,
/// sampled curves with Gaussian dip fits.
pub fn cmd_dip_sweep(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let grid = cfg.phantom()?;
    let settings = &cfg.dip_sweep;
    let delays = settings.delays();
    let pixels: Vec<(usize, usize)> = if settings.pixels.is_empty() {
        vec![(0, 0)]
    } else {
        settings.pixels.iter().map(|p| (p[0], p[1])).collect()
    };
    ensure_dir(out)?;
    let mut written = Vec::new();

    for &(x, y) in &pixels {
        let truth = *grid.pixel(x, y)?;
        let jones = grid.pixel_jones(x, y)?;
        let shift = truth.delay_shift_mm();
        let rows = delays
            .iter()
            .map(|&dz| Ok(vec![dz, coincidence_mixture(&jones, dz - shift, &cfg.interferometer)?]))
            .collect::<Result<Vec<_>>>()?;
        let path = out.join(format!("dip_x{x}_y{y}.csv"));
        let meta = [
            ("x", x.to_string()),
            ("y", y.to_string()),
            ("layer_count", truth.layer_count.to_string()),
            ("delay_shift_mm", shift.to_string()),
            ("theta_eff", grid.effective_theta(x, y)?.to_string()),
        ];
        write_table(&path, &meta, &["dz_mm", "coincidence_probability"], &rows)?;
        written.push(path);
    }

    if settings.trials_per_point > 0 {
        let plan = TrialPlan::new(settings.trials_per_point)?;
        let studies = dip_position_study(
            &grid,
            &pixels,
            &delays,
            &plan,
            &cfg.loss,
            &cfg.interferometer,
            &RandomStream::new(cfg.seed, DIP_SWEEP_STREAM),
        )?;
        let meta = [
            ("seed", cfg.seed.to_string()),
            ("trials_per_point", settings.trials_per_point.to_string()),
        ];
        let mut curve_rows = Vec::new();
        let mut fit_rows = Vec::new();
        for s in &studies {
            for ((dz, c), frac) in s.dz_mm.iter().zip(&s.counts).zip(&s.coincidence_fraction) {
                curve_rows.push(fmt_row([
                    s.x.to_string(),
                    s.y.to_string(),
                    dz.to_string(),
                    c.n0.to_string(),
                    c.n1.to_string(),
                    c.n2.to_string(),
                    frac.to_string(),
                ]));
            }
            let (baseline, depth, center, center_se, converged) = match &s.fit {
                Some(f) => (f.baseline, f.depth, f.center_mm, f.stderr[2], f.converged),
                None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN, false),
            };
            fit_rows.push(fmt_row([
                s.x.to_string(),
                s.y.to_string(),
                s.layer_count.to_string(),
                s.delay_shift_mm.to_string(),
                baseline.to_string(),
                depth.to_string(),
                center.to_string(),
                center_se.to_string(),
                u8::from(converged).to_string(),
                u8::from(s.flagged()).to_string(),
            ]));
        }
        let path = out.join("dip_study.csv");
        write_table(
            &path,
            &meta,
            &["x", "y", "dz_mm", "n0", "n1", "n2", "coincidence_fraction"],
            &curve_rows,
        )?;
        written.push(path);
        let path = out.join("dip_fits.csv");
        write_table(
            &path,
            &meta,
            &[
                "x",
                "y",
                "layer_count",
                "delay_shift_mm",
                "baseline",
                "depth",
                "center_mm",
                "center_stderr_mm",
                "converged",
                "flagged",
            ],
            &fit_rows,
        )?;
        written.push(path);
    }
    Ok(written)
}

/// Fisher information, Cramér–Rao variance and (optionally) the Monte Carlo
/// variance of θ̂ over an angle sweep, for each configured loss value.
pub fn cmd_fisher_sweep(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let settings = &cfg.fisher_sweep;
    let gammas = if settings.gammas.is_empty() {
        vec![cfg.loss.gamma()]
    } else {
        settings.gammas.clone()
    };
    let angles = settings.angles();
    let plan = TrialPlan::new(settings.n_trials)?;
    let mut rows = Vec::with_capacity(gammas.len() * angles.len());
    for (gi, &gamma) in gammas.iter().enumerate() {
        let loss = LossModel::new(gamma)?;
        for (i, &theta) in angles.iter().enumerate() {
            let fisher = fisher_information(theta, &loss, &cfg.interferometer, settings.dz_mm)?;
            let crb = match crb_variance(settings.n_trials, fisher) {
                Ok(v) => v,
                Err(Error::DegenerateBound(_)) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            let (mc_var, mc_inv) = if settings.mc_repeats > 0 {
                let stream = RandomStream::new(cfg.seed, FISHER_SWEEP_STREAM + (gi * angles.len() + i) as u64);
                let est = repeat_experiment(
                    theta,
                    &loss,
                    &cfg.interferometer,
                    settings.dz_mm,
                    &plan,
                    settings.mc_repeats,
                    &stream,
                )?;
                let thetas: Vec<f64> = est
                    .iter()
                    .filter(|e| e.flag != EstimateFlag::Invalid)
                    .map(|e| e.theta_hat)
                    .collect();
                match mean_and_variance(&thetas) {
                    Some((_, Some(v))) => (v, 1.0 / (settings.n_trials as f64 * v)),
                    _ => (f64::NAN, f64::NAN),
                }
            } else {
                (f64::NAN, f64::NAN)
            };
            rows.push(vec![gamma, theta, fisher, crb, mc_var, mc_inv]);
        }
    }
    ensure_dir(out)?;
    let path = out.join("fisher_sweep.csv");
    let meta = [
        ("seed", cfg.seed.to_string()),
        ("n_trials", settings.n_trials.to_string()),
        ("mc_repeats", settings.mc_repeats.to_string()),
        ("dz_mm", settings.dz_mm.to_string()),
        ("coherence_length_mm", cfg.interferometer.coherence_length_mm.to_string()),
        ("max_visibility", cfg.interferometer.max_visibility.to_string()),
    ];
    write_table(
        &path,
        &meta,
        &[
            "gamma",
            "theta_rad",
            "fisher",
            "crb_variance",
            "mc_variance",
            "mc_inverse_variance_per_trial",
        ],
        &rows,
    )?;
    Ok(path)
}

/// One acquired frame as listed in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub file: String,
    pub dz_mm: f64,
    pub stream_index: u64,
    pub width: usize,
    pub height: usize,
    pub trials_per_frame: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCalibration {
    pub alpha: f64,
    /// `blank`, `nominal`, or `nominal_fallback` when no blank pixel exists.
    pub source: String,
    pub alpha_raw: Option<f64>,
    pub blank_gamma: Option<f64>,
}

/// Index of everything `scan` wrote; relative file names resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub phantom: String,
    pub region: Region,
    pub frames: BTreeMap<String, FrameEntry>,
    pub calibration: AlphaCalibration,
    pub maps: BTreeMap<String, String>,
    pub truth: BTreeMap<String, String>,
    pub flag_counts: BTreeMap<String, usize>,
}

fn crop<T: Copy>(full: &[T], grid_width: usize, region: &Region) -> Vec<T> {
    (0..region.len())
        .map(|i| {
            let (x, y) = region.coords(i);
            full[y * grid_width + x]
        })
        .collect()
}

fn write_frame(path: &Path, frame: &ScanFrame<CountTriple>, meta: &[(&str, String)]) -> Result<()> {
    let rows: Vec<Vec<u64>> = frame
        .counts
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (x, y) = frame.region.coords(i);
            vec![x as u64, y as u64, c.n0, c.n1, c.n2]
        })
        .collect();
    write_table(path, meta, &["x", "y", "n0", "n1", "n2"], &rows)
}

/// Full raster scan: dip and baseline frames, α calibration, estimate maps,
/// truth and classical reference maps, and the manifest.
pub fn cmd_scan(cfg: &RunConfig, out: &Path) -> Result<ScanManifest> {
    let grid = cfg.phantom()?;
    let plan = cfg.scan_plan(&grid)?;
    let ifm = &cfg.interferometer;
    let region = plan.region;

    let dip_stream = RandomStream::new(cfg.seed, DIP_FRAME_STREAM);
    let base_stream = RandomStream::new(cfg.seed, BASELINE_FRAME_STREAM);
    let dip = acquire_frame(&grid, plan.dip_dz_mm, &plan, ifm, &dip_stream)?;
    let baseline = acquire_frame(&grid, plan.baseline_dz_mm, &plan, ifm, &base_stream)?;

    let calibration = match cfg.scan.alpha_source {
        AlphaSource::Nominal => AlphaCalibration {
            alpha: ifm.max_visibility,
            source: "nominal".into(),
            alpha_raw: None,
            blank_gamma: None,
        },
        AlphaSource::Blank => match calibrate_from_blank(&grid, &dip, &baseline)? {
            Some(cal) => AlphaCalibration {
                alpha: cal.alpha.value,
                source: "blank".into(),
                alpha_raw: Some(cal.alpha.raw),
                blank_gamma: Some(cal.gamma.value),
            },
            None => AlphaCalibration {
                alpha: ifm.max_visibility,
                source: "nominal_fallback".into(),
                alpha_raw: None,
                blank_gamma: None,
            },
        },
    };
    let maps = build_maps(&dip, &baseline, calibration.alpha)?;

    ensure_dir(out)?;
    grid.save(&out.join(PHANTOM_FILE))?;
    let meta = |quantity: &str| {
        vec![
            ("quantity", quantity.to_string()),
            ("x0", region.x0.to_string()),
            ("y0", region.y0.to_string()),
            ("seed", cfg.seed.to_string()),
            ("trials_per_frame", plan.trials_per_frame.to_string()),
            ("alpha", calibration.alpha.to_string()),
        ]
    };
    let (w, h) = (region.width, region.height);

    let mut map_files = BTreeMap::new();
    let mut put = |name: &str, file: &str, result: Result<()>| -> Result<()> {
        result?;
        map_files.insert(name.to_string(), file.to_string());
        Ok(())
    };
    put("gamma", "gamma.csv", write_grid(&out.join("gamma.csv"), w, h, &meta("gamma"), &maps.gamma))?;
    let clamped: Vec<u8> = maps.gamma_clamped.iter().map(|&c| u8::from(c)).collect();
    put(
        "gamma_clamped",
        "gamma_clamped.csv",
        write_grid(&out.join("gamma_clamped.csv"), w, h, &meta("gamma_clamped"), &clamped),
    )?;
    put(
        "visibility",
        "visibility.csv",
        write_grid(&out.join("visibility.csv"), w, h, &meta("visibility"), &maps.visibility),
    )?;
    put("theta", "theta.csv", write_grid(&out.join("theta.csv"), w, h, &meta("theta_rad"), &maps.theta))?;
    put(
        "mirror_theta",
        "mirror_theta.csv",
        write_grid(&out.join("mirror_theta.csv"), w, h, &meta("mirror_theta_rad"), &maps.mirror_theta),
    )?;
    put("crb_std", "crb_std.csv", write_grid(&out.join("crb_std.csv"), w, h, &meta("crb_std_rad"), &maps.crb_std))?;
    let codes: Vec<u8> = maps.flags.iter().map(|f| f.code()).collect();
    let mut flag_meta = meta("flag");
    for f in EstimateFlag::ALL {
        flag_meta.push(("code", format!("{}:{}", f.code(), f.name())));
    }
    put("flag", "flag.csv", write_grid(&out.join("flag.csv"), w, h, &flag_meta, &codes))?;
    let classical = crop(&classical_reference(&grid), grid.width(), &region);
    put(
        "classical",
        "classical.csv",
        write_grid(&out.join("classical.csv"), w, h, &meta("classical_intensity"), &classical),
    )?;

    let mut truth_theta = Vec::with_capacity(region.len());
    let mut truth_gamma = Vec::with_capacity(region.len());
    let mut truth_layers = Vec::with_capacity(region.len());
    for i in 0..region.len() {
        let (x, y) = region.coords(i);
        let p = grid.pixel(x, y)?;
        truth_theta.push(grid.effective_theta(x, y)?);
        truth_gamma.push(cfg.loss.combine(&LossModel::new(p.gamma_local)?).gamma());
        truth_layers.push(p.layer_count);
    }
    let mut truth_files = BTreeMap::new();
    write_grid(&out.join("truth_theta.csv"), w, h, &meta("truth_theta_eff_rad"), &truth_theta)?;
    truth_files.insert("theta".to_string(), "truth_theta.csv".to_string());
    write_grid(&out.join("truth_gamma.csv"), w, h, &meta("truth_gamma"), &truth_gamma)?;
    truth_files.insert("gamma".to_string(), "truth_gamma.csv".to_string());
    write_grid(&out.join("truth_layers.csv"), w, h, &meta("truth_layer_count"), &truth_layers)?;
    truth_files.insert("layer_count".to_string(), "truth_layers.csv".to_string());

    let mut frames = BTreeMap::new();
    for (name, frame, stream) in [("dip", &dip, &dip_stream), ("baseline", &baseline, &base_stream)] {
        let file = format!("frame_{name}.csv");
        let mut m = meta(&format!("{name}_counts"));
        m.push(("dz_mm", frame.dz_mm.to_string()));
        write_frame(&out.join(&file), frame, &m)?;
        frames.insert(
            name.to_string(),
            FrameEntry {
                file,
                dz_mm: frame.dz_mm,
                stream_index: stream.stream_index,
                width: w,
                height: h,
                trials_per_frame: plan.trials_per_frame,
            },
        );
    }

    let flag_counts = EstimateFlag::ALL
        .iter()
        .map(|&f| (f.name().to_string(), maps.flag_count(f)))
        .collect();
    let manifest = ScanManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config: RunConfig {
            output_dir: None,
            ..cfg.clone()
        },
        phantom: PHANTOM_FILE.to_string(),
        region,
        frames,
        calibration,
        maps: map_files,
        truth: truth_files,
        flag_counts,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Angular distance of θ from the nearest multiple of π/4.
pub fn distance_to_quarter_pi(theta: f64) -> f64 {
    let r = theta.rem_euclid(FRAC_PI_4);
    r.min(FRAC_PI_4 - r)
}

/// Summary statistics of a finished scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub width: usize,
    pub height: usize,
    pub flag_counts: BTreeMap<String, usize>,
    pub alpha: f64,
    /// Principal-value θ RMSE (degrees) over unflagged pixels at least 3°
    /// away from every multiple of π/4, with the number of pixels used.
    pub theta_rmse_deg: Option<(f64, usize)>,
    /// RMS difference between cos²2θ̂ and the classical image over unflagged
    /// pixels, with the number of pixels used.
    pub malus_rms: Option<(f64, usize)>,
    /// Same comparison over every pixel with a valid estimate.
    pub malus_rms_all_valid: Option<(f64, usize)>,
    /// RMS error of the γ̂ map over valid pixels.
    pub gamma_rmse: Option<(f64, usize)>,
}

impl std::fmt::Display for ScanReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "scan region: {} x {} pixels", self.width, self.height)?;
        writeln!(f, "alpha: {:.6}", self.alpha)?;
        writeln!(f, "pixels by flag:")?;
        for flag in EstimateFlag::ALL {
            writeln!(f, "  {:<18} {}", flag.name(), self.flag_counts.get(flag.name()).copied().unwrap_or(0))?;
        }
        let line = |f: &mut std::fmt::Formatter<'_>, label: &str, v: &Option<(f64, usize)>, unit: &str| match v {
            Some((x, n)) => writeln!(f, "{label}: {x:.6}{unit} over {n} pixels"),
            None => writeln!(f, "{label}: n/a"),
        };
        line(f, "theta RMSE vs truth", &self.theta_rmse_deg, " deg")?;
        line(f, "cos^2(2 theta) RMS vs classical (unflagged)", &self.malus_rms, "")?;
        line(f, "cos^2(2 theta) RMS vs classical (all valid)", &self.malus_rms_all_valid, "")?;
        line(f, "gamma RMSE vs truth", &self.gamma_rmse, "")
    }
}

fn rms(pairs: impl Iterator<Item = f64>) -> Option<(f64, usize)> {
    let (sum, n) = pairs.fold((0.0, 0usize), |(s, n), d| (s + d * d, n + 1));
    (n > 0).then(|| ((sum / n as f64).sqrt(), n))
}

fn check_dims(path: &Path, grid: &Grid, region: &Region) -> Result<()> {
    if grid.width != region.width || grid.height != region.height {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "grid is {}x{}, manifest region is {}x{}",
                grid.width, grid.height, region.width, region.height
            ),
        });
    }
    Ok(())
}

/// Reads a scan manifest and its files and summarizes the result. Refuses
/// manifests whose frames or maps do not match the scan region.
pub fn cmd_report(manifest_path: &Path) -> Result<ScanReport> {
    let manifest: ScanManifest = read_json(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let region = manifest.region;
    let mismatch = |path: &Path, message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };

    for (name, frame) in &manifest.frames {
        let path = dir.join(&frame.file);
        if frame.width != region.width || frame.height != region.height {
            return Err(mismatch(
                manifest_path,
                format!(
                    "frame `{name}` is {}x{}, region is {}x{}",
                    frame.width, frame.height, region.width, region.height
                ),
            ));
        }
        let (_, rows) = read_table(&path)?;
        if rows.len() != region.len() {
            return Err(mismatch(
                &path,
                format!("frame `{name}` has {} pixels, region has {}", rows.len(), region.len()),
            ));
        }
    }

    let load = |file: &str| -> Result<Grid> {
        let path = dir.join(file);
        let g = read_grid(&path)?;
        check_dims(&path, &g, &region)?;
        Ok(g)
    };
    let map = |name: &str| -> Result<Grid> {
        let file = manifest
            .maps
            .get(name)
            .ok_or_else(|| mismatch(manifest_path, format!("manifest lists no `{name}` map")))?;
        load(file)
    };
    let flags: Vec<Option<EstimateFlag>> = map("flag")?
        .values
        .iter()
        .map(|&c| EstimateFlag::from_code(c as u8))
        .collect();
    let theta = map("theta")?;
    let gamma = map("gamma")?;
    let classical = map("classical")?;

    let mut flag_counts = BTreeMap::new();
    for f in EstimateFlag::ALL {
        flag_counts.insert(f.name().to_string(), flags.iter().filter(|&&g| g == Some(f)).count());
    }

    let cos2 = |t: f64| (2.0 * t).cos().powi(2);
    let unflagged = |i: usize| flags[i] == Some(EstimateFlag::Ok);
    let valid = |i: usize| matches!(flags[i], Some(f) if f != EstimateFlag::Invalid);
    let n = region.len();
    let malus_rms = rms((0..n).filter(|&i| unflagged(i)).map(|i| cos2(theta.values[i]) - classical.values[i]));
    let malus_rms_all_valid = rms((0..n).filter(|&i| valid(i)).map(|i| cos2(theta.values[i]) - classical.values[i]));

    let mut theta_rmse_deg = None;
    let mut gamma_rmse = None;
    if let Some(file) = manifest.truth.get("theta") {
        let truth = load(file)?;
        let margin = 3f64.to_radians();
        theta_rmse_deg = rms(
            (0..n)
                .filter(|&i| unflagged(i) && distance_to_quarter_pi(truth.values[i]) >= margin)
                .map(|i| (theta.values[i] - truth.values[i]).to_degrees()),
        );
    }
    if let Some(file) = manifest.truth.get("gamma") {
        let truth = load(file)?;
        gamma_rmse = rms((0..n).filter(|&i| valid(i)).map(|i| gamma.values[i] - truth.values[i]));
    }

    Ok(ScanReport {
        width: region.width,
        height: region.height,
        flag_counts,
        alpha: manifest.calibration.alpha,
        theta_rmse_deg,
        malus_rms,
        malus_rms_all_valid,
        gamma_rmse,
    })
}

/// Writes a phantom built from `grid` into `dir` and points a config at it.
pub fn config_for_fixture(base: &RunConfig, grid: &PhantomGrid, dir: &Path) -> Result<RunConfig> {
    ensure_dir(dir)?;
    let path = dir.join(PHANTOM_FILE);
    grid.save(&path)?;
    Ok(RunConfig {
        phantom: crate::config::PhantomSource::File { path },
        ..base.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RunConfig {
        RunConfig::from_toml_str(
            r#"
seed = 11
[interferometer]
coherence_length_mm = 1.0
max_visibility = 0.95
[loss]
gamma = 0.05
[phantom]
source = "generate"
width = 8
height = 6
n_shards = 3
gamma_max = 0.2
[scan]
trials_per_frame = 20000
[dip_sweep]
n_points = 9
pixels = [[0, 0], [4, 3]]
trials_per_point = 5000
[fisher_sweep]
n_points = 9
n_trials = 1000
mc_repeats = 20
"#,
        )
        .unwrap()
    }

    #[test]
    fn quarter_pi_distance() {
        assert_eq!(distance_to_quarter_pi(0.0), 0.0);
        assert!(distance_to_quarter_pi(FRAC_PI_4 + 0.01) - 0.01 < 1e-15);
        assert!((distance_to_quarter_pi(0.1) - 0.1).abs() < 1e-15);
        assert!((distance_to_quarter_pi(FRAC_PI_4 - 0.1) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn phantom_command_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let a = std::fs::read(cmd_phantom(&cfg, dir.path()).unwrap()).unwrap();
        let b = std::fs::read(cmd_phantom(&cfg, dir.path()).unwrap()).unwrap();
        assert_eq!(a, b);
        let grid = PhantomGrid::load(&dir.path().join(PHANTOM_FILE)).unwrap();
        assert_eq!(grid, cfg.phantom().unwrap());
    }

    #[test]
    fn sweeps_write_expected_columns() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let files = cmd_dip_sweep(&cfg, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let (header, rows) = read_table(&files[0]).unwrap();
        assert_eq!(header, ["dz_mm", "coincidence_probability"]);
        assert_eq!(rows.len(), 9);

        let path = cmd_fisher_sweep(&cfg, dir.path()).unwrap();
        let (header, rows) = read_table(&path).unwrap();
        assert_eq!(header.len(), 6);
        assert_eq!(rows.len(), 9);
        assert_eq!(rows[0][2], 0.0);
        assert!(rows[0][3].is_infinite());
        assert!(rows[4][4].is_finite());
    }

    #[test]
    fn scan_and_report() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let manifest = cmd_scan(&cfg, dir.path()).unwrap();
        assert_eq!(manifest.region.len(), 48);
        assert_eq!(manifest.flag_counts.values().sum::<usize>(), 48);
        let report = cmd_report(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(report.flag_counts, manifest.flag_counts);
        assert!(report.to_string().contains("pixels by flag"));
        assert!(report.gamma_rmse.unwrap().0 < 0.02);
    }

    #[test]
    fn report_refuses_mismatched_frames() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        cmd_scan(&cfg, dir.path()).unwrap();
        let path = dir.path().join("frame_dip.csv");
        let text = std::fs::read_to_string(&path).unwrap();
        let truncated: Vec<&str> = text.lines().take(text.lines().count() - 1).collect();
        std::fs::write(&path, truncated.join("\n") + "\n").unwrap();
        let err = cmd_report(&dir.path().join(MANIFEST_FILE)).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }
}
