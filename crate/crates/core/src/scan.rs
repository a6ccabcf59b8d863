//! Raster-scan acquisition and per-pixel map reconstruction.
//!
//! Each pixel is measured twice for the same number of trials: a dip frame
//! near Δz = 0 and a baseline frame at |Δz| ≫ l_c. The baseline calibrates the
//! local loss γ̂, which then turns the dip counts into a visibility and an
//! angle estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{outcome_probabilities, CountTriple, Counts, ExpectedCounts, LossModel, OutcomeProbabilities};
use crate::dipfit::{fit_gaussian_dip, DipFit};
use crate::error::{Error, Result};
use crate::hom::{coincidence_mixture, InterferometerConfig};
use crate::inference::{
    calibrate_blank, estimate_gamma, estimate_theta, AngleEstimate, CalibrationResult, EstimateFlag,
};
use crate::montecarlo::{sample_counts, RandomStream, TrialPlan};
use crate::phantom::PhantomGrid;

/// Stream-index offset of dip frames.
pub const DIP_FRAME_STREAM: u64 = 0;
/// Stream-index offset of baseline frames; far above any pixel index.
pub const BASELINE_FRAME_STREAM: u64 = 1 << 40;

/// Minimum baseline separation in units of the coherence length.
pub const MIN_BASELINE_SEPARATION: f64 = 3.0;

/// Rectangle of pixels `[x0, x0 + width) × [y0, y0 + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Region {
    pub fn full(grid: &PhantomGrid) -> Self {
        Self {
            x0: 0,
            y0: 0,
            width: grid.width(),
            height: grid.height(),
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid coordinates of the `i`-th pixel in row-major order.
    pub fn coords(&self, i: usize) -> (usize, usize) {
        (self.x0 + i % self.width, self.y0 + i / self.width)
    }

    pub fn check_within(&self, grid: &PhantomGrid) -> Result<()> {
        if self.is_empty() || self.x0 + self.width > grid.width() || self.y0 + self.height > grid.height() {
            return Err(Error::domain(format!(
                "scan region {}x{} at ({}, {}) does not fit a {}x{} phantom",
                self.width,
                self.height,
                self.x0,
                self.y0,
                grid.width(),
                grid.height()
            )));
        }
        Ok(())
    }
}

/// Acquisition settings of a raster scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPlan {
    pub dip_dz_mm: f64,
    pub baseline_dz_mm: f64,
    pub trials_per_frame: u64,
    #[serde(default)]
    pub accidental_rate: f64,
    /// Loss common to every pixel (coupling, detector efficiency); combined
    /// with each pixel's own absorption.
    #[serde(default = "LossModel::lossless")]
    pub system_loss: LossModel,
    pub region: Region,
}

impl ScanPlan {
    /// Dip at Δz = 0, baseline at 5·l_c, lossless system, full-grid region.
    pub fn new(grid: &PhantomGrid, cfg: &InterferometerConfig, trials_per_frame: u64) -> Self {
        Self {
            dip_dz_mm: 0.0,
            baseline_dz_mm: 5.0 * cfg.coherence_length_mm,
            trials_per_frame,
            accidental_rate: 0.0,
            system_loss: LossModel::lossless(),
            region: Region::full(grid),
        }
    }

    pub fn trial_plan(&self) -> Result<TrialPlan> {
        TrialPlan::with_accidentals(self.trials_per_frame, self.accidental_rate)
    }

    pub fn validate(&self, grid: &PhantomGrid, cfg: &InterferometerConfig) -> Result<()> {
        cfg.validate()?;
        self.trial_plan()?;
        self.region.check_within(grid)?;
        if !self.dip_dz_mm.is_finite() {
            return Err(Error::domain("dip delay must be finite"));
        }
        if !(self.baseline_dz_mm.abs() >= MIN_BASELINE_SEPARATION * cfg.coherence_length_mm) {
            return Err(Error::domain(format!(
                "baseline delay {} mm is not well outside the dip (need |dz| >= {} mm)",
                self.baseline_dz_mm,
                MIN_BASELINE_SEPARATION * cfg.coherence_length_mm
            )));
        }
        Ok(())
    }
}

/// Counts of every pixel in a region at one delay setting, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanFrame<C = CountTriple> {
    pub region: Region,
    pub dz_mm: f64,
    pub counts: Vec<C>,
}

impl<C: Counts> ScanFrame<C> {
    pub fn get(&self, x: usize, y: usize) -> Option<&C> {
        let r = &self.region;
        if x < r.x0 || y < r.y0 || x >= r.x0 + r.width || y >= r.y0 + r.height {
            return None;
        }
        self.counts.get((y - r.y0) * r.width + (x - r.x0))
    }
}

/// Outcome probabilities of one pixel at the nominal delay `dz_setting`.
///
/// The covering film layers delay the signal photon, so the effective delay is
/// dz_setting − layer_count·d·(n − 1).
pub fn pixel_probabilities(
    grid: &PhantomGrid,
    x: usize,
    y: usize,
    dz_setting_mm: f64,
    system_loss: &LossModel,
    cfg: &InterferometerConfig,
) -> Result<OutcomeProbabilities> {
    let truth = grid.pixel(x, y)?;
    let jones = grid.pixel_jones(x, y)?;
    let pc = coincidence_mixture(&jones, dz_setting_mm - truth.delay_shift_mm(), cfg)?;
    let loss = system_loss.combine(&LossModel::new(truth.gamma_local)?);
    outcome_probabilities(pc.clamp(0.0, 1.0), &loss)
}

fn frame_with<C, F>(grid: &PhantomGrid, dz_mm: f64, plan: &ScanPlan, cfg: &InterferometerConfig, per_pixel: F) -> Result<ScanFrame<C>>
where
    C: Send,
    F: Fn(usize, usize, OutcomeProbabilities) -> C + Sync,
{
    plan.validate(grid, cfg)?;
    let region = plan.region;
    let counts = (0..region.len())
        .into_par_iter()
        .map(|i| {
            let (x, y) = region.coords(i);
            let probs = pixel_probabilities(grid, x, y, dz_mm, &plan.system_loss, cfg)?;
            Ok(per_pixel(x, y, probs))
        })
        .collect::<Result<Vec<C>>>()?;
    Ok(ScanFrame { region, dz_mm, counts })
}

/// Simulates one frame. Pixel (x, y) draws from
/// `stream.offset(y * grid_width + x)`, so pass a stream whose index encodes
/// the frame (see [`DIP_FRAME_STREAM`], [`BASELINE_FRAME_STREAM`]).
pub fn acquire_frame(
    grid: &PhantomGrid,
    dz_setting_mm: f64,
    plan: &ScanPlan,
    cfg: &InterferometerConfig,
    stream: &RandomStream,
) -> Result<ScanFrame<CountTriple>> {
    let trials = plan.trial_plan()?;
    let width = grid.width() as u64;
    frame_with(grid, dz_setting_mm, plan, cfg, |x, y, probs| {
        sample_counts(&probs, &trials, &stream.offset(y as u64 * width + x as u64))
    })
}

/// Noise-free frame holding the expected counts N·pᵢ of every pixel.
///
/// The accidental-coincidence model is not applied.
pub fn expected_frame(
    grid: &PhantomGrid,
    dz_setting_mm: f64,
    plan: &ScanPlan,
    cfg: &InterferometerConfig,
) -> Result<ScanFrame<ExpectedCounts>> {
    let n = plan.trials_per_frame as f64;
    frame_with(grid, dz_setting_mm, plan, cfg, |_, _, probs| {
        ExpectedCounts::from_probabilities(&probs, n)
    })
}

/// Per-pixel reconstruction over a scan region, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateMap {
    pub region: Region,
    pub alpha: f64,
    pub gamma: Vec<f64>,
    pub gamma_clamped: Vec<bool>,
    pub visibility: Vec<f64>,
    pub theta: Vec<f64>,
    pub mirror_theta: Vec<f64>,
    pub crb_std: Vec<f64>,
    pub flags: Vec<EstimateFlag>,
}

impl EstimateMap {
    pub fn flag_count(&self, flag: EstimateFlag) -> usize {
        self.flags.iter().filter(|&&f| f == flag).count()
    }
}

/// Combines aligned dip and baseline frames into γ, V, θ and CRB maps.
///
/// Pixels with no clicks in either frame are flagged
/// [`EstimateFlag::Invalid`] and carry NaN in every numeric map.
pub fn build_maps<C: Counts + Sync>(dip: &ScanFrame<C>, baseline: &ScanFrame<C>, alpha: f64) -> Result<EstimateMap> {
    if dip.region != baseline.region || dip.counts.len() != baseline.counts.len() {
        return Err(Error::domain("dip and baseline frames are not aligned"));
    }
    if dip.counts.len() != dip.region.len() {
        return Err(Error::domain("frame size does not match its region"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!("max visibility must lie in (0, 1], got {alpha}")));
    }

    let per_pixel: Vec<(f64, bool, AngleEstimate)> = dip
        .counts
        .par_iter()
        .zip(baseline.counts.par_iter())
        .map(|(d, b)| {
            let Ok(gamma) = estimate_gamma(b) else {
                return Ok((f64::NAN, false, AngleEstimate::invalid()));
            };
            match estimate_theta(d, gamma.value, alpha) {
                Ok(est) => Ok((gamma.value, gamma.clamped, est)),
                Err(Error::InsufficientCounts) => Ok((gamma.value, gamma.clamped, AngleEstimate::invalid())),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let n = per_pixel.len();
    let mut map = EstimateMap {
        region: dip.region,
        alpha,
        gamma: Vec::with_capacity(n),
        gamma_clamped: Vec::with_capacity(n),
        visibility: Vec::with_capacity(n),
        theta: Vec::with_capacity(n),
        mirror_theta: Vec::with_capacity(n),
        crb_std: Vec::with_capacity(n),
        flags: Vec::with_capacity(n),
    };
    for (gamma, clamped, est) in per_pixel {
        let invalid = est.flag == EstimateFlag::Invalid;
        map.gamma.push(if invalid { f64::NAN } else { gamma });
        map.gamma_clamped.push(clamped);
        map.visibility.push(est.visibility);
        map.theta.push(est.theta_hat);
        map.mirror_theta.push(est.mirror_theta);
        map.crb_std.push(est.crb_std);
        map.flags.push(est.flag);
    }
    Ok(map)
}

/// Calibrates γ and α from the pooled counts of uncovered pixels
/// (layer_count = 0) of the scan region. Returns `None` when the region has
/// no blank pixel.
pub fn calibrate_from_blank<C: Counts>(
    grid: &PhantomGrid,
    dip: &ScanFrame<C>,
    baseline: &ScanFrame<C>,
) -> Result<Option<CalibrationResult>> {
    let mut pooled_dip = ExpectedCounts::default();
    let mut pooled_base = ExpectedCounts::default();
    let mut any = false;
    for i in 0..dip.region.len() {
        let (x, y) = dip.region.coords(i);
        if grid.pixel(x, y)?.layer_count != 0 {
            continue;
        }
        any = true;
        for (pool, frame) in [(&mut pooled_dip, dip), (&mut pooled_base, baseline)] {
            let c = &frame.counts[i];
            pool.n0 += c.n0();
            pool.n1 += c.n1();
            pool.n2 += c.n2();
        }
    }
    if !any {
        return Ok(None);
    }
    calibrate_blank(&pooled_dip, &pooled_base).map(Some)
}

/// Classical crossed-analyzer image I = |⟨H|J|H⟩|² (I₀ = 1) over the whole grid.
pub fn classical_reference(grid: &PhantomGrid) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.width() * grid.height());
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            // in-bounds by construction
            out.push(grid.pixel_jones(x, y).map(|j| j.horizontal_transmission()).unwrap_or(f64::NAN));
        }
    }
    out
}

/// Simulated delay sweep at one pixel together with its dip fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipStudy {
    pub x: usize,
    pub y: usize,
    pub layer_count: u32,
    pub delay_shift_mm: f64,
    pub dz_mm: Vec<f64>,
    pub counts: Vec<CountTriple>,
    /// N₂/N at each delay.
    pub coincidence_fraction: Vec<f64>,
    /// `None` only when the fit itself could not be set up.
    pub fit: Option<DipFit>,
}

impl DipStudy {
    pub fn flagged(&self) -> bool {
        self.fit.is_none_or(|f| f.flagged)
    }
}

/// Sweeps the reference delay at each listed pixel and fits the resulting
/// coincidence curve. The fitted centre tracks the pixel's layer delay.
///
/// Point `j` of pixel (x, y) draws from
/// `stream.child(y * grid_width + x).offset(j)`.
pub fn dip_position_study(
    grid: &PhantomGrid,
    pixels: &[(usize, usize)],
    dz_sweep: &[f64],
    plan: &TrialPlan,
    system_loss: &LossModel,
    cfg: &InterferometerConfig,
    stream: &RandomStream,
) -> Result<Vec<DipStudy>> {
    if dz_sweep.is_empty() {
        return Err(Error::domain("delay sweep is empty"));
    }
    plan.validate()?;
    cfg.validate()?;
    pixels
        .par_iter()
        .map(|&(x, y)| {
            let truth = *grid.pixel(x, y)?;
            let pixel_stream = stream.child(y as u64 * grid.width() as u64 + x as u64);
            let counts = dz_sweep
                .iter()
                .enumerate()
                .map(|(j, &dz)| {
                    let probs = pixel_probabilities(grid, x, y, dz, system_loss, cfg)?;
                    Ok(sample_counts(&probs, plan, &pixel_stream.offset(j as u64)))
                })
                .collect::<Result<Vec<_>>>()?;
            let fraction: Vec<f64> = counts.iter().map(|c| c.n2 as f64 / c.trials() as f64).collect();
            let fit = fit_gaussian_dip(dz_sweep, &fraction, cfg.coherence_length_mm).ok();
            Ok(DipStudy {
                x,
                y,
                layer_count: truth.layer_count,
                delay_shift_mm: truth.delay_shift_mm(),
                dz_mm: dz_sweep.to_vec(),
                counts,
                coincidence_fraction: fraction,
                fit,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{FilmParams, Shard};
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI};

    fn one_shard_grid(theta: f64, gamma: f64) -> PhantomGrid {
        let shard = Shard::rectangle(2.0, 0.0, 4.0, 4.0, theta, PI, gamma);
        PhantomGrid::new(4, 4, 10.0, FilmParams::default(), vec![shard], vec![]).unwrap()
    }

    #[test]
    fn plan_validation() {
        let grid = PhantomGrid::blank(4, 4).unwrap();
        let cfg = InterferometerConfig::new(1.0, 0.9).unwrap();
        let mut plan = ScanPlan::new(&grid, &cfg, 100);
        assert!(plan.validate(&grid, &cfg).is_ok());
        plan.baseline_dz_mm = 2.0;
        assert!(plan.validate(&grid, &cfg).is_err());
        plan.baseline_dz_mm = -3.0;
        assert!(plan.validate(&grid, &cfg).is_ok());
        plan.region.width = 5;
        assert!(plan.validate(&grid, &cfg).is_err());
    }

    #[test]
    fn frame_statistics() {
        let grid = one_shard_grid(FRAC_PI_4, 0.0);
        let cfg = InterferometerConfig::new(1.0, 1.0).unwrap();
        let plan = ScanPlan::new(&grid, &cfg, 100_000);
        let dip = expected_frame(&grid, plan.dip_dz_mm, &plan, &cfg).unwrap();
        let base = expected_frame(&grid, plan.baseline_dz_mm, &plan, &cfg).unwrap();
        // uncovered pixel: full dip
        assert!(dip.get(0, 0).unwrap().n2 < 1e-9);
        // θ = π/4 pixel: dip frame equals baseline
        let (d, b) = (dip.get(3, 1).unwrap(), base.get(3, 1).unwrap());
        assert!((d.n2 - b.n2).abs() < 1e-6);
        assert!((b.n2 / 100_000.0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sampled_baseline_matches_loss() {
        let grid = one_shard_grid(0.3, 0.25);
        let cfg = InterferometerConfig::new(1.0, 0.95).unwrap();
        let plan = ScanPlan::new(&grid, &cfg, 1_000_000);
        let base = acquire_frame(&grid, plan.baseline_dz_mm, &plan, &cfg, &RandomStream::new(3, BASELINE_FRAME_STREAM))
            .unwrap();
        let c = base.get(3, 3).unwrap();
        let expected = 0.75f64.powi(2) / 2.0;
        assert!((c.n2 as f64 / 1e6 - expected).abs() < 5.0 * (expected / 1e6).sqrt());
    }

    #[test]
    fn region_out_of_bounds() {
        let grid = PhantomGrid::blank(4, 4).unwrap();
        let cfg = InterferometerConfig::default();
        let mut plan = ScanPlan::new(&grid, &cfg, 10);
        plan.region = Region {
            x0: 3,
            y0: 0,
            width: 2,
            height: 1,
        };
        assert!(acquire_frame(&grid, 0.0, &plan, &cfg, &RandomStream::new(1, 0)).is_err());
    }

    #[test]
    fn maps_from_expected_counts() {
        let grid = one_shard_grid(FRAC_PI_8, 0.2);
        let cfg = InterferometerConfig::new(1.0, 0.95).unwrap();
        let plan = ScanPlan::new(&grid, &cfg, 1_000_000);
        let dip = expected_frame(&grid, plan.dip_dz_mm, &plan, &cfg).unwrap();
        let base = expected_frame(&grid, plan.baseline_dz_mm, &plan, &cfg).unwrap();
        let map = build_maps(&dip, &base, 0.95).unwrap();
        // covered pixel index (3, 0)
        let shift = grid.pixel_delay_shift(3, 0).unwrap();
        let eff_alpha = 0.95 * (-shift * shift).exp();
        // the baseline at 5·l_c keeps a residual overlap of e^{-25}
        assert!((map.gamma[3] - 0.2).abs() < 1e-10);
        assert!((map.visibility[3] - eff_alpha * 0.5).abs() < 1e-10);
        assert_eq!(map.flags[3], EstimateFlag::Ok);
        // uncovered pixel: θ = 0
        assert!(map.theta[0] < 1e-6);
        assert!((map.visibility[0] - 0.95).abs() < 1e-10);
    }

    #[test]
    fn misaligned_frames_rejected() {
        let grid = PhantomGrid::blank(4, 4).unwrap();
        let cfg = InterferometerConfig::default();
        let plan = ScanPlan::new(&grid, &cfg, 10);
        let a = expected_frame(&grid, 0.0, &plan, &cfg).unwrap();
        let mut b = a.clone();
        b.region.x0 = 1;
        assert!(build_maps(&a, &b, 0.9).is_err());
    }

    #[test]
    fn empty_pixels_are_invalid() {
        let region = Region {
            x0: 0,
            y0: 0,
            width: 2,
            height: 1,
        };
        let dip = ScanFrame {
            region,
            dz_mm: 0.0,
            counts: vec![CountTriple::new(10, 0, 0), CountTriple::new(0, 80, 20)],
        };
        let base = ScanFrame {
            region,
            dz_mm: 5.0,
            counts: vec![CountTriple::new(0, 50, 50), CountTriple::new(0, 50, 50)],
        };
        let map = build_maps(&dip, &base, 1.0).unwrap();
        assert_eq!(map.flags[0], EstimateFlag::Invalid);
        assert!(map.theta[0].is_nan() && map.gamma[0].is_nan());
        assert_ne!(map.flags[1], EstimateFlag::Invalid);
    }

    #[test]
    fn classical_image_values() {
        let shards = vec![
            Shard::rectangle(0.0, 0.0, 1.0, 1.0, FRAC_PI_4, PI, 0.0),
            Shard::rectangle(1.0, 0.0, 2.0, 1.0, FRAC_PI_8, PI, 0.0),
        ];
        let grid = PhantomGrid::new(3, 1, 1.0, FilmParams::default(), shards, vec![]).unwrap();
        let img = classical_reference(&grid);
        assert!(img[0].abs() < 1e-15);
        assert!((img[1] - 0.5).abs() < 1e-15);
        assert_eq!(img[2], 1.0);
    }

    #[test]
    fn blank_calibration_pools_uncovered_pixels() {
        let grid = one_shard_grid(0.3, 0.0);
        let cfg = InterferometerConfig::new(1.0, 0.9).unwrap();
        let mut plan = ScanPlan::new(&grid, &cfg, 1000);
        plan.system_loss = LossModel::new(0.1).unwrap();
        let dip = expected_frame(&grid, 0.0, &plan, &cfg).unwrap();
        let base = expected_frame(&grid, 5.0, &plan, &cfg).unwrap();
        let cal = calibrate_from_blank(&grid, &dip, &base).unwrap().unwrap();
        assert!((cal.alpha.value - 0.9).abs() < 1e-10);
        assert!((cal.gamma.value - 0.1).abs() < 1e-10);

        let covered = PhantomGrid::new(
            2,
            2,
            1.0,
            FilmParams::default(),
            vec![Shard::rectangle(-1.0, -1.0, 3.0, 3.0, 0.1, PI, 0.0)],
            vec![],
        )
        .unwrap();
        let plan = ScanPlan::new(&covered, &cfg, 1000);
        let dip = expected_frame(&covered, 0.0, &plan, &cfg).unwrap();
        let base = expected_frame(&covered, 5.0, &plan, &cfg).unwrap();
        assert!(calibrate_from_blank(&covered, &dip, &base).unwrap().is_none());
    }
}
