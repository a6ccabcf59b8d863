//! Fisher information, Cramér–Rao bounds, loss and visibility calibration,
//! and the closed-form maximum-likelihood fast-axis estimator.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::detection::{Counts, LossModel};
use crate::error::{ensure_finite, Error, Result};
use crate::hom::InterferometerConfig;

/// Upper clamp applied to calibrated loss so that γ̂ stays inside [0, 1).
pub const GAMMA_CEILING: f64 = 1.0 - 1e-9;
/// Lower clamp applied to a calibrated maximum visibility.
pub const ALPHA_FLOOR: f64 = 1e-9;

/// Outcome class of a per-pixel angle estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EstimateFlag {
    Ok,
    /// Visibility below zero; the angle is pinned to π/2.
    ClampedLowV,
    /// V/α above one; the angle is pinned to 0.
    ClampedHighV,
    /// Fisher information is zero or singular at the estimate.
    DegenerateFisher,
    /// Not enough counts to form an estimate (assigned by the scan pipeline).
    Invalid,
}

impl EstimateFlag {
    pub const ALL: [EstimateFlag; 5] = [
        EstimateFlag::Ok,
        EstimateFlag::ClampedLowV,
        EstimateFlag::ClampedHighV,
        EstimateFlag::DegenerateFisher,
        EstimateFlag::Invalid,
    ];

    /// Integer code used in CSV flag maps.
    pub fn code(self) -> u8 {
        match self {
            EstimateFlag::Ok => 0,
            EstimateFlag::ClampedLowV => 1,
            EstimateFlag::ClampedHighV => 2,
            EstimateFlag::DegenerateFisher => 3,
            EstimateFlag::Invalid => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimateFlag::Ok => "OK",
            EstimateFlag::ClampedLowV => "CLAMPED_LOW_V",
            EstimateFlag::ClampedHighV => "CLAMPED_HIGH_V",
            EstimateFlag::DegenerateFisher => "DEGENERATE_FISHER",
            EstimateFlag::Invalid => "INVALID",
        }
    }
}

/// Fast-axis estimate at one pixel or one repetition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleEstimate {
    /// Principal-branch estimate in [0, π/4], or a clamp value (0 or π/2).
    pub theta_hat: f64,
    /// The indistinguishable mirror solution π/2 − θ̂.
    pub mirror_theta: f64,
    /// Visibility computed from the counts, unclamped.
    pub visibility: f64,
    /// Fisher information per trial at θ̂.
    pub fisher: f64,
    /// √(1/(N·F)); +∞ where F vanishes.
    pub crb_std: f64,
    pub flag: EstimateFlag,
}

impl AngleEstimate {
    pub fn invalid() -> Self {
        Self {
            theta_hat: f64::NAN,
            mirror_theta: f64::NAN,
            visibility: f64::NAN,
            fisher: f64::NAN,
            crb_std: f64::NAN,
            flag: EstimateFlag::Invalid,
        }
    }
}

/// A calibrated scalar with its raw, unclamped value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibrated {
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

/// Loss and maximum-visibility calibration of a setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub gamma: Calibrated,
    pub alpha: Calibrated,
}

/// Closed-form Fisher information per trial at the dip, written in terms of
/// the overlap factor e^{Δz²/l_c²}.
fn fisher_closed_form(theta: f64, gamma: f64, alpha: f64, inv_overlap: f64) -> f64 {
    // cos²2θ = (1 + cos4θ)/2 lands exactly on 0 and 1 at θ = kπ/4
    let c2 = 0.5 * (1.0 + (4.0 * theta).cos());
    fisher_from_cos2(c2, gamma, alpha, inv_overlap)
}

/// Same as [`fisher_closed_form`] with x = cos²2θ supplied directly, so that
/// the zeros at x ∈ {0, 1} are exact.
fn fisher_from_cos2(c2: f64, gamma: f64, alpha: f64, inv_overlap: f64) -> f64 {
    let s2 = 1.0 - c2;
    let num = 16.0 * alpha * alpha * (gamma - 1.0).powi(2) * (gamma + 1.0) * s2 * c2;
    let den = (alpha * c2 - inv_overlap) * (alpha * c2 * (gamma - 1.0) - inv_overlap * (3.0 * gamma + 1.0));
    if den == 0.0 {
        return f64::INFINITY;
    }
    num / den
}

/// Fisher information F_θ per detection event for a half-wave sample.
///
/// Returns +∞ at the singular point α·cos²2θ = e^{Δz²/l_c²} (only reachable
/// with α = 1, Δz = 0 and θ = kπ/2), which estimators report as
/// [`EstimateFlag::DegenerateFisher`].
pub fn fisher_information(theta: f64, loss: &LossModel, cfg: &InterferometerConfig, dz_mm: f64) -> Result<f64> {
    cfg.validate()?;
    ensure_finite("theta", theta)?;
    ensure_finite("dz", dz_mm)?;
    let u = dz_mm / cfg.coherence_length_mm;
    Ok(fisher_closed_form(theta, loss.gamma(), cfg.max_visibility, (u * u).exp()))
}

/// Cramér–Rao lower bound 1/(N·F) on the variance of an unbiased estimator.
pub fn crb_variance(n_trials: u64, fisher: f64) -> Result<f64> {
    if n_trials == 0 {
        return Err(Error::domain("Cramér-Rao bound needs at least one trial"));
    }
    if fisher.is_nan() || fisher <= 0.0 {
        return Err(Error::DegenerateBound(fisher));
    }
    Ok(1.0 / (n_trials as f64 * fisher))
}

/// Evaluates the Fisher information at every angle in `theta_values`.
pub fn fisher_scan(
    theta_values: &[f64],
    loss: &LossModel,
    cfg: &InterferometerConfig,
    dz_mm: f64,
) -> Result<Vec<(f64, f64)>> {
    if theta_values.is_empty() {
        return Err(Error::domain("Fisher scan needs at least one angle"));
    }
    theta_values
        .iter()
        .map(|&theta| Ok((theta, fisher_information(theta, loss, cfg, dz_mm)?)))
        .collect()
}

fn require_clicks<C: Counts>(counts: &C) -> Result<(f64, f64)> {
    let (n1, n2) = (counts.n1(), counts.n2());
    if n1 + n2 <= 0.0 {
        return Err(Error::InsufficientCounts);
    }
    Ok((n1, n2))
}

/// Loss probability from a baseline frame (|Δz| ≫ l_c):
/// γ̂ = (N₁ − N₂)/(N₁ + 3N₂), clamped to [0, 1 − 1e−9].
pub fn estimate_gamma<C: Counts>(baseline: &C) -> Result<Calibrated> {
    let (n1, n2) = require_clicks(baseline)?;
    let raw = (n1 - n2) / (n1 + 3.0 * n2);
    let value = raw.clamp(0.0, GAMMA_CEILING);
    Ok(Calibrated {
        value,
        raw,
        clamped: value != raw,
    })
}

/// Dip-frame visibility V = [N₁ − N₂(1+3γ)/(1−γ)]/(N₁ + N₂).
///
/// Not clamped: noise can push it outside [0, 1].
pub fn visibility<C: Counts>(dip: &C, gamma: f64) -> Result<f64> {
    let (n1, n2) = require_clicks(dip)?;
    check_gamma(gamma)?;
    Ok(visibility_numerator(n1, n2, gamma) / (n1 + n2))
}

fn visibility_numerator(n1: f64, n2: f64, gamma: f64) -> f64 {
    n1 - n2 * (1.0 + 3.0 * gamma) / (1.0 - gamma)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::domain(format!("loss probability must lie in [0, 1), got {gamma}")));
    }
    Ok(())
}

/// Maximum visibility α̂ = V measured on a blank (θ = 0) region at Δz = 0.
pub fn estimate_alpha<C: Counts>(blank_dip: &C, gamma: f64) -> Result<Calibrated> {
    let raw = visibility(blank_dip, gamma)?;
    let value = raw.clamp(ALPHA_FLOOR, 1.0);
    Ok(Calibrated {
        value,
        raw,
        clamped: value != raw,
    })
}

/// Calibrates γ from a blank baseline frame and α from the matching dip frame.
pub fn calibrate_blank<C: Counts>(blank_dip: &C, blank_baseline: &C) -> Result<CalibrationResult> {
    let gamma = estimate_gamma(blank_baseline)?;
    let alpha = estimate_alpha(blank_dip, gamma.value)?;
    Ok(CalibrationResult { gamma, alpha })
}

/// Maximum-likelihood fast-axis angle from a dip frame at Δz = 0.
///
/// Solves α·cos²2θ = V on the principal branch [0, π/4]. A negative visibility
/// numerator pins θ̂ to π/2; an out-of-range root (V/α > 1) pins it to 0. The
/// sign test takes precedence over the range test.
pub fn estimate_theta<C: Counts>(dip: &C, gamma: f64, alpha: f64) -> Result<AngleEstimate> {
    let (n1, n2) = require_clicks(dip)?;
    check_gamma(gamma)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!("max visibility must lie in (0, 1], got {alpha}")));
    }
    let numerator = visibility_numerator(n1, n2, gamma);
    let v = numerator / (n1 + n2);

    // x = cos²2θ̂
    let (theta_hat, x, mut flag) = if numerator < 0.0 {
        (FRAC_PI_2, 1.0, EstimateFlag::ClampedLowV)
    } else if v / alpha > 1.0 {
        (0.0, 1.0, EstimateFlag::ClampedHighV)
    } else {
        let x = v / alpha;
        (0.5 * x.sqrt().acos(), x, EstimateFlag::Ok)
    };

    let fisher = fisher_from_cos2(x, gamma, alpha, 1.0);
    let n = dip.total();
    let crb_std = if fisher > 0.0 && fisher.is_finite() {
        (1.0 / (n * fisher)).sqrt()
    } else {
        if flag == EstimateFlag::Ok {
            flag = EstimateFlag::DegenerateFisher;
        }
        if fisher == 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };

    Ok(AngleEstimate {
        theta_hat,
        mirror_theta: FRAC_PI_2 - theta_hat,
        visibility: v,
        fisher,
        crb_std,
        flag,
    })
}
