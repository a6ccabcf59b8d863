//! Lossy three-outcome click model and its multinomial log-likelihood.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hom::{coincidence_probability, InterferometerConfig};

/// Probability of losing a single photon of the pair, γ ∈ [0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LossRepr")]
pub struct LossModel {
    gamma: f64,
}

#[derive(Deserialize)]
struct LossRepr {
    gamma: f64,
}

impl TryFrom<LossRepr> for LossModel {
    type Error = Error;

    fn try_from(r: LossRepr) -> Result<Self> {
        LossModel::new(r.gamma)
    }
}

impl LossModel {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::domain(format!("loss probability must lie in [0, 1), got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn lossless() -> Self {
        Self { gamma: 0.0 }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Combines independent losses: 1 − (1 − γ₁)(1 − γ₂).
    pub fn combine(&self, other: &LossModel) -> LossModel {
        LossModel {
            gamma: 1.0 - (1.0 - self.gamma) * (1.0 - other.gamma),
        }
    }
}

/// Probabilities of no click, a single click and a coincidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeProbabilities {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

impl OutcomeProbabilities {
    pub fn as_array(&self) -> [f64; 3] {
        [self.p0, self.p1, self.p2]
    }
}

/// Anything that can be read as (N₀, N₁, N₂) event counts.
///
/// Sampled frames hold integers; noise-free analyses use expected counts with
/// fractional values, so estimators are written against this trait.
pub trait Counts {
    fn n0(&self) -> f64;
    fn n1(&self) -> f64;
    fn n2(&self) -> f64;

    fn total(&self) -> f64 {
        self.n0() + self.n1() + self.n2()
    }

    fn as_array(&self) -> [f64; 3] {
        [self.n0(), self.n1(), self.n2()]
    }
}

/// Event counts of one frame at one pixel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountTriple {
    pub n0: u64,
    pub n1: u64,
    pub n2: u64,
}

impl CountTriple {
    pub fn new(n0: u64, n1: u64, n2: u64) -> Self {
        Self { n0, n1, n2 }
    }

    pub fn trials(&self) -> u64 {
        self.n0 + self.n1 + self.n2
    }
}

impl Counts for CountTriple {
    fn n0(&self) -> f64 {
        self.n0 as f64
    }
    fn n1(&self) -> f64 {
        self.n1 as f64
    }
    fn n2(&self) -> f64 {
        self.n2 as f64
    }
}

/// Mean counts N·pᵢ, i.e. the infinite-statistics limit of a frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCounts {
    pub n0: f64,
    pub n1: f64,
    pub n2: f64,
}

impl ExpectedCounts {
    pub fn from_probabilities(probs: &OutcomeProbabilities, trials: f64) -> Self {
        Self {
            n0: probs.p0 * trials,
            n1: probs.p1 * trials,
            n2: probs.p2 * trials,
        }
    }
}

impl Counts for ExpectedCounts {
    fn n0(&self) -> f64 {
        self.n0
    }
    fn n1(&self) -> f64 {
        self.n1
    }
    fn n2(&self) -> f64 {
        self.n2
    }
}

/// Maps a coincidence probability to click statistics under loss γ:
///
/// ```text
/// p0 = γ²
/// p1 = 2γ(1−γ)·Pc + (1−γ²)·(1−Pc)
/// p2 = (1−γ)²·Pc
/// ```
///
/// Bunched pairs land on one detector and register as a single click.
pub fn outcome_probabilities(pc: f64, loss: &LossModel) -> Result<OutcomeProbabilities> {
    if !(0.0..=1.0).contains(&pc) {
        return Err(Error::domain(format!("coincidence probability must lie in [0, 1], got {pc}")));
    }
    let g = loss.gamma;
    let p0 = g * g;
    let p1 = 2.0 * g * (1.0 - g) * pc + (1.0 - g * g) * (1.0 - pc);
    let p2 = (1.0 - g) * (1.0 - g) * pc;
    Ok(OutcomeProbabilities { p0, p1, p2 })
}

/// Σᵢ Nᵢ·ln P(i|θ) for a half-wave sample, without the multinomial coefficient.
///
/// Outcomes with zero counts contribute nothing; a positive count on a
/// zero-probability outcome yields −∞.
pub fn log_likelihood<C: Counts>(
    counts: &C,
    theta: f64,
    loss: &LossModel,
    cfg: &InterferometerConfig,
    dz_mm: f64,
) -> Result<f64> {
    let pc = coincidence_probability(theta, dz_mm, cfg)?;
    let probs = outcome_probabilities(pc.clamp(0.0, 1.0), loss)?;
    Ok(log_likelihood_of(counts, &probs))
}

pub(crate) fn log_likelihood_of<C: Counts>(counts: &C, probs: &OutcomeProbabilities) -> f64 {
    counts
        .as_array()
        .iter()
        .zip(probs.as_array())
        .map(|(&n, p)| {
            if n == 0.0 {
                0.0
            } else if p <= 0.0 {
                f64::NEG_INFINITY
            } else {
                n * p.ln()
            }
        })
        .sum()
}
