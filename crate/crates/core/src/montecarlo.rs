//! Reproducible multinomial sampling of detection frames.
//!
//! Every draw is tied to a [`RandomStream`] `(master_seed, stream_index)`.
//! The stream index selects an independent ChaCha8 keystream, so pixels or
//! repetitions can be sampled on any thread in any order and still produce
//! the same counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{outcome_probabilities, CountTriple, LossModel, OutcomeProbabilities};
use crate::error::{Error, Result};
use crate::hom::{coincidence_probability, overlap_probability, InterferometerConfig};
use crate::inference::{estimate_theta, AngleEstimate};

/// Identifies one independent random sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    /// Same seed, stream index shifted by `offset`.
    pub fn offset(&self, offset: u64) -> Self {
        Self::new(self.master_seed, self.stream_index.wrapping_add(offset))
    }

    /// A family of streams keyed by this stream and indexed by `child`.
    ///
    /// The child seed is hashed from (seed, index), so children of different
    /// parents do not share keystreams.
    pub fn child(&self, child: u64) -> Self {
        let seed = splitmix64(self.master_seed ^ splitmix64(self.stream_index));
        Self::new(seed, child)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Number of trials per frame plus the optional accidental-coincidence rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub n_trials: u64,
    #[serde(default)]
    pub accidental_rate: f64,
}

impl TrialPlan {
    pub fn new(n_trials: u64) -> Result<Self> {
        Self::with_accidentals(n_trials, 0.0)
    }

    pub fn with_accidentals(n_trials: u64, accidental_rate: f64) -> Result<Self> {
        let plan = Self {
            n_trials,
            accidental_rate,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::domain("trial plan needs at least one trial"));
        }
        if !(0.0..=1.0).contains(&self.accidental_rate) {
            return Err(Error::domain(format!(
                "accidental rate must lie in [0, 1], got {}",
                self.accidental_rate
            )));
        }
        Ok(())
    }
}

fn binomial<R: rand::Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    // n > 0 and 0 < p < 1 are always accepted
    Binomial::new(n, p).map(|b| b.sample(rng)).unwrap_or(0)
}

/// Draws one multinomial frame of `plan.n_trials` events over (p0, p1, p2).
///
/// With a non-zero accidental rate each non-coincidence event is then
/// independently promoted to a coincidence with that probability.
pub fn sample_counts(probs: &OutcomeProbabilities, plan: &TrialPlan, stream: &RandomStream) -> CountTriple {
    let mut rng = stream.rng();
    let n = plan.n_trials;
    let p0 = probs.p0.clamp(0.0, 1.0);
    let n0 = binomial(&mut rng, n, p0);
    let rest = n - n0;
    let p1 = if p0 < 1.0 {
        (probs.p1 / (1.0 - p0)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let n1 = binomial(&mut rng, rest, p1);
    let mut counts = CountTriple::new(n0, n1, rest - n1);

    if plan.accidental_rate > 0.0 {
        let from0 = binomial(&mut rng, counts.n0, plan.accidental_rate);
        let from1 = binomial(&mut rng, counts.n1, plan.accidental_rate);
        counts.n0 -= from0;
        counts.n1 -= from1;
        counts.n2 += from0 + from1;
    }
    counts
}

/// Simulates `n_repeats` independent frames at a fixed angle and runs the
/// estimator on each, with γ and α known.
///
/// Off the dip centre the estimator is given the effective visibility
/// α·p(Δz). Repetition `r` draws from `stream.child(r)`; frames without any
/// clicks come back as [`AngleEstimate::invalid`].
pub fn repeat_experiment(
    theta_true: f64,
    loss: &LossModel,
    cfg: &InterferometerConfig,
    dz_mm: f64,
    plan: &TrialPlan,
    n_repeats: usize,
    stream: &RandomStream,
) -> Result<Vec<AngleEstimate>> {
    if n_repeats == 0 {
        return Err(Error::domain("need at least one repetition"));
    }
    plan.validate()?;
    let pc = coincidence_probability(theta_true, dz_mm, cfg)?;
    let probs = outcome_probabilities(pc, loss)?;
    let alpha_eff = cfg.max_visibility * overlap_probability(dz_mm, cfg.coherence_length_mm)?;
    let gamma = loss.gamma();

    (0..n_repeats as u64)
        .into_par_iter()
        .map(|r| {
            let counts = sample_counts(&probs, plan, &stream.child(r));
            match estimate_theta(&counts, gamma, alpha_eff) {
                Ok(est) => Ok(est),
                Err(Error::InsufficientCounts) => Ok(AngleEstimate::invalid()),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Mean and unbiased sample variance; the variance is `None` for fewer than
/// two values.
pub fn mean_and_variance(values: &[f64]) -> Option<(f64, Option<f64>)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = (values.len() > 1).then(|| values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0));
    Some((mean, var))
}
