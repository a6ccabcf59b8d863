//! Two-photon interference at a beam splitter.
//!
//! The signal photon passes through the sample while the idler (reference)
//! photon is untouched; both meet at a beam splitter with transfer matrix
//! [[t, r], [r, t]] acting on the spatial path. A Gaussian wavepacket overlap
//! p(Δz) = exp(−Δz²/l_c²) mixes the indistinguishable and distinguishable
//! limits of the two-photon state.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::polarization::{JonesMatrix, PolarizationVector};

const SPLITTER_TOLERANCE: f64 = 1e-12;

/// Transmission and reflection amplitudes of a lossless beam splitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SplitterRepr", into = "SplitterRepr")]
pub struct BeamSplitter {
    t: Complex64,
    r: Complex64,
}

impl BeamSplitter {
    pub fn new(t: Complex64, r: Complex64) -> Result<Self> {
        let total = t.norm_sqr() + r.norm_sqr();
        if !total.is_finite() || (total - 1.0).abs() > SPLITTER_TOLERANCE {
            return Err(Error::domain(format!(
                "beam splitter must satisfy |t|^2 + |r|^2 = 1, got {total}"
            )));
        }
        Ok(Self { t, r })
    }

    /// The 50:50 splitter with t = 1/√2 and r = i/√2.
    pub fn balanced() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            t: Complex64::new(s, 0.0),
            r: Complex64::new(0.0, s),
        }
    }

    pub fn t(&self) -> Complex64 {
        self.t
    }

    pub fn r(&self) -> Complex64 {
        self.r
    }

    /// Coincidence probability for fully distinguishable photons: both
    /// transmitted or both reflected, |t|⁴ + |r|⁴. Equals ½ when balanced.
    pub fn distinguishable_coincidence(&self) -> f64 {
        self.t.norm_sqr().powi(2) + self.r.norm_sqr().powi(2)
    }
}

impl Default for BeamSplitter {
    fn default() -> Self {
        Self::balanced()
    }
}

#[derive(Serialize, Deserialize)]
struct SplitterRepr {
    t: [f64; 2],
    r: [f64; 2],
}

impl TryFrom<SplitterRepr> for BeamSplitter {
    type Error = Error;

    fn try_from(repr: SplitterRepr) -> Result<Self> {
        BeamSplitter::new(
            Complex64::new(repr.t[0], repr.t[1]),
            Complex64::new(repr.r[0], repr.r[1]),
        )
    }
}

impl From<BeamSplitter> for SplitterRepr {
    fn from(bs: BeamSplitter) -> Self {
        SplitterRepr {
            t: [bs.t.re, bs.t.im],
            r: [bs.r.re, bs.r.im],
        }
    }
}

/// Setup-level constants of the interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferometerConfig {
    /// 1/e half-width l_c of the wavepacket overlap, in millimeters.
    pub coherence_length_mm: f64,
    /// Maximum visibility α ∈ (0, 1].
    pub max_visibility: f64,
    #[serde(default)]
    pub beam_splitter: BeamSplitter,
}

impl InterferometerConfig {
    pub fn new(coherence_length_mm: f64, max_visibility: f64) -> Result<Self> {
        let cfg = Self {
            coherence_length_mm,
            max_visibility,
            beam_splitter: BeamSplitter::balanced(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_beam_splitter(mut self, bs: BeamSplitter) -> Self {
        self.beam_splitter = bs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coherence_length_mm.is_finite() && self.coherence_length_mm > 0.0) {
            return Err(Error::domain(format!(
                "coherence length must be positive, got {}",
                self.coherence_length_mm
            )));
        }
        if !(self.max_visibility > 0.0 && self.max_visibility <= 1.0) {
            return Err(Error::domain(format!(
                "max visibility must lie in (0, 1], got {}",
                self.max_visibility
            )));
        }
        BeamSplitter::new(self.beam_splitter.t, self.beam_splitter.r)?;
        Ok(())
    }
}

impl Default for InterferometerConfig {
    fn default() -> Self {
        Self {
            coherence_length_mm: 1.0,
            max_visibility: 1.0,
            beam_splitter: BeamSplitter::balanced(),
        }
    }
}

/// Probability exp(−Δz²/l_c²) that the two wavepackets are indistinguishable.
pub fn overlap_probability(dz_mm: f64, coherence_length_mm: f64) -> Result<f64> {
    ensure_finite("dz", dz_mm)?;
    if !(coherence_length_mm.is_finite() && coherence_length_mm > 0.0) {
        return Err(Error::domain(format!(
            "coherence length must be positive, got {coherence_length_mm}"
        )));
    }
    let u = dz_mm / coherence_length_mm;
    Ok((-u * u).exp())
}

// Single-photon modes: index = 2 * path + polarization, with path 0 = signal
// (or output port 1) and path 1 = idler (or output port 2).
type ModeVector = [Complex64; 4];

fn embed(path: usize, pol: [Complex64; 2]) -> ModeVector {
    let mut v = [Complex64::new(0.0, 0.0); 4];
    v[2 * path] = pol[0];
    v[2 * path + 1] = pol[1];
    v
}

/// Single-photon operator: sample on the signal path, identity on the idler.
fn apply_sample(sample: &JonesMatrix, v: &ModeVector) -> ModeVector {
    let m = sample.entries();
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
        v[2],
        v[3],
    ]
}

/// Single-photon operator: [[t, r], [r, t]] on the path index, identity on polarization.
fn apply_splitter(bs: &BeamSplitter, v: &ModeVector) -> ModeVector {
    let (t, r) = (bs.t, bs.r);
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for pol in 0..2 {
        out[pol] = t * v[pol] + r * v[2 + pol];
        out[2 + pol] = r * v[pol] + t * v[2 + pol];
    }
    out
}

/// Coincidence probability for perfectly indistinguishable wavepackets,
/// computed by explicit two-photon state evolution.
///
/// The signal photon enters with `input_pol` and traverses `sample`; the idler
/// enters with `reference_pol`. The symmetrized two-photon amplitude over the
/// 4 × 4 output mode pairs is propagated through the sample and the beam
/// splitter, and the squared amplitudes of every configuration with one photon
/// in each output port are summed.
pub fn coincidence_indistinguishable(
    sample: &JonesMatrix,
    reference_pol: &PolarizationVector,
    input_pol: &PolarizationVector,
    bs: &BeamSplitter,
) -> Result<f64> {
    for (name, pol) in [("reference", reference_pol), ("input", input_pol)] {
        if (pol.norm_sqr() - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!(
                "{name} polarization must have unit norm, got {}",
                pol.norm_sqr()
            )));
        }
    }
    let bs = BeamSplitter::new(bs.t, bs.r)?;

    let signal = embed(0, input_pol.components());
    let idler = embed(1, reference_pol.components());
    let evolve = |v: &ModeVector| apply_splitter(&bs, &apply_sample(sample, v));
    let (a, b) = (evolve(&signal), evolve(&idler));

    // Ψ(m1, m2) = (a(m1) b(m2) + b(m1) a(m2)) / √2; the two input modes sit on
    // different paths, so the symmetrized state is already normalized.
    let norm = std::f64::consts::FRAC_1_SQRT_2;
    let mut probability = 0.0;
    for m1 in 0..4 {
        for m2 in 0..4 {
            if m1 / 2 == m2 / 2 {
                continue;
            }
            let amp = (a[m1] * b[m2] + b[m1] * a[m2]) * norm;
            probability += amp.norm_sqr();
        }
    }
    Ok(probability)
}

/// Closed-form coincidence probability for a half-wave sample:
/// ½·[1 − α·exp(−Δz²/l_c²)·cos²2θ].
pub fn coincidence_probability(theta: f64, dz_mm: f64, cfg: &InterferometerConfig) -> Result<f64> {
    cfg.validate()?;
    ensure_finite("theta", theta)?;
    let p = overlap_probability(dz_mm, cfg.coherence_length_mm)?;
    let c = (2.0 * theta).cos();
    Ok(0.5 * (1.0 - cfg.max_visibility * p * c * c))
}

/// Mixture-state coincidence probability for an arbitrary sample with
/// horizontally polarized inputs: the indistinguishable part carries weight
/// α·p(Δz), the distinguishable remainder gives |t|⁴ + |r|⁴.
pub fn coincidence_mixture(sample: &JonesMatrix, dz_mm: f64, cfg: &InterferometerConfig) -> Result<f64> {
    cfg.validate()?;
    let weight = cfg.max_visibility * overlap_probability(dz_mm, cfg.coherence_length_mm)?;
    let h = PolarizationVector::horizontal();
    let indist = coincidence_indistinguishable(sample, &h, &h, &cfg.beam_splitter)?;
    let dist = cfg.beam_splitter.distinguishable_coincidence();
    Ok(weight * indist + (1.0 - weight) * dist)
}

/// One point of a simulated HOM dip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DipPoint {
    pub dz_mm: f64,
    pub coincidence: f64,
}

/// Evaluates the mixture model at every delay in `dz_values`.
pub fn dip_curve(sample: &JonesMatrix, dz_values: &[f64], cfg: &InterferometerConfig) -> Result<Vec<DipPoint>> {
    if dz_values.is_empty() {
        return Err(Error::domain("dip curve needs at least one delay value"));
    }
    dz_values
        .iter()
        .map(|&dz| {
            Ok(DipPoint {
                dz_mm: dz,
                coincidence: coincidence_mixture(sample, dz, cfg)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polarization::{half_wave_plate, retarder};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn cfg(alpha: f64) -> InterferometerConfig {
        InterferometerConfig::new(1.0, alpha).unwrap()
    }

    #[test]
    fn overlap_values() {
        assert_eq!(overlap_probability(0.0, 1.0).unwrap(), 1.0);
        assert!((overlap_probability(1.0, 1.0).unwrap() - 0.36787944117144233).abs() < 1e-15);
        // 100 µm of delay against a 1 mm coherence length costs ~1 % overlap
        assert!((overlap_probability(0.1, 1.0).unwrap() - 0.9900498337491681).abs() < 1e-15);
    }

    #[test]
    fn overlap_rejects_bad_coherence_length() {
        assert!(overlap_probability(0.0, 0.0).is_err());
        assert!(overlap_probability(0.0, -1.0).is_err());
        assert!(overlap_probability(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn splitter_validation() {
        assert!(BeamSplitter::new(Complex64::new(1.0, 0.0), Complex64::new(0.1, 0.0)).is_err());
        let bs = BeamSplitter::balanced();
        assert!((bs.distinguishable_coincidence() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(InterferometerConfig::new(0.0, 1.0).is_err());
        assert!(InterferometerConfig::new(1.0, 0.0).is_err());
        assert!(InterferometerConfig::new(1.0, 1.2).is_err());
        assert!(InterferometerConfig::new(1.0, 1.0).is_ok());
    }

    #[test]
    fn oracle_perfect_dip() {
        let h = PolarizationVector::horizontal();
        let p = coincidence_indistinguishable(&JonesMatrix::identity(), &h, &h, &BeamSplitter::balanced()).unwrap();
        assert!(p.abs() < 1e-15);
    }

    #[test]
    fn oracle_orthogonal_output_is_baseline() {
        let h = PolarizationVector::horizontal();
        let p = coincidence_indistinguishable(&half_wave_plate(FRAC_PI_4).unwrap(), &h, &h, &BeamSplitter::balanced())
            .unwrap();
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn oracle_revalidates_splitter() {
        let h = PolarizationVector::horizontal();
        let bad_bs = BeamSplitter {
            t: Complex64::new(1.0, 0.0),
            r: Complex64::new(1.0, 0.0),
        };
        assert!(coincidence_indistinguishable(&JonesMatrix::identity(), &h, &h, &bad_bs).is_err());
    }

    #[test]
    fn unbalanced_splitter_dip_is_not_zero() {
        // R = 1/3: Pc = (|t|² − |r|²)² for identical photons.
        let t = Complex64::new((2.0f64 / 3.0).sqrt(), 0.0);
        let r = Complex64::new(0.0, (1.0f64 / 3.0).sqrt());
        let bs = BeamSplitter::new(t, r).unwrap();
        let h = PolarizationVector::horizontal();
        let p = coincidence_indistinguishable(&JonesMatrix::identity(), &h, &h, &bs).unwrap();
        assert!((p - 1.0 / 9.0).abs() < 1e-14);
        // Orthogonal photons never interfere.
        let v = PolarizationVector::vertical();
        let p = coincidence_indistinguishable(&JonesMatrix::identity(), &h, &v, &bs).unwrap();
        assert!((p - bs.distinguishable_coincidence()).abs() < 1e-14);
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(coincidence_probability(0.0, 0.0, &cfg(1.0)).unwrap(), 0.0);
        for (dz, alpha) in [(0.0, 1.0), (0.7, 0.3), (-3.0, 0.9)] {
            let p = coincidence_probability(FRAC_PI_4, dz, &cfg(alpha)).unwrap();
            assert!((p - 0.5).abs() < 1e-15);
        }
        let p = coincidence_probability(0.0, 1.0, &cfg(1.0)).unwrap();
        assert!((p - 0.31606027941427883).abs() < 1e-15);
    }

    #[test]
    fn mixture_examples() {
        let far = coincidence_mixture(&JonesMatrix::identity(), 50.0, &cfg(1.0)).unwrap();
        assert!((far - 0.5).abs() < 1e-15);

        let j = half_wave_plate(0.3).unwrap();
        let c = InterferometerConfig::new(1.0, 1.0).unwrap();
        let mix = coincidence_mixture(&j, 0.2, &c).unwrap();
        let closed = coincidence_probability(0.3, 0.2, &c).unwrap();
        assert!((mix - closed).abs() < 1e-12);

        for theta in [0.0, 0.2, 0.5, 1.0] {
            let q = coincidence_mixture(&retarder(theta, FRAC_PI_2).unwrap(), 0.0, &c).unwrap();
            let expected = 0.25 * (2.0 * theta).sin().powi(2);
            assert!((q - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn dip_curves() {
        assert!(dip_curve(&JonesMatrix::identity(), &[], &cfg(1.0)).is_err());

        let dz: Vec<f64> = (-30..=30).map(|i| i as f64 * 0.1).collect();
        let curve = dip_curve(&JonesMatrix::identity(), &dz, &cfg(1.0)).unwrap();
        let min = curve.iter().min_by(|a, b| a.coincidence.total_cmp(&b.coincidence)).unwrap();
        assert_eq!(min.dz_mm, 0.0);
        assert!(min.coincidence.abs() < 1e-15);
        for (lo, hi) in curve.iter().zip(curve.iter().rev()) {
            assert!((lo.coincidence - hi.coincidence).abs() < 1e-15);
        }
        // non-increasing in |dz| moving away from the centre
        for w in curve[30..].windows(2) {
            assert!(w[1].coincidence >= w[0].coincidence);
        }

        let flat = dip_curve(&half_wave_plate(FRAC_PI_4).unwrap(), &dz, &cfg(1.0)).unwrap();
        assert!(flat.iter().all(|p| (p.coincidence - 0.5).abs() < 1e-15));
    }

    #[test]
    fn shifted_dip_center() {
        // One 60 µm film layer with n = 1.5 delays the signal by 0.03 mm.
        let shift = 0.03;
        let dz: Vec<f64> = (-100..=100).map(|i| i as f64 * 0.001).collect();
        let shifted: Vec<f64> = dz.iter().map(|d| d - shift).collect();
        let curve = dip_curve(&JonesMatrix::identity(), &shifted, &cfg(1.0)).unwrap();
        let (idx, _) = curve
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.coincidence.total_cmp(&b.1.coincidence))
            .unwrap();
        assert!((dz[idx] - shift).abs() < 1e-12);
    }

    #[test]
    fn flat_dip_bottom() {
        let c = cfg(0.9);
        let h = 1e-4 * c.coherence_length_mm;
        for theta in [0.0, 0.3, 1.0] {
            let slope = (coincidence_probability(theta, h, &c).unwrap()
                - coincidence_probability(theta, -h, &c).unwrap())
                / (2.0 * h);
            assert!(slope.abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn oracle_matches_half_sine_product(theta in -PI..PI, delta in -PI..PI) {
            let h = PolarizationVector::horizontal();
            let p = coincidence_indistinguishable(
                &retarder(theta, delta).unwrap(), &h, &h, &BeamSplitter::balanced()).unwrap();
            let expected = 0.5 * (delta / 2.0).sin().powi(2) * (2.0 * theta).sin().powi(2);
            prop_assert!((p - expected).abs() < 1e-12);
        }

        #[test]
        fn coincidence_bounded(theta in -PI..PI, delta in -PI..PI, dz in -5.0f64..5.0, alpha in 0.01f64..=1.0) {
            let p = coincidence_mixture(&retarder(theta, delta).unwrap(), dz, &cfg(alpha)).unwrap();
            prop_assert!((-1e-12..=0.5 + 1e-12).contains(&p));
        }

        #[test]
        fn closed_form_symmetries(theta in -PI..PI, dz in -3.0f64..3.0, alpha in 0.01f64..=1.0) {
            let c = cfg(alpha);
            let p = coincidence_probability(theta, dz, &c).unwrap();
            prop_assert!((p - coincidence_probability(theta + FRAC_PI_2, dz, &c).unwrap()).abs() < 1e-15);
            prop_assert!((p - coincidence_probability(-theta, dz, &c).unwrap()).abs() < 1e-15);
        }
    }
}
