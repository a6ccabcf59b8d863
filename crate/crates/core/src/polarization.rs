//! Jones-calculus primitives.
//!
//! Polarization states are complex 2-vectors in the (H, V) laboratory basis and
//! optical elements are complex 2×2 matrices acting on them. Global phases are
//! never normalized away; every observable built on top of this module uses
//! squared moduli only.

use std::ops::Mul;

use num_complex::Complex64;

use crate::error::{ensure_finite, Error, Result};

const NORM_TOLERANCE: f64 = 1e-12;

/// A normalized polarization state in the (H, V) basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationVector {
    h: Complex64,
    v: Complex64,
}

impl PolarizationVector {
    /// Builds a state from its H and V amplitudes, rejecting anything that is
    /// not unit-norm within 1e-12.
    pub fn new(h: Complex64, v: Complex64) -> Result<Self> {
        let norm = h.norm_sqr() + v.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::domain(format!(
                "polarization vector must have unit norm, got |e|^2 = {norm}"
            )));
        }
        Ok(Self { h, v })
    }

    pub fn horizontal() -> Self {
        Self {
            h: Complex64::new(1.0, 0.0),
            v: Complex64::new(0.0, 0.0),
        }
    }

    pub fn vertical() -> Self {
        Self {
            h: Complex64::new(0.0, 0.0),
            v: Complex64::new(1.0, 0.0),
        }
    }

    /// Linear polarization at `angle` radians from horizontal.
    pub fn linear(angle: f64) -> Result<Self> {
        ensure_finite("angle", angle)?;
        Ok(Self {
            h: Complex64::new(angle.cos(), 0.0),
            v: Complex64::new(angle.sin(), 0.0),
        })
    }

    pub fn h(&self) -> Complex64 {
        self.h
    }

    pub fn v(&self) -> Complex64 {
        self.v
    }

    pub fn norm_sqr(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    /// Inner product ⟨self|other⟩.
    pub fn inner(&self, other: &PolarizationVector) -> Complex64 {
        self.h.conj() * other.h + self.v.conj() * other.v
    }

    pub fn components(&self) -> [Complex64; 2] {
        [self.h, self.v]
    }
}

/// A 2×2 complex Jones matrix, stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix {
    m: [[Complex64; 2]; 2],
}

impl JonesMatrix {
    pub fn new(entries: [[Complex64; 2]; 2]) -> Self {
        Self { m: entries }
    }

    pub fn from_real(entries: [[f64; 2]; 2]) -> Self {
        let c = |x: f64| Complex64::new(x, 0.0);
        Self::new([
            [c(entries[0][0]), c(entries[0][1])],
            [c(entries[1][0]), c(entries[1][1])],
        ])
    }

    pub fn identity() -> Self {
        Self::from_real([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn diagonal(a: Complex64, d: Complex64) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self::new([[a, zero], [zero, d]])
    }

    pub fn entries(&self) -> [[Complex64; 2]; 2] {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.m[row][col]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Self::new([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        let m = &self.m;
        Self::new([
            [m[0][0] * factor, m[0][1] * factor],
            [m[1][0] * factor, m[1][1] * factor],
        ])
    }

    /// Applies the matrix to a polarization state without renormalizing.
    pub fn apply(&self, state: &PolarizationVector) -> [Complex64; 2] {
        let m = &self.m;
        [
            m[0][0] * state.h + m[0][1] * state.v,
            m[1][0] * state.h + m[1][1] * state.v,
        ]
    }

    /// Largest entry-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &JonesMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((self.m[r][c] - other.m[r][c]).norm());
            }
        }
        worst
    }

    pub fn approx_eq(&self, other: &JonesMatrix, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        (self.adjoint() * *self).approx_eq(&JonesMatrix::identity(), tol)
    }

    /// |⟨H|J|H⟩|²: the fraction of a horizontal input that stays horizontal.
    pub fn horizontal_transmission(&self) -> f64 {
        self.m[0][0].norm_sqr()
    }

    /// Angle θ_eff ∈ [0, π/4] of the half-wave plate producing the same
    /// horizontal transmission, i.e. cos²2θ_eff = |⟨H|J|H⟩|².
    ///
    /// Evaluated as ½·atan2(|⟨V|J|H⟩|, |⟨H|J|H⟩|), which equals
    /// ½·arccos|⟨H|J|H⟩| for lossless elements and stays well conditioned
    /// near both ends of the range.
    pub fn effective_axis_angle(&self) -> f64 {
        0.5 * self.m[1][0].norm().atan2(self.m[0][0].norm())
    }
}

impl Mul for JonesMatrix {
    type Output = JonesMatrix;

    fn mul(self, rhs: JonesMatrix) -> JonesMatrix {
        let a = &self.m;
        let b = &rhs.m;
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        JonesMatrix::new(out)
    }
}

/// Rotation matrix [[cos θ, sin θ], [−sin θ, cos θ]].
pub fn rotation(theta: f64) -> Result<JonesMatrix> {
    ensure_finite("theta", theta)?;
    let (s, c) = theta.sin_cos();
    Ok(JonesMatrix::from_real([[c, s], [-s, c]]))
}

/// Linear retarder with fast axis at `theta` and retardance `delta`:
/// R(−θ)·diag(e^{iδ/2}, e^{−iδ/2})·R(θ).
pub fn retarder(theta: f64, delta: f64) -> Result<JonesMatrix> {
    ensure_finite("theta", theta)?;
    ensure_finite("delta", delta)?;
    let phase = Complex64::from_polar(1.0, delta / 2.0);
    let core = JonesMatrix::diagonal(phase, phase.conj());
    Ok(rotation(-theta)? * core * rotation(theta)?)
}

/// Half-wave plate (δ = π) with fast axis at `theta`.
pub fn half_wave_plate(theta: f64) -> Result<JonesMatrix> {
    retarder(theta, std::f64::consts::PI)
}

/// Composes elements in propagation order: the first element acts first.
pub fn compose(elements: &[JonesMatrix]) -> Result<JonesMatrix> {
    let (first, rest) = elements
        .split_first()
        .ok_or_else(|| Error::domain("cannot compose an empty element list"))?;
    Ok(rest.iter().fold(*first, |acc, el| *el * acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rotation_special_angles() {
        assert!(rotation(0.0).unwrap().approx_eq(&JonesMatrix::identity(), 0.0));
        let quarter = JonesMatrix::from_real([[0.0, 1.0], [-1.0, 0.0]]);
        assert!(rotation(FRAC_PI_2).unwrap().approx_eq(&quarter, 1e-15));
    }

    #[test]
    fn rotations_add() {
        let ab = rotation(0.3).unwrap() * rotation(0.4).unwrap();
        assert!(ab.approx_eq(&rotation(0.7).unwrap(), 1e-15));
    }

    #[test]
    fn non_finite_inputs_rejected() {
        assert!(matches!(rotation(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(retarder(0.1, f64::INFINITY), Err(Error::Domain(_))));
        assert!(matches!(retarder(f64::NEG_INFINITY, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn retarder_on_principal_axes() {
        let j = retarder(0.0, PI).unwrap();
        assert!(j.approx_eq(&JonesMatrix::diagonal(c(0.0, 1.0), c(0.0, -1.0)), 1e-15));
    }

    #[test]
    fn zero_retardance_is_identity() {
        for theta in [-2.0, 0.0, 0.37, 1.2, 5.0] {
            let j = retarder(theta, 0.0).unwrap();
            assert!(j.approx_eq(&JonesMatrix::identity(), 1e-15));
        }
    }

    #[test]
    fn half_wave_at_45_degrees_swaps_axes() {
        let j = retarder(FRAC_PI_4, PI).unwrap();
        let expected = JonesMatrix::new([[c(0.0, 0.0), c(0.0, 1.0)], [c(0.0, 1.0), c(0.0, 0.0)]]);
        assert!(j.approx_eq(&expected, 1e-15));
    }

    #[test]
    fn compose_empty_is_error() {
        assert!(matches!(compose(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn compose_single_and_identity() {
        assert_eq!(compose(&[JonesMatrix::identity()]).unwrap(), JonesMatrix::identity());
        let a = retarder(0.91, 1.7).unwrap() * rotation(-0.2).unwrap();
        assert_eq!(compose(&[a]).unwrap(), a);
    }

    #[test]
    fn compose_order_is_propagation_order() {
        let a = retarder(0.2, 0.9).unwrap();
        let b = retarder(1.1, 2.3).unwrap();
        assert_eq!(compose(&[a, b]).unwrap(), b * a);
    }

    #[test]
    fn stacked_half_wave_plates_rotate_by_twice_the_difference() {
        let (t1, t2) = (0.25, 0.6);
        let j = compose(&[half_wave_plate(t1).unwrap(), half_wave_plate(t2).unwrap()]).unwrap();
        // Acting on H gives (cos 2Δ, sin 2Δ) up to a global phase of −1.
        let out = j.apply(&PolarizationVector::horizontal());
        let angle = 2.0 * (t2 - t1);
        assert!((out[0] + c(angle.cos(), 0.0)).norm() < 1e-14);
        assert!((out[1] + c(angle.sin(), 0.0)).norm() < 1e-14);
        assert!((j.horizontal_transmission() - angle.cos().powi(2)).abs() < 1e-14);
    }

    #[test]
    fn polarization_vector_validation() {
        assert!(PolarizationVector::new(c(1.0, 0.0), c(0.1, 0.0)).is_err());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = PolarizationVector::new(c(s, 0.0), c(0.0, s)).unwrap();
        assert!((d.norm_sqr() - 1.0).abs() < 1e-15);
        assert!(PolarizationVector::linear(f64::NAN).is_err());
        let inner = PolarizationVector::horizontal().inner(&PolarizationVector::vertical());
        assert_eq!(inner, c(0.0, 0.0));
    }

    #[test]
    fn effective_angle_of_half_wave_plate() {
        for theta in [0.0, 0.1, 0.3, FRAC_PI_4] {
            let eff = half_wave_plate(theta).unwrap().effective_axis_angle();
            assert!((eff - theta).abs() < 1e-14, "{theta} -> {eff}");
        }
        // mirror branch folds back onto [0, π/4]
        let eff = half_wave_plate(FRAC_PI_2 - 0.2).unwrap().effective_axis_angle();
        assert!((eff - 0.2).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn retarder_is_unitary(theta in -10.0f64..10.0, delta in -10.0f64..10.0) {
            prop_assert!(retarder(theta, delta).unwrap().is_unitary(1e-12));
        }

        #[test]
        fn half_wave_period(theta in -4.0f64..4.0) {
            let a = half_wave_plate(theta).unwrap().horizontal_transmission();
            let b = half_wave_plate(theta + FRAC_PI_2).unwrap().horizontal_transmission();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn horizontal_transmission_identity(theta in -PI..PI, delta in -PI..PI) {
            let got = retarder(theta, delta).unwrap().horizontal_transmission();
            let expected = (delta / 2.0).cos().powi(2)
                + (delta / 2.0).sin().powi(2) * (2.0 * theta).cos().powi(2);
            prop_assert!((got - expected).abs() < 1e-12);
        }
    }
}
