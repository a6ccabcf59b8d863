//! Least-squares fit of a Gaussian HOM dip with known width:
//! y(dz) = c₀ − c₁·exp(−(dz − dz₀)²/l_c²).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipFit {
    /// Baseline level c₀.
    pub baseline: f64,
    /// Dip depth c₁.
    pub depth: f64,
    /// Dip centre dz₀ in millimeters.
    pub center_mm: f64,
    /// Standard errors of (c₀, c₁, dz₀) from the residual variance.
    pub stderr: [f64; 3],
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the fit did not converge or the depth is not resolved
    /// (c₁ < 3·σ(c₁)); the centre is meaningless in that case.
    pub flagged: bool,
}

const MAX_ITERATIONS: usize = 200;

fn model(p: &Vector3<f64>, x: f64, lc: f64) -> (f64, Vector3<f64>) {
    let u = (x - p[2]) / lc;
    let g = (-u * u).exp();
    let value = p[0] - p[1] * g;
    // ∂/∂c₀, ∂/∂c₁, ∂/∂dz₀
    let grad = Vector3::new(1.0, -g, -p[1] * g * 2.0 * u / lc);
    (value, grad)
}

fn sum_sq(p: &Vector3<f64>, xs: &[f64], ys: &[f64], lc: f64) -> f64 {
    xs.iter().zip(ys).map(|(&x, &y)| (y - model(p, x, lc).0).powi(2)).sum()
}

/// Fits the dip with Levenberg–Marquardt, starting from the sample minimum.
pub fn fit_gaussian_dip(dz_mm: &[f64], values: &[f64], coherence_length_mm: f64) -> Result<DipFit> {
    if dz_mm.len() != values.len() {
        return Err(Error::domain("delay and value arrays differ in length"));
    }
    if dz_mm.len() < 4 {
        return Err(Error::domain("dip fit needs at least four points"));
    }
    if !(coherence_length_mm > 0.0) {
        return Err(Error::domain("coherence length must be positive"));
    }
    let lc = coherence_length_mm;
    let (imin, ymin) = values
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, 0.0));
    let ymax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = Vector3::new(ymax, ymax - ymin, dz_mm[imin]);

    let mut lambda = 1e-3;
    let mut cost = sum_sq(&p, dz_mm, values, lc);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&x, &y) in dz_mm.iter().zip(values) {
            let (f, g) = model(&p, x, lc);
            jtj += g * g.transpose();
            jtr += g * (y - f);
        }

        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for i in 0..3 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let trial_cost = sum_sq(&trial, dz_mm, values, lc);
            if trial_cost <= cost {
                let small = step.iter().zip(trial.iter()).all(|(s, v)| s.abs() <= 1e-12 * (1.0 + v.abs()));
                let rel = (cost - trial_cost) <= 1e-15 * cost.max(f64::MIN_POSITIVE);
                p = trial;
                cost = trial_cost;
                lambda = (lambda * 0.1).max(1e-12);
                improved = true;
                if small || rel {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no downhill step at any damping: at a minimum to working precision
            converged = true;
        }
        if converged {
            break;
        }
    }

    let dof = (dz_mm.len() - 3) as f64;
    let sigma2 = cost / dof;
    let mut jtj = Matrix3::zeros();
    for &x in dz_mm {
        let (_, g) = model(&p, x, lc);
        jtj += g * g.transpose();
    }
    let stderr = match jtj.try_inverse() {
        Some(cov) => [0, 1, 2].map(|i| (cov[(i, i)] * sigma2).max(0.0).sqrt()),
        None => [f64::INFINITY; 3],
    };
    let resolved = p[1] > 3.0 * stderr[1] && stderr[2].is_finite();
    Ok(DipFit {
        baseline: p[0],
        depth: p[1],
        center_mm: p[2],
        stderr,
        rms_residual: (cost / dz_mm.len() as f64).sqrt(),
        iterations,
        converged,
        flagged: !converged || !resolved,
    })
}
