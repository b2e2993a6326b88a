//! Agreement metrics between phase maps.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{wrap_finite, PhaseMap};
use crate::sparse::norm2;

/// Normalised disagreement in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct QScore(f64);

impl QScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `‖μ − ν‖₂ / (‖μ‖₂ + ‖ν‖₂)`.
pub fn q_error(mu: &[f64], nu: &[f64]) -> Result<QScore> {
    if mu.len() != nu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: nu.len(),
        });
    }
    let denom = norm2(mu) + norm2(nu);
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("Q is undefined for two zero signals".into()));
    }
    let diff = mu
        .iter()
        .zip(nu)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(QScore((diff / denom).clamp(0.0, 1.0)))
}

/// Q after shifting `nu` by the mean of `mu - nu`, which removes the
/// additive constant an unwrapped solution is only defined up to.
pub fn q_error_mean_aligned(mu: &[f64], nu: &[f64]) -> Result<QScore> {
    if mu.len() != nu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: nu.len(),
        });
    }
    if mu.is_empty() {
        return Err(Error::UndefinedMetric("Q is undefined for empty signals".into()));
    }
    let offset = mu.iter().zip(nu).map(|(a, b)| a - b).sum::<f64>() / mu.len() as f64;
    let shifted: Vec<f64> = nu.iter().map(|v| v + offset).collect();
    q_error(mu, &shifted)
}

/// Largest deviation of `phi - psi` from a multiple of 2π, after the best
/// global shift.
///
/// The residues `W(phi - psi)` are points on the circle; the optimal shift
/// centres the shortest arc covering them all, and the returned value is
/// half that arc's length.
pub fn congruence_error(phi: &PhaseMap, psi: &PhaseMap) -> Result<f64> {
    if !phi.same_shape(psi) {
        return Err(Error::InvalidInput(format!(
            "shape mismatch: {}x{} vs {}x{}",
            phi.rows(),
            phi.cols(),
            psi.rows(),
            psi.cols()
        )));
    }
    let mut residues: Vec<f64> = phi
        .values()
        .iter()
        .zip(psi.values())
        .map(|(a, b)| wrap_finite(a - b))
        .collect();
    residues.sort_by(f64::total_cmp);
    let first = residues[0];
    let last = residues[residues.len() - 1];
    let largest_gap = residues
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(first + TAU - last, f64::max);
    Ok(((TAU - largest_gap) / 2.0).max(0.0))
}
