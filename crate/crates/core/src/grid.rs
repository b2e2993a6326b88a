//! Phase maps, the wrapping operator and wrapped finite differences.
//!
//! Maps are stored dense and row-major: cell `(i, j)` (row `i`, column `j`)
//! lives at `i * cols + j`. Grid spacing is 1 in both directions.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseKind {
    Wrapped,
    Unwrapped,
}

/// Principal value of `x` in `(-pi, pi]`.
pub fn wrap_scalar(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidInput(format!("cannot wrap non-finite value {x}")));
    }
    Ok(wrap_finite(x))
}

/// Wrapping for values already known to be finite.
#[inline]
pub(crate) fn wrap_finite(x: f64) -> f64 {
    let mut w = x - TAU * (x / TAU).round();
    // round() leaves the result in [-pi, pi] up to one ulp either side
    if w <= -PI {
        w += TAU;
    } else if w > PI {
        w -= TAU;
    }
    w
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    kind: PhaseKind,
}

impl PhaseMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, kind: PhaseKind) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidInput(format!(
                "phase map must be at least 2x2, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: values.len(),
            });
        }
        for (cell, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite value at cell {cell}")));
            }
            if kind == PhaseKind::Wrapped && !(v > -PI && v <= PI) {
                return Err(Error::InvalidInput(format!(
                    "wrapped value {v} at cell {cell} lies outside (-pi, pi]"
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            values,
            kind,
        })
    }

    pub fn unwrapped(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(rows, cols, values, PhaseKind::Unwrapped)
    }

    pub fn wrapped(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(rows, cols, values, PhaseKind::Wrapped)
    }

    pub fn filled(rows: usize, cols: usize, value: f64, kind: PhaseKind) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols], kind)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn kind(&self) -> PhaseKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn same_shape(&self, other: &PhaseMap) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Elementwise wrap of an unwrapped map.
pub fn wrap_map(phi: &PhaseMap) -> Result<PhaseMap> {
    if phi.kind != PhaseKind::Unwrapped {
        return Err(Error::InvalidInput("wrap_map expects an unwrapped map".into()));
    }
    let values = phi.values.iter().map(|&v| wrap_finite(v)).collect();
    Ok(PhaseMap {
        rows: phi.rows,
        cols: phi.cols,
        values,
        kind: PhaseKind::Wrapped,
    })
}

/// Wrapped differences of a wrapped map, one value per cell.
///
/// `dx(i, j)` is `W(psi[i][j+1] - psi[i][j])` for every column but the last,
/// where it falls back to the backward difference `W(psi[i][N-1] - psi[i][N-2])`.
/// `dy` is the same along columns. Only the forward entries correspond to
/// grid edges; the fallback entries are never referenced by the assembly.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    rows: usize,
    cols: usize,
    dx: Vec<f64>,
    dy: Vec<f64>,
}

impl GradientField {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn dx(&self, i: usize, j: usize) -> f64 {
        self.dx[i * self.cols + j]
    }

    #[inline]
    pub fn dy(&self, i: usize, j: usize) -> f64 {
        self.dy[i * self.cols + j]
    }

    pub fn dx_values(&self) -> &[f64] {
        &self.dx
    }

    pub fn dy_values(&self) -> &[f64] {
        &self.dy
    }
}

pub fn wrapped_gradients(psi: &PhaseMap) -> Result<GradientField> {
    if psi.kind != PhaseKind::Wrapped {
        return Err(Error::InvalidInput(
            "wrapped_gradients expects a wrapped map".into(),
        ));
    }
    let (m, n) = (psi.rows, psi.cols);
    if m < 2 || n < 2 {
        return Err(Error::InvalidInput(format!(
            "gradients need at least a 2x2 map, got {m}x{n}"
        )));
    }
    let mut dx = vec![0.0; m * n];
    let mut dy = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let k = i * n + j;
            dx[k] = if j + 1 < n {
                wrap_finite(psi.get(i, j + 1) - psi.get(i, j))
            } else {
                wrap_finite(psi.get(i, j) - psi.get(i, j - 1))
            };
            dy[k] = if i + 1 < m {
                wrap_finite(psi.get(i + 1, j) - psi.get(i, j))
            } else {
                wrap_finite(psi.get(i, j) - psi.get(i - 1, j))
            };
        }
    }
    Ok(GradientField {
        rows: m,
        cols: n,
        dx,
        dy,
    })
}
