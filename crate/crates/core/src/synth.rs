//! Synthetic unwrapped phase maps.
//!
//! All generators are defined on normalised coordinates, so the same seed at
//! different sizes yields resampled versions of one underlying surface. This
//! is what the scale sweep relies on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PhaseMap;

/// Reference resolution of the scale sweep (rows x cols at scale 1.0).
pub const REFERENCE_ROWS: usize = 480;
pub const REFERENCE_COLS: usize = 640;

/// Default peak amplitude (radians) of the benchmark surface.
pub const DEFAULT_AMPLITUDE: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    GaussianPeaks,
    Ramp,
    Parabola,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub shape: Shape,
    pub rows: usize,
    pub cols: usize,
    pub amplitude: f64,
    pub seed: u64,
    pub noise_sigma: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::InvalidInput(format!(
                "rows and cols must be >= 2, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidInput("amplitude must be finite".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

struct Bump {
    cx: f64,
    cy: f64,
    sigma: f64,
    weight: f64,
}

fn draw_bumps(rng: &mut ChaCha8Rng) -> Vec<Bump> {
    let count = rng.random_range(2..=3);
    (0..count)
        .map(|b| {
            let sign = if b == 0 || rng.random_bool(0.5) { 1.0 } else { -1.0 };
            Bump {
                cx: rng.random_range(0.2..0.8),
                cy: rng.random_range(0.2..0.8),
                sigma: rng.random_range(0.12..0.25),
                weight: sign * rng.random_range(0.5..1.0),
            }
        })
        .collect()
}

pub fn generate(spec: &SynthSpec) -> Result<PhaseMap> {
    spec.validate()?;
    let (m, n) = (spec.rows, spec.cols);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = vec![0.0; m * n];

    match spec.shape {
        Shape::Ramp => {
            // equal per-pixel slope along both axes; corner-to-corner span is `amplitude`
            let slope = spec.amplitude / ((m - 1) + (n - 1)) as f64;
            for i in 0..m {
                for j in 0..n {
                    values[i * n + j] = slope * (i + j) as f64;
                }
            }
        }
        Shape::Parabola => {
            let (y0, x0) = ((m - 1) as f64 / 2.0, (n - 1) as f64 / 2.0);
            let r2_max = x0 * x0 + y0 * y0;
            let c = spec.amplitude / r2_max;
            for i in 0..m {
                for j in 0..n {
                    let (dy, dx) = (i as f64 - y0, j as f64 - x0);
                    values[i * n + j] = c * (dx * dx + dy * dy);
                }
            }
        }
        Shape::GaussianPeaks => {
            let bumps = draw_bumps(&mut rng);
            for i in 0..m {
                let y = i as f64 / (m - 1) as f64;
                for j in 0..n {
                    let x = j as f64 / (n - 1) as f64;
                    values[i * n + j] = bumps
                        .iter()
                        .map(|b| {
                            let r2 = (x - b.cx).powi(2) + (y - b.cy).powi(2);
                            b.weight * (-r2 / (2.0 * b.sigma * b.sigma)).exp()
                        })
                        .sum();
                }
            }
            let peak = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let scale = if peak > 0.0 { spec.amplitude / peak } else { 0.0 };
            values.iter_mut().for_each(|v| *v *= scale);
        }
    }

    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::InvalidInput(format!("noise distribution: {e}")))?;
        for v in &mut values {
            *v += normal.sample(&mut rng);
        }
    }

    PhaseMap::unwrapped(m, n, values)
}

/// The eight (scale, rows, cols) entries of the size sweep.
pub fn sweep_sizes() -> Vec<(f64, usize, usize)> {
    (1..=8)
        .map(|k| {
            let scale = 0.25 * k as f64;
            (scale, REFERENCE_ROWS * k / 4, REFERENCE_COLS * k / 4)
        })
        .collect()
}

/// Grid size for an arbitrary scale factor of the reference resolution.
pub fn scaled_size(scale: f64) -> Result<(usize, usize)> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidInput(format!("scale must be positive, got {scale}")));
    }
    let rows = (REFERENCE_ROWS as f64 * scale).round() as usize;
    let cols = (REFERENCE_COLS as f64 * scale).round() as usize;
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidInput(format!("scale {scale} gives a map below 2x2")));
    }
    Ok((rows, cols))
}
