//! Outer reweighting loop and the inner preconditioned conjugate gradient.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assemble::{compute_weights, objective, SystemAssembler};
use crate::error::{Error, Result};
use crate::grid::{wrapped_gradients, PhaseKind, PhaseMap};
use crate::precond::{PrecondKind, Preconditioner};
use crate::sparse::{dot, norm2, SparseMatrix};

/// Floor applied to `‖φᵏ‖` in the outer relative-change denominator.
pub const ERROR_DENOMINATOR_FLOOR: f64 = 1e-30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    #[serde(rename = "random")]
    RandomUniform,
    Zero,
}

impl Init {
    pub fn name(self) -> &'static str {
        match self {
            Init::RandomUniform => "random",
            Init::Zero => "zero",
        }
    }
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" | "random-uniform" => Ok(Init::RandomUniform),
            "zero" => Ok(Init::Zero),
            _ => Err(Error::InvalidParameter(format!(
                "unknown init {s:?} (expected random|zero)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExitReason {
    Tol,
    KMax,
    Breakdown,
}

impl ExitReason {
    pub fn name(self) -> &'static str {
        match self {
            ExitReason::Tol => "tol",
            ExitReason::KMax => "kmax",
            ExitReason::Breakdown => "breakdown",
        }
    }
}

impl fmt::Display for ExitReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExitReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tol" => Ok(ExitReason::Tol),
            "kmax" => Ok(ExitReason::KMax),
            "breakdown" => Ok(ExitReason::Breakdown),
            _ => Err(Error::InvalidInput(format!("unknown exit reason {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub p: f64,
    pub tau: f64,
    pub k_max: usize,
    pub tol: f64,
    /// `l_max = l_max_factor * M * N`.
    pub l_max_factor: usize,
    pub epsilon: f64,
    pub precond: PrecondKind,
    pub omega: f64,
    pub seed: u64,
    pub init: Init,
    /// Subtract the mean of φ after each inner solve.
    pub remove_mean: bool,
    /// Build the preconditioner once, from the first assembled matrix.
    pub reuse_preconditioner: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            p: 0.0,
            tau: 0.01,
            k_max: 500,
            tol: 1e-6,
            l_max_factor: 2,
            epsilon: 0.005,
            precond: PrecondKind::Ilu0,
            omega: 1.0,
            seed: 0,
            init: Init::RandomUniform,
            remove_mean: false,
            reuse_preconditioner: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p < 2.0) || !self.p.is_finite() {
            return Err(Error::InvalidParameter(format!("p must be < 2, got {}", self.p)));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be >= 0, got {}", self.tol)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if self.l_max_factor == 0 {
            return Err(Error::InvalidParameter("lmax factor must be >= 1".into()));
        }
        if self.precond == PrecondKind::Ssor && !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "omega must lie in (0, 2), got {}",
                self.omega
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub rows: usize,
    pub cols: usize,
    pub precond: PrecondKind,
    pub init: Init,
    pub outer_iters: usize,
    pub inner_iters: Vec<usize>,
    pub inner_iters_total: usize,
    /// Relative change of the last outer iteration.
    pub final_error: f64,
    pub exit_reason: ExitReason,
    pub precond_build_s: f64,
    pub pcg_s: f64,
    pub assemble_s: f64,
    pub total_s: f64,
    /// Objective at the initial map followed by one value per outer
    /// iteration; empty when `p <= 0`.
    pub objective_history: Vec<f64>,
    /// Largest IC(0) diagonal shift needed in any outer iteration.
    pub ic0_shift: f64,
}

impl SolveReport {
    pub fn precond_build_pct(&self) -> f64 {
        if self.total_s > 0.0 {
            100.0 * self.precond_build_s / self.total_s
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Whether `δ_new <= ε² δ₀` was reached (as opposed to hitting `l_max`).
    pub converged: bool,
}

/// Residual recomputation period `round(sqrt(n))`.
pub fn restart_period(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).max(1)
}

pub fn pcg_solve(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    m: &Preconditioner,
    l_max: usize,
    epsilon: f64,
) -> Result<PcgOutcome> {
    pcg_solve_observed(a, b, x0, m, l_max, epsilon, |_, _| {})
}

/// PCG with explicit residual recomputation every `round(sqrt(n))`
/// iterations. `observe(l, x)` sees the iterate after each step, with `l`
/// the number of completed iterations.
pub fn pcg_solve_observed(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    m: &Preconditioner,
    l_max: usize,
    epsilon: f64,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<PcgOutcome> {
    let n = a.dim();
    for len in [b.len(), x0.len(), m.dim()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, found: len });
        }
    }
    let period = restart_period(n);
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut s = vec![0.0; n];

    residual(a, b, &x, &mut r)?;
    m.apply_into(&r, &mut d)?;
    let mut delta_new = dot(&r, &d);
    let delta_0 = delta_new;
    if !(delta_0 >= 0.0) {
        return Err(Error::PcgBreakdown {
            iteration: 0,
            reason: format!("initial preconditioned residual rᵀM⁻¹r = {delta_0:e} is not >= 0"),
        });
    }
    let threshold = epsilon * epsilon * delta_0;

    let mut l = 0;
    while l < l_max && delta_new > threshold {
        a.spmv_into(&d, &mut q)?;
        let curvature = dot(&d, &q);
        if !(curvature > 0.0) {
            return Err(Error::PcgBreakdown {
                iteration: l,
                reason: format!("dᵀAd = {curvature:e} is not positive"),
            });
        }
        let alpha = delta_new / curvature;
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += alpha * di;
        }
        if l % period == 0 {
            residual(a, b, &x, &mut r)?;
        } else {
            for (ri, qi) in r.iter_mut().zip(&q) {
                *ri -= alpha * qi;
            }
        }
        m.apply_into(&r, &mut s)?;
        let delta_old = delta_new;
        delta_new = dot(&r, &s);
        if !delta_new.is_finite() {
            return Err(Error::PcgBreakdown {
                iteration: l,
                reason: "non-finite preconditioned residual".into(),
            });
        }
        let beta = delta_new / delta_old;
        for (di, si) in d.iter_mut().zip(&s) {
            *di = si + beta * *di;
        }
        l += 1;
        observe(l, &x);
    }
    Ok(PcgOutcome {
        x,
        iterations: l,
        converged: delta_new <= threshold,
    })
}

fn residual(a: &SparseMatrix, b: &[f64], x: &[f64], r: &mut [f64]) -> Result<()> {
    a.spmv_into(x, r)?;
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    Ok(())
}

/// Initial map drawn per `init`; random values lie in `(-pi, pi]`.
pub fn initial_phi(n: usize, init: Init, seed: u64) -> Vec<f64> {
    match init {
        Init::Zero => vec![0.0; n],
        Init::RandomUniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| PI - TAU * rng.random::<f64>()).collect()
        }
    }
}

/// Unwraps `psi` by iteratively reweighted PCG solves.
pub fn unwrap(psi: &PhaseMap, cfg: &SolverConfig) -> Result<(PhaseMap, SolveReport)> {
    cfg.validate()?;
    if psi.kind() != PhaseKind::Wrapped {
        return Err(Error::InvalidInput("unwrap expects a wrapped map".into()));
    }
    let start = Instant::now();
    let (rows, cols) = (psi.rows(), psi.cols());
    let n = rows * cols;
    let grads = wrapped_gradients(psi)?;
    let mut asm = SystemAssembler::new(rows, cols)?;
    let l_max = cfg.l_max_factor * n;

    let mut report = SolveReport {
        rows,
        cols,
        precond: cfg.precond,
        init: cfg.init,
        outer_iters: 0,
        inner_iters: Vec::new(),
        inner_iters_total: 0,
        final_error: 1.0,
        exit_reason: ExitReason::KMax,
        precond_build_s: 0.0,
        pcg_s: 0.0,
        assemble_s: 0.0,
        total_s: 0.0,
        objective_history: Vec::new(),
        ic0_shift: 0.0,
    };

    let mut phi = initial_phi(n, cfg.init, cfg.seed);
    if cfg.p > 0.0 {
        report.objective_history.push(objective(&phi, &grads, cfg.p)?);
    }
    let mut cached: Option<Preconditioner> = None;
    let mut error = 1.0;
    let mut k = 0;

    while k < cfg.k_max && error > cfg.tol {
        let outer = |e: Error| Error::Outer {
            outer: k,
            source: Box::new(e),
        };

        let t = Instant::now();
        let weights = compute_weights(&phi, &grads, cfg.p, cfg.tau).map_err(outer)?;
        let system = asm.assemble(&weights, &grads).map_err(outer)?;
        report.assemble_s += t.elapsed().as_secs_f64();

        if cached.is_none() || !cfg.reuse_preconditioner {
            let m = Preconditioner::build(cfg.precond, &system.a, cfg.omega).map_err(outer)?;
            report.precond_build_s += m.build_time().as_secs_f64();
            report.ic0_shift = report.ic0_shift.max(m.shift());
            cached = Some(m);
        }
        let m = cached.as_ref().expect("preconditioner built above");

        let t = Instant::now();
        let outcome = pcg_solve(&system.a, &system.b, &phi, m, l_max, cfg.epsilon).map_err(outer)?;
        report.pcg_s += t.elapsed().as_secs_f64();

        let mut next = outcome.x;
        if cfg.remove_mean {
            let mean = next.iter().sum::<f64>() / n as f64;
            next.iter_mut().for_each(|v| *v -= mean);
        }
        let change: f64 = next
            .iter()
            .zip(&phi)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        error = change / norm2(&phi).max(ERROR_DENOMINATOR_FLOOR);
        phi = next;

        report.inner_iters.push(outcome.iterations);
        report.inner_iters_total += outcome.iterations;
        if cfg.p > 0.0 {
            report.objective_history.push(objective(&phi, &grads, cfg.p).map_err(outer)?);
        }
        k += 1;
    }

    report.outer_iters = k;
    report.final_error = error;
    report.exit_reason = if error <= cfg.tol {
        ExitReason::Tol
    } else {
        ExitReason::KMax
    };
    report.total_s = start.elapsed().as_secs_f64();
    Ok((PhaseMap::unwrapped(rows, cols, phi)?, report))
}
