//! Scale-sweep benchmark over the preconditioners.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assemble::{stencil_nnz, SystemAssembler};
use crate::error::{Error, Result};
use crate::grid::wrap_map;
use crate::io::append_bench_csv;
use crate::metrics::{q_error, q_error_mean_aligned};
use crate::precond::PrecondKind;
use crate::solver::{unwrap, ExitReason, SolverConfig};
use crate::synth::{generate, scaled_size, sweep_sizes, Shape, SynthSpec, DEFAULT_AMPLITUDE};

/// One benchmark row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub scale: f64,
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
    pub density_pct: f64,
    pub preconditioner: PrecondKind,
    pub p: f64,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub precond_build_s: f64,
    pub precond_build_pct: f64,
    pub pcg_s: f64,
    pub total_s: f64,
    pub q_raw: f64,
    pub q_mean_aligned: f64,
    pub exit_reason: ExitReason,
    pub seed: u64,
}

/// `100 * nnz / n²` for an `n x n` matrix.
pub fn density_pct(nnz: usize, n: usize) -> f64 {
    100.0 * nnz as f64 / (n as f64 * n as f64)
}

impl BenchRecord {
    /// CSV fields in [`crate::io::BENCH_COLUMNS`] order.
    pub fn to_fields(&self) -> Vec<String> {
        vec![
            format!("{:.2}", self.scale),
            self.rows.to_string(),
            self.cols.to_string(),
            self.nnz.to_string(),
            format!("{:.4}", self.density_pct),
            self.preconditioner.to_string(),
            self.p.to_string(),
            self.outer_iters.to_string(),
            self.inner_iters_total.to_string(),
            format!("{:.6}", self.precond_build_s),
            format!("{:.4}", self.precond_build_pct),
            format!("{:.6}", self.pcg_s),
            format!("{:.6}", self.total_s),
            format!("{:.9e}", self.q_raw),
            format!("{:.9e}", self.q_mean_aligned),
            self.exit_reason.to_string(),
            self.seed.to_string(),
        ]
    }

    pub fn from_fields(row: &csv::StringRecord) -> Result<Self> {
        if row.len() != crate::io::BENCH_COLUMNS.len() {
            return Err(Error::InvalidInput(format!(
                "bench row has {} fields, expected {}",
                row.len(),
                crate::io::BENCH_COLUMNS.len()
            )));
        }
        fn num<T: std::str::FromStr>(row: &csv::StringRecord, i: usize) -> Result<T> {
            row[i].trim().parse().map_err(|_| {
                Error::InvalidInput(format!(
                    "bad value {:?} in column {}",
                    &row[i],
                    crate::io::BENCH_COLUMNS[i]
                ))
            })
        }
        Ok(Self {
            scale: num(row, 0)?,
            rows: num(row, 1)?,
            cols: num(row, 2)?,
            nnz: num(row, 3)?,
            density_pct: num(row, 4)?,
            preconditioner: row[5].parse()?,
            p: num(row, 6)?,
            outer_iters: num(row, 7)?,
            inner_iters_total: num(row, 8)?,
            precond_build_s: num(row, 9)?,
            precond_build_pct: num(row, 10)?,
            pcg_s: num(row, 11)?,
            total_s: num(row, 12)?,
            q_raw: num(row, 13)?,
            q_mean_aligned: num(row, 14)?,
            exit_reason: row[15].parse()?,
            seed: num(row, 16)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub scales: Vec<f64>,
    pub preconds: Vec<PrecondKind>,
    pub repeat: usize,
    pub amplitude: f64,
    pub noise_sigma: f64,
    pub csv: Option<PathBuf>,
    /// Solver settings; `precond` is overridden per cell and `seed` seeds
    /// both the synthetic map and the initial guess.
    pub solver: SolverConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            scales: sweep_sizes().into_iter().map(|(s, _, _)| s).collect(),
            preconds: PrecondKind::ALL.to_vec(),
            repeat: 1,
            amplitude: DEFAULT_AMPLITUDE,
            noise_sigma: 0.0,
            csv: None,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub record: BenchRecord,
    pub ic0_shift: f64,
    /// Failure message for breakdown rows.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct BenchOutcome {
    pub cells: Vec<CellResult>,
    /// Cells skipped before solving (structure self-check failures).
    pub aborted: Vec<String>,
}

impl BenchOutcome {
    pub fn succeeded(&self) -> usize {
        self.cells.iter().filter(|c| c.failure.is_none()).count()
    }

    pub fn records(&self) -> Vec<BenchRecord> {
        self.cells.iter().map(|c| c.record.clone()).collect()
    }
}

/// Runs every (scale, preconditioner) cell `repeat` times, scales ascending
/// and preconditioners in listing order. Rows are appended to the CSV as
/// they complete; `progress` sees each finished cell.
pub fn run_bench(opts: &BenchOptions, mut progress: impl FnMut(&CellResult)) -> Result<BenchOutcome> {
    let mut scales = opts.scales.clone();
    if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidParameter("scales must be positive".into()));
    }
    scales.sort_by(f64::total_cmp);
    scales.dedup();
    let mut preconds = opts.preconds.clone();
    preconds.sort();
    preconds.dedup();
    opts.solver.validate()?;

    let mut outcome = BenchOutcome::default();
    for &scale in &scales {
        let (rows, cols) = scaled_size(scale)?;
        let nnz = SystemAssembler::new(rows, cols)?.system().a.nnz();
        if nnz != stencil_nnz(rows, cols) {
            outcome.aborted.push(format!(
                "scale {scale}: assembled nnz {nnz} != 5MN - 2(M+N) = {}",
                stencil_nnz(rows, cols)
            ));
            continue;
        }
        let truth = generate(&SynthSpec {
            shape: Shape::GaussianPeaks,
            rows,
            cols,
            amplitude: opts.amplitude,
            seed: opts.solver.seed,
            noise_sigma: opts.noise_sigma,
        })?;
        let psi = wrap_map(&truth)?;

        for &kind in &preconds {
            for _ in 0..opts.repeat.max(1) {
                let cfg = SolverConfig {
                    precond: kind,
                    ..opts.solver.clone()
                };
                let mut record = BenchRecord {
                    scale,
                    rows,
                    cols,
                    nnz,
                    density_pct: density_pct(nnz, rows * cols),
                    preconditioner: kind,
                    p: cfg.p,
                    outer_iters: 0,
                    inner_iters_total: 0,
                    precond_build_s: 0.0,
                    precond_build_pct: 0.0,
                    pcg_s: 0.0,
                    total_s: 0.0,
                    q_raw: f64::NAN,
                    q_mean_aligned: f64::NAN,
                    exit_reason: ExitReason::Breakdown,
                    seed: cfg.seed,
                };
                let started = Instant::now();
                let cell = match unwrap(&psi, &cfg) {
                    Ok((phi, report)) => {
                        record.outer_iters = report.outer_iters;
                        record.inner_iters_total = report.inner_iters_total;
                        record.precond_build_s = report.precond_build_s;
                        record.pcg_s = report.pcg_s;
                        record.total_s = report.total_s;
                        record.precond_build_pct = report.precond_build_pct();
                        record.q_raw = q_error(truth.values(), phi.values())?.value();
                        record.q_mean_aligned =
                            q_error_mean_aligned(truth.values(), phi.values())?.value();
                        record.exit_reason = report.exit_reason;
                        CellResult {
                            record,
                            ic0_shift: report.ic0_shift,
                            failure: None,
                        }
                    }
                    Err(e) => {
                        record.total_s = started.elapsed().as_secs_f64();
                        CellResult {
                            record,
                            ic0_shift: 0.0,
                            failure: Some(e.to_string()),
                        }
                    }
                };
                if let Some(path) = &opts.csv {
                    append_bench_csv(&cell.record, path)?;
                }
                progress(&cell);
                outcome.cells.push(cell);
            }
        }
    }
    Ok(outcome)
}

/// Plain-text table of all cells ordered by total time.
pub fn summary_table(cells: &[CellResult]) -> String {
    let mut sorted: Vec<&CellResult> = cells.iter().collect();
    sorted.sort_by(|a, b| a.record.total_s.total_cmp(&b.record.total_s));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>6} {:>11} {:>9} {:>6} {:>8} {:>10} {:>10} {:>8} {:>10} {:>9} {:>8}",
        "scale", "size", "precond", "outer", "inner", "build_s", "total_s", "build%", "q_aligned", "exit", "ic0_shift"
    );
    for c in sorted {
        let r = &c.record;
        let _ = writeln!(
            out,
            "{:>6.2} {:>11} {:>9} {:>6} {:>8} {:>10.4} {:>10.4} {:>8.3} {:>10.2e} {:>9} {:>8.1e}",
            r.scale,
            format!("{}x{}", r.cols, r.rows),
            r.preconditioner,
            r.outer_iters,
            r.inner_iters_total,
            r.precond_build_s,
            r.total_s,
            r.precond_build_pct,
            r.q_mean_aligned,
            r.exit_reason,
            c.ic0_shift,
        );
    }
    out
}
