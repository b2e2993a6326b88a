//! Lp-norm two-dimensional phase unwrapping.
//!
//! The unwrapped phase is found by iteratively reweighted least squares: each
//! outer iteration recomputes per-edge weights from the current residuals,
//! assembles a weighted 5-point Neumann system and solves it with
//! preconditioned conjugate gradient. Five no-fill-in preconditioners are
//! available (identity, Jacobi, ILU(0), IC(0), SSOR).
//!
//! ```
//! use lpunwrap::{grid, solver, synth};
//!
//! let truth = synth::generate(&synth::SynthSpec {
//!     shape: synth::Shape::Ramp,
//!     rows: 16,
//!     cols: 16,
//!     amplitude: 12.0,
//!     seed: 1,
//!     noise_sigma: 0.0,
//! })?;
//! let psi = grid::wrap_map(&truth)?;
//! let cfg = solver::SolverConfig { p: 1.0, ..Default::default() };
//! let (phi, report) = solver::unwrap(&psi, &cfg)?;
//! assert_eq!(phi.rows(), 16);
//! assert!(report.outer_iters >= 1);
//! # Ok::<(), lpunwrap::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assemble;
pub mod bench;
mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod precond;
pub mod solver;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
