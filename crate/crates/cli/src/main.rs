//! `lpunwrap` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or validation
//! error, 3 solver breakdown.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lpunwrap::assemble::{compute_weights, SystemAssembler};
use lpunwrap::bench::{run_bench, summary_table, BenchOptions};
use lpunwrap::grid::{wrap_map, wrapped_gradients, PhaseKind};
use lpunwrap::io::{read_phm, write_pgm, write_phm};
use lpunwrap::metrics::{q_error, q_error_mean_aligned};
use lpunwrap::precond::PrecondKind;
use lpunwrap::solver::{unwrap, Init, SolveReport, SolverConfig};
use lpunwrap::synth::{generate, Shape, SynthSpec, DEFAULT_AMPLITUDE};
use lpunwrap::Error;

#[derive(Parser)]
#[command(name = "lpunwrap", version, about = "Lp-norm 2-D phase unwrapping with preconditioned CG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phase map and write its wrapped version.
    Wrap(WrapArgs),
    /// Unwrap a wrapped PHM map.
    Unwrap(UnwrapArgs),
    /// Run the scale x preconditioner benchmark sweep.
    Bench(BenchArgs),
    /// Print the normalised error Q between two maps.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    GaussianPeaks,
    Ramp,
    Parabola,
}

impl From<ShapeArg> for Shape {
    fn from(s: ShapeArg) -> Self {
        match s {
            ShapeArg::GaussianPeaks => Shape::GaussianPeaks,
            ShapeArg::Ramp => Shape::Ramp,
            ShapeArg::Parabola => Shape::Parabola,
        }
    }
}

#[derive(Args)]
struct WrapArgs {
    #[arg(long, value_enum, default_value = "gaussian-peaks")]
    shape: ShapeArg,
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Peak amplitude in radians.
    #[arg(long, default_value_t = DEFAULT_AMPLITUDE, allow_negative_numbers = true)]
    amplitude: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// Wrapped map output (PHM).
    #[arg(long)]
    out: PathBuf,
    /// Optional unwrapped ground-truth output (PHM).
    #[arg(long)]
    truth_out: Option<PathBuf>,
    /// Optional PGM preview of the wrapped map.
    #[arg(long)]
    pgm: Option<PathBuf>,
}

/// Solver flags shared by `unwrap` and `bench`.
#[derive(Args, Clone)]
struct SolverArgs {
    /// Norm exponent, must be < 2.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    p: f64,
    #[arg(long, default_value_t = 0.01)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    omega: f64,
    #[arg(long, default_value_t = 500)]
    kmax: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 2)]
    lmax_factor: usize,
    #[arg(long, default_value_t = 0.005)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial guess: random | zero.
    #[arg(long, default_value = "random")]
    init: String,
    /// Subtract the mean after each inner solve.
    #[arg(long)]
    remove_mean: bool,
    /// Build the preconditioner only once.
    #[arg(long)]
    reuse_precond: bool,
}

impl SolverArgs {
    fn config(&self, precond: PrecondKind) -> Result<SolverConfig, CliError> {
        let cfg = SolverConfig {
            p: self.p,
            tau: self.tau,
            k_max: self.kmax,
            tol: self.tol,
            l_max_factor: self.lmax_factor,
            epsilon: self.epsilon,
            precond,
            omega: self.omega,
            seed: self.seed,
            init: self.init.parse::<Init>().map_err(CliError::from)?,
            remove_mean: self.remove_mean,
            reuse_preconditioner: self.reuse_precond,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct UnwrapArgs {
    /// Wrapped input map (PHM).
    input: PathBuf,
    /// Unwrapped output map (PHM).
    #[arg(long)]
    out: PathBuf,
    /// identity | jacobi | ilu0 | ic0 | ssor
    #[arg(long, default_value = "ilu0")]
    precond: String,
    #[command(flatten)]
    solver: SolverArgs,
    /// Print the report as JSON on stdout (human summary goes to stderr).
    #[arg(long)]
    json: bool,
    /// Optional PGM preview of the rewrapped result.
    #[arg(long)]
    pgm: Option<PathBuf>,
    /// Write the system assembled at the final solution in Matrix Market format.
    #[arg(long)]
    export_matrix: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated scale factors (default: the eight sweep scales).
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    /// Comma-separated preconditioners (default: all five).
    #[arg(long, value_delimiter = ',')]
    preconds: Option<Vec<String>>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    #[arg(long, default_value_t = DEFAULT_AMPLITUDE)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Reference map (PHM).
    a: PathBuf,
    /// Map to compare (PHM).
    b: PathBuf,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_breakdown() {
            3
        } else {
            match e {
                Error::Io(_) => 1,
                _ => 2,
            }
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self { code: 1, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Wrap(a) => cmd_wrap(a),
        Command::Unwrap(a) => cmd_unwrap(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn cmd_wrap(args: WrapArgs) -> Result<(), CliError> {
    let spec = SynthSpec {
        shape: args.shape.into(),
        rows: args.rows,
        cols: args.cols,
        amplitude: args.amplitude,
        seed: args.seed,
        noise_sigma: args.noise_sigma,
    };
    let truth = generate(&spec)?;
    let psi = wrap_map(&truth)?;
    write_phm(&psi, &args.out)?;
    if let Some(path) = &args.truth_out {
        write_phm(&truth, path)?;
    }
    if let Some(path) = &args.pgm {
        write_pgm(&psi, path, false)?;
    }
    let (lo, hi) = truth.min_max();
    let (wlo, whi) = psi.min_max();
    println!("size        {} rows x {} cols", truth.rows(), truth.cols());
    println!("unwrapped   min {lo:.6} max {hi:.6} span {:.6}", hi - lo);
    println!("wrapped     min {wlo:.6} max {whi:.6}");
    println!("wrote       {}", args.out.display());
    Ok(())
}

fn print_report(report: &SolveReport, to_stderr: bool) {
    let text = format!(
        "outer_iters        {}\n\
         inner_iters_total  {}\n\
         final_error        {:.3e}\n\
         exit_reason        {}\n\
         precond            {}\n\
         init               {}\n\
         precond_build_s    {:.6} ({:.3}%)\n\
         assemble_s         {:.6}\n\
         pcg_s              {:.6}\n\
         total_s            {:.6}",
        report.outer_iters,
        report.inner_iters_total,
        report.final_error,
        report.exit_reason,
        report.precond,
        report.init,
        report.precond_build_s,
        report.precond_build_pct(),
        report.assemble_s,
        report.pcg_s,
        report.total_s,
    );
    if to_stderr {
        eprintln!("{text}");
    } else {
        println!("{text}");
    }
}

fn cmd_unwrap(args: UnwrapArgs) -> Result<(), CliError> {
    let precond: PrecondKind = args.precond.parse()?;
    let cfg = args.solver.config(precond)?;
    let psi = read_phm(&args.input)?;
    if psi.kind() != PhaseKind::Wrapped {
        return Err(CliError::usage(format!(
            "{} holds an unwrapped map",
            args.input.display()
        )));
    }
    let (phi, report) = unwrap(&psi, &cfg)?;
    write_phm(&phi, &args.out)?;
    if let Some(path) = &args.pgm {
        write_pgm(&phi, path, true)?;
    }
    if let Some(path) = &args.export_matrix {
        let grads = wrapped_gradients(&psi)?;
        let weights = compute_weights(phi.values(), &grads, cfg.p, cfg.tau)?;
        let mut asm = SystemAssembler::new(psi.rows(), psi.cols())?;
        let system = asm.assemble(&weights, &grads)?;
        system.a.write_matrix_market(BufWriter::new(File::create(path)?))?;
    }
    if args.json {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError { code: 1, message: e.to_string() })?;
        println!("{json}");
        print_report(&report, true);
    } else {
        print_report(&report, false);
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let preconds = match &args.preconds {
        Some(list) => list
            .iter()
            .map(|s| s.parse::<PrecondKind>())
            .collect::<Result<Vec<_>, _>>()?,
        None => PrecondKind::ALL.to_vec(),
    };
    if args.repeat == 0 {
        return Err(CliError::usage("--repeat must be >= 1"));
    }
    let solver = args.solver.config(PrecondKind::Identity)?;
    let mut opts = BenchOptions {
        preconds,
        repeat: args.repeat,
        amplitude: args.amplitude,
        noise_sigma: args.noise_sigma,
        csv: args.csv.clone(),
        solver,
        ..Default::default()
    };
    if let Some(scales) = args.scales {
        opts.scales = scales;
    }
    let outcome = run_bench(&opts, |cell| {
        let r = &cell.record;
        match &cell.failure {
            None => eprintln!(
                "scale {:.2} {:>8} outer {:>4} inner {:>7} total {:.3}s",
                r.scale, r.preconditioner, r.outer_iters, r.inner_iters_total, r.total_s
            ),
            Some(msg) => eprintln!("scale {:.2} {:>8} BREAKDOWN: {msg}", r.scale, r.preconditioner),
        }
    })?;
    for msg in &outcome.aborted {
        eprintln!("aborted: {msg}");
    }
    print!("{}", summary_table(&outcome.cells));
    if outcome.succeeded() == 0 {
        return Err(CliError { code: 1, message: "no benchmark cell succeeded".into() });
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let a = read_phm(&args.a)?;
    let b = read_phm(&args.b)?;
    if !a.same_shape(&b) {
        return Err(CliError::usage(format!(
            "shape mismatch: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let raw = q_error(a.values(), b.values())?;
    let aligned = q_error_mean_aligned(a.values(), b.values())?;
    println!("q_raw = {}", raw.value());
    println!("q_mean_aligned = {}", aligned.value());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let breakdown = Error::Outer {
            outer: 3,
            source: Box::new(Error::PcgBreakdown {
                iteration: 7,
                reason: "dᵀAd <= 0".into(),
            }),
        };
        assert_eq!(CliError::from(breakdown).code, 3);
        let io = Error::Io(std::io::Error::other("disk"));
        assert_eq!(CliError::from(io).code, 1);
        assert_eq!(CliError::from(Error::InvalidParameter("p".into())).code, 2);
    }
}
