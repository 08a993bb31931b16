//! `blfix`: generate, validate and solve Brascamp-Lieb data from the command line.

use std::error::Error as StdError;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use blfix::datum::{binomial, datum_to_string};
use blfix::io::write_atomic;
use blfix::{
    critical_c, gen_holder, gen_random, gen_young, hilbert, load_datum, read_matrix, save_datum, solve_fixed_point,
    solve_rgd, thompson, validate, BlDatum, IterTrace, RgdConfig, SolveConfig, SolveResult, SolveStatus, SolverKind,
    SpdMatrix, X0,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

const SCHEMA: &str = "blfix/1";
const CRITICAL_C_LIMIT: u128 = 1_000_000;

type CliResult<T> = Result<T, Box<dyn StdError>>;

#[derive(Parser)]
#[command(name = "blfix", version, about = "Brascamp-Lieb constants by fixed-point iteration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a datum and print a run summary as JSON.
    Solve(SolveArgs),
    /// Validate a datum and print the report as JSON.
    Check {
        datum: PathBuf,
    },
    /// Write a generated datum.
    Gen(GenArgs),
    /// Distance between two positive definite matrices.
    Metric {
        kind: MetricKind,
        x: PathBuf,
        y: PathBuf,
    },
    /// Run several solvers on one datum and write their traces.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Solver {
    G,
    Gmu,
    Gtilde,
    Rgd,
}

impl Solver {
    fn name(self) -> &'static str {
        match self {
            Solver::G => "g",
            Solver::Gmu => "gmu",
            Solver::Gtilde => "gtilde",
            Solver::Rgd => "rgd",
        }
    }

    fn kind(self) -> Option<SolverKind> {
        match self {
            Solver::G => Some(SolverKind::PlainG),
            Solver::Gmu => Some(SolverKind::Regularized),
            Solver::Gtilde => Some(SolverKind::Normalized),
            Solver::Rgd => None,
        }
    }
}

#[derive(clap::Args)]
struct SolveArgs {
    datum: PathBuf,
    #[arg(long, value_enum, default_value = "gmu")]
    solver: Solver,
    /// Stopping tolerance: Thompson step for g/gmu/gtilde, Riemannian gradient norm for rgd.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Target accuracy used to choose mu (gmu only).
    #[arg(long)]
    eps: Option<f64>,
    /// Fixed regularization, overriding the automatic choice (gmu only).
    #[arg(long)]
    mu: Option<f64>,
    /// Starting point: `identity` or a matrix JSON file.
    #[arg(long, default_value = "identity")]
    x0: String,
    /// Write the per-iteration trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Holder,
    Young,
    Random,
}

#[derive(clap::Args)]
struct GenArgs {
    kind: GenKind,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    dprime: usize,
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricKind {
    Thompson,
    Hilbert,
}

#[derive(clap::Args)]
struct BenchArgs {
    /// Datum file; when omitted a random datum is generated from the size flags.
    datum: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 5)]
    dprime: usize,
    #[arg(long, default_value_t = 8)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "gmu,rgd")]
    solvers: Vec<Solver>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Target accuracy for gmu; defaults to the tolerance.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Run each solver on its own thread.
    #[arg(long)]
    parallel: bool,
}

#[derive(Serialize)]
struct DatumInfo {
    path: String,
    sha256: String,
    d: usize,
    dprime: usize,
    m: usize,
}

#[derive(Serialize)]
struct ConfigEcho {
    solver: Solver,
    tol: f64,
    max_iter: usize,
    eps: Option<f64>,
    mu: Option<f64>,
    x0: String,
    trace: Option<String>,
}

#[derive(Serialize)]
struct ResultEcho {
    status: SolveStatus,
    converged: bool,
    bl_constant: f64,
    f_value: f64,
    iterations: usize,
    residual: f64,
    stop_tol: f64,
    grad_norm: f64,
    riem_grad_norm: f64,
    mu: Option<f64>,
    mu_changes: Vec<(usize, f64)>,
    x_star: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct RunSummary {
    schema: &'static str,
    command: &'static str,
    args: Vec<String>,
    datum: DatumInfo,
    config: ConfigEcho,
    result: ResultEcho,
    wall_time_s: f64,
}

#[derive(Serialize)]
struct CheckSummary {
    schema: &'static str,
    command: &'static str,
    datum: DatumInfo,
    accepted: bool,
    report: blfix::ValidationReport,
    critical_c: Option<f64>,
}

fn rows(x: &SpdMatrix) -> Vec<Vec<f64>> {
    let m = x.as_matrix();
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn datum_info(path: &Path, datum: &BlDatum) -> CliResult<DatumInfo> {
    let bytes = fs::read(path)?;
    Ok(DatumInfo {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        d: datum.d(),
        dprime: datum.dprime(),
        m: datum.m(),
    })
}

fn read_spd(path: &Path) -> CliResult<SpdMatrix> {
    Ok(SpdMatrix::new(read_matrix(path)?.into_matrix())?)
}

fn exit_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Converged => 0,
        SolveStatus::MaxIter => 2,
        SolveStatus::InfeasibilitySuspected => 3,
    }
}

fn emit(text: &str) -> CliResult<()> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    emit(&format!("{}\n", serde_json::to_string_pretty(value)?))
}

fn run_solver(
    datum: &BlDatum,
    solver: Solver,
    tol: Option<f64>,
    max_iter: Option<usize>,
    eps: Option<f64>,
    mu: Option<f64>,
    x0: X0,
) -> blfix::Result<(SolveResult, IterTrace)> {
    match solver.kind() {
        Some(kind) => {
            let base = SolveConfig::new(kind);
            let config = SolveConfig {
                tol: tol.unwrap_or(base.tol),
                max_iter: max_iter.unwrap_or(base.max_iter),
                epsilon: eps.unwrap_or(base.epsilon),
                mu_override: mu,
                x0,
                ..base
            };
            solve_fixed_point(datum, &config)
        }
        None => {
            let base = RgdConfig::default();
            let config = RgdConfig {
                tol_grad: tol.unwrap_or(base.tol_grad),
                max_iter: max_iter.unwrap_or(base.max_iter),
                x0,
                ..base
            };
            solve_rgd(datum, &config)
        }
    }
}

fn cmd_solve(args: SolveArgs, argv: Vec<String>) -> CliResult<u8> {
    if args.solver != Solver::Gmu && (args.eps.is_some() || args.mu.is_some()) {
        return Err("--eps and --mu apply only to --solver gmu".into());
    }
    let start = Instant::now();
    let datum = load_datum(&args.datum)?;
    let info = datum_info(&args.datum, &datum)?;
    let x0 = match args.x0.as_str() {
        "identity" => X0::Identity,
        path => X0::Given(read_spd(Path::new(path))?),
    };
    let (result, trace) = run_solver(&datum, args.solver, args.tol, args.max_iter, args.eps, args.mu, x0)?;
    if let Some(path) = &args.trace {
        trace.write_csv(path)?;
    }
    let defaults = SolveConfig::default();
    let default_tol = match args.solver {
        Solver::Rgd => RgdConfig::default().tol_grad,
        _ => defaults.tol,
    };
    let summary = RunSummary {
        schema: SCHEMA,
        command: "solve",
        args: argv,
        datum: info,
        config: ConfigEcho {
            solver: args.solver,
            tol: args.tol.unwrap_or(default_tol),
            max_iter: args.max_iter.unwrap_or(defaults.max_iter),
            eps: (args.solver == Solver::Gmu).then(|| args.eps.unwrap_or(defaults.epsilon)),
            mu: args.mu,
            x0: args.x0.clone(),
            trace: args.trace.as_ref().map(|p| p.display().to_string()),
        },
        result: ResultEcho {
            status: result.status,
            converged: result.converged,
            bl_constant: result.bl_constant,
            f_value: result.f_value,
            iterations: result.iterations,
            residual: result.residual,
            stop_tol: result.stop_tol,
            grad_norm: result.grad_norm,
            riem_grad_norm: result.riem_grad_norm,
            mu: result.mu,
            mu_changes: trace.mu_changes.clone(),
            x_star: rows(&result.x_star),
        },
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    print_json(&summary)?;
    Ok(exit_code(result.status))
}

fn cmd_check(path: &Path) -> CliResult<u8> {
    let datum = load_datum(path)?;
    let report = validate(&datum);
    let accepted = report.accepted();
    let critical = if binomial(datum.d(), datum.dprime()) <= CRITICAL_C_LIMIT {
        Some(critical_c(&datum, CRITICAL_C_LIMIT)?)
    } else {
        None
    };
    print_json(&CheckSummary {
        schema: SCHEMA,
        command: "check",
        datum: datum_info(path, &datum)?,
        accepted,
        report,
        critical_c: critical,
    })?;
    if !accepted {
        eprintln!("blfix: datum rejected");
    }
    Ok(if accepted { 0 } else { 1 })
}

fn cmd_gen(args: GenArgs) -> CliResult<u8> {
    let datum = match args.kind {
        GenKind::Holder => gen_holder(args.d, args.m),
        GenKind::Young => gen_young(),
        GenKind::Random => gen_random(args.d, args.dprime, args.m, args.seed)?,
    };
    match &args.output {
        Some(path) => save_datum(&datum, path)?,
        None => emit(&datum_to_string(&datum))?,
    }
    Ok(0)
}

fn cmd_metric(kind: MetricKind, x: &Path, y: &Path) -> CliResult<u8> {
    let (x, y) = (read_spd(x)?, read_spd(y)?);
    let value = match kind {
        MetricKind::Thompson => thompson(&x, &y)?,
        MetricKind::Hilbert => hilbert(&x, &y)?,
    };
    emit(&format!("{value}\n"))?;
    Ok(0)
}

struct BenchRun {
    solver: Solver,
    result: SolveResult,
    trace: IterTrace,
    wall_time_s: f64,
}

impl BenchRun {
    /// First iteration at which the solver's own stopping measure reached `tol`.
    fn iterations_to(&self, tol: f64) -> Option<usize> {
        let rows = &self.trace.rows;
        match self.solver {
            Solver::Rgd => rows.iter().find(|r| r.grad_norm <= tol),
            _ => rows.iter().skip(1).find(|r| r.thompson_step <= tol),
        }
        .map(|r| r.iter)
    }
}

fn bench_one(datum: &BlDatum, solver: Solver, args: &BenchArgs) -> blfix::Result<BenchRun> {
    let start = Instant::now();
    let eps = (solver == Solver::Gmu).then(|| args.eps.unwrap_or(args.tol));
    let (result, trace) = run_solver(datum, solver, Some(args.tol), Some(args.max_iter), eps, None, X0::Identity)?;
    Ok(BenchRun { solver, result, trace, wall_time_s: start.elapsed().as_secs_f64() })
}

fn cmd_bench(args: BenchArgs) -> CliResult<u8> {
    if args.solvers.is_empty() {
        return Err("--solvers must name at least one solver".into());
    }
    let datum = match &args.datum {
        Some(path) => load_datum(path)?,
        None => gen_random(args.d, args.dprime, args.m, args.seed)?,
    };
    let runs: Vec<blfix::Result<BenchRun>> = if args.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = args
                .solvers
                .iter()
                .map(|&solver| {
                    let (datum, args) = (&datum, &args);
                    scope.spawn(move || bench_one(datum, solver, args))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
        })
    } else {
        args.solvers.iter().map(|&s| bench_one(&datum, s, &args)).collect()
    };
    let runs = runs.into_iter().collect::<blfix::Result<Vec<_>>>()?;

    let mut csv = String::from("solver,status,iterations,iterations_to_tol,f_value,bl_constant,wall_time_s\n");
    let mut table = format!(
        "{:<8} {:<24} {:>10} {:>17} {:>24} {:>12}\n",
        "solver", "status", "iterations", "iterations_to_tol", "F", "wall_time_s"
    );
    for run in &runs {
        let to_tol = run.iterations_to(args.tol);
        let status = format!("{:?}", run.result.status);
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            run.solver.name(),
            status,
            run.result.iterations,
            to_tol.map_or(String::new(), |k| k.to_string()),
            run.result.f_value,
            run.result.bl_constant,
            run.wall_time_s
        ));
        table.push_str(&format!(
            "{:<8} {:<24} {:>10} {:>17} {:>24} {:>12.4}\n",
            run.solver.name(),
            status,
            run.result.iterations,
            to_tol.map_or("-".to_string(), |k| k.to_string()),
            run.result.f_value,
            run.wall_time_s
        ));
    }
    // Every run has finished before anything is written.
    fs::create_dir_all(&args.out_dir)?;
    for run in &runs {
        run.trace.write_csv(&args.out_dir.join(format!("trace_{}.csv", run.solver.name())))?;
    }
    write_atomic(&args.out_dir.join("summary.csv"), csv.as_bytes())?;
    emit(&table)?;
    Ok(0)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(args, argv),
        Command::Check { datum } => cmd_check(&datum),
        Command::Gen(args) => cmd_gen(args),
        Command::Metric { kind, x, y } => cmd_metric(kind, &x, &y),
        Command::Bench(args) => cmd_bench(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("blfix: {e}");
            ExitCode::from(1)
        }
    }
}
