//! The `secgame` command line.
//!
//! Exit codes: 0 success, 2 non-convergence, 3 invalid input or usage,
//! 4 verification or gradient-check failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::best_response::best_response_solve;
use crate::config::{parse_scenario, to_json};
use crate::error::Error;
use crate::pc::{self, write_trace_csv};
use crate::scenarios::{self, run_sweep, ShareCoupling, Solved, SweepParam, SweepSpec};
use crate::verify::verify_equilibrium_with_tol;
use crate::vi::{component_name, fd_check, random_interior_points};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

/// Gradient checks fail above this relative error.
pub const GRADCHECK_LIMIT: f64 = 1e-5;

/// Environment variable capping the worker threads of cold-start sweeps.
pub const THREADS_ENV: &str = "SECGAME_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "secgame",
    version,
    about = "Equilibria of budget-constrained cybersecurity investment games"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    /// Loss gradient carries the attack multiplier.
    Default,
    /// Loss gradient without the attack multiplier.
    #[value(alias = "literal-eq13")]
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Pc,
    BestResponse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Coupling {
    Complement,
    None,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve a scenario (builtin name or JSON file) and print the equilibrium.
    Solve {
        scenario: String,
        /// Write the solution as a one-row CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the per-iteration trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Print the resolved scenario file and exit.
        #[arg(long)]
        dump: bool,
        #[arg(long, value_enum)]
        variant: Option<Variant>,
        #[arg(long, value_enum, default_value = "pc")]
        solver: SolverKind,
    },
    /// Solve over a grid of one parameter and write CSV.
    Sweep {
        /// Builtin sweep (exp2, exp3, exp4); otherwise use the flags.
        name: Option<String>,
        /// Base scenario for custom sweeps.
        #[arg(long, default_value = "exp1")]
        scenario: String,
        /// Retailer-indexed parameter such as B1, D1, t1, c2, mu1.
        #[arg(long)]
        param: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        from: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        to: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_enum)]
        coupling: Option<Coupling>,
        /// Solve every grid point from the scenario's initial point (in parallel).
        #[arg(long)]
        cold: bool,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve, then certify the Nash property by grid search.
    Verify {
        scenario: String,
        #[arg(long, default_value_t = 50)]
        grid: usize,
        /// Largest tolerated utility improvement.
        #[arg(long, default_value_t = crate::verify::DEFAULT_IMPROVEMENT_TOL)]
        tol: f64,
        #[arg(long, value_enum)]
        variant: Option<Variant>,
    },
    /// Compare the operator with finite differences at random interior points.
    Gradcheck {
        scenario: String,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        #[arg(long, value_enum)]
        variant: Option<Variant>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonFinite { .. } | Error::DegenerateDirection => EXIT_NOT_CONVERGED,
            _ => EXIT_INVALID,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INVALID,
        message: message.into(),
    }
}

type Outcome = std::result::Result<i32, Failure>;

/// Parse `args` (program name first) and run. Output goes to `out`,
/// diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_INVALID
                }
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match command {
        Command::Solve {
            scenario,
            out: csv_path,
            trace,
            dump,
            variant,
            solver,
        } => cmd_solve(
            &scenario,
            csv_path.as_deref(),
            trace.as_deref(),
            dump,
            variant,
            solver,
            out,
        ),
        Command::Sweep {
            name,
            scenario,
            param,
            from,
            to,
            steps,
            coupling,
            cold,
            out: csv_path,
        } => {
            let spec = sweep_spec(
                name.as_deref(),
                &scenario,
                param.as_deref(),
                from,
                to,
                steps,
                coupling,
                cold,
            )?;
            cmd_sweep(spec, csv_path.as_deref(), out, err)
        }
        Command::Verify {
            scenario,
            grid,
            tol,
            variant,
        } => cmd_verify(&scenario, grid, tol, variant, out),
        Command::Gradcheck {
            scenario,
            points,
            step,
            variant,
            seed,
        } => cmd_gradcheck(&scenario, points, step, variant, seed, out),
    }
}

/// A builtin name or a path to a scenario file.
pub fn load_scenario(arg: &str) -> crate::Result<scenarios::Scenario> {
    if let Some(s) = scenarios::builtin(arg) {
        return Ok(s);
    }
    let path = Path::new(arg);
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound && path.extension().is_none() {
            Error::UnknownScenario(arg.to_string())
        } else {
            Error::Schema(format!("{arg}: {e}"))
        }
    })?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or(arg);
    parse_scenario(&text, name)
}

fn with_variant(mut s: scenarios::Scenario, variant: Option<Variant>) -> scenarios::Scenario {
    if let Some(v) = variant {
        s.model.loss_gradient_includes_multiplier = v == Variant::Default;
    }
    s
}

fn create(path: &Path) -> std::result::Result<io::BufWriter<fs::File>, Failure> {
    fs::File::create(path).map(io::BufWriter::new).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })
}

fn print_solution(s: &Solved, name: &str, out: &mut dyn Write) -> io::Result<()> {
    let d = &s.decision;
    let r = &s.report;
    let plural = |k: usize, word: &str| format!("{k} {word}{}", if k == 1 { "" } else { "s" });
    writeln!(
        out,
        "scenario {name}: {}, {}",
        plural(d.m, "retailer"),
        plural(d.n, "market")
    )?;
    writeln!(
        out,
        "{} after {} iterations, natural residual {:.3e}",
        if r.converged { "converged" } else { "NOT CONVERGED" },
        r.iterations,
        r.final_residual
    )?;
    write!(out, "\n{:<10}", "Q")?;
    for y in 1..=d.n {
        write!(out, " {:>12}", format!("market {y}"))?;
    }
    writeln!(out)?;
    for x in 0..d.m {
        write!(out, "{:<10}", format!("retailer {}", x + 1))?;
        for y in 0..d.n {
            write!(out, " {:>12.6}", d.q_at(x, y))?;
        }
        writeln!(out)?;
    }
    writeln!(
        out,
        "\n{:<10} {:>12} {:>12} {:>14} {:>12}",
        "", "u", "lambda", "E(U)", "G"
    )?;
    for x in 0..d.m {
        writeln!(
            out,
            "{:<10} {:>12.6} {:>12.3e} {:>14.6} {:>12.6}",
            format!("retailer {}", x + 1),
            d.u[x],
            d.lambda[x],
            s.utilities[x],
            s.budget_gaps[x]
        )?;
    }
    writeln!(out, "\nu_bar = {:.6}", s.mean_level)
}

/// One-row CSV:
/// `u_1..u_m,Q_1_1..Q_m_n,lambda_1..lambda_m,EU_1..EU_m,residual,iters,converged`.
pub fn write_solution_csv<W: Write>(s: &Solved, out: W) -> io::Result<()> {
    let d = &s.decision;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header: Vec<String> = (1..=d.m).map(|x| format!("u_{x}")).collect();
    for x in 1..=d.m {
        header.extend((1..=d.n).map(|y| format!("Q_{x}_{y}")));
    }
    header.extend((1..=d.m).map(|x| format!("lambda_{x}")));
    header.extend((1..=d.m).map(|x| format!("EU_{x}")));
    header.extend(["residual", "iters", "converged"].map(String::from));
    w.write_record(&header)?;
    let mut rec: Vec<String> = d.u.iter().map(f64::to_string).collect();
    rec.extend(d.q.iter().map(f64::to_string));
    rec.extend(d.lambda.iter().map(f64::to_string));
    rec.extend(s.utilities.iter().map(f64::to_string));
    rec.push(s.report.final_residual.to_string());
    rec.push(s.report.iterations.to_string());
    rec.push(s.report.converged.to_string());
    w.write_record(&rec)?;
    w.flush()
}

fn cmd_solve(
    arg: &str,
    csv_path: Option<&Path>,
    trace_path: Option<&Path>,
    dump: bool,
    variant: Option<Variant>,
    solver: SolverKind,
    out: &mut dyn Write,
) -> Outcome {
    let mut scenario = with_variant(load_scenario(arg)?, variant);
    if dump {
        write!(out, "{}", to_json(&scenario))?;
        return Ok(EXIT_OK);
    }
    scenario.solver.record_trace = trace_path.is_some();
    let problem = scenario.problem()?;
    let x0 = scenario.initial.to_flat();
    let report = match solver {
        SolverKind::Pc => pc::solve(&problem, &scenario.solver, &x0)?,
        SolverKind::BestResponse => best_response_solve(&problem, &scenario.solver, &x0)?,
    };
    let solved = Solved::from_report(problem, report)?;
    print_solution(&solved, &scenario.name, out)?;
    if let Some(reference) = scenarios::reference(arg) {
        writeln!(out)?;
        write!(out, "{}", scenarios::reconcile(reference, &solved)?)?;
    }
    if let Some(path) = csv_path {
        write_solution_csv(&solved, create(path)?)?;
    }
    if let Some(path) = trace_path {
        let rows = solved.report.trace.as_deref().unwrap_or(&[]);
        write_trace_csv(rows, create(path)?)?;
    }
    Ok(if solved.report.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

/// Worker cap from [`THREADS_ENV`], if set.
fn threads_from_env() -> std::result::Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(invalid(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

#[allow(clippy::too_many_arguments)]
fn sweep_spec(
    name: Option<&str>,
    scenario: &str,
    param: Option<&str>,
    from: Option<f64>,
    to: Option<f64>,
    steps: Option<usize>,
    coupling: Option<Coupling>,
    cold: bool,
) -> std::result::Result<SweepSpec, Failure> {
    let mut spec = match name {
        Some(n) => {
            if param.is_some() || from.is_some() || to.is_some() || steps.is_some() {
                return Err(invalid("a builtin sweep takes no --param/--from/--to/--steps"));
            }
            scenarios::builtin_sweep(n).ok_or_else(|| {
                invalid(format!(
                    "unknown sweep `{n}` (builtins: {})",
                    scenarios::BUILTIN_SWEEPS.join(", ")
                ))
            })?
        }
        None => {
            let (Some(p), Some(f), Some(t), Some(s)) = (param, from, to, steps) else {
                return Err(invalid("custom sweeps need --param, --from, --to and --steps"));
            };
            let param: SweepParam = p.parse()?;
            SweepSpec::new(load_scenario(scenario)?, param, f, t, s)
        }
    };
    if let Some(c) = coupling {
        spec.coupling = match c {
            Coupling::Complement => ShareCoupling::Complement,
            Coupling::None => ShareCoupling::None,
        };
    }
    spec.warm_start = !cold;
    spec.threads = threads_from_env()?;
    spec.validate()?;
    Ok(spec)
}

fn cmd_sweep(spec: SweepSpec, csv_path: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let result = run_sweep(&spec)?;
    // Summary goes to stdout only when the CSV does not.
    let summary: &mut dyn Write = if csv_path.is_some() { out } else { err };
    let converged = result.rows.iter().filter(|r| r.converged).count();
    writeln!(
        summary,
        "sweep {} from {} to {} ({} points): {converged} converged",
        spec.param,
        spec.from,
        spec.to,
        result.rows.len()
    )?;
    let crossings = result.level_crossings()?;
    if crossings.is_empty() {
        writeln!(summary, "no level crossings")?;
    }
    for (a, b, p) in crossings {
        writeln!(summary, "{a}={b} at {}\u{2248}{p:.4}", spec.param)?;
    }
    match csv_path {
        Some(path) => result.write_csv(create(path)?)?,
        None => {
            result.write_csv(&mut *out)?;
        }
    }
    Ok(if converged == result.rows.len() {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn cmd_verify(arg: &str, grid: usize, tol: f64, variant: Option<Variant>, out: &mut dyn Write) -> Outcome {
    if grid < 2 {
        return Err(invalid("--grid must be at least 2"));
    }
    if !(tol >= 0.0) {
        return Err(invalid("--tol must be nonnegative"));
    }
    let scenario = with_variant(load_scenario(arg)?, variant);
    let solved = scenario.solve()?;
    writeln!(
        out,
        "solved {} in {} iterations, natural residual {:.3e}",
        scenario.name, solved.report.iterations, solved.report.final_residual
    )?;
    if !solved.report.converged {
        writeln!(out, "solver did not converge; nothing to verify")?;
        return Ok(EXIT_NOT_CONVERGED);
    }
    let report = verify_equilibrium_with_tol(&scenario.model, &solved.decision, grid, tol)?;
    writeln!(out, "{report}")?;
    Ok(if report.certified { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_gradcheck(
    arg: &str,
    points: usize,
    step: f64,
    variant: Option<Variant>,
    seed: u64,
    out: &mut dyn Write,
) -> Outcome {
    if points == 0 {
        return Err(invalid("--points must be at least 1"));
    }
    if !(1e-7..=1e-4).contains(&step) {
        return Err(invalid(format!("--step {step} outside [1e-7, 1e-4]")));
    }
    let scenario = with_variant(load_scenario(arg)?, variant);
    let problem = scenario.problem()?;
    let (m, n) = (problem.m(), problem.n());
    let mut worst = (0.0_f64, 0usize, 0usize);
    for (k, x) in random_interior_points(&problem, points, 1e-3, seed).iter().enumerate() {
        let r = fd_check(&problem, x, step)?;
        if r.max_rel_error > worst.0 || k == 0 {
            worst = (r.max_rel_error, r.worst_index, k);
        }
    }
    let pass = worst.0 < GRADCHECK_LIMIT;
    writeln!(
        out,
        "{} points, step {step:e}: max relative error {:.3e} at {} (point {})",
        points,
        worst.0,
        component_name(m, n, worst.1),
        worst.2 + 1
    )?;
    writeln!(
        out,
        "{} (limit {GRADCHECK_LIMIT:e})",
        if pass { "PASS" } else { "FAIL" }
    )?;
    Ok(if pass { EXIT_OK } else { EXIT_CHECK_FAILED })
}
