use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use hcssp::bench::{brute_force_cssp, brute_force_hcssp, build_evacuation, EvacuationSpec};
use hcssp::bnb::{branch_and_bound, write_bnb_trace_csv, BnbConfig, BnbError, BnbOutcome};
use hcssp::cssp::{CsspFile, CsspModel};
use hcssp::hierarchy::{HcsspFile, HcsspModel, SolutionFile};
use hcssp::solver::{anytime_run, write_trace_csv, ZeroHeuristic};

const EXIT_INFEASIBLE: u8 = 2;

#[derive(Parser)]
#[command(name = "hcssp", version, about = "Hierarchical constrained SSP solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an HC-SSP with branch-and-bound budget allocation.
    Solve(SolveArgs),
    /// Solve a flat C-SSP with the anytime two-stage solver.
    SolveCssp(SolveCsspArgs),
    /// Generate an HC-SSP from an evacuation building spec.
    GenEvac(GenEvacArgs),
    /// Exhaustive optimum of a small C-SSP or HC-SSP.
    Oracle(FileArgs),
    /// Validate a C-SSP, HC-SSP or evacuation spec file.
    Check(FileArgs),
}

/// Expansion cap: `inf` or a nonnegative integer.
#[derive(Clone, Copy)]
struct Limit(Option<usize>);

fn parse_l(s: &str) -> Result<Limit, String> {
    if s.eq_ignore_ascii_case("inf") {
        Ok(Limit(None))
    } else {
        s.parse()
            .map(|l| Limit(Some(l)))
            .map_err(|_| format!("expected `inf` or an integer, got `{s}`"))
    }
}

fn parse_seconds(s: &str) -> Result<Duration, String> {
    s.parse::<f64>()
        .ok()
        .and_then(|v| Duration::try_from_secs_f64(v).ok())
        .ok_or_else(|| format!("expected a number of seconds, got `{s}`"))
}

#[derive(Args)]
struct SolveArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    /// Stage-2 expansion cap for every inner solve.
    #[arg(long, value_parser = parse_l, default_value = "inf")]
    l: Limit,
    /// Wall-clock budget in seconds.
    #[arg(long, value_parser = parse_seconds)]
    time_budget: Option<Duration>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Bound sibling partitions on one thread.
    #[arg(long)]
    serial: bool,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Defaults to standard output.
    #[arg(long)]
    solution_out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveCsspArgs {
    input: PathBuf,
    #[arg(long, value_parser = parse_l, default_value = "inf")]
    l: Limit,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long)]
    solution_out: Option<PathBuf>,
}

#[derive(Args)]
struct GenEvacArgs {
    input: PathBuf,
    /// Override the damage budget of the spec.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FileArgs {
    input: PathBuf,
}

#[derive(Serialize)]
struct CsspSolutionFile {
    policy: BTreeMap<String, String>,
    objective: f64,
    constraint_values: Vec<f64>,
    lower_bound: f64,
    upper_bound: f64,
}

#[derive(Serialize)]
struct OracleFile<T> {
    optimum: Option<f64>,
    count: usize,
    solution: Option<T>,
}

enum Failure {
    Infeasible(String),
    Error(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Error(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

enum Problem {
    Cssp(CsspModel),
    Hcssp(HcsspModel),
    Evac(EvacuationSpec),
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Error(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Error(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Problem, Failure> {
    let value = read_json(path)?;
    if value.get("rooms").is_some() {
        Ok(Problem::Evac(serde_json::from_value(value)?))
    } else if value.get("events").is_some() {
        let file: HcsspFile = serde_json::from_value(value)?;
        Ok(Problem::Hcssp(file.to_model()?))
    } else {
        let file: CsspFile = serde_json::from_value(value)?;
        Ok(Problem::Cssp(file.to_model()?))
    }
}

fn checked_cssp(m: CsspModel) -> Result<CsspModel, Failure> {
    let v = m.validate();
    if v.is_empty() {
        Ok(m)
    } else {
        Err(Failure::Error(join(&v)))
    }
}

fn checked_hcssp(m: HcsspModel) -> Result<HcsspModel, Failure> {
    let v = m.validate();
    if v.is_empty() {
        Ok(m)
    } else {
        Err(Failure::Error(join(&v)))
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn load_hcssp(path: &Path) -> Result<HcsspModel, Failure> {
    match load(path)? {
        Problem::Hcssp(m) => checked_hcssp(m),
        Problem::Evac(spec) => checked_hcssp(build_evacuation(&spec)?),
        Problem::Cssp(_) => Err(Failure::Error(format!(
            "{}: expected an HC-SSP file",
            path.display()
        ))),
    }
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Error(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> CliResult {
    let mut out = writer(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn fmt_bound(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "inf".into()
    }
}

fn solve(args: &SolveArgs) -> CliResult {
    let model = load_hcssp(&args.input)?;
    let config = BnbConfig {
        epsilon: args.epsilon,
        l: args.l.0,
        max_iterations: args.max_iterations,
        time_budget: args.time_budget,
        parallel: !args.serial,
    };
    let (outcome, failure) = match branch_and_bound(&model, &config) {
        Ok(o) => (o, None),
        Err(BnbError::ConvergedInfeasible(o)) => {
            (*o, Some(Failure::Infeasible("certified infeasible".into())))
        }
        Err(BnbError::NoFeasibleSolution(o)) => (
            *o,
            Some(Failure::Error(
                "no feasible solution found within the budget".into(),
            )),
        ),
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = &args.trace_out {
        write_bnb_trace_csv(&outcome.trace, writer(Some(path))?)?;
    }
    report(&outcome);
    if let Some(f) = failure {
        return Err(f);
    }
    let sol = outcome
        .solution
        .as_ref()
        .expect("feasible outcome carries a solution");
    let file = SolutionFile::new(&model, sol, Some(outcome.alpha), Some(outcome.beta));
    write_json(args.solution_out.as_deref(), &file)
}

fn report(o: &BnbOutcome) {
    eprintln!(
        "alpha {} beta {} gap {} after {} iterations ({:?}, {} partitions bounded, {} activity solves)",
        fmt_bound(o.alpha),
        fmt_bound(o.beta),
        fmt_bound(o.gap()),
        o.iterations,
        o.stop,
        o.partitions_bounded,
        o.activity_solves
    );
}

fn solve_cssp(args: &SolveCsspArgs) -> CliResult {
    let model = match load(&args.input)? {
        Problem::Cssp(m) => checked_cssp(m)?,
        _ => {
            return Err(Failure::Error(format!(
                "{}: expected a C-SSP file",
                args.input.display()
            )))
        }
    };
    let r = anytime_run(&model, args.l.0, &ZeroHeuristic)?;
    if let Some(path) = &args.trace_out {
        write_trace_csv(&r.trace, writer(Some(path))?)?;
    }
    eprintln!(
        "lb {} ub {} after {} expansions",
        fmt_bound(r.lower_bound),
        fmt_bound(r.upper_bound),
        r.iterations_used
    );
    if r.is_certified_infeasible() {
        return Err(Failure::Infeasible("certified infeasible".into()));
    }
    let Some((pi, v)) = &r.incumbent else {
        return Err(Failure::Error(
            "no feasible policy found within the expansion cap".into(),
        ));
    };
    let file = CsspSolutionFile {
        policy: pi.to_named(&model),
        objective: v.f,
        constraint_values: v.raw_g.clone(),
        lower_bound: r.lower_bound,
        upper_bound: r.upper_bound,
    };
    write_json(args.solution_out.as_deref(), &file)
}

fn gen_evac(args: &GenEvacArgs) -> CliResult {
    let mut spec: EvacuationSpec = serde_json::from_value(read_json(&args.input)?)?;
    if let Some(d) = args.delta {
        spec.delta = d;
    }
    let model = build_evacuation(&spec)?;
    eprintln!(
        "{} events, {} activities, {} states",
        model.num_events(),
        model.activities().len(),
        model.num_states()
    );
    write_json(args.out.as_deref(), &HcsspFile::from_model(&model))
}

fn oracle(args: &FileArgs) -> CliResult {
    match load(&args.input)? {
        Problem::Cssp(m) => {
            let m = checked_cssp(m)?;
            let r = brute_force_cssp(&m)?;
            let file = OracleFile {
                optimum: r.optimum,
                count: r.count,
                solution: r.argmin.as_ref().map(|(pi, _)| pi.to_named(&m)),
            };
            write_json(None, &file)?;
            if r.is_infeasible() {
                return Err(Failure::Infeasible("no feasible policy".into()));
            }
        }
        p => {
            let m = match p {
                Problem::Evac(spec) => checked_hcssp(build_evacuation(&spec)?)?,
                Problem::Hcssp(m) => checked_hcssp(m)?,
                Problem::Cssp(_) => unreachable!(),
            };
            let r = brute_force_hcssp(&m)?;
            let file = OracleFile {
                optimum: r.optimum,
                count: r.count,
                solution: r
                    .argmin
                    .as_ref()
                    .map(|s| SolutionFile::new(&m, s, None, None)),
            };
            write_json(None, &file)?;
            if r.is_infeasible() {
                return Err(Failure::Infeasible("no feasible solution".into()));
            }
        }
    }
    Ok(())
}

fn check(args: &FileArgs) -> CliResult {
    match load(&args.input)? {
        Problem::Cssp(m) => {
            let m = checked_cssp(m)?;
            println!("ok: C-SSP with {} states", m.num_states());
        }
        Problem::Hcssp(m) => {
            let m = checked_hcssp(m)?;
            println!(
                "ok: HC-SSP with {} events and {} activities",
                m.num_events(),
                m.activities().len()
            );
        }
        Problem::Evac(spec) => {
            let m = checked_hcssp(build_evacuation(&spec)?)?;
            println!(
                "ok: evacuation spec with {} cells, {} events and {} activities",
                spec.total_cells(),
                m.num_events(),
                m.activities().len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::SolveCssp(a) => solve_cssp(a),
        Command::GenEvac(a) => gen_evac(a),
        Command::Oracle(a) => oracle(a),
        Command::Check(a) => check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Infeasible(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_INFEASIBLE)
        }
        Err(Failure::Error(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
