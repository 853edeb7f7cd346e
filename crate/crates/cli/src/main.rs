mod compare;
mod config;
mod thermal_sim;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dlr_core::admm::{screen_transient_lines, solve_admm, solve_monolithic};
use dlr_core::report::{verify_report, SolveReport, SolveStatus};

use config::{CaseArgs, SchemeArgs, SolverArgs};

#[derive(Parser, Debug)]
#[command(name = "dlr", version, about = "Multi-period ACOPF with dynamic and transient line ratings")]
struct Cli {
    /// Worker threads for per-period subproblems (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one case under one rating scheme and write a JSON report.
    Solve(SolveCmd),
    /// Solve one case under several schemes and tabulate deltas against SLR.
    Compare(compare::CompareCmd),
    /// List the lines the transient model is applied to.
    Screen(ScreenCmd),
    /// Simulate conductor temperatures for a current schedule (CSV).
    ThermalSim(thermal_sim::ThermalSimCmd),
    /// Re-check a stored report against its case.
    Verify(VerifyCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Admm,
    Monolithic,
}

#[derive(Args, Debug)]
struct SolveCmd {
    #[command(flatten)]
    case: CaseArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = Method::Admm)]
    method: Method,
    /// Report path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON-lines file receiving one record per inner iteration.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScreenCmd {
    #[command(flatten)]
    case: CaseArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyCmd {
    /// Stored report.
    #[arg(long)]
    report: PathBuf,
    /// Case the report was solved on; enables the feasibility checks.
    #[command(flatten)]
    case: config::OptionalCaseArgs,
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn status_code(status: SolveStatus) -> ExitCode {
    match status {
        SolveStatus::Converged => ExitCode::SUCCESS,
        SolveStatus::OuterMaxIter | SolveStatus::NotConverged => ExitCode::from(2),
    }
}

fn cmd_solve(cmd: &SolveCmd) -> Result<ExitCode> {
    let case = cmd.case.load()?;
    let scheme = cmd.scheme.scheme()?;
    let params = cmd.solver.params()?;
    let report = match cmd.method {
        Method::Admm => {
            let mut sink = match &cmd.trace {
                Some(p) => Some(BufWriter::new(
                    File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
                )),
                None => None,
            };
            let mut failed = None;
            let report = solve_admm(&case, &scheme, &params, &mut |rec| {
                if let Some(w) = sink.as_mut() {
                    let line = serde_json::to_string(rec).expect("trace records serialize");
                    if let Err(e) = writeln!(w, "{line}") {
                        failed.get_or_insert(e);
                    }
                }
            })?;
            if let Some(e) = failed {
                return Err(e).context("cannot write trace");
            }
            if let Some(mut w) = sink {
                w.flush().context("cannot write trace")?;
            }
            report
        }
        Method::Monolithic => {
            if cmd.trace.is_some() {
                log::warn!("--trace has no effect with the monolithic method");
            }
            solve_monolithic(&case, &scheme, &params)?
        }
    };
    log::info!(
        "{} {}: {:?} objective {:.4} after {} outer / {} inner iterations, consensus {:.3e}",
        report.case_name,
        report.scheme,
        report.status,
        report.objective,
        report.outer_iterations,
        report.inner_iterations,
        report.consensus_inf
    );
    emit(cmd.out.as_ref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(status_code(report.status))
}

fn cmd_screen(cmd: &ScreenCmd) -> Result<ExitCode> {
    let case = cmd.case.load()?;
    let params = cmd.solver.params()?;
    let s = screen_transient_lines(&case, &params.nlp, params.cost_scale)?;
    emit(cmd.out.as_ref(), &(serde_json::to_string_pretty(&s.lines)? + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(cmd: &VerifyCmd) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&cmd.report).with_context(|| format!("cannot read {}", cmd.report.display()))?;
    let report: SolveReport = serde_json::from_str(&text).with_context(|| format!("{} is not a report", cmd.report.display()))?;
    if report.schema_version != dlr_core::report::REPORT_SCHEMA_VERSION {
        bail!("unsupported report schema version {}", report.schema_version);
    }
    let case = cmd.case.load()?;
    if case.is_none() {
        log::warn!("no case given; only the protocol checks run");
    }
    let v = verify_report(&report, case.as_ref())?;
    let mut out = std::io::stdout().lock();
    for c in &v.checks {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        writeln!(out, "{mark} {:<24} {:.3e} (limit {:.3e})", c.name, c.value, c.limit)?;
    }
    let failed = v.checks.iter().filter(|c| !c.passed).count();
    writeln!(out, "{} checks, {failed} failed", v.checks.len())?;
    Ok(if v.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .context("cannot start the worker pool")?;
    }
    match &cli.command {
        Command::Solve(c) => cmd_solve(c),
        Command::Compare(c) => compare::run(c),
        Command::Screen(c) => cmd_screen(c),
        Command::ThermalSim(c) => thermal_sim::run(c),
        Command::Verify(c) => cmd_verify(c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
