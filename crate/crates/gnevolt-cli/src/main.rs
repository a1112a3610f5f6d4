//! Command-line runner for the voltage-control equilibrium library.
//!
//! Four subcommands cover the experiment surface:
//!
//! * `run` — execute the solver a scenario document configures and
//!   print a JSON report; optionally certify the equilibrium against
//!   the active-set oracle and the coordinated optimum, and write the
//!   iteration trace as CSV.
//! * `compare` — sweep price curvatures and count iterations to a fixed
//!   distance target for the distributed algorithms, printing the
//!   comparison table (a dash marks a cell that exhausted its budget).
//! * `check-params` — print the step-size certificate report for a
//!   scenario: the penalty ceiling, the proximal floor, the matrix
//!   eigenvalue margins, and the monotonicity constant.
//! * `async-sweep` — rerun the per-bus learner under bounded-delay
//!   schedules and summarize how far each run lands from the certified
//!   equilibrium.
//!
//! Exit codes: `0` success, `2` malformed scenario or configuration,
//! `3` solver divergence, `4` the oracle found several equilibria and
//! `--allow-multiple` was not given. `GNEVOLT_SEED` overrides the
//! schedule seed of asynchronous runs without editing the document.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gnevolt::comms::UpdateSchedule;
use gnevolt::report::{parameter_report, reference_comparison, run_report, ReferenceComparison};
use gnevolt::scenario::{parse_scenario_path, Algorithm, SolverSpec};
use gnevolt::solvers::admm::run_admm;
use gnevolt::solvers::admm::run_admm_compact;
use gnevolt::solvers::extragradient::run_extragradient;
use gnevolt::solvers::global_opt::solve_global_optimum;
use gnevolt::solvers::gradient_play::run_gradient_play;
use gnevolt::solvers::reference::solve_reference_gne;
use gnevolt::solvers::RunOptions;
use gnevolt::sweep::{run_cost_cell, run_delay_cell, COMPARISON_BUDGET, COMPARISON_TARGET};
use gnevolt::trace::ConvergenceTrace;
use gnevolt::Error;

/// Tolerance for the reference and optimum solves backing `--reference`.
const CERTIFICATION_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "gnevolt", version, about = "Distributed voltage-control equilibrium runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver configured by a scenario document.
    Run {
        /// Path to the scenario document.
        scenario: PathBuf,
        /// Write the iteration trace to this CSV file.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
        /// Certify the result against the active-set oracle and the
        /// coordinated optimum, and report distances and the
        /// efficiency-loss ratio.
        #[arg(long)]
        reference: bool,
        /// Proceed (using the first equilibrium) when the oracle finds
        /// more than one.
        #[arg(long)]
        allow_multiple: bool,
    },
    /// Sweep price curvatures and tabulate iterations-to-target.
    Compare {
        scenario: PathBuf,
        /// Comma-separated quadratic curvatures, e.g. `1e-4,1e-2,1e-1,1`.
        #[arg(long, value_name = "LIST")]
        costs: String,
        /// Comma-separated algorithms out of `admm` and `eg`.
        #[arg(long, value_name = "LIST", default_value = "admm,eg")]
        algorithms: String,
        /// Run independent sweep cells on worker threads.
        #[arg(long)]
        parallel: bool,
    },
    /// Print the step-size certificate report for a scenario.
    CheckParams {
        scenario: PathBuf,
    },
    /// Rerun the learner under bounded-delay schedules.
    AsyncSweep {
        scenario: PathBuf,
        /// Comma-separated delay bounds, e.g. `1,5,10`.
        #[arg(long, value_name = "LIST")]
        delays: String,
        /// Write one `delay_<T>.csv` trace per bound into this directory.
        #[arg(long, value_name = "DIR")]
        trace_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {failure}");
            failure.exit_code()
        }
    }
}

/// Anything that aborts a subcommand, paired with the exit code the
/// process should end with.
enum Failure {
    Lib(Error),
    Io(String),
    Usage(String),
}

impl Failure {
    fn exit_code(&self) -> ExitCode {
        match self {
            // Bad input: the scenario document, a cross-reference inside
            // it, or a malformed flag value.
            Failure::Lib(
                Error::Schema(_)
                | Error::Topology(_)
                | Error::Domain(_)
                | Error::Partition(_)
                | Error::Config(_)
                | Error::Unsupported(_),
            ) => ExitCode::from(2),
            Failure::Usage(_) => ExitCode::from(2),
            Failure::Lib(Error::Divergence { .. }) => ExitCode::from(3),
            Failure::Lib(_) | Failure::Io(_) => ExitCode::FAILURE,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Io(msg) | Failure::Usage(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Failure> {
    let seed_override = seed_from_environment()?;
    match cli.command {
        Command::Run { scenario, trace, reference, allow_multiple } => {
            cmd_run(&scenario, trace.as_deref(), reference, allow_multiple, seed_override)
        }
        Command::Compare { scenario, costs, algorithms, parallel } => {
            cmd_compare(&scenario, &costs, &algorithms, parallel)
        }
        Command::CheckParams { scenario } => cmd_check_params(&scenario),
        Command::AsyncSweep { scenario, delays, trace_dir } => {
            cmd_async_sweep(&scenario, &delays, trace_dir.as_deref(), seed_override)
        }
    }
}

/// `GNEVOLT_SEED`, when set, must be a `u64`; anything else is a usage
/// error rather than a silently ignored knob.
fn seed_from_environment() -> Result<Option<u64>, Failure> {
    match std::env::var("GNEVOLT_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Failure::Usage(format!("GNEVOLT_SEED must be an unsigned integer, got {text:?}"))),
        Err(_) => Ok(None),
    }
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

fn cmd_run(
    path: &Path,
    trace_out: Option<&Path>,
    certify: bool,
    allow_multiple: bool,
    seed_override: Option<u64>,
) -> Result<ExitCode, Failure> {
    let file = parse_scenario_path(path)?;
    let built = file.build()?;
    let schedule = file.schedule(seed_override);

    // The oracle runs before the solver so a non-unique equilibrium is
    // reported without burning the iteration budget first.
    let certification = if certify {
        let outcome = solve_reference_gne(&built.game)?;
        if !outcome.is_unique() && !allow_multiple {
            eprintln!(
                "error: the oracle certified {} distinct equilibria; pass --allow-multiple to \
                 compare against the first one",
                outcome.solutions.len()
            );
            return Ok(ExitCode::from(4));
        }
        let optimum = solve_global_optimum(&built.game, CERTIFICATION_TOL)?;
        Some((outcome, optimum))
    } else {
        None
    };

    let reference_q = certification.as_ref().map(|(o, _)| o.solutions[0].q.clone());
    let optimum_q = certification.as_ref().map(|(_, opt)| opt.q.clone());
    let opts = RunOptions {
        reference_q: reference_q.as_ref(),
        optimum_q: optimum_q.as_ref(),
        record_every: built.record_every,
        ..Default::default()
    };

    let trace = execute(&built.solver, &built.game, &schedule, &opts)?;

    let trace_path = match trace_out {
        Some(out) => Some(write_trace(&trace, out)?),
        None => None,
    };

    let comparison: Option<ReferenceComparison> = certification.as_ref().map(|(outcome, optimum)| {
        reference_comparison(
            &built.game,
            &trace.final_point.q,
            &outcome.solutions[0],
            outcome.is_unique(),
            optimum,
        )
    });
    let parameters = parameter_report_for(&built.solver, &built.game)?;
    let report = run_report(
        &built.name,
        built.solver.algorithm().label(),
        &built.game,
        &trace,
        comparison,
        Some(parameters),
        trace_path,
    );
    print!("{}", report.to_json_string());

    if let gnevolt::trace::RunStatus::Diverged { .. } = trace.status {
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

/// Runs the configured engine. The per-bus learner is the only engine
/// defined under an asynchronous schedule; the rest refuse rather than
/// silently running synchronously.
fn execute(
    solver: &SolverSpec,
    game: &gnevolt::Game,
    schedule: &UpdateSchedule,
    opts: &RunOptions,
) -> Result<ConvergenceTrace, Failure> {
    let asynchronous = matches!(schedule, UpdateSchedule::Asynchronous { .. });
    let trace = match solver {
        SolverSpec::Admm(cfg) => run_admm(game, cfg, schedule, opts)?,
        SolverSpec::AdmmCompact(cfg) => {
            if asynchronous {
                return Err(Failure::Lib(Error::Config(
                    "the matrix-form engine is synchronous; use the per-bus learner for \
                     asynchronous schedules"
                        .into(),
                )));
            }
            run_admm_compact(game, cfg, opts)?
        }
        SolverSpec::Extragradient(cfg) => {
            if asynchronous {
                return Err(Failure::Lib(Error::Config(
                    "the two-step projected method is synchronous; use the per-bus learner for \
                     asynchronous schedules"
                        .into(),
                )));
            }
            run_extragradient(game, cfg, opts)?
        }
        SolverSpec::GradientPlay(cfg) => {
            if asynchronous {
                return Err(Failure::Lib(Error::Config(
                    "projected gradient play is synchronous; use the per-bus learner for \
                     asynchronous schedules"
                        .into(),
                )));
            }
            run_gradient_play(game, cfg, opts)?
        }
    };
    Ok(trace)
}

/// The certificate report printed inside run reports: evaluated at the
/// configured step sizes when the solver has them, and at the certified
/// defaults otherwise.
fn parameter_report_for(
    solver: &SolverSpec,
    game: &gnevolt::Game,
) -> Result<gnevolt::report::ParameterReport, Failure> {
    let (rho, beta) = match solver {
        SolverSpec::Admm(cfg) | SolverSpec::AdmmCompact(cfg) => (Some(cfg.rho), Some(cfg.beta)),
        SolverSpec::Extragradient(_) | SolverSpec::GradientPlay(_) => (None, None),
    };
    Ok(parameter_report(game, rho, beta)?)
}

fn write_trace(trace: &ConvergenceTrace, out: &Path) -> Result<String, Failure> {
    let f = File::create(out)
        .map_err(|e| Failure::Io(format!("cannot create {}: {e}", out.display())))?;
    let mut writer = BufWriter::new(f);
    trace
        .write_csv(&mut writer)
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", out.display())))?;
    Ok(out.display().to_string())
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

fn cmd_compare(
    path: &Path,
    costs: &str,
    algorithms: &str,
    parallel: bool,
) -> Result<ExitCode, Failure> {
    let file = parse_scenario_path(path)?;
    let costs = parse_cost_list(costs)?;
    let algorithms = parse_algorithm_list(algorithms)?;

    // Cells are independent; order is (cost-major, algorithm-minor) and
    // the table is printed from the collected results, so the parallel
    // path emits byte-identical output.
    let jobs: Vec<(f64, Algorithm)> = costs
        .iter()
        .flat_map(|&c| algorithms.iter().map(move |&a| (c, a)))
        .collect();
    let run_one =
        |&(cost, algorithm): &(f64, Algorithm)| run_cost_cell(&file, cost, algorithm, COMPARISON_TARGET, COMPARISON_BUDGET);
    let cells = if parallel {
        use rayon::prelude::*;
        jobs.par_iter().map(run_one).collect::<Result<Vec<_>, _>>()?
    } else {
        jobs.iter().map(run_one).collect::<Result<Vec<_>, _>>()?
    };

    let mut out = String::new();
    out.push_str("cost");
    for a in &algorithms {
        out.push('\t');
        out.push_str(a.label());
    }
    out.push('\n');
    for (i, &cost) in costs.iter().enumerate() {
        out.push_str(&format!("{cost}"));
        for (j, _) in algorithms.iter().enumerate() {
            out.push('\t');
            out.push_str(&cells[i * algorithms.len() + j].display_count());
        }
        out.push('\n');
    }
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn parse_cost_list(text: &str) -> Result<Vec<f64>, Failure> {
    let costs: Vec<f64> = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Usage(format!("--costs entry {s:?} is not a number")))
        })
        .collect::<Result<_, _>>()?;
    if costs.is_empty() {
        return Err(Failure::Usage("--costs must list at least one curvature".into()));
    }
    for &c in &costs {
        if !(c.is_finite() && c > 0.0) {
            return Err(Failure::Usage(format!("--costs entries must be positive, got {c}")));
        }
    }
    Ok(costs)
}

/// The comparison is defined for the two distributed algorithms with
/// recorded tunings; anything else in the list is refused up front.
fn parse_algorithm_list(text: &str) -> Result<Vec<Algorithm>, Failure> {
    let algorithms: Vec<Algorithm> = text
        .split(',')
        .map(|s| match s.trim() {
            "admm" => Ok(Algorithm::Admm),
            "eg" => Ok(Algorithm::Eg),
            other => Err(Failure::Usage(format!(
                "--algorithms entry {other:?} is not part of the comparison (use admm, eg)"
            ))),
        })
        .collect::<Result<_, _>>()?;
    if algorithms.is_empty() {
        return Err(Failure::Usage("--algorithms must list at least one algorithm".into()));
    }
    Ok(algorithms)
}

// ---------------------------------------------------------------------------
// check-params
// ---------------------------------------------------------------------------

fn cmd_check_params(path: &Path) -> Result<ExitCode, Failure> {
    let file = parse_scenario_path(path)?;
    let built = file.build()?;
    let report = parameter_report_for(&built.solver, &built.game)?;
    print!("{report}");
    // Informational: an inadmissible pair is reported, not failed.
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// async-sweep
// ---------------------------------------------------------------------------

fn cmd_async_sweep(
    path: &Path,
    delays: &str,
    trace_dir: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<ExitCode, Failure> {
    let file = parse_scenario_path(path)?;
    let delays = parse_delay_list(delays)?;
    if let Some(dir) = trace_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    }

    println!("delay\titerations\tstatus\tfinal_distance\taudit_violations");
    for &delay in &delays {
        let row = run_delay_cell(&file, delay, seed_override)?;
        if let Some(dir) = trace_dir {
            write_trace(&row.trace, &dir.join(format!("delay_{delay}.csv")))?;
        }
        println!(
            "{}\t{}\t{}\t{}\t{}",
            row.delay_bound, row.iterations, row.status, row.final_distance, row.audit_violations
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_delay_list(text: &str) -> Result<Vec<usize>, Failure> {
    let delays: Vec<usize> = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Failure::Usage(format!("--delays entry {s:?} is not an integer")))
        })
        .collect::<Result<_, _>>()?;
    if delays.is_empty() {
        return Err(Failure::Usage("--delays must list at least one bound".into()));
    }
    Ok(delays)
}

// ---------------------------------------------------------------------------
