//! Sweep drivers: the cost-curvature comparison table and the update-delay
//! robustness study.
//!
//! Each cell is a pure function of the scenario document plus the cell
//! coordinates, so callers may run cells sequentially or in parallel and
//! get identical results. The comparison counts iterations until the
//! iterate is within a distance target of the certified equilibrium,
//! using only step sizes recorded in the document's `tunings` table —
//! never invented defaults — so every number in the output is
//! attributable to recorded parameters.

use crate::comms::UpdateSchedule;
use crate::error::{Error, Result};
use crate::scenario::{Algorithm, ScenarioFile, SolverSpec};
use crate::solvers::admm::{run_admm, AdmmConfig};
use crate::solvers::extragradient::{run_extragradient, ExtragradientConfig};
use crate::solvers::reference::solve_reference_gne;
use crate::solvers::{RunOptions, SolveControl};
use crate::trace::{ConvergenceTrace, RunStatus};

/// Distance target the comparison runs to, `||q - q*||_2`.
pub const COMPARISON_TARGET: f64 = 1e-8;

/// Iteration cap: a cell that has not hit the target by then reports a
/// dash instead of a count.
pub const COMPARISON_BUDGET: usize = 500_000;

/// One cell of the cost-comparison table.
#[derive(Debug, Clone)]
pub struct CostSweepCell {
    /// Quadratic curvature every bus was given.
    pub cost: f64,
    pub algorithm: Algorithm,
    /// Iterations until the distance target, or `None` when the budget
    /// ran out or the run diverged.
    pub iterations: Option<usize>,
    /// Stop reason of the underlying run.
    pub status: String,
    /// `||q - q*||_2` at the end of the run.
    pub final_distance: f64,
    /// Out-of-neighborhood reads observed by the message harness.
    pub audit_violations: u64,
}

impl CostSweepCell {
    /// Table entry: the count, or a dash for budget exhaustion.
    pub fn display_count(&self) -> String {
        match self.iterations {
            Some(n) => n.to_string(),
            None => "\u{2014}".to_string(),
        }
    }
}

/// Runs one comparison cell: rebuild the game at curvature `cost`, look
/// up the recorded step sizes, certify the equilibrium, then count
/// iterations until `||q - q*||_2 <= target`.
pub fn run_cost_cell(
    file: &ScenarioFile,
    cost: f64,
    algorithm: Algorithm,
    target: f64,
    budget: usize,
) -> Result<CostSweepCell> {
    let game = file.build_game_with_quadratic_cost(cost)?;
    let tuning = file.tuning_for(cost).ok_or_else(|| {
        Error::Config(format!(
            "no tunings row for cost {cost}; the comparison only runs with recorded step sizes"
        ))
    })?;
    let outcome = solve_reference_gne(&game)?;
    let oracle = outcome.unique()?;

    // The run should stop on the distance target or the budget, never on
    // its own residual tolerance.
    let control = SolveControl::new(budget, 1e-300)?;
    let opts = RunOptions {
        reference_q: Some(&oracle.q),
        stop_at_reference_distance: Some(target),
        record_every: budget.max(1),
        ..Default::default()
    };
    let trace = match algorithm {
        Algorithm::Admm => {
            let cfg = AdmmConfig::new(tuning.admm.rho, tuning.admm.beta, control)?;
            run_admm(&game, &cfg, &UpdateSchedule::Synchronous, &opts)?
        }
        Algorithm::Eg => {
            let cfg = ExtragradientConfig::new(tuning.eg.alpha, tuning.eg.rho, control)?;
            run_extragradient(&game, &cfg, &opts)?
        }
        other => {
            return Err(Error::Config(format!(
                "the comparison covers \"admm\" and \"eg\", not \"{}\"",
                other.label()
            )))
        }
    };

    let iterations = match trace.status {
        RunStatus::ReachedReferenceTarget { iterations } => Some(iterations),
        // A tolerance stop cannot happen with the tolerance pinned above;
        // anything else means the cell did not make the target.
        _ => None,
    };
    Ok(CostSweepCell {
        cost,
        algorithm,
        iterations,
        status: trace.status.label().to_string(),
        final_distance: (&trace.final_point.q - &oracle.q).norm(),
        audit_violations: trace.audit.map(|a| a.violations).unwrap_or(0),
    })
}

/// One row of the delay-robustness study.
#[derive(Debug, Clone)]
pub struct DelaySweepRow {
    pub delay_bound: usize,
    /// `||q - q*||_2` at the end of the run.
    pub final_distance: f64,
    pub iterations: usize,
    pub status: String,
    pub audit_violations: u64,
    /// Full trace, for the caller to serialize.
    pub trace: ConvergenceTrace,
}

/// Runs the scenario's consensus learner under a bounded-delay schedule
/// and reports the final distance to the certified equilibrium. The
/// scenario must configure the per-bus learner — the delay model is
/// defined by its message protocol.
pub fn run_delay_cell(
    file: &ScenarioFile,
    delay_bound: usize,
    seed_override: Option<u64>,
) -> Result<DelaySweepRow> {
    let built = file.build()?;
    let cfg = match built.solver {
        SolverSpec::Admm(cfg) | SolverSpec::AdmmCompact(cfg) => cfg,
        ref other => {
            return Err(Error::Config(format!(
                "the delay study needs the per-bus learner, but the scenario configures \"{}\"",
                other.algorithm().label()
            )))
        }
    };
    let seed = seed_override.unwrap_or(match file.schedule(None) {
        UpdateSchedule::Asynchronous { seed, .. } => seed,
        UpdateSchedule::Synchronous => 0,
    });
    let schedule = UpdateSchedule::Asynchronous { delay_bound, seed };

    let outcome = solve_reference_gne(&built.game)?;
    let oracle = outcome.unique()?;
    let opts = RunOptions {
        reference_q: Some(&oracle.q),
        record_every: built.record_every,
        ..Default::default()
    };
    let trace = run_admm(&built.game, &cfg, &schedule, &opts)?;
    Ok(DelaySweepRow {
        delay_bound,
        final_distance: (&trace.final_point.q - &oracle.q).norm(),
        iterations: trace.iterations_run,
        status: trace.status.label().to_string(),
        audit_violations: trace.audit.map(|a| a.violations).unwrap_or(0),
        trace,
    })
}
