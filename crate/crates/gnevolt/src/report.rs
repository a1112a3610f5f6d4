//! Run reports: the JSON summary a run emits, and the step-size
//! condition report shared with the `check-params` command.
//!
//! Both artifacts are pure functions of their inputs and serialize
//! deterministically (struct field order, shortest round-trip floats),
//! so two invocations on the same scenario produce identical bytes.

use serde::Serialize;

use crate::comms::AuditSummary;
use crate::error::Result;
use crate::game::{self, Game};
use crate::solvers::certificates::{certificate_matrices, step_size_bounds};
use crate::solvers::global_opt::GlobalOptimum;
use crate::solvers::reference::ReferenceSolution;
use crate::trace::ConvergenceTrace;
use nalgebra::DVector;

/// Step-size admissibility report: the certified bounds, the values
/// actually in force, and the smallest eigenvalues of the matrices the
/// convergence guarantee is built from.
#[derive(Debug, Clone, Serialize)]
pub struct ParameterReport {
    /// Largest admissible physics penalty, `1 / sigma_max(Bt B^-1)^2`.
    pub rho_max: f64,
    /// Penalty the report is evaluated at.
    pub rho: f64,
    /// Proximal floor at that penalty, `rho * ||Bt' Bt||_2`.
    pub beta_min: f64,
    /// Proximal weight the report is evaluated at.
    pub beta: f64,
    /// Smallest eigenvalue of the metric `H`; nonnegative iff
    /// `beta >= beta_min`.
    pub h_sym_min: f64,
    /// Smallest eigenvalue of `sym(R)`; nonnegative on the admissible
    /// region.
    pub r_sym_min: f64,
    /// Smallest eigenvalue of the symmetric part of the primal-dual
    /// operator's Jacobian at zero injection.
    pub f_sym_min: f64,
    /// Strong-monotonicity constant of the game map (smallest eigenvalue
    /// of `sym(grad Phi)`); `None` when prices are not quadratic and the
    /// closed form does not apply.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_sym_min: Option<f64>,
    /// Whether `(rho, beta)` sits inside the certified region.
    pub admissible: bool,
}

/// Builds the step-size report for a game. `rho`/`beta` default to the
/// admissible boundary `(rho_max, beta_min(rho))` when the scenario's
/// solver block does not carry them.
pub fn parameter_report(game: &Game, rho: Option<f64>, beta: Option<f64>) -> Result<ParameterReport> {
    let bounds = step_size_bounds(game)?;
    let rho = rho.unwrap_or(bounds.rho_max);
    let beta = beta.unwrap_or_else(|| bounds.beta_min(rho));
    let beta_min = bounds.beta_min(rho);
    let matrices = certificate_matrices(game, rho, beta)?;
    let fj = game::f_jacobian(rho, &game.model, &game.costs, &game.decomp, &DVector::zeros(game.model.bus_count()))?;
    let f_sym = 0.5 * (&fj + fj.transpose());
    let f_sym_min = f_sym.symmetric_eigen().eigenvalues.min();
    let phi_sym_min =
        game::phi_jacobian_symmetric_part_minimum(&game.model, &game.costs, &game.decomp).ok();
    // Tolerate float dust on the boundary itself.
    let slack = 1e-12 * (1.0 + rho.abs() + beta.abs());
    let admissible = rho <= bounds.rho_max + slack && beta + slack >= beta_min;
    Ok(ParameterReport {
        rho_max: bounds.rho_max,
        rho,
        beta_min,
        beta,
        h_sym_min: matrices.h_sym_min,
        r_sym_min: matrices.r_sym_min,
        f_sym_min,
        phi_sym_min,
        admissible,
    })
}

impl std::fmt::Display for ParameterReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "rho_max                  = {}", self.rho_max)?;
        writeln!(f, "rho                      = {}", self.rho)?;
        writeln!(f, "beta_min(rho)            = {}", self.beta_min)?;
        writeln!(f, "beta                     = {}", self.beta)?;
        writeln!(f, "lambda_min sym(H)        = {}", self.h_sym_min)?;
        writeln!(f, "lambda_min sym(R)        = {}", self.r_sym_min)?;
        writeln!(f, "lambda_min sym(dF)       = {}", self.f_sym_min)?;
        match self.phi_sym_min {
            Some(m) => writeln!(f, "strong monotonicity      = {m}")?,
            None => writeln!(f, "strong monotonicity      = n/a (non-quadratic prices)")?,
        }
        writeln!(f, "admissible               = {}", self.admissible)
    }
}

/// Comparison of a finished run against the reference equilibrium and
/// the social optimum.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceComparison {
    /// `||q_final - q*||_2` against the certified equilibrium.
    pub reference_distance: f64,
    /// `||q_final - q_opt||_2` against the social optimum.
    pub optimum_distance: f64,
    /// System objective at the run's final injections.
    pub gne_objective: f64,
    /// System objective at the social optimum.
    pub optimum_objective: f64,
    /// `gne_objective / optimum_objective`. The optimum lower-bounds
    /// every feasible profile's cost, so a converged run reports a ratio
    /// of at least one up to solver tolerance.
    pub ratio: f64,
    /// Worst equilibrium-condition residual of the oracle solution.
    pub oracle_residual: f64,
    /// Whether the oracle certified exactly one equilibrium.
    pub oracle_unique: bool,
}

/// Builds the comparison block from a run's final injections.
pub fn reference_comparison(
    game: &Game,
    q_final: &DVector<f64>,
    oracle: &ReferenceSolution,
    oracle_unique: bool,
    optimum: &GlobalOptimum,
) -> ReferenceComparison {
    let gne_objective = game.objective_at(q_final);
    ReferenceComparison {
        reference_distance: (q_final - &oracle.q).norm(),
        optimum_distance: (q_final - &optimum.q).norm(),
        gne_objective,
        optimum_objective: optimum.objective,
        ratio: gne_objective / optimum.objective,
        oracle_residual: oracle.certificate.max_residual(),
        oracle_unique,
    }
}

/// The JSON document summarizing one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub algorithm: String,
    /// Machine-friendly stop reason (`converged`, `max_iterations`, ...).
    pub status: String,
    pub converged: bool,
    /// Iterations actually executed.
    pub iterations: usize,
    pub final_objective: f64,
    pub final_nat_residual: f64,
    pub final_ec_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameters: Option<ParameterReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditSummary>,
    /// Where the CSV trace landed, when one was written.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<String>,
}

/// Assembles the report for a finished run. Final residuals come from
/// the game itself rather than the trace, so subsampled traces cannot
/// skew them.
pub fn run_report(
    scenario: &str,
    algorithm: &str,
    game: &Game,
    trace: &ConvergenceTrace,
    reference: Option<ReferenceComparison>,
    parameters: Option<ParameterReport>,
    trace_path: Option<String>,
) -> RunReport {
    let q = &trace.final_point.q;
    RunReport {
        scenario: scenario.to_string(),
        algorithm: algorithm.to_string(),
        status: trace.status.label().to_string(),
        converged: trace.status.is_converged(),
        iterations: trace.iterations_run,
        final_objective: game.objective_at(q),
        final_nat_residual: game.natural_residual(q, 1.0),
        final_ec_residual: game.ec_residual(q).max_residual(),
        reference,
        parameters,
        audit: trace.audit,
        trace_path,
    }
}

impl RunReport {
    /// Pretty JSON plus a trailing newline; byte-stable for a given
    /// report.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization is infallible");
        s.push('\n');
        s
    }
}
