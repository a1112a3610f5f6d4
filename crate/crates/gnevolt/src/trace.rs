//! Convergence traces: what a run records, how it stops, and the CSV
//! emitted for plotting.
//!
//! The CSV layout is fixed:
//!
//! ```text
//!     t,objective,nat_residual,ec_residual,dist_to_ref,dist_to_opt,audit_violations
//! ```
//!
//! one row per recorded iteration. `dist_to_ref` / `dist_to_opt` are
//! empty when the run had no reference equilibrium / social optimum to
//! compare against; `audit_violations` is the cumulative violation count
//! at that iteration (always 0 for a correct solver, and for solvers that
//! bypass the message harness altogether). Floats are written with
//! Rust's shortest round-trip formatting, so identical runs serialize to
//! identical bytes.

use std::io::Write;

use nalgebra::DVector;

use crate::game::PrimalDualPoint;

/// One recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub t: usize,
    /// System objective at the measured voltages of this iterate.
    pub objective: f64,
    /// Fixed-point residual of the projected game map (unit step).
    pub nat_residual: f64,
    /// Worst equilibrium-condition residual (stationarity,
    /// complementarity, feasibility).
    pub ec_residual: f64,
    /// `||q - q_ref||_2` against the reference equilibrium, when given.
    pub dist_to_ref: Option<f64>,
    /// `||q - q_opt||_2` against the social optimum, when given.
    pub dist_to_opt: Option<f64>,
    /// Cumulative locality violations up to this iteration.
    pub audit_violations: u64,
    /// Per-area payoffs at this iterate.
    pub area_payoffs: Vec<f64>,
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    /// Residual and multiplier-staleness tolerances were met.
    Converged { iterations: usize },
    /// Distance to the reference equilibrium dropped below the requested
    /// target (used when counting iterations-to-accuracy).
    ReachedReferenceTarget { iterations: usize },
    /// The iteration budget ran out first.
    MaxIterations,
    /// An iterate left the divergence guard region.
    Diverged { iteration: usize },
}

impl RunStatus {
    pub fn is_converged(&self) -> bool {
        matches!(
            self,
            RunStatus::Converged { .. } | RunStatus::ReachedReferenceTarget { .. }
        )
    }

    /// Short machine-friendly label used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Converged { .. } => "converged",
            RunStatus::ReachedReferenceTarget { .. } => "reached_reference_target",
            RunStatus::MaxIterations => "max_iterations",
            RunStatus::Diverged { .. } => "diverged",
        }
    }
}

/// Running average of the shifted iterates some solvers maintain for
/// their ergodic convergence certificate, together with the start point
/// the certificate measures from.
#[derive(Debug, Clone)]
pub struct ErgodicTrack {
    /// The run's starting point, stacked.
    pub omega0: DVector<f64>,
    /// `(t, average of the first t+1 shifted iterates)`, stacked.
    pub averages: Vec<(usize, DVector<f64>)>,
}

/// Everything a solver run produces.
#[derive(Debug, Clone)]
pub struct ConvergenceTrace {
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
    /// Iterations actually executed (records may be subsampled).
    pub iterations_run: usize,
    /// Final primal-dual iterate.
    pub final_point: PrimalDualPoint,
    /// Present when the run tracked ergodic averages.
    pub ergodic: Option<ErgodicTrack>,
    /// Message-harness audit, when the solver ran through one.
    pub audit: Option<crate::comms::AuditSummary>,
}

impl ConvergenceTrace {
    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// Writes the fixed-column CSV.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(
            out,
            "t,objective,nat_residual,ec_residual,dist_to_ref,dist_to_opt,audit_violations"
        )?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.t,
                r.objective,
                r.nat_residual,
                r.ec_residual,
                r.dist_to_ref.map(|d| d.to_string()).unwrap_or_default(),
                r.dist_to_opt.map(|d| d.to_string()).unwrap_or_default(),
                r.audit_violations
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}
