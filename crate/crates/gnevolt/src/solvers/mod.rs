//! Equilibrium solvers and their certificates.
//!
//! Three learning dynamics drive the game to equilibrium:
//!
//! * [`admm`] — the augmented-Lagrangian learner, as per-bus message
//!   passing over the communication harness and as an equivalent
//!   matrix-form engine;
//! * [`extragradient`] — the two-step projected method on the
//!   primal-dual operator, also run through the harness;
//! * [`gradient_play`] — projected best-response descent on the game
//!   map (needs dense in-area communication, so it bypasses the
//!   harness; see the module doc).
//!
//! Two solvers provide ground truth: [`reference`] certifies equilibria
//! by enumerating active sets, and [`global_opt`] computes the social
//! optimum a coordinated operator would reach. [`certificates`] derives
//! the step-size bounds under which the learner provably converges and
//! evaluates its ergodic convergence certificate.
//!
//! All runs share [`RunOptions`] and produce a
//! [`ConvergenceTrace`](crate::trace::ConvergenceTrace). Residuals,
//! objectives, and distances in the trace are computed by a centralized
//! observer for reporting only — they are not information available to
//! the buses and take no part in the distributed protocol (stopping on
//! them is the experimenter's call, as with any testbed).

pub mod admm;
pub mod certificates;
pub mod extragradient;
pub mod global_opt;
pub mod gradient_play;
pub mod reference;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::game::{Game, PrimalDualPoint};
use crate::trace::{ConvergenceTrace, ErgodicTrack, IterationRecord, RunStatus};

/// Options common to every solver run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a> {
    /// Reference equilibrium injections; enables the `dist_to_ref` trace
    /// column.
    pub reference_q: Option<&'a DVector<f64>>,
    /// Social-optimum injections; enables the `dist_to_opt` trace column.
    pub optimum_q: Option<&'a DVector<f64>>,
    /// Stop as soon as `||q - reference_q|| <=` this value (used when
    /// counting iterations-to-accuracy); requires `reference_q`.
    pub stop_at_reference_distance: Option<f64>,
    /// Start from these injections instead of zero.
    pub initial_q: Option<DVector<f64>>,
    /// Start the dual variables here instead of zero (the voltage
    /// estimate always starts at the measured profile).
    pub initial_theta: Option<DVector<f64>>,
    /// Record every `n`-th iteration (0 means every iteration); the
    /// initial state and the final iteration are always recorded.
    pub record_every: usize,
    /// Maintain the running ergodic average used by the convergence
    /// certificate (synchronous learner runs only).
    pub track_ergodic: bool,
}

impl RunOptions<'_> {
    fn cadence(&self) -> usize {
        self.record_every.max(1)
    }

    fn validate(&self) -> Result<()> {
        if self.stop_at_reference_distance.is_some() && self.reference_q.is_none() {
            return Err(Error::Config(
                "stopping on reference distance needs a reference point".into(),
            ));
        }
        if let Some(d) = self.stop_at_reference_distance {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Config(format!(
                    "reference-distance target must be positive, got {d}"
                )));
            }
        }
        if let Some(q0) = &self.initial_q {
            if q0.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config("initial injections contain a non-finite entry".into()));
            }
        }
        if let Some(th0) = &self.initial_theta {
            if th0.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config("initial duals contain a non-finite entry".into()));
            }
        }
        Ok(())
    }
}

/// Iteration budget and stopping tolerance shared by the iterative
/// solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveControl {
    pub max_iter: usize,
    /// Convergence tolerance on the observer's fixed-point residual and
    /// on iterate staleness.
    pub tol: f64,
}

impl SolveControl {
    pub fn new(max_iter: usize, tol: f64) -> Result<Self> {
        if max_iter == 0 {
            return Err(Error::Config("iteration budget must be positive".into()));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
        }
        Ok(SolveControl { max_iter, tol })
    }
}

/// Centralized observer: builds trace records, watches the divergence
/// guard, and owns the iterations-to-accuracy stop.
pub(crate) struct RunRecorder<'a> {
    game: &'a Game,
    opts: &'a RunOptions<'a>,
    records: Vec<IterationRecord>,
    /// Iterates whose magnitude passes this leave the guard region.
    guard: f64,
}

impl<'a> RunRecorder<'a> {
    pub(crate) fn new(game: &'a Game, opts: &'a RunOptions<'a>) -> Result<Self> {
        opts.validate()?;
        if let Some(r) = opts.reference_q {
            if r.len() != game.n() {
                return Err(Error::Config("reference point has the wrong dimension".into()));
            }
        }
        if let Some(o) = opts.optimum_q {
            if o.len() != game.n() {
                return Err(Error::Config("optimum point has the wrong dimension".into()));
            }
        }
        if let Some(q0) = &opts.initial_q {
            if q0.len() != game.n() {
                return Err(Error::Config("initial injections have the wrong dimension".into()));
            }
        }
        if let Some(th0) = &opts.initial_theta {
            if th0.len() != game.n() {
                return Err(Error::Config("initial duals have the wrong dimension".into()));
            }
        }
        // The interesting dynamics live at the scale of the voltage
        // targets and the VAR box; three orders of magnitude beyond that
        // is taken as divergence.
        let scale = 1.0_f64
            .max(game.costs.mu().amax())
            .max(game.limits.lower().amax())
            .max(game.limits.upper().amax());
        Ok(RunRecorder { game, opts, records: Vec::new(), guard: 1e3 * scale })
    }

    /// Starting injections for this run: caller-provided or zero.
    pub(crate) fn initial_q(&self) -> DVector<f64> {
        match &self.opts.initial_q {
            Some(q0) => self.game.limits.project(q0),
            None => DVector::zeros(self.game.n()),
        }
    }

    /// Starting duals for this run: caller-provided or zero.
    pub(crate) fn initial_theta(&self) -> DVector<f64> {
        match &self.opts.initial_theta {
            Some(th0) => th0.clone(),
            None => DVector::zeros(self.game.n()),
        }
    }

    /// True when any iterate component is non-finite or outside the
    /// guard region.
    pub(crate) fn out_of_bounds(&self, vectors: &[&DVector<f64>]) -> bool {
        vectors
            .iter()
            .any(|v| v.iter().any(|x| !x.is_finite()) || v.amax() > self.guard)
    }

    pub(crate) fn due(&self, t: usize) -> bool {
        t % self.opts.cadence() == 0
    }

    /// Appends a record for iteration `t` (skips nothing — callers gate
    /// on [`Self::due`] and force-record the final iteration).
    pub(crate) fn record(&mut self, t: usize, q: &DVector<f64>, violations: u64) {
        if self.records.last().is_some_and(|r| r.t == t) {
            return;
        }
        let game = self.game;
        let v = game.model.measure_voltage(q);
        let record = IterationRecord {
            t,
            objective: crate::game::global_objective(&v, q, &game.costs),
            nat_residual: game.natural_residual(q, 1.0),
            ec_residual: game.ec_residual(q).max_residual(),
            dist_to_ref: self.opts.reference_q.map(|r| (q - r).norm()),
            dist_to_opt: self.opts.optimum_q.map(|o| (q - o).norm()),
            audit_violations: violations,
            area_payoffs: (0..game.partition.area_count())
                .map(|k| crate::game::area_payoff(k, &v, q, &game.costs, &game.partition))
                .collect(),
        };
        self.records.push(record);
    }

    /// True when the iterations-to-accuracy stop applies at `q`.
    pub(crate) fn reached_reference(&self, q: &DVector<f64>) -> bool {
        match (self.opts.stop_at_reference_distance, self.opts.reference_q) {
            (Some(d), Some(r)) => (q - r).norm() <= d,
            _ => false,
        }
    }

    pub(crate) fn finish(
        self,
        status: RunStatus,
        iterations_run: usize,
        final_point: PrimalDualPoint,
        ergodic: Option<ErgodicTrack>,
        audit: Option<crate::comms::AuditSummary>,
    ) -> ConvergenceTrace {
        ConvergenceTrace {
            records: self.records,
            status,
            iterations_run,
            final_point,
            ergodic,
            audit,
        }
    }
}
