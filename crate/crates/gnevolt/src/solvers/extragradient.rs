//! Two-step projected method on the primal-dual operator.
//!
//! The game's equilibria are exactly the solutions of the variational
//! inequality over voltage estimates, injections, and duals with
//! operator
//!
//! ```text
//!     F(v, q, theta) = ( gamma (v - mu) + Bt theta,
//!                        C'(q) - theta,
//!                        -rho Bt (v - vm(q)) )
//! ```
//!
//! where `vm(q)` is the measured voltage at injections `q` and the box
//! constraint applies to `q` alone. Each iteration probes the operator
//! twice (half step, then the committed step from the original point),
//! which damps the rotation that plain projection diverges on:
//!
//! ```text
//!     half = P[omega - alpha F(omega)]
//!     next = P[omega - alpha F(half)]
//! ```
//!
//! Both probes are fully local: every term of `F` at a bus needs its own
//! state, one neighbor exchange of `(theta_i, v_i - vm_i)` pairs, and
//! its measured voltage — the half-step injections are physically
//! committed so `vm(q_half)` is a real measurement. The run therefore
//! goes through the message harness and carries a locality audit, like
//! the learner and unlike [`super::gradient_play`].

use nalgebra::DVector;

use crate::comms::LocalityAudit;
use crate::error::{Error, Result};
use crate::game::{Game, PrimalDualPoint};
use crate::trace::{ConvergenceTrace, RunStatus};

use super::{RunOptions, RunRecorder, SolveControl};

/// Step size, operator penalty, and stopping parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtragradientConfig {
    /// Step size of both projection steps.
    pub alpha: f64,
    /// Weight of the measurement-consistency block of the operator.
    pub rho: f64,
    pub control: SolveControl,
}

impl ExtragradientConfig {
    pub fn new(alpha: f64, rho: f64, control: SolveControl) -> Result<Self> {
        let config = ExtragradientConfig { alpha, rho, control };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.alpha)));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::Config(format!(
                "operator penalty must be positive, got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// One harness-mediated evaluation of the operator at `(v, q, theta)`
/// with measurement `vm`. Every bus reads only `(theta_i, v_i - vm_i)`
/// pairs from its closed neighborhood. Returns the first two operator
/// blocks plus the raw gap flux `Bt (v - vm)`; the caller scales the
/// latter by `-rho` to form the third block.
fn operator_via_exchange(
    game: &Game,
    phase: &'static str,
    tick: usize,
    v: &DVector<f64>,
    q: &DVector<f64>,
    theta: &DVector<f64>,
    vm: &DVector<f64>,
    audit: &mut LocalityAudit,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let n = game.n();
    let b = game.model.b();
    let (gamma, mu) = (game.costs.gamma(), game.costs.mu());
    let payload: Vec<[f64; 2]> = (0..n).map(|i| [theta[i], v[i] - vm[i]]).collect();
    let mut view = game.comm.exchange(phase, tick, &payload, audit);
    let mut f_v = DVector::zeros(n);
    let mut f_q = DVector::zeros(n);
    let mut gap_flux = DVector::zeros(n);
    for j in 0..n {
        let mut weighted_theta = 0.0;
        let mut weighted_gap = 0.0;
        let neighborhood: Vec<usize> = game.comm.closed_neighborhood(j).collect();
        for i in neighborhood {
            if let Some([th, gap]) = view.read(j, i) {
                weighted_theta += b[(j, i)] * th;
                weighted_gap += b[(j, i)] * gap;
            }
        }
        f_v[j] = gamma * (v[j] - mu[j]) + weighted_theta;
        f_q[j] = game.costs.bus_costs()[j].derivative(q[j]) - theta[j];
        gap_flux[j] = weighted_gap;
    }
    (f_v, f_q, gap_flux)
}

/// Runs the two-step projected method through the message harness.
pub fn run_extragradient(
    game: &Game,
    config: &ExtragradientConfig,
    opts: &RunOptions,
) -> Result<ConvergenceTrace> {
    config.validate()?;
    let mut recorder = RunRecorder::new(game, opts)?;
    if opts.track_ergodic {
        return Err(Error::Config(
            "the ergodic average is defined for the equilibrium learner only".into(),
        ));
    }
    let (alpha, rho) = (config.alpha, config.rho);

    let mut q = recorder.initial_q();
    let mut vm = game.model.measure_voltage(&q);
    let mut v = vm.clone();
    let mut theta = recorder.initial_theta();
    let mut audit = LocalityAudit::new();

    recorder.record(0, &q, 0);
    let mut status = RunStatus::MaxIterations;
    let mut iterations_run = config.control.max_iter;

    for t in 0..config.control.max_iter {
        // Probe 1: operator at the current point; the third block is
        // -rho times the gap flux, so subtracting it adds the flux back.
        let (f_v, f_q, gap_flux) =
            operator_via_exchange(game, "half-step-operator", t, &v, &q, &theta, &vm, &mut audit);
        let v_half = &v - alpha * &f_v;
        let q_half = game.limits.project(&(&q - alpha * &f_q));
        let theta_half = &theta + alpha * rho * &gap_flux;

        // Commit the half-step injections; the feeder answers.
        let vm_half = game.model.measure_voltage(&q_half);

        // Probe 2: operator at the half point, stepped from the
        // original point.
        let (f_v2, f_q2, gap_flux2) = operator_via_exchange(
            game,
            "full-step-operator",
            t,
            &v_half,
            &q_half,
            &theta_half,
            &vm_half,
            &mut audit,
        );
        let v_next = &v - alpha * &f_v2;
        let q_next = game.limits.project(&(&q - alpha * &f_q2));
        let theta_next = &theta + alpha * rho * &gap_flux2;

        let staleness = (&v_next - &v)
            .amax()
            .max((&q_next - &q).amax())
            .max((&theta_next - &theta).amax());
        let scale = v.amax().max(q.amax()).max(theta.amax());
        v = v_next;
        q = q_next;
        theta = theta_next;
        vm = game.model.measure_voltage(&q);

        if recorder.out_of_bounds(&[&v, &q, &theta]) {
            recorder.record(t + 1, &q, audit.violation_count());
            status = RunStatus::Diverged { iteration: t + 1 };
            iterations_run = t + 1;
            break;
        }
        if recorder.reached_reference(&q) {
            recorder.record(t + 1, &q, audit.violation_count());
            status = RunStatus::ReachedReferenceTarget { iterations: t + 1 };
            iterations_run = t + 1;
            break;
        }
        if recorder.due(t + 1) {
            recorder.record(t + 1, &q, audit.violation_count());
        }
        if game.natural_residual(&q, 1.0) <= config.control.tol
            && staleness <= config.control.tol * (1.0 + scale)
        {
            recorder.record(t + 1, &q, audit.violation_count());
            status = RunStatus::Converged { iterations: t + 1 };
            iterations_run = t + 1;
            break;
        }
    }

    if status == RunStatus::MaxIterations {
        recorder.record(config.control.max_iter, &q, audit.violation_count());
    }
    let final_point = PrimalDualPoint { v, q, theta };
    Ok(recorder.finish(status, iterations_run, final_point, None, Some(audit.summary())))
}
