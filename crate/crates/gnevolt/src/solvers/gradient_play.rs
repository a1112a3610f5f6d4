//! Projected descent on the game map — the correctness baseline.
//!
//! The iteration is the textbook fixed-point scheme
//!
//! ```text
//!     q <- P[q - eps Phi(q)],
//! ```
//!
//! whose fixed points are exactly the game's equilibria. Evaluating
//! `Phi` at a bus applies the *inverse* of the area block of the
//! network matrix to the measured voltage mismatch, and an inverse is
//! dense: every bus of the area contributes to every other, however far
//! apart they sit on the feeder. The scheme therefore needs
//! all-to-all communication within each area and cannot be driven
//! through the neighbor-only message harness — runs carry no locality
//! audit, and the trace marks the exemption by its absence. It is kept
//! as a simple, well-understood baseline for cross-checking limits, not
//! as a deployable protocol.

use crate::error::Result;
use crate::game::{Game, PrimalDualPoint};
use crate::trace::{ConvergenceTrace, RunStatus};

use super::{RunOptions, RunRecorder, SolveControl};
use crate::error::Error;

/// Step size and stopping parameters of the baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientPlayConfig {
    pub epsilon: f64,
    pub control: SolveControl,
}

impl GradientPlayConfig {
    pub fn new(epsilon: f64, control: SolveControl) -> Result<Self> {
        let config = GradientPlayConfig { epsilon, control };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "step size must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Runs projected descent on the game map.
pub fn run_gradient_play(
    game: &Game,
    config: &GradientPlayConfig,
    opts: &RunOptions,
) -> Result<ConvergenceTrace> {
    config.validate()?;
    let mut recorder = RunRecorder::new(game, opts)?;
    if opts.track_ergodic {
        return Err(Error::Config(
            "the ergodic average is defined for the equilibrium learner only".into(),
        ));
    }
    let eps = config.epsilon;
    let mut q = recorder.initial_q();

    recorder.record(0, &q, 0);
    let mut status = RunStatus::MaxIterations;
    let mut iterations_run = config.control.max_iter;

    for t in 0..config.control.max_iter {
        // The projection confines the iterate to the injection box, so an
        // oversized step cannot blow up -- it oscillates and exhausts the
        // budget instead.  No divergence guard is needed here.
        let q_next = game.limits.project(&(&q - eps * game.phi(&q)));
        q = q_next;

        if recorder.reached_reference(&q) {
            recorder.record(t + 1, &q, 0);
            status = RunStatus::ReachedReferenceTarget { iterations: t + 1 };
            iterations_run = t + 1;
            break;
        }
        if recorder.due(t + 1) {
            recorder.record(t + 1, &q, 0);
        }
        if game.natural_residual(&q, 1.0) <= config.control.tol {
            recorder.record(t + 1, &q, 0);
            status = RunStatus::Converged { iterations: t + 1 };
            iterations_run = t + 1;
            break;
        }
    }

    if status == RunStatus::MaxIterations {
        recorder.record(config.control.max_iter, &q, 0);
    }
    let v = game.model.measure_voltage(&q);
    let theta = -game.costs.gamma() * game.decomp.solve_btilde(&(&v - game.costs.mu()));
    let final_point = PrimalDualPoint { v, q, theta };
    Ok(recorder.finish(status, iterations_run, final_point, None, None))
}
