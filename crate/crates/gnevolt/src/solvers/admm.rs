//! The distributed equilibrium learner.
//!
//! Each area relaxes its copy of the network equation with a penalty
//! `rho` and an inertia term `beta`, yielding per-bus updates that need
//! only neighbor messages and a local voltage measurement:
//!
//! ```text
//!     r_j = sum_{i in cl(j)} B_ji (v_i - vm_i) + theta_j / rho
//!     g_j = sum_{i in cl(j)} B_ji r_i
//!     v_j+ = (gamma mu_j - rho g_j + beta v_j) / (gamma + beta)
//!     a_j  = sum_{i in cl(j)} B_ji (v_i+ - vm_i) + q_j + theta_j / rho
//!     q_j+ = clamp of the root of C_j'(s) + rho (s - a_j) = 0
//!     theta_j+ = theta_j + rho sum_{i in cl(j)} B_ji (v_i+ - vm_i+)
//! ```
//!
//! where `cl(j)` is bus `j` plus its in-area neighbors, `vm` is the
//! *measured* voltage profile (the feeder solves `B vm = q + w` for
//! free — reading it is how an area learns about everyone else without
//! talking to them), and `vm+` is the measurement after the new
//! injections are applied. The two cascaded neighbor sums (`r` then `g`)
//! realize the area-matrix square `B_kk' B_kk` in two message rounds;
//! with the measurement identities this makes every update exactly the
//! block-coordinate minimizer of the area's augmented problem — the
//! `v`-step is solved to optimality, which keeps its effective Hessian at
//! `(gamma + beta) I` regardless of `rho`.
//!
//! [`run_admm`] plays these updates through the message harness (four
//! exchange phases and two measurements per tick) under any update
//! schedule. [`run_admm_compact`] is the same arithmetic in stacked
//! matrix form,
//!
//! ```text
//!     g = Bt'(Bt (v - vm) + theta / rho)
//!     v+ = (gamma mu - rho g + beta v) / (gamma + beta)
//!     q+ = Sol(Bt (v+ - vm) + q + theta / rho)
//!     theta+ = theta + rho Bt (v+ - vm+),
//! ```
//!
//! used by the certificate machinery; the two engines agree trace for
//! trace to rounding. When asked, the compact and synchronous runs also
//! maintain the running average of the shifted iterates
//! `(v+, q+, theta + rho Bt (v+ - vm))` that the ergodic convergence
//! certificate evaluates (see [`super::certificates`]).

use nalgebra::DVector;

use crate::comms::{LocalityAudit, UpdateSchedule};
use crate::error::{Error, Result};
use crate::game::{BusCost, Game, PrimalDualPoint};
use crate::trace::{ConvergenceTrace, ErgodicTrack, RunStatus};

use super::{RunOptions, RunRecorder, SolveControl};

/// Which closed form the voltage-estimate step uses.
///
/// The default solves the proximal subproblem exactly, which costs two
/// message rounds (consensus residual out, weighted sum back). The
/// alternative replaces the residual with the extrapolated dual
/// difference `2 theta - theta_prev` — one message round — and divides
/// by `gamma (1 + beta)` instead of `gamma + beta`. Because the dual
/// update makes `theta - theta_prev = rho Bt (v - vm)`, the two rules
/// coincide exactly when `gamma = 1` and the run starts cold
/// (`v0 = vm0`); for any other target weight they genuinely differ, so
/// the rule is selectable to make the difference observable. The
/// convergence certificates are stated for the exact minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VoltageUpdate {
    #[default]
    ExactMinimizer,
    DualExtrapolation,
}

/// Penalty, inertia, and stopping parameters of the learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmConfig {
    /// Penalty on the relaxed network equation.
    pub rho: f64,
    /// Inertia of the voltage-estimate update.
    pub beta: f64,
    pub control: SolveControl,
    /// Width tolerance of the scalar root finder in the `q`-step.
    pub root_find_tol: f64,
    pub voltage_update: VoltageUpdate,
}

impl AdmmConfig {
    pub fn new(rho: f64, beta: f64, control: SolveControl) -> Result<Self> {
        let config = AdmmConfig {
            rho,
            beta,
            control,
            root_find_tol: 1e-12,
            voltage_update: VoltageUpdate::ExactMinimizer,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::Config(format!("penalty must be positive, got {}", self.rho)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::Config(format!("inertia must be positive, got {}", self.beta)));
        }
        if !(self.root_find_tol.is_finite() && self.root_find_tol > 0.0) {
            return Err(Error::Config(format!(
                "root-finder tolerance must be positive, got {}",
                self.root_find_tol
            )));
        }
        Ok(())
    }
}

/// Solves the bus response: the box-clamped root of
/// `C'(s) + rho (s - a) = 0`. Closed form for quadratic prices,
/// sign-safeguarded bisection otherwise. A decreasing derivative (a
/// nonconvex price smuggled past model validation) is reported as a
/// domain error instead of a wrong answer.
pub(crate) fn solve_bus_response(
    cost: &BusCost,
    lo: f64,
    hi: f64,
    rho: f64,
    a: f64,
    width_tol: f64,
) -> Result<f64> {
    if let BusCost::Quadratic { c } = *cost {
        let denom = c + rho;
        if denom <= 0.0 {
            return Err(Error::Domain(format!(
                "bus price curvature {c} plus penalty {rho} is not positive; \
                 the response problem has no minimizer"
            )));
        }
        return Ok((rho * a / denom).clamp(lo, hi));
    }
    let psi = |s: f64| cost.derivative(s) + rho * (s - a);
    let (psi_lo, psi_hi) = (psi(lo), psi(hi));
    if psi_lo > 0.0 && psi_hi < 0.0 {
        return Err(Error::Domain(
            "bus price derivative is not nondecreasing over the VAR box".into(),
        ));
    }
    if psi_lo >= 0.0 {
        return Ok(lo); // root lies at or below the box
    }
    if psi_hi <= 0.0 {
        return Ok(hi); // root lies at or above the box
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > width_tol {
        let mid = 0.5 * (lo + hi);
        if psi(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Runs the per-bus learner through the message harness under the given
/// update schedule. Frozen areas keep their state; the feeder always
/// reflects the latest committed injections of everyone.
pub fn run_admm(
    game: &Game,
    config: &AdmmConfig,
    schedule: &UpdateSchedule,
    opts: &RunOptions,
) -> Result<ConvergenceTrace> {
    config.validate()?;
    schedule.validate()?;
    let asynchronous = matches!(schedule, UpdateSchedule::Asynchronous { .. });
    if opts.track_ergodic && asynchronous {
        return Err(Error::Config(
            "the ergodic average is defined for synchronous runs only".into(),
        ));
    }
    let mut recorder = RunRecorder::new(game, opts)?;
    let n = game.n();
    let b = game.model.b();
    let (gamma, mu) = (game.costs.gamma(), game.costs.mu().clone());
    let (rho, beta) = (config.rho, config.beta);

    let mut q = recorder.initial_q();
    let mut vm = game.model.measure_voltage(&q);
    let mut v = vm.clone();
    let mut theta = recorder.initial_theta();
    // Each bus remembers the dual it used one update ago; seeded equal
    // to the initial dual so the extrapolated difference starts at zero.
    let mut theta_prev = theta.clone();
    let mut audit = LocalityAudit::new();
    let mut activations = schedule.activations(game.partition.area_count());
    let mut ergodic_sum = DVector::<f64>::zeros(3 * n);
    let mut ergodic = opts.track_ergodic.then(|| ErgodicTrack {
        omega0: PrimalDualPoint { v: v.clone(), q: q.clone(), theta: theta.clone() }.stacked(),
        averages: Vec::new(),
    });

    recorder.record(0, &q, 0);
    let mut status = RunStatus::MaxIterations;
    let mut iterations_run = config.control.max_iter;

    for t in 0..config.control.max_iter {
        let area_active = activations.next_tick();
        let bus_active: Vec<bool> =
            (0..n).map(|j| area_active[game.partition.area_of_index(j)]).collect();

        let mut v_next = v.clone();
        match config.voltage_update {
            VoltageUpdate::ExactMinimizer => {
                // Phase 1: every bus announces its voltage-estimate gap
                // v_i - vm_i; active buses accumulate the consensus
                // residual r.
                let gap: Vec<f64> = (0..n).map(|i| v[i] - vm[i]).collect();
                let mut r = vec![0.0; n];
                {
                    let mut view = game.comm.exchange("voltage-gap", t, &gap, &mut audit);
                    for j in 0..n {
                        if bus_active[j] {
                            r[j] = view.weighted_neighborhood_sum(j, |i| b[(j, i)])
                                + theta[j] / rho;
                        }
                    }
                }
                // Phase 2: residuals travel back across the same links,
                // closing the B_kk' B_kk square; the voltage estimate
                // relaxes toward the target against it.
                let mut view = game.comm.exchange("consensus-residual", t, &r, &mut audit);
                for j in 0..n {
                    if bus_active[j] {
                        let g = view.weighted_neighborhood_sum(j, |i| b[(j, i)]);
                        v_next[j] = (gamma * mu[j] - rho * g + beta * v[j]) / (gamma + beta);
                    }
                }
            }
            VoltageUpdate::DualExtrapolation => {
                // Single phase: extrapolated duals 2 theta - theta_prev
                // stand in for the consensus residual.
                let extrapolated: Vec<f64> =
                    (0..n).map(|i| 2.0 * theta[i] - theta_prev[i]).collect();
                let mut view =
                    game.comm.exchange("dual-extrapolation", t, &extrapolated, &mut audit);
                for j in 0..n {
                    if bus_active[j] {
                        let s = view.weighted_neighborhood_sum(j, |i| b[(j, i)]);
                        v_next[j] =
                            (gamma * mu[j] - s + beta * v[j]) / (gamma * (1.0 + beta));
                    }
                }
            }
        }

        // Phase 3: decided-voltage gaps v+ - vm; each active bus solves
        // its priced response around the implied local mismatch.
        let decided_gap: Vec<f64> = (0..n).map(|i| v_next[i] - vm[i]).collect();
        let mut q_next = q.clone();
        {
            let mut view = game.comm.exchange("decision-gap", t, &decided_gap, &mut audit);
            for j in 0..n {
                if bus_active[j] {
                    let a = view.weighted_neighborhood_sum(j, |i| b[(j, i)])
                        + q[j]
                        + theta[j] / rho;
                    q_next[j] = solve_bus_response(
                        &game.costs.bus_costs()[j],
                        game.limits.lower()[j],
                        game.limits.upper()[j],
                        rho,
                        a,
                        config.root_find_tol,
                    )?;
                }
            }
        }

        // Commit the injections; the feeder reacts and every bus reads
        // its new local voltage.
        let vm_next = game.model.measure_voltage(&q_next);

        // Phase 4: post-measurement gaps close the dual update.
        let post_gap: Vec<f64> = (0..n).map(|i| v_next[i] - vm_next[i]).collect();
        let mut theta_next = theta.clone();
        {
            let mut view = game.comm.exchange("post-gap", t, &post_gap, &mut audit);
            for j in 0..n {
                if bus_active[j] {
                    let s = view.weighted_neighborhood_sum(j, |i| b[(j, i)]);
                    theta_next[j] = theta[j] + rho * s;
                }
            }
        }

        if let Some(track) = ergodic.as_mut() {
            // Shifted iterate: theta advanced with the *pre-commit*
            // measurement, which is what the certificate averages.
            let theta_shift = &theta + rho * game.decomp.mul_btilde(&(&v_next - &vm));
            let omega = PrimalDualPoint {
                v: v_next.clone(),
                q: q_next.clone(),
                theta: theta_shift,
            };
            ergodic_sum += omega.stacked();
            if recorder.due(t) || t + 1 == config.control.max_iter {
                track.averages.push((t, &ergodic_sum / (t + 1) as f64));
            }
        }

        let theta_stale = (&theta_next - &theta).amax();
        for j in 0..n {
            if bus_active[j] {
                theta_prev[j] = theta[j];
            }
        }
        v = v_next;
        q = q_next;
        theta = theta_next;
        vm = vm_next;

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
            && theta_stale <= config.control.tol * (1.0 + theta.amax())
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
    Ok(recorder.finish(status, iterations_run, final_point, ergodic, Some(audit.summary())))
}

/// The same learner in stacked matrix form (synchronous only): one
/// linear-algebra pass per iteration instead of message phases.
pub fn run_admm_compact(
    game: &Game,
    config: &AdmmConfig,
    opts: &RunOptions,
) -> Result<ConvergenceTrace> {
    config.validate()?;
    let mut recorder = RunRecorder::new(game, opts)?;
    let n = game.n();
    let (gamma, mu) = (game.costs.gamma(), game.costs.mu().clone());
    let (rho, beta) = (config.rho, config.beta);

    let mut q = recorder.initial_q();
    let mut vm = game.model.measure_voltage(&q);
    let mut v = vm.clone();
    let mut theta = recorder.initial_theta();
    let mut theta_prev = theta.clone();
    let mut ergodic_sum = DVector::<f64>::zeros(3 * n);
    let mut ergodic = opts.track_ergodic.then(|| ErgodicTrack {
        omega0: PrimalDualPoint { v: v.clone(), q: q.clone(), theta: theta.clone() }.stacked(),
        averages: Vec::new(),
    });

    recorder.record(0, &q, 0);
    let mut status = RunStatus::MaxIterations;
    let mut iterations_run = config.control.max_iter;

    for t in 0..config.control.max_iter {
        let v_next = match config.voltage_update {
            VoltageUpdate::ExactMinimizer => {
                let r = game.decomp.mul_btilde(&(&v - &vm)) + &theta / rho;
                let g = game.decomp.mul_btilde(&r);
                (gamma * &mu - rho * &g + beta * &v) / (gamma + beta)
            }
            VoltageUpdate::DualExtrapolation => {
                let s = game.decomp.mul_btilde(&(2.0 * &theta - &theta_prev));
                (gamma * &mu - s + beta * &v) / (gamma * (1.0 + beta))
            }
        };

        let a = game.decomp.mul_btilde(&(&v_next - &vm)) + &q + &theta / rho;
        let mut q_next = q.clone();
        for j in 0..n {
            q_next[j] = solve_bus_response(
                &game.costs.bus_costs()[j],
                game.limits.lower()[j],
                game.limits.upper()[j],
                rho,
                a[j],
                config.root_find_tol,
            )?;
        }

        let vm_next = game.model.measure_voltage(&q_next);
        let theta_next = &theta + rho * game.decomp.mul_btilde(&(&v_next - &vm_next));

        if let Some(track) = ergodic.as_mut() {
            let theta_shift = &theta + rho * game.decomp.mul_btilde(&(&v_next - &vm));
            let omega = PrimalDualPoint {
                v: v_next.clone(),
                q: q_next.clone(),
                theta: theta_shift,
            };
            ergodic_sum += omega.stacked();
            if recorder.due(t) || t + 1 == config.control.max_iter {
                track.averages.push((t, &ergodic_sum / (t + 1) as f64));
            }
        }

        let theta_stale = (&theta_next - &theta).amax();
        theta_prev = theta;
        v = v_next;
        q = q_next;
        theta = theta_next;
        vm = vm_next;

        if recorder.out_of_bounds(&[&v, &q, &theta]) {
            recorder.record(t + 1, &q, 0);
            status = RunStatus::Diverged { iteration: t + 1 };
            iterations_run = t + 1;
            break;
        }
        if recorder.reached_reference(&q) {
            recorder.record(t + 1, &q, 0);
            status = RunStatus::ReachedReferenceTarget { iterations: t + 1 };
            iterations_run = t + 1;
            break;
        }
        if recorder.due(t + 1) {
            recorder.record(t + 1, &q, 0);
        }
        if game.natural_residual(&q, 1.0) <= config.control.tol
            && theta_stale <= config.control.tol * (1.0 + theta.amax())
        {
            recorder.record(t + 1, &q, 0);
            status = RunStatus::Converged { iterations: t + 1 };
            iterations_run = t + 1;
            break;
        }
    }

    if status == RunStatus::MaxIterations {
        recorder.record(config.control.max_iter, &q, 0);
    }
    let final_point = PrimalDualPoint { v, q, theta };
    Ok(recorder.finish(status, iterations_run, final_point, ergodic, None))
}
