//! The social optimum: what a single coordinated operator would do.
//!
//! Eliminating the voltage through the network equation turns the
//! planning problem into a box-constrained convex program in the
//! injections alone,
//!
//! ```text
//!     minimize  gamma/2 ||B^{-1}(q + w) - mu||^2 + sum_j C_j(q_j)
//!     subject to  q in the VAR box,
//! ```
//!
//! solved here by projected gradient descent with step `1/L`. The
//! curvature bound `L` is `gamma` times the largest eigenvalue of
//! `B^{-2}` — estimated by power iteration, no explicit inverse — plus
//! the largest price curvature over the box. The optimizer's value is
//! the yardstick for the efficiency loss of selfish equilibria: on
//! multi-area scenarios the equilibrium objective sits strictly above
//! this one.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::game::{self, Game};

/// The social optimum and how it was reached.
#[derive(Debug, Clone)]
pub struct GlobalOptimum {
    pub q: DVector<f64>,
    /// Voltage profile at the optimal injections.
    pub v: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Unit-step projected-gradient residual at the returned point.
    pub residual: f64,
}

/// Safety cap; desk and feeder scale problems converge orders of
/// magnitude earlier.
const MAX_ITER: usize = 20_000_000;

/// Largest eigenvalue of `B^{-2}` by power iteration on repeated
/// solves.
fn largest_inverse_square_eigenvalue(game: &Game) -> f64 {
    let n = game.n();
    let mut y = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let z = game.model.solve_b(&game.model.solve_b(&y));
        let norm = z.norm();
        if norm == 0.0 {
            break;
        }
        let next = z / norm;
        let lambda_next = next.dot(&game.model.solve_b(&game.model.solve_b(&next)));
        let done = (lambda_next - lambda).abs() <= 1e-12 * lambda_next.abs();
        lambda = lambda_next;
        y = next;
        if done {
            break;
        }
    }
    lambda
}

/// Gradient of the reduced objective:
/// `gamma B^{-1}(B^{-1}(q+w) - mu) + C'(q)`.
fn objective_gradient(game: &Game, q: &DVector<f64>) -> DVector<f64> {
    let v = game.model.measure_voltage(q);
    game.costs.gamma() * game.model.solve_b(&(&v - game.costs.mu())) + game.costs.gradient(q)
}

/// Solves the coordinated planning problem to the given residual
/// tolerance.
pub fn solve_global_optimum(game: &Game, tol: f64) -> Result<GlobalOptimum> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    // Curvature bound, padded slightly so the power-iteration estimate
    // erring low cannot produce an overlong step.
    let l = 1.02 * game.costs.gamma() * largest_inverse_square_eigenvalue(game)
        + game.costs.max_curvature_within(&game.limits);
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::Internal(format!("degenerate curvature bound {l}")));
    }
    let step = 1.0 / l;

    let mut q = DVector::zeros(game.n());
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    for t in 0..MAX_ITER {
        let grad = objective_gradient(game, &q);
        residual = (&q - game.limits.project(&(&q - &grad))).amax();
        if residual <= tol {
            iterations = t;
            break;
        }
        q = game.limits.project(&(&q - step * &grad));
        iterations = t + 1;
    }
    if residual > tol {
        return Err(Error::Internal(
            "projected gradient exhausted its budget before reaching tolerance".into(),
        ));
    }
    let v = game.model.measure_voltage(&q);
    let objective = game::global_objective(&v, &q, &game.costs);
    Ok(GlobalOptimum { q, v, objective, iterations, residual })
}
