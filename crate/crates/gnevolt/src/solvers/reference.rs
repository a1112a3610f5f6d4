//! Ground-truth equilibria by exhaustive active-set certification.
//!
//! For quadratic prices the game map is affine, so an equilibrium is
//! pinned down by which coordinates sit on their VAR bounds: fix the
//! bound-pinned coordinates, solve the remaining linear system, and
//! check the sign conditions that make the bound multipliers valid.
//! Enumerating the `3^N` lower/free/upper label vectors — nearest
//! deviations from the unconstrained solution's clamp pattern first,
//! since the accepting set is almost always there — finds *every*
//! equilibrium, not just the one a particular dynamic happens to reach.
//! When the game map is certifiably strongly monotone the first
//! accepted label is provably the only one and the sweep stops early.
//!
//! Non-quadratic prices and games beyond [`ENUMERATION_BUS_LIMIT`]
//! buses fall back to a long-horizon two-step projected method on the
//! injection-space inequality, certified afterwards by the same
//! equilibrium conditions. Either way, every returned solution carries
//! its certificate; nothing is accepted on faith.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{self, Game, KktCertificate};

/// How a reference solution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMethod {
    ExhaustiveEnumeration,
    VariationalFallback,
}

/// One certified equilibrium.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub q: DVector<f64>,
    /// Dual consistent with the equilibrium voltage deviation.
    pub theta: DVector<f64>,
    pub certificate: KktCertificate,
}

/// Everything the oracle found.
#[derive(Debug, Clone)]
pub struct ReferenceOutcome {
    /// Distinct equilibria (injections differing by more than the
    /// dedup tolerance).
    pub solutions: Vec<ReferenceSolution>,
    pub method: ReferenceMethod,
    /// Smallest eigenvalue of the symmetric part of the game-map
    /// Jacobian; positive certifies uniqueness. Only computable for
    /// quadratic prices.
    pub monotonicity_margin: Option<f64>,
}

impl ReferenceOutcome {
    pub fn is_unique(&self) -> bool {
        self.solutions.len() == 1
    }

    /// The single equilibrium, or an error naming how many there are.
    pub fn unique(&self) -> Result<&ReferenceSolution> {
        match self.solutions.as_slice() {
            [single] => Ok(single),
            many => Err(Error::NoEquilibrium(format!(
                "expected a unique equilibrium, found {}",
                many.len()
            ))),
        }
    }
}

/// Beyond this, `3^N` labels stop being a reasonable sweep.
pub const ENUMERATION_BUS_LIMIT: usize = 16;
/// Full (no early exit) sweeps are guaranteed up to this size.
const FULL_SWEEP_BUS_LIMIT: usize = 12;
/// Acceptance threshold on the equilibrium-certificate residual.
const ACCEPT_TOL: f64 = 1e-9;
/// Two accepted injections closer than this are the same equilibrium.
const DEDUP_TOL: f64 = 1e-9;
/// Monotonicity margins above this certify uniqueness.
const MARGIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Lower,
    Free,
    Upper,
}

/// Computes the oracle answer for the game.
pub fn solve_reference_gne(game: &Game) -> Result<ReferenceOutcome> {
    let n = game.n();
    let quadratic = game.costs.quadratic_curvatures().is_some();
    if quadratic && n <= ENUMERATION_BUS_LIMIT {
        let margin =
            game::phi_jacobian_symmetric_part_minimum(&game.model, &game.costs, &game.decomp)?;
        if n <= FULL_SWEEP_BUS_LIMIT || margin > MARGIN_TOL {
            return enumerate_active_sets(game, margin);
        }
    }
    variational_fallback(game)
}

/// The dual profile the learner's multipliers settle at:
/// `-gamma Bt^{-1} (v - mu)` at the equilibrium voltage.
fn equilibrium_dual(game: &Game, q: &DVector<f64>) -> DVector<f64> {
    let v = game.model.measure_voltage(q);
    -game.costs.gamma() * game.decomp.solve_btilde(&(&v - game.costs.mu()))
}

fn enumerate_active_sets(game: &Game, margin: f64) -> Result<ReferenceOutcome> {
    let n = game.n();
    let jac = game::phi_jacobian(&game.model, &game.costs, &game.decomp)?;
    let phi0 = game::phi(&DVector::zeros(n), &game.model, &game.costs, &game.decomp);
    let (lo, hi) = (game.limits.lower(), game.limits.upper());

    // The unconstrained stationary point orients the search: its clamp
    // pattern is the first label tried, then patterns by deviation
    // count.
    let base_labels: Vec<Label> = match jac.clone().lu().solve(&(-&phi0)) {
        Some(q_unconstrained) => (0..n)
            .map(|j| {
                if q_unconstrained[j] <= lo[j] {
                    Label::Lower
                } else if q_unconstrained[j] >= hi[j] {
                    Label::Upper
                } else {
                    Label::Free
                }
            })
            .collect(),
        // A singular affine map leaves no preferred orientation.
        None => vec![Label::Free; n],
    };

    let early_exit = margin > MARGIN_TOL;
    let mut accepted: Vec<ReferenceSolution> = Vec::new();

    // Deviation-first sweep: for each deviation count d, every choice
    // of d positions, every reassignment of those positions to their
    // two other labels. Union over d = 0..=n is exactly the 3^n labels.
    'sweep: for deviations in 0..=n {
        let mut positions: Vec<usize> = (0..deviations).collect();
        loop {
            let mut alternative = vec![0u8; deviations];
            loop {
                let mut labels = base_labels.clone();
                for (slot, &pos) in positions.iter().enumerate() {
                    labels[pos] = other_labels(base_labels[pos])[alternative[slot] as usize];
                }
                if let Some(solution) = try_labels(game, &jac, &phi0, &labels) {
                    if !accepted
                        .iter()
                        .any(|s| (&s.q - &solution.q).amax() <= DEDUP_TOL)
                    {
                        accepted.push(solution);
                        if early_exit {
                            break 'sweep;
                        }
                    }
                }
                // Odometer over the 2^d alternative assignments.
                let mut slot = 0;
                loop {
                    if slot == deviations {
                        break;
                    }
                    alternative[slot] += 1;
                    if alternative[slot] < 2 {
                        break;
                    }
                    alternative[slot] = 0;
                    slot += 1;
                }
                if slot == deviations {
                    break;
                }
            }
            if !next_combination(&mut positions, n) {
                break;
            }
        }
    }

    if accepted.is_empty() {
        return Err(Error::NoEquilibrium(
            "no bound pattern admits an equilibrium; the game model is inconsistent".into(),
        ));
    }
    Ok(ReferenceOutcome {
        solutions: accepted,
        method: ReferenceMethod::ExhaustiveEnumeration,
        monotonicity_margin: Some(margin),
    })
}

fn other_labels(label: Label) -> [Label; 2] {
    match label {
        Label::Lower => [Label::Free, Label::Upper],
        Label::Free => [Label::Lower, Label::Upper],
        Label::Upper => [Label::Lower, Label::Free],
    }
}

/// Advances `positions` to the next ascending index combination out of
/// `n`; false when exhausted.
fn next_combination(positions: &mut [usize], n: usize) -> bool {
    let d = positions.len();
    if d == 0 {
        return false;
    }
    let mut i = d;
    while i > 0 {
        i -= 1;
        if positions[i] < n - (d - i) {
            positions[i] += 1;
            for k in i + 1..d {
                positions[k] = positions[k - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Solves the affine system under one label vector and certifies it.
/// `None` means the label does not admit an equilibrium.
fn try_labels(
    game: &Game,
    jac: &DMatrix<f64>,
    phi0: &DVector<f64>,
    labels: &[Label],
) -> Option<ReferenceSolution> {
    let n = game.n();
    let (lo, hi) = (game.limits.lower(), game.limits.upper());
    let free: Vec<usize> = (0..n).filter(|&j| labels[j] == Label::Free).collect();

    let mut q = DVector::zeros(n);
    for j in 0..n {
        q[j] = match labels[j] {
            Label::Lower => lo[j],
            Label::Upper => hi[j],
            Label::Free => 0.0,
        };
    }
    if !free.is_empty() {
        // jac_FF q_F = -phi0_F - jac_FX q_X over the fixed coordinates.
        let mut a = DMatrix::zeros(free.len(), free.len());
        let mut rhs = DVector::zeros(free.len());
        for (r, &fr) in free.iter().enumerate() {
            let mut acc = -phi0[fr];
            for j in 0..n {
                if labels[j] != Label::Free {
                    acc -= jac[(fr, j)] * q[j];
                }
            }
            rhs[r] = acc;
            for (c, &fc) in free.iter().enumerate() {
                a[(r, c)] = jac[(fr, fc)];
            }
        }
        let q_free = a.lu().solve(&rhs)?;
        for (r, &fr) in free.iter().enumerate() {
            // A free coordinate outside its box contradicts the label.
            let slack = ACCEPT_TOL * (hi[fr] - lo[fr]);
            if q_free[r] < lo[fr] - slack || q_free[r] > hi[fr] + slack {
                return None;
            }
            q[fr] = q_free[r].clamp(lo[fr], hi[fr]);
        }
    }

    // Cheap affine screen before the full physics-backed certificate.
    let phi = jac * &q + phi0;
    for j in 0..n {
        let width = hi[j] - lo[j];
        let ok = match labels[j] {
            Label::Free => phi[j].abs() <= ACCEPT_TOL * (1.0 + phi[j].abs()).max(width),
            // At the upper bound the map must push up (multiplier
            // -phi >= 0); at the lower bound, down.
            Label::Upper => phi[j] <= ACCEPT_TOL,
            Label::Lower => phi[j] >= -ACCEPT_TOL,
        };
        if !ok {
            return None;
        }
    }

    let certificate = game.ec_residual(&q);
    if certificate.max_residual() > ACCEPT_TOL {
        return None;
    }
    let theta = equilibrium_dual(game, &q);
    Some(ReferenceSolution { q, theta, certificate })
}

/// Two-step projected method on the injection-space inequality, run to
/// certificate accuracy. Used where enumeration is unavailable.
fn variational_fallback(game: &Game) -> Result<ReferenceOutcome> {
    let n = game.n();
    // Lipschitz bound on the game map: the target-tracking part plus
    // the steepest price curvature inside the box.
    let b_inv = game
        .model
        .b()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Internal("model matrix lost definiteness".into()))?
        .inverse();
    let coupling = game.decomp.solve_btilde_matrix(&b_inv);
    let gram = coupling.transpose() * &coupling;
    let l = game.costs.gamma() * gram.symmetric_eigen().eigenvalues.max().sqrt()
        + game.costs.max_curvature_within(&game.limits);
    let alpha = 0.45 / l;

    const MAX_ITER: usize = 5_000_000;
    const TOL: f64 = 1e-12;
    let mut q = DVector::zeros(n);
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let half = game.limits.project(&(&q - alpha * game.phi(&q)));
        let next = game.limits.project(&(&q - alpha * game.phi(&half)));
        q = next;
        if game.natural_residual(&q, 1.0) <= TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoEquilibrium(format!(
            "the fallback dynamic did not certify an equilibrium within {MAX_ITER} iterations"
        )));
    }
    let certificate = game.ec_residual(&q);
    if certificate.max_residual() > ACCEPT_TOL {
        return Err(Error::NoEquilibrium(format!(
            "fallback limit point failed certification with residual {}",
            certificate.max_residual()
        )));
    }
    let theta = equilibrium_dual(game, &q);
    let margin = game
        .costs
        .quadratic_curvatures()
        .map(|_| {
            game::phi_jacobian_symmetric_part_minimum(&game.model, &game.costs, &game.decomp)
        })
        .transpose()?;
    Ok(ReferenceOutcome {
        solutions: vec![ReferenceSolution { q, theta, certificate }],
        method: ReferenceMethod::VariationalFallback,
        monotonicity_margin: margin,
    })
}
