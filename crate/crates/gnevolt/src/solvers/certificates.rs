//! Convergence certificates for the equilibrium learner.
//!
//! The learner's penalty and inertia cannot be chosen freely: the
//! admissible region is
//!
//! ```text
//!     rho  <=  1 / ||Bt B^{-1}||_2^2        (rho_max)
//!     beta >=  rho ||Bt' Bt||_2             (beta_min)
//! ```
//!
//! where `Bt` is the same-area mask of the network matrix. Inside it,
//! two matrices govern the analysis: the weighting
//!
//! ```text
//!     H = blockdiag(beta I - rho Bt' Bt,  rho I,  I)
//! ```
//!
//! under whose norm the iteration is tracked, and the update-coupling
//! matrix `M` (identity except for the `-rho Bt B^{-1}` block linking
//! dual to injection steps) through which consecutive iterates relate
//! as `omega+ = omega - M (omega - omega~)`. Their products `Q = H M`
//! and `R = 2Q - M' Q` must have positive-semidefinite symmetric parts
//! for the learner's descent argument to close; [`certificate_matrices`]
//! assembles all four and reports the two smallest eigenvalues.
//!
//! [`ergodic_gap_margins`] checks the resulting convergence guarantee on
//! an actual run: for every probe point `omega` and every recorded
//! iteration of the averaged shifted trajectory,
//!
//! ```text
//!     (avg~(t) - omega)' F(omega)  <=  ||omega - omega0||_H^2 / (2(t+1)),
//! ```
//!
//! reported as the margin (right side minus left side), which must be
//! nonnegative wherever the operator is monotone.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::game::{self, Game, PrimalDualPoint};
use crate::trace::ErgodicTrack;

/// The admissible-region boundary for the learner's parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizeBounds {
    /// Largest admissible physics penalty.
    pub rho_max: f64,
    /// `||Bt' Bt||_2`, the scale of the inertia floor.
    pub btilde_gram_norm: f64,
}

impl StepSizeBounds {
    /// Smallest admissible inertia at penalty `rho`.
    pub fn beta_min(&self, rho: f64) -> f64 {
        rho * self.btilde_gram_norm
    }
}

fn inverse_of(game: &Game) -> Result<DMatrix<f64>> {
    game.model
        .b()
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Internal("model matrix lost definiteness".into()))
}

/// Computes the admissible-region boundary for a game's decomposition.
pub fn step_size_bounds(game: &Game) -> Result<StepSizeBounds> {
    let btilde = game.decomp.btilde();
    let coupling = btilde * inverse_of(game)?;
    let coupling_gram = coupling.transpose() * &coupling;
    let sigma_sq = coupling_gram.symmetric_eigen().eigenvalues.max();
    if !(sigma_sq.is_finite() && sigma_sq > 0.0) {
        return Err(Error::Internal(format!("degenerate coupling norm {sigma_sq}")));
    }
    let gram = btilde.transpose() * btilde;
    let btilde_gram_norm = gram.symmetric_eigen().eigenvalues.max();
    Ok(StepSizeBounds { rho_max: 1.0 / sigma_sq, btilde_gram_norm })
}

/// The analysis matrices at a specific `(rho, beta)`.
#[derive(Debug, Clone)]
pub struct CertificateMatrices {
    pub h: DMatrix<f64>,
    pub m: DMatrix<f64>,
    /// Exactly the product `h * m`, by construction.
    pub q: DMatrix<f64>,
    /// `2 q - m' q`.
    pub r: DMatrix<f64>,
    /// Smallest eigenvalue of the symmetric part of `h`.
    pub h_sym_min: f64,
    /// Smallest eigenvalue of the symmetric part of `r`.
    pub r_sym_min: f64,
}

/// Assembles the weighting, coupling, and descent matrices at
/// `(rho, beta)` and their definiteness margins.
pub fn certificate_matrices(game: &Game, rho: f64, beta: f64) -> Result<CertificateMatrices> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::Config(format!("penalty must be positive, got {rho}")));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Config(format!("inertia must be positive, got {beta}")));
    }
    let n = game.n();
    let btilde = game.decomp.btilde();
    let b_inv = inverse_of(game)?;

    let mut h = DMatrix::zeros(3 * n, 3 * n);
    let first_block = DMatrix::identity(n, n) * beta - rho * (btilde.transpose() * btilde);
    h.view_mut((0, 0), (n, n)).copy_from(&first_block);
    for i in 0..n {
        h[(n + i, n + i)] = rho;
        h[(2 * n + i, 2 * n + i)] = 1.0;
    }

    let mut m = DMatrix::identity(3 * n, 3 * n);
    m.view_mut((2 * n, n), (n, n)).copy_from(&(-rho * (btilde * &b_inv)));

    let q = &h * &m;
    let r = 2.0 * &q - m.transpose() * &q;

    let h_sym = 0.5 * (&h + h.transpose());
    let r_sym = 0.5 * (&r + r.transpose());
    let h_sym_min = h_sym.symmetric_eigen().eigenvalues.min();
    let r_sym_min = r_sym.symmetric_eigen().eigenvalues.min();

    Ok(CertificateMatrices { h, m, q, r, h_sym_min, r_sym_min })
}

/// `x' H x` — the squared tracking norm of the analysis.
pub fn h_weighted_norm_sq(h: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(h * x))
}

/// Deterministic probe points in the constraint set: voltages around
/// the target, injections uniform in the box, duals around zero.
pub fn random_probes(game: &Game, count: usize, seed: u64, spread: f64) -> Vec<DVector<f64>> {
    let n = game.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut probe = DVector::zeros(3 * n);
            for i in 0..n {
                probe[i] = game.costs.mu()[i] + rng.random_range(-spread..spread);
            }
            for i in 0..n {
                let (lo, hi) = (game.limits.lower()[i], game.limits.upper()[i]);
                probe[n + i] = rng.random_range(lo..hi);
            }
            for i in 0..n {
                probe[2 * n + i] = rng.random_range(-spread..spread);
            }
            probe
        })
        .collect()
}

/// Margins of the ergodic convergence guarantee along a tracked run:
/// one inner vector per probe, one entry per recorded average, ordered
/// as in `track.averages`.
pub fn ergodic_gap_margins(
    track: &ErgodicTrack,
    probes: &[DVector<f64>],
    h: &DMatrix<f64>,
    game: &Game,
    rho: f64,
) -> Vec<Vec<f64>> {
    let n = game.n();
    probes
        .iter()
        .map(|probe| {
            let point = PrimalDualPoint::from_stacked(probe, n);
            let f_probe = game::f_mapping(&point, rho, &game.model, &game.costs, &game.decomp);
            let weight = h_weighted_norm_sq(h, &(probe - &track.omega0));
            track
                .averages
                .iter()
                .map(|(t, average)| {
                    let gap = (average - probe).dot(&f_probe);
                    weight / (2.0 * (*t as f64 + 1.0)) - gap
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{CommPartition, CostModel, VarLimits};
    use crate::grid::{GridModel, WeightConvention};
    use crate::solvers::admm::{run_admm_compact, AdmmConfig};
    use crate::solvers::{RunOptions, SolveControl};
    use crate::test_util::chain_topology;
    use approx::assert_relative_eq;

    fn chain2(areas: Vec<Vec<usize>>, c: f64) -> Game {
        let topo = chain_topology(2, 1.0);
        let model = GridModel::from_topology(
            &topo,
            WeightConvention::InvX,
            DVector::from_row_slice(&[0.97, 0.95]),
        )
        .unwrap();
        let costs = CostModel::uniform_quadratic(2, 1.0, 1.0, c);
        let limits = VarLimits::symmetric(2, 0.8);
        let partition = CommPartition::new(areas, 2).unwrap();
        Game::new(topo, model, costs, limits, partition).unwrap()
    }

    #[test]
    fn single_area_admits_unit_penalty() {
        // One area: the mask is the full matrix, the coupling is the
        // identity, and the penalty cap is exactly one.
        let game = chain2(vec![vec![1, 2]], 0.1);
        let bounds = step_size_bounds(&game).unwrap();
        assert_relative_eq!(bounds.rho_max, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn inertia_floor_matches_the_hand_computed_spectrum() {
        // Chain of two, one area: ||B' B||_2 = ((3+sqrt 5)/2)^2, the
        // squared large eigenvalue of [[2,-1],[-1,1]].
        let game = chain2(vec![vec![1, 2]], 0.1);
        let bounds = step_size_bounds(&game).unwrap();
        let expected = (7.0 + 3.0 * 5.0_f64.sqrt()) / 2.0;
        assert_relative_eq!(bounds.btilde_gram_norm, expected, epsilon = 1e-12);
        assert_relative_eq!(bounds.beta_min(0.25), 0.25 * expected, epsilon = 1e-12);
    }

    #[test]
    fn split_areas_tighten_the_penalty_cap() {
        let game = chain2(vec![vec![1], vec![2]], 0.1);
        let bounds = step_size_bounds(&game).unwrap();
        assert!(
            bounds.rho_max < 1.0,
            "off-diagonal coupling must shrink the cap, got {}",
            bounds.rho_max
        );
    }

    #[test]
    fn weighting_matrix_degenerates_exactly_at_the_floor() {
        let game = chain2(vec![vec![1, 2]], 0.1);
        let bounds = step_size_bounds(&game).unwrap();
        let rho = bounds.rho_max;
        let mats = certificate_matrices(&game, rho, bounds.beta_min(rho)).unwrap();
        // At beta = beta_min the first block of H touches zero from
        // above; below the floor it must dip negative.
        assert!(mats.h_sym_min >= -1e-10, "h_sym_min {}", mats.h_sym_min);
        assert!(mats.h_sym_min <= 1e-10);
        let below = certificate_matrices(&game, rho, 0.9 * bounds.beta_min(rho)).unwrap();
        assert!(below.h_sym_min < -1e-3);
    }

    #[test]
    fn descent_matrix_stays_semidefinite_on_the_admissible_boundary() {
        for areas in [vec![vec![1, 2]], vec![vec![1], vec![2]]] {
            let game = chain2(areas, 0.1);
            let bounds = step_size_bounds(&game).unwrap();
            let rho = bounds.rho_max;
            let mats = certificate_matrices(&game, rho, bounds.beta_min(rho)).unwrap();
            assert!(mats.r_sym_min >= -1e-10, "r_sym_min {}", mats.r_sym_min);
        }
    }

    #[test]
    fn product_matrix_is_exactly_the_product() {
        let game = chain2(vec![vec![1], vec![2]], 0.1);
        let mats = certificate_matrices(&game, 0.05, 0.7).unwrap();
        let recomputed = &mats.h * &mats.m;
        assert_eq!(mats.q, recomputed, "q must be bitwise the product h * m");
        let r_recomputed = 2.0 * &mats.q - mats.m.transpose() * &mats.q;
        assert_eq!(mats.r, r_recomputed);
    }

    #[test]
    fn descent_matrix_symmetric_part_has_the_predicted_block_structure() {
        // sym(R) = blockdiag(beta I - rho Bt'Bt,
        //                    rho (I - rho B^-T Bt'Bt B^-1), I): the
        //                    cross blocks cancel exactly.
        let game = chain2(vec![vec![1], vec![2]], 0.1);
        let (rho, beta) = (0.04, 0.9);
        let mats = certificate_matrices(&game, rho, beta).unwrap();
        let n = game.n();
        let btilde = game.decomp.btilde();
        let b_inv = game.model.b().clone().cholesky().unwrap().inverse();

        let r_sym = 0.5 * (&mats.r + mats.r.transpose());
        let mut expected = DMatrix::zeros(3 * n, 3 * n);
        expected
            .view_mut((0, 0), (n, n))
            .copy_from(&(DMatrix::identity(n, n) * beta - rho * (btilde.transpose() * btilde)));
        let coupling = btilde * &b_inv;
        expected.view_mut((n, n), (n, n)).copy_from(
            &(rho * (DMatrix::identity(n, n) - rho * (coupling.transpose() * &coupling))),
        );
        expected.view_mut((2 * n, 2 * n), (n, n)).copy_from(&DMatrix::identity(n, n));
        assert_relative_eq!(r_sym, expected, epsilon = 1e-12);
    }

    #[test]
    fn probe_generation_is_seeded_and_respects_the_box() {
        let game = chain2(vec![vec![1], vec![2]], 0.1);
        let a = random_probes(&game, 10, 7, 0.5);
        let b = random_probes(&game, 10, 7, 0.5);
        let c = random_probes(&game, 10, 8, 0.5);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for probe in &a {
            let q = probe.rows(2, 2);
            assert!(q[0].abs() <= 0.8 && q[1].abs() <= 0.8);
        }
    }

    #[test]
    fn ergodic_margins_are_nonnegative_on_a_monotone_run() {
        // Single area at the penalty cap: the primal-dual operator is
        // monotone there, so the averaged-iterate guarantee must hold
        // at every probe and every recorded iteration.
        let game = chain2(vec![vec![1, 2]], 0.1);
        let bounds = step_size_bounds(&game).unwrap();
        let rho = bounds.rho_max;
        let beta = bounds.beta_min(rho);
        let cfg = AdmmConfig::new(rho, beta, SolveControl::new(400, 1e-30).unwrap()).unwrap();
        let opts = RunOptions { track_ergodic: true, record_every: 1, ..Default::default() };
        let trace = run_admm_compact(&game, &cfg, &opts).unwrap();
        let track = trace.ergodic.expect("tracking requested");

        let mats = certificate_matrices(&game, rho, beta).unwrap();
        let probes = random_probes(&game, 10, 11, 0.5);
        let margins = ergodic_gap_margins(&track, &probes, &mats.h, &game, rho);
        assert_eq!(margins.len(), 10);
        for (p, per_probe) in margins.iter().enumerate() {
            assert_eq!(per_probe.len(), track.averages.len());
            for (idx, &margin) in per_probe.iter().enumerate() {
                assert!(
                    margin >= -1e-9,
                    "probe {p} violates the guarantee at record {idx}: margin {margin}"
                );
            }
        }
    }

    #[test]
    fn margins_at_an_equilibrium_probe_reduce_to_the_weighted_distance() {
        // F vanishes at the equilibrium, so the gap term drops and the
        // margin is the (nonnegative) weighted distance term alone.
        let game = chain2(vec![vec![1, 2]], 0.1);
        let outcome = crate::solvers::reference::solve_reference_gne(&game).unwrap();
        let sol = outcome.unique().unwrap();
        let v_star = game.model.measure_voltage(&sol.q);
        let omega_star = PrimalDualPoint {
            v: v_star,
            q: sol.q.clone(),
            theta: sol.theta.clone(),
        }
        .stacked();

        let bounds = step_size_bounds(&game).unwrap();
        let rho = bounds.rho_max;
        let beta = bounds.beta_min(rho);
        let cfg = AdmmConfig::new(rho, beta, SolveControl::new(50, 1e-30).unwrap()).unwrap();
        let opts = RunOptions { track_ergodic: true, record_every: 1, ..Default::default() };
        let trace = run_admm_compact(&game, &cfg, &opts).unwrap();
        let track = trace.ergodic.unwrap();
        let mats = certificate_matrices(&game, rho, beta).unwrap();

        let margins = ergodic_gap_margins(&track, &[omega_star.clone()], &mats.h, &game, rho);
        let weight = h_weighted_norm_sq(&mats.h, &(&omega_star - &track.omega0));
        for (idx, &(t, _)) in track.averages.iter().enumerate() {
            let expected = weight / (2.0 * (t as f64 + 1.0));
            assert_relative_eq!(margins[0][idx], expected, epsilon = 1e-9);
            assert!(margins[0][idx] >= 0.0);
        }
    }
}
