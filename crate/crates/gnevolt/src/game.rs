//! The voltage-control game: costs, area partitions, the block
//! decomposition of the network matrix, and the operators whose zeros /
//! solutions characterize equilibria.
//!
//! Each communication area `k` controls the injections of its buses and
//! minimizes
//!
//! ```text
//!     J_k(v_k, q_k) = (gamma / 2) ||v_k - mu_k||^2 + sum_{j in area k} C_j(q_j)
//! ```
//!
//! subject to box limits on `q_k` and to its slice of the shared physics
//! `B v = q + w`. Eliminating the other areas' voltages through the
//! physics turns the collection of per-area problems into a variational
//! inequality over the box `Q`: find `q*` with
//!
//! ```text
//!     (q - q*)' Phi(q*) >= 0   for all q in Q,
//!     Phi(q) = gamma * Bt^{-1} (B^{-1} q + mu_bar) + grad C(q),
//! ```
//!
//! where `Bt` is the block-diagonal part of `B` under the partition and
//! `mu_bar = B^{-1} w - mu`. `Phi` is the game map; its zeros inside the
//! box (and its normal-cone inclusions on the boundary) are exactly the
//! generalized Nash equilibria in the variational sense.
//!
//! Keeping voltages and multipliers explicit instead gives the
//! primal-dual operator `F` on `omega = (v, q, theta)`:
//!
//! ```text
//!     F(omega) = [ gamma (v - mu) + Bt' theta
//!                  grad C(q) - theta
//!                  -rho Bt (v - B^{-1} q - B^{-1} w) ],
//! ```
//!
//! whose variational points over `R^N x Q x R^N` carry the same
//! equilibria; the learning dynamics in [`crate::solvers`] operate on
//! this form. Both operators are exposed here together with the
//! equilibrium residuals used to certify solutions.

use nalgebra::{DMatrix, DVector, Dyn};

use crate::comms::{build_comm_graph, CommGraph};
use crate::error::{Error, Result};
use crate::grid::{FeederTopology, GridModel};

// ---------------------------------------------------------------------------
// Area partition
// ---------------------------------------------------------------------------

/// A partition of the controllable buses `1..=N` into communication
/// areas. Construction checks that the areas are nonempty, disjoint, and
/// cover every bus; connectivity of each area inside the feeder is a
/// property of the communication graph and is checked when one is built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommPartition {
    /// Bus ids per area, each sorted ascending.
    areas: Vec<Vec<usize>>,
    bus_count: usize,
    /// Area index per bus index (`bus id - 1`).
    area_of: Vec<usize>,
}

impl CommPartition {
    pub fn new(areas: Vec<Vec<usize>>, bus_count: usize) -> Result<Self> {
        let mut area_of = vec![usize::MAX; bus_count];
        let mut sorted_areas = Vec::with_capacity(areas.len());
        for (k, mut area) in areas.into_iter().enumerate() {
            if area.is_empty() {
                return Err(Error::Partition(format!("area {k} is empty")));
            }
            area.sort_unstable();
            for &bus in &area {
                if bus == 0 || bus > bus_count {
                    return Err(Error::Partition(format!(
                        "area {k} references bus {bus}, valid ids are 1..={bus_count}"
                    )));
                }
                if area_of[bus - 1] != usize::MAX {
                    return Err(Error::Partition(format!(
                        "bus {bus} appears in areas {} and {k}",
                        area_of[bus - 1]
                    )));
                }
                area_of[bus - 1] = k;
            }
            sorted_areas.push(area);
        }
        if let Some(missing) = area_of.iter().position(|&a| a == usize::MAX) {
            return Err(Error::Partition(format!("bus {} belongs to no area", missing + 1)));
        }
        Ok(CommPartition { areas: sorted_areas, bus_count, area_of })
    }

    /// Every bus in one area.
    pub fn single_area(bus_count: usize) -> Self {
        CommPartition::new(vec![(1..=bus_count).collect()], bus_count)
            .expect("single area covers all buses")
    }

    /// Every bus its own area.
    pub fn singletons(bus_count: usize) -> Self {
        CommPartition::new((1..=bus_count).map(|b| vec![b]).collect(), bus_count)
            .expect("singleton areas cover all buses")
    }

    pub fn areas(&self) -> &[Vec<usize>] {
        &self.areas
    }

    pub fn area_count(&self) -> usize {
        self.areas.len()
    }

    pub fn bus_count(&self) -> usize {
        self.bus_count
    }

    /// Area index of a bus index (`bus id - 1`).
    pub fn area_of_index(&self, bus_index: usize) -> usize {
        self.area_of[bus_index]
    }

    /// Bus indices (`bus id - 1`) of area `k`, ascending.
    pub fn area_indices(&self, k: usize) -> Vec<usize> {
        self.areas[k].iter().map(|&b| b - 1).collect()
    }

    /// True when both bus indices belong to the same area.
    pub fn same_area(&self, i: usize, j: usize) -> bool {
        self.area_of[i] == self.area_of[j]
    }
}

// ---------------------------------------------------------------------------
// Block decomposition of the network matrix
// ---------------------------------------------------------------------------

/// The network matrix split along an area partition: the diagonal blocks
/// `B_kk` (each factorized), the off-diagonal coupling blocks `B_k,-k`,
/// and the block-diagonal matrix `Bt` kept in the *original* bus order —
/// i.e. `Bt[i, j] = B[i, j]` when `i` and `j` share an area and `0`
/// otherwise, which is the block-diagonal matrix up to the area-major
/// permutation and avoids reindexing everywhere downstream.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    partition: CommPartition,
    /// Same-area mask of `B`, original bus order.
    btilde: DMatrix<f64>,
    /// Bus indices per area (`bus id - 1`), ascending.
    area_indices: Vec<Vec<usize>>,
    /// Bus indices outside each area, ascending.
    complement_indices: Vec<Vec<usize>>,
    /// `B_kk` per area, in `area_indices[k]` order.
    diag_blocks: Vec<DMatrix<f64>>,
    diag_factors: Vec<nalgebra::linalg::Cholesky<f64, Dyn>>,
    /// `B_k,-k` per area: rows in `area_indices[k]` order, columns in
    /// `complement_indices[k]` order.
    coupling_blocks: Vec<DMatrix<f64>>,
}

/// Splits `b` along `partition`. Fails if dimensions disagree or a
/// diagonal block is not positive definite (for a reduced tree Laplacian
/// every principal submatrix is, so this only trips on foreign input).
pub fn decompose(b: &DMatrix<f64>, partition: &CommPartition) -> Result<BlockDecomposition> {
    let n = partition.bus_count();
    if b.nrows() != n || b.ncols() != n {
        return Err(Error::Domain(format!(
            "cannot split a {}x{} matrix along a {}-bus partition",
            b.nrows(),
            b.ncols(),
            n
        )));
    }
    let mut btilde = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if partition.same_area(i, j) {
                btilde[(i, j)] = b[(i, j)];
            }
        }
    }
    let mut area_indices = Vec::with_capacity(partition.area_count());
    let mut complement_indices = Vec::with_capacity(partition.area_count());
    let mut diag_blocks = Vec::with_capacity(partition.area_count());
    let mut diag_factors = Vec::with_capacity(partition.area_count());
    let mut coupling_blocks = Vec::with_capacity(partition.area_count());
    for k in 0..partition.area_count() {
        let inside = partition.area_indices(k);
        let outside: Vec<usize> = (0..n).filter(|i| !inside.contains(i)).collect();
        let block = DMatrix::from_fn(inside.len(), inside.len(), |r, c| {
            b[(inside[r], inside[c])]
        });
        let coupling = DMatrix::from_fn(inside.len(), outside.len(), |r, c| {
            b[(inside[r], outside[c])]
        });
        let factor = block.clone().cholesky().ok_or_else(|| {
            Error::Domain(format!("diagonal block of area {k} is not positive definite"))
        })?;
        area_indices.push(inside);
        complement_indices.push(outside);
        diag_blocks.push(block);
        diag_factors.push(factor);
        coupling_blocks.push(coupling);
    }
    Ok(BlockDecomposition {
        partition: partition.clone(),
        btilde,
        area_indices,
        complement_indices,
        diag_blocks,
        diag_factors,
        coupling_blocks,
    })
}

impl BlockDecomposition {
    pub fn partition(&self) -> &CommPartition {
        &self.partition
    }

    /// Same-area mask of `B` in original bus order (symmetric).
    pub fn btilde(&self) -> &DMatrix<f64> {
        &self.btilde
    }

    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.diag_blocks[k]
    }

    pub fn coupling(&self, k: usize) -> &DMatrix<f64> {
        &self.coupling_blocks[k]
    }

    pub fn area_indices(&self, k: usize) -> &[usize] {
        &self.area_indices[k]
    }

    pub fn complement_indices(&self, k: usize) -> &[usize] {
        &self.complement_indices[k]
    }

    /// `Bt x` (dense multiply by the same-area mask).
    pub fn mul_btilde(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.btilde * x
    }

    /// Solves `Bt y = rhs` area by area with the cached factorizations.
    pub fn solve_btilde(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(rhs.len());
        for k in 0..self.diag_blocks.len() {
            let idx = &self.area_indices[k];
            let local = DVector::from_fn(idx.len(), |r, _| rhs[idx[r]]);
            let solved = self.diag_factors[k].solve(&local);
            for (r, &i) in idx.iter().enumerate() {
                out[i] = solved[r];
            }
        }
        out
    }

    /// Solves `Bt Y = Rhs` column-block-wise (same scatter as
    /// [`Self::solve_btilde`]).
    pub fn solve_btilde_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
        for k in 0..self.diag_blocks.len() {
            let idx = &self.area_indices[k];
            let local = DMatrix::from_fn(idx.len(), rhs.ncols(), |r, c| rhs[(idx[r], c)]);
            let solved = self.diag_factors[k].solve(&local);
            for (r, &i) in idx.iter().enumerate() {
                for c in 0..rhs.ncols() {
                    out[(i, c)] = solved[(r, c)];
                }
            }
        }
        out
    }

    /// Rebuilds the full matrix from the stored diagonal and coupling
    /// blocks. Every entry was copied, never recomputed, so the result is
    /// bit-identical to the matrix that was decomposed.
    pub fn reassemble(&self) -> DMatrix<f64> {
        let n = self.partition.bus_count();
        let mut out = DMatrix::zeros(n, n);
        for k in 0..self.diag_blocks.len() {
            let inside = &self.area_indices[k];
            let outside = &self.complement_indices[k];
            for (r, &i) in inside.iter().enumerate() {
                for (c, &j) in inside.iter().enumerate() {
                    out[(i, j)] = self.diag_blocks[k][(r, c)];
                }
                for (c, &j) in outside.iter().enumerate() {
                    out[(i, j)] = self.coupling_blocks[k][(r, c)];
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Costs and limits
// ---------------------------------------------------------------------------

/// VAR usage price of one bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BusCost {
    /// `C(q) = (c / 2) q^2` — `c` is the curvature of the price.
    Quadratic { c: f64 },
    /// `C(q) = (a / 4) q^4`, a smooth convex non-quadratic price used to
    /// exercise the root-finding paths.
    Quartic { a: f64 },
}

impl BusCost {
    pub fn value(&self, q: f64) -> f64 {
        match *self {
            BusCost::Quadratic { c } => 0.5 * c * q * q,
            BusCost::Quartic { a } => 0.25 * a * q.powi(4),
        }
    }

    pub fn derivative(&self, q: f64) -> f64 {
        match *self {
            BusCost::Quadratic { c } => c * q,
            BusCost::Quartic { a } => a * q.powi(3),
        }
    }

    pub fn curvature(&self, q: f64) -> f64 {
        match *self {
            BusCost::Quadratic { c } => c,
            BusCost::Quartic { a } => 3.0 * a * q * q,
        }
    }

    fn validate(&self, bus: usize) -> Result<()> {
        let ok = match *self {
            BusCost::Quadratic { c } => c.is_finite() && c >= 0.0,
            BusCost::Quartic { a } => a.is_finite() && a >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "cost of bus {bus} is not convex (negative or non-finite coefficient)"
            )))
        }
    }
}

/// Voltage-tracking gain, targets, and per-bus prices.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    gamma: f64,
    mu: DVector<f64>,
    costs: Vec<BusCost>,
}

impl CostModel {
    pub fn new(gamma: f64, mu: DVector<f64>, costs: Vec<BusCost>) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Domain(format!("tracking gain must be positive, got {gamma}")));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::Domain("voltage target contains a non-finite entry".into()));
        }
        if mu.len() != costs.len() {
            return Err(Error::Domain(format!(
                "{} voltage targets for {} bus costs",
                mu.len(),
                costs.len()
            )));
        }
        for (j, cost) in costs.iter().enumerate() {
            cost.validate(j + 1)?;
        }
        Ok(CostModel { gamma, mu, costs })
    }

    /// Flat target `mu`, one quadratic curvature for every bus.
    pub fn uniform_quadratic(n: usize, gamma: f64, mu: f64, c: f64) -> Self {
        CostModel::new(
            gamma,
            DVector::from_element(n, mu),
            vec![BusCost::Quadratic { c }; n],
        )
        .expect("uniform quadratic parameters are valid")
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn bus_costs(&self) -> &[BusCost] {
        &self.costs
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    /// `grad C(q)` componentwise.
    pub fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(q.len(), |j, _| self.costs[j].derivative(q[j]))
    }

    /// `diag(C_j'')(q)` componentwise.
    pub fn curvatures(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(q.len(), |j, _| self.costs[j].curvature(q[j]))
    }

    /// Total price paid, `sum_j C_j(q_j)`.
    pub fn total_cost(&self, q: &DVector<f64>) -> f64 {
        q.iter().enumerate().map(|(j, &qj)| self.costs[j].value(qj)).sum()
    }

    /// Curvature vector when every bus price is quadratic.
    pub fn quadratic_curvatures(&self) -> Option<DVector<f64>> {
        let mut c = DVector::zeros(self.costs.len());
        for (j, cost) in self.costs.iter().enumerate() {
            match *cost {
                BusCost::Quadratic { c: cj } => c[j] = cj,
                BusCost::Quartic { .. } => return None,
            }
        }
        Some(c)
    }

    /// Largest price curvature anywhere inside the box.
    pub fn max_curvature_within(&self, limits: &VarLimits) -> f64 {
        self.costs
            .iter()
            .enumerate()
            .map(|(j, cost)| {
                let lo = limits.lower()[j];
                let hi = limits.upper()[j];
                cost.curvature(lo).max(cost.curvature(hi))
            })
            .fold(0.0, f64::max)
    }
}

/// Box limits `[lower, upper]` on the VAR injections; the bounds must be
/// finite and strictly ordered so the feasible set is a genuine box.
#[derive(Debug, Clone, PartialEq)]
pub struct VarLimits {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl VarLimits {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Domain(format!(
                "limit vectors of lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for j in 0..lower.len() {
            if !lower[j].is_finite() || !upper[j].is_finite() {
                return Err(Error::Domain(format!("limits of bus {} are not finite", j + 1)));
            }
            if lower[j] >= upper[j] {
                return Err(Error::Domain(format!(
                    "limits of bus {} are empty or degenerate: [{}, {}]",
                    j + 1,
                    lower[j],
                    upper[j]
                )));
            }
        }
        Ok(VarLimits { lower, upper })
    }

    /// `[-bound, bound]` on every bus.
    pub fn symmetric(n: usize, bound: f64) -> Self {
        VarLimits::new(DVector::from_element(n, -bound), DVector::from_element(n, bound))
            .expect("symmetric positive bound is a valid box")
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Euclidean projection onto the box (componentwise clamp).
    pub fn project(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(q.len(), |j, _| q[j].clamp(self.lower[j], self.upper[j]))
    }

    pub fn contains(&self, q: &DVector<f64>, tol: f64) -> bool {
        (0..q.len()).all(|j| q[j] >= self.lower[j] - tol && q[j] <= self.upper[j] + tol)
    }

    /// Componentwise clamp of a scalar for bus index `j`.
    pub fn clamp_bus(&self, j: usize, q: f64) -> f64 {
        q.clamp(self.lower[j], self.upper[j])
    }
}

// ---------------------------------------------------------------------------
// Primal-dual points
// ---------------------------------------------------------------------------

/// A point `omega = (v, q, theta)` of the primal-dual space
/// `R^N x Q x R^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPoint {
    pub v: DVector<f64>,
    pub q: DVector<f64>,
    pub theta: DVector<f64>,
}

impl PrimalDualPoint {
    /// Builds a point with `q` projected into the box, so every
    /// constructed point is feasible.
    pub fn new(v: DVector<f64>, q: DVector<f64>, theta: DVector<f64>, limits: &VarLimits) -> Self {
        PrimalDualPoint { v, q: limits.project(&q), theta }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    /// Stacks `(v, q, theta)` into one `3N` vector.
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.dim();
        let mut out = DVector::zeros(3 * n);
        out.rows_mut(0, n).copy_from(&self.v);
        out.rows_mut(n, n).copy_from(&self.q);
        out.rows_mut(2 * n, n).copy_from(&self.theta);
        out
    }

    /// Splits a stacked `3N` vector back into blocks; the caller is
    /// responsible for box feasibility of the `q` block.
    pub fn from_stacked(x: &DVector<f64>, n: usize) -> Self {
        PrimalDualPoint {
            v: x.rows(0, n).into_owned(),
            q: x.rows(n, n).into_owned(),
            theta: x.rows(2 * n, n).into_owned(),
        }
    }
}

// ---------------------------------------------------------------------------
// Game operators
// ---------------------------------------------------------------------------

/// The game map `Phi(q) = gamma Bt^{-1} (B^{-1} q + mu_bar) + grad C(q)`
/// with `mu_bar = B^{-1} w - mu`; evaluated through the physics oracle,
/// since `B^{-1} q + mu_bar = v(q) - mu`.
pub fn phi(
    q: &DVector<f64>,
    model: &GridModel,
    costs: &CostModel,
    decomp: &BlockDecomposition,
) -> DVector<f64> {
    let v = model.measure_voltage(q);
    costs.gamma() * decomp.solve_btilde(&(v - costs.mu())) + costs.gradient(q)
}

/// Closed-form Jacobian `grad Phi = gamma Bt^{-1} B^{-1} + diag(c)`,
/// defined when every bus price is quadratic.
pub fn phi_jacobian(
    model: &GridModel,
    costs: &CostModel,
    decomp: &BlockDecomposition,
) -> Result<DMatrix<f64>> {
    let c = costs.quadratic_curvatures().ok_or_else(|| {
        Error::Unsupported(
            "closed-form game-map Jacobian needs quadratic prices; \
             sample it with phi_jacobian_sampled instead"
                .into(),
        )
    })?;
    let n = model.bus_count();
    let b_inv = model
        .b()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Internal("model matrix lost definiteness".into()))?
        .inverse();
    let mut j = costs.gamma() * decomp.solve_btilde_matrix(&b_inv);
    for i in 0..n {
        j[(i, i)] += c[i];
    }
    Ok(j)
}

/// Central finite-difference sample of `grad Phi` at `q0` (fallback for
/// non-quadratic prices).
pub fn phi_jacobian_sampled(
    q0: &DVector<f64>,
    step: f64,
    model: &GridModel,
    costs: &CostModel,
    decomp: &BlockDecomposition,
) -> DMatrix<f64> {
    let n = q0.len();
    let mut jac = DMatrix::zeros(n, n);
    for col in 0..n {
        let mut hi = q0.clone();
        let mut lo = q0.clone();
        hi[col] += step;
        lo[col] -= step;
        let diff = (phi(&hi, model, costs, decomp) - phi(&lo, model, costs, decomp)) / (2.0 * step);
        jac.set_column(col, &diff);
    }
    jac
}

/// Smallest eigenvalue of the symmetric part of `grad Phi`; positive
/// means the game map is strongly monotone and the equilibrium is unique.
/// Defined in closed form for quadratic prices only.
pub fn phi_jacobian_symmetric_part_minimum(
    model: &GridModel,
    costs: &CostModel,
    decomp: &BlockDecomposition,
) -> Result<f64> {
    let j = phi_jacobian(model, costs, decomp)?;
    let sym = 0.5 * (&j + j.transpose());
    Ok(sym.symmetric_eigen().eigenvalues.min())
}

/// The primal-dual operator `F(omega)` with physics penalty `rho`. The
/// same-area mask is symmetric, so `Bt'` and `Bt` coincide.
pub fn f_mapping(
    point: &PrimalDualPoint,
    rho: f64,
    model: &GridModel,
    costs: &CostModel,
    decomp: &BlockDecomposition,
) -> DVector<f64> {
    let v_granted = model.measure_voltage(&point.q);
    let top = costs.gamma() * (&point.v - costs.mu()) + decomp.mul_btilde(&point.theta);
    let mid = costs.gradient(&point.q) - &point.theta;
    let bottom = -rho * decomp.mul_btilde(&(&point.v - &v_granted));
    let n = point.dim();
    let mut out = DVector::zeros(3 * n);
    out.rows_mut(0, n).copy_from(&top);
    out.rows_mut(n, n).copy_from(&mid);
    out.rows_mut(2 * n, n).copy_from(&bottom);
    out
}

/// Jacobian of `F` in `3N x 3N` block form,
///
/// ```text
///     [ gamma I      0         Bt'  ]
///     [    0      diag(C'')    -I   ]
///     [ -rho Bt   rho Bt B^-1   0   ],
/// ```
///
/// with the price curvatures evaluated at `q_at`.
pub fn f_jacobian(
    rho: f64,
    model: &GridModel,
    costs: &CostModel,
    decomp: &BlockDecomposition,
    q_at: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = model.bus_count();
    let b_inv = model
        .b()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Internal("model matrix lost definiteness".into()))?
        .inverse();
    let btilde = decomp.btilde();
    let curv = costs.curvatures(q_at);
    let mut jac = DMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        jac[(i, i)] = costs.gamma();
        jac[(n + i, n + i)] = curv[i];
        jac[(n + i, 2 * n + i)] = -1.0;
    }
    jac.view_mut((0, 2 * n), (n, n)).copy_from(&btilde.transpose());
    jac.view_mut((2 * n, 0), (n, n)).copy_from(&(-rho * btilde));
    jac.view_mut((2 * n, n), (n, n)).copy_from(&(rho * btilde * b_inv));
    Ok(jac)
}

// ---------------------------------------------------------------------------
// Equilibrium residuals
// ---------------------------------------------------------------------------

/// Multipliers and residual norms reconstructing the first-order
/// equilibrium conditions at a candidate point; all residuals are
/// nonnegative by construction and a true equilibrium drives them to
/// zero.
#[derive(Debug, Clone)]
pub struct KktCertificate {
    /// Multipliers of the upper bounds, componentwise.
    pub eta_upper: DVector<f64>,
    /// Multipliers of the lower bounds, componentwise.
    pub eta_lower: DVector<f64>,
    /// `|| Phi(q) + eta_upper - eta_lower ||_inf`.
    pub stationarity: f64,
    /// Largest violation of `eta * (distance to the bound) = 0`.
    pub complementarity: f64,
    /// Largest box violation of `q` itself.
    pub feasibility: f64,
}

impl KktCertificate {
    pub fn max_residual(&self) -> f64 {
        self.stationarity.max(self.complementarity).max(self.feasibility)
    }
}

/// Width-relative tolerance for deciding that a coordinate sits on its
/// bound when reconstructing multipliers.
const BOUNDARY_TOL: f64 = 1e-9;

/// Reconstructs bound multipliers at `q` and measures how far the point
/// is from satisfying the equilibrium conditions of the game map: at an
/// upper bound the map must point inward (`Phi_j <= 0`, multiplier
/// `-Phi_j`), at a lower bound outward, and strictly inside it must
/// vanish.
pub fn ec_residual(
    q: &DVector<f64>,
    model: &GridModel,
    costs: &CostModel,
    limits: &VarLimits,
    decomp: &BlockDecomposition,
) -> KktCertificate {
    let g = phi(q, model, costs, decomp);
    let n = q.len();
    let mut eta_upper = DVector::zeros(n);
    let mut eta_lower = DVector::zeros(n);
    let mut stationarity: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    let mut feasibility: f64 = 0.0;
    for j in 0..n {
        let lo = limits.lower()[j];
        let hi = limits.upper()[j];
        let tol = BOUNDARY_TOL * (1.0 + (hi - lo).abs());
        let at_upper = q[j] >= hi - tol;
        let at_lower = q[j] <= lo + tol;
        if at_upper {
            eta_upper[j] = (-g[j]).max(0.0);
        }
        if at_lower {
            eta_lower[j] = g[j].max(0.0);
        }
        stationarity = stationarity.max((g[j] + eta_upper[j] - eta_lower[j]).abs());
        complementarity = complementarity
            .max(eta_upper[j] * (hi - q[j]).abs())
            .max(eta_lower[j] * (q[j] - lo).abs());
        feasibility = feasibility.max((q[j] - hi).max(lo - q[j]).max(0.0));
    }
    KktCertificate { eta_upper, eta_lower, stationarity, complementarity, feasibility }
}

/// Fixed-point residual of the projected game map,
/// `|| q - P_Q(q - step * Phi(q)) ||_2`; zero exactly at equilibria, for
/// any positive step.
pub fn natural_residual(
    q: &DVector<f64>,
    step: f64,
    model: &GridModel,
    costs: &CostModel,
    limits: &VarLimits,
    decomp: &BlockDecomposition,
) -> f64 {
    let g = phi(q, model, costs, decomp);
    (q - limits.project(&(q - step * g))).norm()
}

// ---------------------------------------------------------------------------
// Objectives
// ---------------------------------------------------------------------------

/// System-wide objective
/// `(gamma / 2) ||v - mu||^2 + sum_j C_j(q_j)` — what a single
/// coordinated operator would minimize.
pub fn global_objective(v: &DVector<f64>, q: &DVector<f64>, costs: &CostModel) -> f64 {
    let dv = v - costs.mu();
    0.5 * costs.gamma() * dv.norm_squared() + costs.total_cost(q)
}

/// Area `k`'s share of tracking error and price.
pub fn area_payoff(
    k: usize,
    v: &DVector<f64>,
    q: &DVector<f64>,
    costs: &CostModel,
    partition: &CommPartition,
) -> f64 {
    partition
        .area_indices(k)
        .iter()
        .map(|&j| {
            let dv = v[j] - costs.mu()[j];
            0.5 * costs.gamma() * dv * dv + costs.bus_costs()[j].value(q[j])
        })
        .sum()
}

// ---------------------------------------------------------------------------
// A fully assembled game
// ---------------------------------------------------------------------------

/// Physics, costs, limits, partition, and the derived structures bundled
/// and cross-validated; the unit every solver consumes.
#[derive(Debug, Clone)]
pub struct Game {
    pub topology: FeederTopology,
    pub model: GridModel,
    pub costs: CostModel,
    pub limits: VarLimits,
    pub partition: CommPartition,
    pub decomp: BlockDecomposition,
    pub comm: CommGraph,
}

impl Game {
    pub fn new(
        topology: FeederTopology,
        model: GridModel,
        costs: CostModel,
        limits: VarLimits,
        partition: CommPartition,
    ) -> Result<Self> {
        let n = topology.bus_count();
        if model.bus_count() != n || costs.len() != n || limits.len() != n {
            return Err(Error::Domain(format!(
                "inconsistent sizes: {} buses, {}-bus model, {} costs, {} limits",
                n,
                model.bus_count(),
                costs.len(),
                limits.len()
            )));
        }
        if partition.bus_count() != n {
            return Err(Error::Partition(format!(
                "partition covers {} buses, feeder has {}",
                partition.bus_count(),
                n
            )));
        }
        let decomp = decompose(model.b(), &partition)?;
        let comm = build_comm_graph(&topology, &partition)?;
        Ok(Game { topology, model, costs, limits, partition, decomp, comm })
    }

    /// The bundled 13-bus feeder as a ready game.
    pub fn ieee13() -> Self {
        let s = crate::grid::ieee13_scenario();
        Game::new(s.topology, s.model, s.costs, s.limits, s.partition)
            .expect("bundled feeder assembles")
    }

    /// Number of controllable buses.
    pub fn n(&self) -> usize {
        self.model.bus_count()
    }

    /// Shorthand for [`phi`] on this game.
    pub fn phi(&self, q: &DVector<f64>) -> DVector<f64> {
        phi(q, &self.model, &self.costs, &self.decomp)
    }

    /// Shorthand for [`natural_residual`] on this game.
    pub fn natural_residual(&self, q: &DVector<f64>, step: f64) -> f64 {
        natural_residual(q, step, &self.model, &self.costs, &self.limits, &self.decomp)
    }

    /// Shorthand for [`ec_residual`] on this game.
    pub fn ec_residual(&self, q: &DVector<f64>) -> KktCertificate {
        ec_residual(q, &self.model, &self.costs, &self.limits, &self.decomp)
    }

    /// Objective value at the measured voltage profile of `q`.
    pub fn objective_at(&self, q: &DVector<f64>) -> f64 {
        global_objective(&self.model.measure_voltage(q), q, &self.costs)
    }
}
