//! Feeder topology and the linearized voltage physics.
//!
//! A radial distribution feeder is a tree rooted at the feeder head
//! (bus 0). With branch reactances `x_ij` and the usual linearized
//! branch-flow approximation, squared voltage magnitudes obey
//!
//! ```text
//!     B v = q + w,
//! ```
//!
//! where `B` is the weighted graph Laplacian of the tree reduced by the
//! feeder-head row/column, `q` the controllable VAR injections, and `w`
//! the uncontrolled operating point. Two edge-weight conventions are
//! supported: `1/x_ij` (default) and `1/(2 x_ij)`; the second matches
//! texts that keep the factor 2 from the branch-flow derivation in the
//! matrix rather than in the gain. The choice rescales `B`, `w`, and all
//! derived step-size bounds consistently, so everything downstream is
//! agnostic to it.
//!
//! A reduced Laplacian of a tree with positive weights is positive
//! definite: it is diagonally dominant with strict dominance in every row
//! whose bus touches the feeder head, and the tree is connected, so no
//! nonzero vector lies in the kernel. [`check_positive_definite`] verifies
//! this numerically for any symmetric matrix and is applied to `B` and to
//! every per-area diagonal block when a game is assembled.
//!
//! [`GridModel`] bundles `B`, `w`, and a cached symmetric factorization;
//! its [`GridModel::measure_voltage`] is the *physics oracle*: the learning
//! dynamics never invert `B` themselves, they inject `q` and read back
//! `v = B^{-1}(q + w)` as a bus-local measurement.

use nalgebra::{DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// One feeder line between two bus ids (`0` is the feeder head).
///
/// Resistance is carried for completeness of the data model (loss studies,
/// file round-trips) but does not enter the voltage equation, which is
/// driven by reactance only.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// Branch reactance in per unit; must be strictly positive.
    pub reactance: f64,
    /// Branch resistance in per unit; informational.
    pub resistance: f64,
}

impl Edge {
    pub fn new(from: usize, to: usize, reactance: f64) -> Self {
        Edge { from, to, reactance, resistance: 0.0 }
    }
}

/// Edge-weight convention for the reduced Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightConvention {
    /// Weight `1/x_ij` (default).
    InvX,
    /// Weight `1/(2 x_ij)`.
    Inv2X,
}

impl WeightConvention {
    fn weight(self, reactance: f64) -> f64 {
        match self {
            WeightConvention::InvX => 1.0 / reactance,
            WeightConvention::Inv2X => 1.0 / (2.0 * reactance),
        }
    }
}

/// A validated radial feeder: a tree on bus ids `0..=N` rooted at the
/// feeder head, bus 0.
#[derive(Debug, Clone)]
pub struct FeederTopology {
    /// Number of controllable buses (`N`); bus ids run `0..=N`.
    bus_count: usize,
    edges: Vec<Edge>,
    /// Feeder adjacency by bus id, including the feeder head.
    adjacency: Vec<Vec<usize>>,
}

impl FeederTopology {
    /// Validates that `edges` form a tree on `0..=bus_count` rooted at the
    /// feeder head and records the adjacency structure.
    ///
    /// `bus_count` counts controllable buses only, so a tree needs exactly
    /// `bus_count` edges; anything else is a cycle or a disconnection and
    /// is rejected, as are self-loops, duplicate edges, out-of-range bus
    /// ids, and nonpositive reactances.
    pub fn new(bus_count: usize, edges: Vec<Edge>) -> Result<Self> {
        if bus_count == 0 {
            return Err(Error::Topology("feeder needs at least one controllable bus".into()));
        }
        if edges.len() != bus_count {
            return Err(Error::Topology(format!(
                "a radial feeder over {} controllable buses needs exactly {} lines, got {}",
                bus_count,
                bus_count,
                edges.len()
            )));
        }
        let mut adjacency = vec![Vec::new(); bus_count + 1];
        let mut seen = std::collections::BTreeSet::new();
        for e in &edges {
            if e.from > bus_count || e.to > bus_count {
                return Err(Error::Topology(format!(
                    "line {}-{} references a bus id beyond {}",
                    e.from, e.to, bus_count
                )));
            }
            if e.from == e.to {
                return Err(Error::Topology(format!("self-loop at bus {}", e.from)));
            }
            if !(e.reactance.is_finite() && e.reactance > 0.0) {
                return Err(Error::Domain(format!(
                    "line {}-{} has nonpositive reactance {}",
                    e.from, e.to, e.reactance
                )));
            }
            if !e.resistance.is_finite() || e.resistance < 0.0 {
                return Err(Error::Domain(format!(
                    "line {}-{} has invalid resistance {}",
                    e.from, e.to, e.resistance
                )));
            }
            let key = (e.from.min(e.to), e.from.max(e.to));
            if !seen.insert(key) {
                return Err(Error::Topology(format!("duplicate line {}-{}", key.0, key.1)));
            }
            adjacency[e.from].push(e.to);
            adjacency[e.to].push(e.from);
        }
        // Edge count is right, so connectivity from the head is exactly
        // "spans every bus and has no cycle".
        let mut visited = vec![false; bus_count + 1];
        let mut stack = vec![0usize];
        visited[0] = true;
        while let Some(b) = stack.pop() {
            for &n in &adjacency[b] {
                if !visited[n] {
                    visited[n] = true;
                    stack.push(n);
                }
            }
        }
        if let Some(orphan) = visited.iter().position(|&v| !v) {
            return Err(Error::Topology(format!(
                "bus {} is not connected to the feeder head (graph has a cycle elsewhere)",
                orphan
            )));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(FeederTopology { bus_count, edges, adjacency })
    }

    /// Number of controllable buses `N`.
    pub fn bus_count(&self) -> usize {
        self.bus_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Feeder neighbors of `bus` (a bus id, feeder head included).
    pub fn neighbors(&self, bus: usize) -> &[usize] {
        &self.adjacency[bus]
    }

    /// Hop distance of every controllable bus from the feeder head,
    /// indexed by `bus id - 1`.
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![usize::MAX; self.bus_count + 1];
        depth[0] = 0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(b) = queue.pop_front() {
            for &n in &self.adjacency[b] {
                if depth[n] == usize::MAX {
                    depth[n] = depth[b] + 1;
                    queue.push_back(n);
                }
            }
        }
        depth[1..].to_vec()
    }
}

/// Builds the reduced weighted Laplacian `B` of the feeder tree: the full
/// graph Laplacian with edge weights per `convention`, with the
/// feeder-head row and column removed. Entry `(i, j)` corresponds to bus
/// ids `i + 1`, `j + 1`.
pub fn build_reduced_laplacian(
    topology: &FeederTopology,
    convention: WeightConvention,
) -> DMatrix<f64> {
    let n = topology.bus_count();
    let mut b = DMatrix::<f64>::zeros(n, n);
    for e in topology.edges() {
        let w = convention.weight(e.reactance);
        if e.from > 0 {
            b[(e.from - 1, e.from - 1)] += w;
        }
        if e.to > 0 {
            b[(e.to - 1, e.to - 1)] += w;
        }
        if e.from > 0 && e.to > 0 {
            b[(e.from - 1, e.to - 1)] -= w;
            b[(e.to - 1, e.from - 1)] -= w;
        }
    }
    b
}

/// Outcome of a positive-definiteness probe of a symmetric matrix.
#[derive(Debug, Clone, Copy)]
pub struct PdReport {
    pub lambda_min: f64,
    pub positive_definite: bool,
}

/// Computes the smallest eigenvalue of a symmetric matrix and whether it
/// is strictly positive. Asymmetric input is rejected rather than
/// silently symmetrized.
pub fn check_positive_definite(m: &DMatrix<f64>) -> Result<PdReport> {
    require_symmetric(m)?;
    if m.nrows() == 0 {
        return Err(Error::Domain("cannot probe definiteness of an empty matrix".into()));
    }
    let eigenvalues = m.clone().symmetric_eigen().eigenvalues;
    let lambda_min = eigenvalues.min();
    Ok(PdReport { lambda_min, positive_definite: lambda_min > 0.0 })
}

/// Relative symmetry check shared by the definiteness probe and the model
/// constructor.
fn require_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Domain(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
    }
    let scale = 1.0 + m.amax();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Domain(format!(
                    "matrix is asymmetric at ({}, {}): {} vs {}",
                    i,
                    j,
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Operating point `w := B v_base` — the constant injection equivalent of
/// the uncontrolled voltage profile `v_base` (the profile the feeder
/// settles to when every controllable injection is zero).
pub fn default_operating_point(b: &DMatrix<f64>, v_base: &DVector<f64>) -> DVector<f64> {
    b * v_base
}

/// The feeder physics: `B`, the operating point `w`, and a cached
/// symmetric factorization used for every linear solve.
#[derive(Debug, Clone)]
pub struct GridModel {
    b: DMatrix<f64>,
    w: DVector<f64>,
    v_base: DVector<f64>,
    cholesky: nalgebra::linalg::Cholesky<f64, Dyn>,
}

impl GridModel {
    /// Validates symmetry and positive definiteness of `b` (via the
    /// factorization itself) and caches the factorization.
    pub fn new(b: DMatrix<f64>, w: DVector<f64>, v_base: DVector<f64>) -> Result<Self> {
        require_symmetric(&b)?;
        let n = b.nrows();
        if w.len() != n || v_base.len() != n {
            return Err(Error::Domain(format!(
                "operating point dimensions ({}, {}) do not match the {}-bus Laplacian",
                w.len(),
                v_base.len(),
                n
            )));
        }
        let cholesky = b
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Domain("voltage matrix is not positive definite".into()))?;
        Ok(GridModel { b, w, v_base, cholesky })
    }

    /// Builds the model from a topology: `B` per `convention`,
    /// `w = B v_base`.
    pub fn from_topology(
        topology: &FeederTopology,
        convention: WeightConvention,
        v_base: DVector<f64>,
    ) -> Result<Self> {
        if v_base.len() != topology.bus_count() {
            return Err(Error::Domain(format!(
                "voltage profile has {} entries for a {}-bus feeder",
                v_base.len(),
                topology.bus_count()
            )));
        }
        let b = build_reduced_laplacian(topology, convention);
        let w = default_operating_point(&b, &v_base);
        GridModel::new(b, w, v_base)
    }

    pub fn bus_count(&self) -> usize {
        self.b.nrows()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn v_base(&self) -> &DVector<f64> {
        &self.v_base
    }

    /// The physics oracle: the squared-voltage profile
    /// `v = B^{-1}(q + w)` reached under injections `q`.
    pub fn measure_voltage(&self, q: &DVector<f64>) -> DVector<f64> {
        self.cholesky.solve(&(q + &self.w))
    }

    /// Solves `B x = rhs` with the cached factorization.
    pub fn solve_b(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.cholesky.solve(rhs)
    }
}

/// Converts a branch reactance in ohms to per unit on the given bases.
pub fn reactance_to_per_unit(x_ohm: f64, s_base_va: f64, v_base_volt: f64) -> f64 {
    x_ohm * s_base_va / (v_base_volt * v_base_volt)
}

/// The bundled 13-bus test feeder, preconfigured for equilibrium-learning
/// experiments.
pub struct Ieee13Scenario {
    pub topology: FeederTopology,
    pub model: GridModel,
    pub costs: crate::game::CostModel,
    pub limits: crate::game::VarLimits,
    pub partition: crate::game::CommPartition,
}

/// Uncontrolled squared-voltage profile of the bundled 13-bus feeder, in
/// per unit, ordered by bus id 1..=12.
///
/// Synthetic stressed operating point: a monotone sag toward the feeder
/// extremities, deep enough that exact compensation would exceed the VAR
/// boxes on several buses. It is chosen so that selfish area play is
/// measurably less efficient than coordinated control, which is what the
/// bundled experiments are about; it is not measured field data.
pub const IEEE13_V_BASE: [f64; 12] = [
    0.9950, // 632
    0.9900, // 633
    0.9850, // 634
    0.9900, // 645
    0.9850, // 646
    0.9900, // 671
    0.9850, // 684
    0.9800, // 611
    0.9800, // 652
    0.9850, // 680
    0.9850, // 692
    0.9800, // 675
];

/// Uniform branch reactance of the bundled feeder, in ohms.
pub const IEEE13_X_OHM: f64 = 0.366;
/// Power base used to express the bundled feeder in per unit, in VA.
pub const IEEE13_S_BASE_VA: f64 = 1.0e5;
/// Voltage base of the bundled feeder, in volts.
pub const IEEE13_V_BASE_VOLT: f64 = 4.16e3;

/// Builds the bundled 13-bus feeder: the standard 13-node test topology
/// (regulators, capacitors, and the switch collapsed into plain lines)
/// with a uniform branch reactance of 0.366 ohm expressed on a
/// 100 kVA / 4.16 kV base.
///
/// Bus ids follow a breadth-first relabeling of the standard node names:
///
/// ```text
///     0: 650 (head)   1: 632   2: 633   3: 634   4: 645
///     5: 646          6: 671   7: 684   8: 611   9: 652
///    10: 680         11: 692  12: 675
/// ```
///
/// Four communication areas split the feeder along its main laterals:
/// `{1,2,3}`, `{4,5}`, `{6,7,8,9,10}`, `{11,12}`. Every bus pays a
/// quadratic VAR price with coefficient `1e-4` and is boxed to
/// `[-0.8, 0.8]` per unit; the voltage target is flat 1.0 with unit
/// tracking gain.
pub fn ieee13_scenario() -> Ieee13Scenario {
    let x = reactance_to_per_unit(IEEE13_X_OHM, IEEE13_S_BASE_VA, IEEE13_V_BASE_VOLT);
    let lines = [
        (0, 1),
        (1, 2),
        (2, 3),
        (1, 4),
        (4, 5),
        (1, 6),
        (6, 7),
        (7, 8),
        (7, 9),
        (6, 10),
        (6, 11),
        (11, 12),
    ];
    let edges = lines.iter().map(|&(a, b)| Edge::new(a, b, x)).collect();
    let topology = FeederTopology::new(12, edges).expect("bundled topology is a valid tree");
    let v_base = DVector::from_row_slice(&IEEE13_V_BASE);
    let model = GridModel::from_topology(&topology, WeightConvention::InvX, v_base)
        .expect("bundled feeder Laplacian is positive definite");
    let costs = crate::game::CostModel::uniform_quadratic(12, 1.0, 1.0, 1e-4);
    let limits = crate::game::VarLimits::symmetric(12, 0.8);
    let partition = crate::game::CommPartition::new(
        vec![vec![1, 2, 3], vec![4, 5], vec![6, 7, 8, 9, 10], vec![11, 12]],
        12,
    )
    .expect("bundled partition covers the feeder");
    Ieee13Scenario { topology, model, costs, limits, partition }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{chain_topology, random_tree};
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{RngExt, SeedableRng};

    fn chain2() -> FeederTopology {
        chain_topology(2, 1.0)
    }

    #[test]
    fn reduced_laplacian_of_two_bus_chain() {
        let b = build_reduced_laplacian(&chain2(), WeightConvention::InvX);
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]);
        assert_eq!(b, expected);
    }

    #[test]
    fn reduced_laplacian_halves_under_inv_2x() {
        let b = build_reduced_laplacian(&chain2(), WeightConvention::Inv2X);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 0.5]);
        assert_eq!(b, expected);
    }

    #[test]
    fn reduced_laplacian_of_star_is_diagonal() {
        let edges = vec![Edge::new(0, 1, 0.5), Edge::new(0, 2, 0.5), Edge::new(0, 3, 0.5)];
        let topo = FeederTopology::new(3, edges).unwrap();
        let b = build_reduced_laplacian(&topo, WeightConvention::InvX);
        assert_eq!(b, DMatrix::from_diagonal(&DVector::from_element(3, 2.0)));
    }

    #[test]
    fn topology_rejects_cycles_and_disconnection() {
        // Triangle on {0,1,2} plus isolated bus 3: right edge count, no tree.
        let edges = vec![
            Edge::new(0, 1, 1.0),
            Edge::new(1, 2, 1.0),
            Edge::new(2, 0, 1.0),
        ];
        let err = FeederTopology::new(3, edges).unwrap_err();
        assert!(matches!(err, Error::Topology(_)), "got {err}");

        let err = FeederTopology::new(2, vec![Edge::new(0, 1, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::Topology(_)));
    }

    #[test]
    fn topology_rejects_bad_edges() {
        let dup = vec![Edge::new(0, 1, 1.0), Edge::new(1, 0, 1.0)];
        assert!(matches!(FeederTopology::new(2, dup).unwrap_err(), Error::Topology(_)));

        let self_loop = vec![Edge::new(1, 1, 1.0)];
        assert!(matches!(FeederTopology::new(1, self_loop).unwrap_err(), Error::Topology(_)));

        let bad_x = vec![Edge::new(0, 1, 0.0)];
        assert!(matches!(FeederTopology::new(1, bad_x).unwrap_err(), Error::Domain(_)));

        let neg_x = vec![Edge::new(0, 1, -2.0)];
        assert!(matches!(FeederTopology::new(1, neg_x).unwrap_err(), Error::Domain(_)));
    }

    #[test]
    fn two_bus_chain_is_positive_definite_with_known_spectrum() {
        let b = build_reduced_laplacian(&chain2(), WeightConvention::InvX);
        let report = check_positive_definite(&b).unwrap();
        assert!(report.positive_definite);
        // Eigenvalues of [[2,-1],[-1,1]] are (3 ± sqrt(5)) / 2.
        assert_relative_eq!(report.lambda_min, (3.0 - 5.0_f64.sqrt()) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn definiteness_probe_flags_indefinite_and_rejects_asymmetric() {
        let identity = DMatrix::<f64>::identity(3, 3);
        let report = check_positive_definite(&identity).unwrap();
        assert!(report.positive_definite);
        assert_relative_eq!(report.lambda_min, 1.0, epsilon = 1e-14);

        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let report = check_positive_definite(&indefinite).unwrap();
        assert!(!report.positive_definite);
        assert_relative_eq!(report.lambda_min, -1.0, epsilon = 1e-12);

        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(check_positive_definite(&asym).unwrap_err(), Error::Domain(_)));
    }

    #[test]
    fn operating_point_from_base_profile() {
        let b = build_reduced_laplacian(&chain2(), WeightConvention::InvX);

        let flat = DVector::from_element(2, 1.0);
        let w = default_operating_point(&b, &flat);
        assert_relative_eq!(w, DVector::from_row_slice(&[1.0, 0.0]), epsilon = 1e-15);

        let sag = DVector::from_row_slice(&[0.98, 1.02]);
        let w = default_operating_point(&b, &sag);
        assert_relative_eq!(w, DVector::from_row_slice(&[0.94, 0.04]), epsilon = 1e-12);

        let zero = DVector::zeros(2);
        assert_eq!(default_operating_point(&b, &zero), DVector::zeros(2));
    }

    #[test]
    fn measured_voltage_solves_the_network_equation() {
        let topo = chain2();
        let flat = DVector::from_element(2, 1.0);
        let model = GridModel::from_topology(&topo, WeightConvention::InvX, flat.clone()).unwrap();

        // Zero injection reproduces the base profile.
        assert_relative_eq!(model.measure_voltage(&DVector::zeros(2)), flat, epsilon = 1e-12);

        // Hand value: w = (1, 0), q = (0.1, 0.1) gives
        // B^{-1}(q + w) = [[1,1],[1,2]] (1.1, 0.1) = (1.2, 1.3).
        let v = model.measure_voltage(&DVector::from_row_slice(&[0.1, 0.1]));
        assert_relative_eq!(v, DVector::from_row_slice(&[1.2, 1.3]), epsilon = 1e-12);
    }

    #[test]
    fn measurement_satisfies_residual_and_affinity_on_random_trees() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..25 {
            let n = rng.random_range(2..=12);
            let topo = random_tree(&mut rng, n);
            let v_base = DVector::from_fn(n, |_, _| 0.95 + 0.1 * rng.random::<f64>());
            let model =
                GridModel::from_topology(&topo, WeightConvention::InvX, v_base).unwrap();

            let report = check_positive_definite(model.b()).unwrap();
            assert!(report.positive_definite, "reduced tree Laplacian must be PD");

            let q1 = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
            let q2 = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);

            // Residual of the cached solve.
            let v = model.measure_voltage(&q1);
            let rhs = &q1 + model.w();
            let residual = (model.b() * &v - &rhs).amax();
            assert!(residual <= 1e-12 * (1.0 + rhs.amax()), "residual {residual}");

            // Affinity: v(q1 + q2) - v(q1) - v(q2) + v(0) = 0.
            let gap = (model.measure_voltage(&(&q1 + &q2)) - model.measure_voltage(&q1)
                - model.measure_voltage(&q2)
                + model.measure_voltage(&DVector::zeros(n)))
            .amax();
            assert!(gap <= 1e-10, "measurement must be affine, gap {gap}");

            // Sparsity: off-diagonal entries are nonzero exactly on feeder lines.
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let adjacent = topo.neighbors(i + 1).contains(&(j + 1));
                    assert_eq!(model.b()[(i, j)] != 0.0, adjacent, "entry ({i}, {j})");
                }
            }
        }
    }

    #[test]
    fn per_unit_conversion_matches_hand_value() {
        let x = reactance_to_per_unit(IEEE13_X_OHM, IEEE13_S_BASE_VA, IEEE13_V_BASE_VOLT);
        assert_relative_eq!(x, 0.366 * 1.0e5 / (4160.0 * 4160.0), epsilon = 1e-18);
        assert_relative_eq!(x, 2.1149e-3, epsilon = 1e-7);
    }

    #[test]
    fn bundled_feeder_is_well_formed() {
        let s = ieee13_scenario();
        assert_eq!(s.topology.bus_count(), 12);
        assert_eq!(s.model.bus_count(), 12);

        let report = check_positive_definite(s.model.b()).unwrap();
        assert!(report.positive_definite);

        // Depths of the breadth-first relabeling, used by the sag profile.
        assert_eq!(s.topology.depths(), vec![1, 2, 3, 2, 3, 2, 3, 4, 4, 3, 3, 4]);

        // The sag deepens monotonically with feeder depth.
        for (bus, &depth) in s.topology.depths().iter().enumerate() {
            let v = s.model.v_base()[bus];
            assert!(v < 1.0 && v > 0.97, "bus {} profile {v}", bus + 1);
            assert_relative_eq!(v, 1.0 - 0.005 * depth as f64, epsilon = 1e-12);
        }

        for j in 0..12 {
            assert_relative_eq!(s.limits.lower()[j], -0.8);
            assert_relative_eq!(s.limits.upper()[j], 0.8);
        }
        assert_eq!(s.partition.areas().len(), 4);
        assert_eq!(s.partition.areas()[2], vec![6, 7, 8, 9, 10]);
    }
}
