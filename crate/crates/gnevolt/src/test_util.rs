//! Shared generators for randomized tests. Everything is seeded by the
//! caller so failures reproduce.

use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::RngExt;

use crate::game::{CommPartition, CostModel, Game, VarLimits};
use crate::grid::{Edge, FeederTopology, GridModel, WeightConvention};

/// A chain feeder `0 - 1 - ... - n` with uniform reactance.
pub fn chain_topology(n: usize, reactance: f64) -> FeederTopology {
    let edges = (0..n).map(|i| Edge::new(i, i + 1, reactance)).collect();
    FeederTopology::new(n, edges).expect("chain is a tree")
}

/// A random tree on `n` controllable buses: bus `i` attaches to a uniform
/// parent among `0..i`, with reactances in `[0.3, 3.0]`.
pub fn random_tree(rng: &mut StdRng, n: usize) -> FeederTopology {
    let edges = (1..=n)
        .map(|i| {
            let parent = rng.random_range(0..i);
            Edge::new(parent, i, 0.3 + 2.7 * rng.random::<f64>())
        })
        .collect();
    FeederTopology::new(n, edges).expect("parent attachment builds a tree")
}

/// A random area partition whose areas are connected in the feeder:
/// walking buses in increasing id order (parents come first under
/// [`random_tree`]'s attachment), each bus either joins its parent's area
/// or opens a new one.
pub fn random_connected_partition(rng: &mut StdRng, topology: &FeederTopology) -> CommPartition {
    let n = topology.bus_count();
    let mut parent = vec![0usize; n + 1];
    for bus in 1..=n {
        parent[bus] = *topology
            .neighbors(bus)
            .iter()
            .find(|&&p| p < bus)
            .expect("every bus has a lower-id neighbor on the path to the head");
    }
    let mut area_of = vec![usize::MAX; n + 1];
    let mut areas: Vec<Vec<usize>> = Vec::new();
    for bus in 1..=n {
        let p = parent[bus];
        if p != 0 && rng.random::<f64>() < 0.6 {
            area_of[bus] = area_of[p];
            areas[area_of[bus]].push(bus);
        } else {
            area_of[bus] = areas.len();
            areas.push(vec![bus]);
        }
    }
    CommPartition::new(areas, n).expect("constructed areas cover every bus")
}

/// A ready-made game on a random tree with quadratic costs.
pub fn random_quadratic_game(rng: &mut StdRng, n: usize, c: f64) -> Game {
    let topology = random_tree(rng, n);
    let v_base = DVector::from_fn(n, |_, _| 0.95 + 0.1 * rng.random::<f64>());
    let model = GridModel::from_topology(&topology, WeightConvention::InvX, v_base).unwrap();
    let partition = random_connected_partition(rng, &topology);
    let costs = CostModel::uniform_quadratic(n, 1.0, 1.0, c);
    let limits = VarLimits::symmetric(n, 0.8);
    Game::new(topology, model, costs, limits, partition).unwrap()
}

/// A uniform random point inside the VAR box.
pub fn random_box_point(rng: &mut StdRng, limits: &VarLimits) -> DVector<f64> {
    DVector::from_fn(limits.len(), |j, _| {
        let (lo, hi) = (limits.lower()[j], limits.upper()[j]);
        lo + (hi - lo) * rng.random::<f64>()
    })
}
