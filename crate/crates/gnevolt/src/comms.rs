//! The locally connected communication layer.
//!
//! Buses may talk only over communication links, and a link exists
//! exactly where a feeder line connects two buses of the *same* area —
//! areas are communication islands by design. The distributed solvers
//! never index into global state directly; every neighbor value they
//! consume goes through an [`ExchangeView`], which enforces the link
//! structure, counts reads, and records any out-of-neighborhood access in
//! a [`LocalityAudit`]. A correct solver finishes every run with zero
//! violations; the audit exists so that tests can *prove* locality
//! instead of trusting the implementation.
//!
//! Views hand out values from an immutable snapshot taken when the
//! exchange phase starts, so within a phase the read order is
//! irrelevant — updating buses in any order produces bit-identical
//! results.
//!
//! [`UpdateSchedule`] decides which areas wake up each tick. The
//! asynchronous mode activates each area by a seeded coin flip but forces
//! any area that has been idle `T - 1` consecutive ticks, so every area
//! acts at least once in any window of `T` ticks; `T = 1` forces
//! everyone every tick and reproduces the synchronous schedule exactly.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::CommPartition;
use crate::grid::FeederTopology;

// ---------------------------------------------------------------------------
// Communication graph
// ---------------------------------------------------------------------------

/// Feeder lines restricted to same-area pairs, as adjacency lists over
/// bus indices (`bus id - 1`).
#[derive(Debug, Clone)]
pub struct CommGraph {
    neighbors: Vec<Vec<usize>>,
    partition: CommPartition,
}

/// Builds the communication graph and verifies that every area is
/// connected through its own links (a singleton area is trivially
/// connected). An area that needs to relay through a foreign bus is
/// rejected: it could never run the per-area exchanges.
pub fn build_comm_graph(
    topology: &FeederTopology,
    partition: &CommPartition,
) -> Result<CommGraph> {
    let n = topology.bus_count();
    if partition.bus_count() != n {
        return Err(Error::Partition(format!(
            "partition covers {} buses, feeder has {}",
            partition.bus_count(),
            n
        )));
    }
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for bus in 1..=n {
        for &other in topology.neighbors(bus) {
            if other == 0 {
                continue; // the feeder head hosts no agent
            }
            if partition.same_area(bus - 1, other - 1) {
                neighbors[bus - 1].push(other - 1);
            }
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    // Flood each area through its own links.
    for (k, area) in partition.areas().iter().enumerate() {
        let start = area[0] - 1;
        let mut reached = std::collections::BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for &j in &neighbors[i] {
                if reached.insert(j) {
                    stack.push(j);
                }
            }
        }
        if let Some(&stranded) = area.iter().find(|&&b| !reached.contains(&(b - 1))) {
            return Err(Error::Partition(format!(
                "area {k} is not connected: bus {stranded} cannot reach bus {} over \
                 area-internal lines",
                area[0]
            )));
        }
    }
    Ok(CommGraph { neighbors, partition: partition.clone() })
}

impl CommGraph {
    pub fn bus_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn partition(&self) -> &CommPartition {
        &self.partition
    }

    /// Communication neighbors of a bus index, sorted ascending.
    pub fn neighbors(&self, bus_index: usize) -> &[usize] {
        &self.neighbors[bus_index]
    }

    /// The bus itself followed by its neighbors — the index set every
    /// per-bus update sums over.
    pub fn closed_neighborhood(&self, bus_index: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(bus_index).chain(self.neighbors[bus_index].iter().copied())
    }

    /// Starts an exchange phase over a snapshot of per-bus values.
    pub fn exchange<'a, T: Copy>(
        &'a self,
        phase: &'static str,
        tick: usize,
        values: &'a [T],
        audit: &'a mut LocalityAudit,
    ) -> ExchangeView<'a, T> {
        assert_eq!(
            values.len(),
            self.bus_count(),
            "exchange snapshot must carry one value per bus"
        );
        ExchangeView { graph: self, phase, tick, values, audit }
    }
}

// ---------------------------------------------------------------------------
// Locality audit
// ---------------------------------------------------------------------------

/// One out-of-neighborhood read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalityViolation {
    pub tick: usize,
    pub phase: &'static str,
    /// Bus index that asked.
    pub reader: usize,
    /// Bus index it asked about.
    pub source: usize,
}

/// Per-run read counters and the list of violations.
#[derive(Debug, Clone, Default)]
pub struct LocalityAudit {
    reads: u64,
    violations: Vec<LocalityViolation>,
}

/// Compact audit result carried in run reports.
#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
pub struct AuditSummary {
    /// Total neighbor reads performed through exchange views.
    pub reads: u64,
    /// Out-of-neighborhood reads; zero for a correctly local solver.
    pub violations: u64,
}

impl LocalityAudit {
    pub fn new() -> Self {
        LocalityAudit::default()
    }

    pub fn reads(&self) -> u64 {
        self.reads
    }

    pub fn violations(&self) -> &[LocalityViolation] {
        &self.violations
    }

    pub fn violation_count(&self) -> u64 {
        self.violations.len() as u64
    }

    pub fn summary(&self) -> AuditSummary {
        AuditSummary { reads: self.reads, violations: self.violation_count() }
    }
}

/// Read access to one exchange phase's snapshot, restricted to the
/// communication links.
pub struct ExchangeView<'a, T> {
    graph: &'a CommGraph,
    phase: &'static str,
    tick: usize,
    values: &'a [T],
    audit: &'a mut LocalityAudit,
}

impl<T: Copy> ExchangeView<'_, T> {
    /// `reader` asks for `source`'s value. Own and neighbor values are
    /// returned; anything else records a violation and yields nothing.
    pub fn read(&mut self, reader: usize, source: usize) -> Option<T> {
        self.audit.reads += 1;
        let legal = reader == source || self.graph.neighbors[reader].contains(&source);
        if legal {
            Some(self.values[source])
        } else {
            self.audit.violations.push(LocalityViolation {
                tick: self.tick,
                phase: self.phase,
                reader,
                source,
            });
            None
        }
    }

    /// `sum_{i in {reader} ∪ N(reader)} weight(i) * value_i` — the shape
    /// of every neighborhood accumulation in the per-bus updates.
    pub fn weighted_neighborhood_sum(
        &mut self,
        reader: usize,
        mut weight: impl FnMut(usize) -> f64,
    ) -> f64
    where
        T: Into<f64>,
    {
        let indices: Vec<usize> = self.graph.closed_neighborhood(reader).collect();
        indices
            .into_iter()
            .filter_map(|i| self.read(reader, i).map(|value| weight(i) * value.into()))
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Update schedules
// ---------------------------------------------------------------------------

/// When each area wakes up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateSchedule {
    /// Every area updates every tick.
    Synchronous,
    /// Each area updates by a seeded coin flip per tick, but never stays
    /// idle `delay_bound` ticks in a row.
    Asynchronous { delay_bound: usize, seed: u64 },
}

impl UpdateSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            UpdateSchedule::Synchronous => Ok(()),
            UpdateSchedule::Asynchronous { delay_bound, .. } if delay_bound >= 1 => Ok(()),
            UpdateSchedule::Asynchronous { delay_bound, .. } => Err(Error::Config(format!(
                "asynchronous delay bound must be at least 1, got {delay_bound}"
            ))),
        }
    }

    /// The tick-by-tick activation generator for `area_count` areas.
    pub fn activations(&self, area_count: usize) -> ActivationSequence {
        match *self {
            UpdateSchedule::Synchronous => ActivationSequence {
                coin: None,
                delay_bound: 1,
                idle_ticks: vec![0; area_count],
            },
            UpdateSchedule::Asynchronous { delay_bound, seed } => ActivationSequence {
                coin: Some(ChaCha8Rng::seed_from_u64(seed)),
                delay_bound,
                idle_ticks: vec![0; area_count],
            },
        }
    }
}

/// Stateful activation generator; the same seed replays the same
/// activation sets tick for tick.
pub struct ActivationSequence {
    coin: Option<ChaCha8Rng>,
    delay_bound: usize,
    idle_ticks: Vec<usize>,
}

impl ActivationSequence {
    /// Activation flags per area for the next tick.
    pub fn next_tick(&mut self) -> Vec<bool> {
        let k = self.idle_ticks.len();
        let mut active = vec![true; k];
        if let Some(rng) = self.coin.as_mut() {
            for flag in active.iter_mut() {
                *flag = rng.random_bool(0.5);
            }
            // Upgrade any area about to overrun its delay bound.
            for (flag, idle) in active.iter_mut().zip(&self.idle_ticks) {
                if *idle + 1 >= self.delay_bound {
                    *flag = true;
                }
            }
        }
        for (flag, idle) in active.iter().zip(self.idle_ticks.iter_mut()) {
            *idle = if *flag { 0 } else { *idle + 1 };
        }
        active
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Edge, FeederTopology};
    use crate::test_util::chain_topology;

    fn star3() -> FeederTopology {
        let edges = vec![Edge::new(0, 1, 0.5), Edge::new(0, 2, 0.5), Edge::new(0, 3, 0.5)];
        FeederTopology::new(3, edges).unwrap()
    }

    #[test]
    fn links_exist_exactly_on_same_area_lines() {
        let topo = chain_topology(3, 1.0);
        let single = CommPartition::single_area(3);
        let g = build_comm_graph(&topo, &single).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.neighbors(2), &[1]);

        let split = CommPartition::new(vec![vec![1], vec![2, 3]], 3).unwrap();
        let g = build_comm_graph(&topo, &split).unwrap();
        assert_eq!(g.neighbors(0), &[] as &[usize]);
        assert_eq!(g.neighbors(1), &[2]);
        assert_eq!(g.neighbors(2), &[1]);
    }

    #[test]
    fn star_leaves_cannot_share_an_area() {
        // The leaves of a star only meet at the feeder head, which hosts
        // no agent; grouping them leaves the area disconnected.
        let err = build_comm_graph(&star3(), &CommPartition::single_area(3)).unwrap_err();
        assert!(matches!(err, Error::Partition(_)), "got {err}");
        assert!(err.to_string().contains("not connected"));

        // One leaf per area is fine, with empty neighbor lists.
        let g = build_comm_graph(&star3(), &CommPartition::singletons(3)).unwrap();
        for i in 0..3 {
            assert!(g.neighbors(i).is_empty());
        }
    }

    #[test]
    fn exchange_enforces_the_link_structure() {
        let topo = chain_topology(3, 1.0);
        let g = build_comm_graph(&topo, &CommPartition::single_area(3)).unwrap();
        let mut audit = LocalityAudit::new();
        let snapshot = [10.0, 20.0, 30.0];

        let mut view = g.exchange("test", 0, &snapshot, &mut audit);
        assert_eq!(view.read(0, 0), Some(10.0));
        assert_eq!(view.read(0, 1), Some(20.0));
        // Buses 1 and 3 are two hops apart: not a link.
        assert_eq!(view.read(0, 2), None);
        drop(view);

        assert_eq!(audit.reads(), 3);
        assert_eq!(audit.violation_count(), 1);
        assert_eq!(
            audit.violations()[0],
            LocalityViolation { tick: 0, phase: "test", reader: 0, source: 2 }
        );
        assert_eq!(audit.summary(), AuditSummary { reads: 3, violations: 1 });
    }

    #[test]
    fn neighborhood_sum_weights_own_and_neighbor_values() {
        let topo = chain_topology(3, 1.0);
        let g = build_comm_graph(&topo, &CommPartition::single_area(3)).unwrap();
        let mut audit = LocalityAudit::new();
        let snapshot = [1.0, 2.0, 4.0];
        let mut view = g.exchange("sum", 0, &snapshot, &mut audit);
        // Bus index 1 sums over {1, 0, 2} with weight = index + 1.
        let s = view.weighted_neighborhood_sum(1, |i| (i + 1) as f64);
        assert_eq!(s, 2.0 * 2.0 + 1.0 * 1.0 + 3.0 * 4.0);
        drop(view);
        assert_eq!(audit.violation_count(), 0);
    }

    #[test]
    fn synchronous_schedule_activates_everyone() {
        let mut seq = UpdateSchedule::Synchronous.activations(4);
        for _ in 0..10 {
            assert_eq!(seq.next_tick(), vec![true; 4]);
        }
    }

    #[test]
    fn unit_delay_bound_is_synchronous() {
        let sched = UpdateSchedule::Asynchronous { delay_bound: 1, seed: 99 };
        let mut seq = sched.activations(3);
        for _ in 0..50 {
            assert_eq!(seq.next_tick(), vec![true; 3]);
        }
    }

    #[test]
    fn no_area_idles_longer_than_the_delay_bound() {
        for t in [2usize, 5, 10] {
            let sched = UpdateSchedule::Asynchronous { delay_bound: t, seed: 7 };
            let mut seq = sched.activations(5);
            let mut idle = vec![0usize; 5];
            for _ in 0..1000 {
                let active = seq.next_tick();
                for k in 0..5 {
                    if active[k] {
                        idle[k] = 0;
                    } else {
                        idle[k] += 1;
                        assert!(idle[k] < t, "area {k} idle {} ticks with bound {t}", idle[k]);
                    }
                }
            }
        }
    }

    #[test]
    fn schedules_replay_by_seed() {
        let sched = UpdateSchedule::Asynchronous { delay_bound: 5, seed: 1234 };
        let a: Vec<Vec<bool>> = {
            let mut s = sched.activations(4);
            (0..200).map(|_| s.next_tick()).collect()
        };
        let b: Vec<Vec<bool>> = {
            let mut s = sched.activations(4);
            (0..200).map(|_| s.next_tick()).collect()
        };
        assert_eq!(a, b);

        let other = UpdateSchedule::Asynchronous { delay_bound: 5, seed: 4321 };
        let c: Vec<Vec<bool>> = {
            let mut s = other.activations(4);
            (0..200).map(|_| s.next_tick()).collect()
        };
        assert_ne!(a, c, "different seeds should draw different activation sets");
    }

    #[test]
    fn schedule_validation_rejects_zero_delay() {
        let bad = UpdateSchedule::Asynchronous { delay_bound: 0, seed: 1 };
        assert!(matches!(bad.validate().unwrap_err(), Error::Config(_)));
        assert!(UpdateSchedule::Synchronous.validate().is_ok());
    }
}
