//! Distributed equilibrium learning for voltage control on radial
//! distribution feeders.
//!
//! A feeder is modeled with the linearized branch-flow ("LinDistFlow")
//! voltage equation
//!
//! ```text
//!     B v = q + w
//! ```
//!
//! where `B` is the reduced, reactance-weighted graph Laplacian of the
//! feeder tree (feeder head removed), `v` collects squared voltage
//! magnitudes, `q` the controllable VAR injections, and `w` the
//! uncontrolled operating point. Buses are grouped into communication
//! areas; each area chooses its own injections to track a voltage target
//! while paying for VAR usage, subject to box limits on `q`. Because the
//! areas share the same physical feeder, the result is a generalized Nash
//! equilibrium problem whose shared constraint is the voltage equation
//! itself.
//!
//! The crate provides:
//!
//! * [`grid`] — feeder topology, the reduced Laplacian, and the physics
//!   used as a measurement oracle by the learning dynamics;
//! * [`game`] — cost models, area partitions, the block decomposition of
//!   `B`, equilibrium residuals, and the variational-inequality operators
//!   that characterize equilibria;
//! * [`comms`] — the locally connected message-passing harness, update
//!   schedules, and the locality audit;
//! * [`solvers`] — the augmented-Lagrangian equilibrium learner (per-bus
//!   and compact forms), extra-gradient and gradient-play baselines, the
//!   social-optimum solver, an exhaustive active-set reference oracle, and
//!   step-size/convergence certificates;
//! * [`scenario`], [`trace`], [`report`], [`sweep`] — file formats and
//!   orchestration used by the `gnevolt` command-line runner.
//!
//! Conventions used throughout: bus ids number the feeder head as `0` and
//! the `N` controllable buses as `1..=N`; vectors over controllable buses
//! are 0-indexed (`index = bus id - 1`). All quantities are in per unit.

pub mod comms;
pub mod error;
#[cfg(test)]
pub(crate) mod test_util;
pub mod game;
pub mod grid;
pub mod report;
pub mod scenario;
pub mod solvers;
pub mod sweep;
pub mod trace;

pub use error::{Error, Result};
pub use game::Game;
