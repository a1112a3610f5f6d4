//! Crate-wide error type.
//!
//! Errors are grouped by what the caller can do about them: reject the
//! input (`Topology`, `Domain`, `Partition`, `Schema`, `Config`), pick a
//! different method (`Unsupported`), or treat the run as failed
//! (`Divergence`, `NoEquilibrium`). The command-line runner maps `Schema`
//! and the other input errors to its "bad input" exit code and
//! `Divergence` to its "run failed" exit code.

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The feeder graph is not a tree rooted at bus 0 (cycle, disconnected
    /// component, self-loop, duplicate edge, or out-of-range bus id).
    #[error("topology error: {0}")]
    Topology(String),

    /// A numeric input violates a model assumption (nonpositive reactance,
    /// asymmetric matrix, empty or inverted VAR box, nonconvex cost, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The area partition does not partition the controllable buses, or an
    /// area is not connected in the feeder graph.
    #[error("partition error: {0}")]
    Partition(String),

    /// A scenario file failed to parse or failed schema validation.
    #[error("schema error: {0}")]
    Schema(String),

    /// Solver or schedule configuration is out of range (nonpositive step
    /// size, zero delay bound, ...).
    #[error("config error: {0}")]
    Config(String),

    /// The requested operation is not defined for this model class.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An iterate left the divergence guard region and the run was aborted.
    #[error("solver diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    /// The reference oracle exhausted its search without certifying an
    /// equilibrium.
    #[error("no equilibrium found: {0}")]
    NoEquilibrium(String),

    /// An internal invariant failed; indicates a bug, not bad input.
    #[error("internal error: {0}")]
    Internal(String),
}
