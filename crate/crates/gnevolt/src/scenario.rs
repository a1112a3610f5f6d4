//! Scenario files: one JSON document describing a feeder, a game, a
//! solver, and an update schedule, so an experiment can be re-run
//! bit-for-bit from a single artifact.
//!
//! The schema is strict: unknown fields are rejected everywhere, every
//! cross-reference is validated, and error messages name the offending
//! bus or field. A scenario builds into a [`Game`] plus a solver
//! configuration; the command-line runner and the sweep helpers both go
//! through [`ScenarioFile::build`].
//!
//! Sketch of a minimal document:
//!
//! ```json
//! {
//!   "name": "chain2",
//!   "topology": { "buses": 3, "edges": [
//!     { "from": 0, "to": 1, "x": 1.0 },
//!     { "from": 1, "to": 2, "x": 1.0 } ] },
//!   "weight_convention": "inv_x",
//!   "operating_point": { "v_base": [0.97, 0.95] },
//!   "game": { "gamma": 1.0, "mu": 1.0,
//!             "costs": { "quadratic": 0.1 },
//!             "limits": { "symmetric": 10.0 } },
//!   "partition": [[1, 2]],
//!   "solver": { "algorithm": "admm", "rho": 0.9, "beta": 7.0 }
//! }
//! ```
//!
//! Branch impedances may be given in ohms instead of per unit by setting
//! `topology.units` to `"ohm"` and supplying `topology.bases`; they are
//! converted with `x_pu = x_ohm * S_base / V_base^2`. The no-control
//! operating point is given either as the voltage profile `v_base` (the
//! profile the feeder settles at with every injection at zero) or as the
//! equivalent load vector `w`; exactly one must be present.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{BusCost, CommPartition, CostModel, Game, VarLimits};
use crate::grid::{
    build_reduced_laplacian, reactance_to_per_unit, Edge, FeederTopology, GridModel,
    WeightConvention,
};
use crate::solvers::admm::AdmmConfig;
use crate::solvers::extragradient::ExtragradientConfig;
use crate::solvers::gradient_play::GradientPlayConfig;
use crate::solvers::SolveControl;
use crate::comms::UpdateSchedule;

// ---------------------------------------------------------------------------
// Schema types
// ---------------------------------------------------------------------------

/// Top-level scenario document. Field order here fixes the order in
/// serialized output.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub topology: TopologySection,
    pub weight_convention: WeightRule,
    pub operating_point: OperatingPoint,
    pub game: GameSection,
    /// Communication areas as lists of bus ids (1-based, bus 0 is the
    /// feeder head and is never a member).
    pub partition: Vec<Vec<usize>>,
    pub solver: SolverSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    /// Optional per-curvature step sizes for the cost-sweep comparison;
    /// ignored by plain runs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tunings: Vec<SweepTuning>,
}

/// Feeder graph. `buses` counts every node including the feeder head
/// (bus 0), so a document with `buses: 13` controls 12 buses.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub buses: usize,
    #[serde(default, skip_serializing_if = "is_default_units")]
    pub units: Units,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bases: Option<Bases>,
    pub edges: Vec<EdgeSpec>,
}

fn is_default_units(u: &Units) -> bool {
    *u == Units::PerUnit
}

/// Unit system for the branch impedances in `edges`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    #[default]
    PerUnit,
    Ohm,
}

/// Conversion bases, required when `units` is `"ohm"`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bases {
    /// Line-to-line voltage base in volts.
    pub v_base_volt: f64,
    /// Apparent-power base in volt-amperes.
    pub s_base_va: f64,
}

/// One branch. `r` is carried through for documentation but does not
/// enter the voltage model, which is driven by reactance alone.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: usize,
    pub to: usize,
    pub x: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub r: f64,
}

fn is_zero(r: &f64) -> bool {
    *r == 0.0
}

/// Edge-weight rule used to assemble the voltage matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightRule {
    #[serde(rename = "inv_x")]
    InvX,
    #[serde(rename = "inv_2x")]
    Inv2X,
}

impl From<WeightRule> for WeightConvention {
    fn from(rule: WeightRule) -> Self {
        match rule {
            WeightRule::InvX => WeightConvention::InvX,
            WeightRule::Inv2X => WeightConvention::Inv2X,
        }
    }
}

/// No-control operating point: exactly one of the two fields must be
/// present. `v_base` is the per-unit voltage profile with all injections
/// at zero; `w` is the equivalent uncontrolled load vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPoint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_base: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
}

/// Objectives: tracking gain, targets, prices, and the injection box.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub gamma: f64,
    /// Voltage target, either one value for every bus or one per bus.
    pub mu: ScalarOrVec,
    pub costs: CostSpec,
    pub limits: LimitSpec,
}

/// A value that may be written as a scalar (broadcast to every bus) or
/// as an explicit per-bus list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    PerBus(Vec<f64>),
}

impl ScalarOrVec {
    fn expand(&self, n: usize, what: &str) -> Result<DVector<f64>> {
        match self {
            ScalarOrVec::Scalar(s) => Ok(DVector::from_element(n, *s)),
            ScalarOrVec::PerBus(v) if v.len() == n => Ok(DVector::from_row_slice(v)),
            ScalarOrVec::PerBus(v) => Err(Error::Schema(format!(
                "{what} lists {} entries for {n} controllable buses",
                v.len()
            ))),
        }
    }
}

/// Per-bus price curves. The uniform form is the common case; the
/// per-bus form admits mixed curve families.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostSpec {
    /// `{ "quadratic": c }` — every bus pays `(c/2) q^2`.
    Uniform { quadratic: f64 },
    /// `{ "quadratic": [c_1, ...] }` — per-bus quadratic curvatures.
    PerBusQuadratic { quadratic: Vec<f64> },
    /// `{ "per_bus": [ { "quadratic": c }, { "quartic": a }, ... ] }`.
    PerBus { per_bus: Vec<CostEntry> },
}

/// One bus's price curve in the `per_bus` cost form.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostEntry {
    /// `(c/2) q^2`.
    Quadratic(f64),
    /// `(a/4) q^4`.
    Quartic(f64),
}

impl From<CostEntry> for BusCost {
    fn from(e: CostEntry) -> Self {
        match e {
            CostEntry::Quadratic(c) => BusCost::Quadratic { c },
            CostEntry::Quartic(a) => BusCost::Quartic { a },
        }
    }
}

/// Injection box, symmetric (`[-s, s]` at every bus) or explicit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LimitSpec {
    Symmetric { symmetric: f64 },
    Explicit { lower: Vec<f64>, upper: Vec<f64> },
}

/// Algorithm choice plus its step sizes. Only the fields the chosen
/// algorithm uses may be present; a stray step size is a schema error so
/// that a typo cannot silently change which parameter is in force.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub algorithm: Algorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    200_000
}

fn default_record_every() -> usize {
    1
}

/// Solver selector as written in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Per-bus consensus learner (`rho`, `beta`).
    Admm,
    /// Same arithmetic, dense linear algebra (`rho`, `beta`).
    AdmmCompact,
    /// Extra-gradient on the primal-dual operator (`alpha`, `rho`).
    Eg,
    /// Projected best-response descent (`epsilon`); needs area-wide
    /// dense solves, so it carries no locality audit.
    GradientPlay,
}

impl Algorithm {
    /// Stable lowercase label used in reports and table headers.
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Admm => "admm",
            Algorithm::AdmmCompact => "admm-compact",
            Algorithm::Eg => "eg",
            Algorithm::GradientPlay => "gradient-play",
        }
    }
}

/// Update schedule: every area every tick, or seeded coin flips with a
/// bounded idle streak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "mode", rename_all = "snake_case")]
pub enum ScheduleSection {
    Synchronous,
    Asynchronous {
        delay_bound: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection::Synchronous
    }
}

/// Fixed step sizes for one cost level of the sweep comparison. The
/// sweep refuses to run a cell it has no tuning for, so that results are
/// always attributable to recorded parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepTuning {
    /// Quadratic curvature this row applies to.
    pub cost: f64,
    pub admm: AdmmTuning,
    pub eg: EgTuning,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmmTuning {
    pub rho: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgTuning {
    pub alpha: f64,
    pub rho: f64,
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Parses a scenario document from JSON text. Syntax and unknown-field
/// errors surface as [`Error::Schema`] with serde's position info.
pub fn parse_scenario_str(text: &str) -> Result<ScenarioFile> {
    serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
}

/// Reads and parses a scenario file from disk.
pub fn parse_scenario_path(path: &std::path::Path) -> Result<ScenarioFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Schema(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario_str(&text)
}

// ---------------------------------------------------------------------------
// Building
// ---------------------------------------------------------------------------

/// A scenario resolved into runnable pieces.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub name: String,
    pub game: Game,
    pub solver: SolverSpec,
    pub schedule: UpdateSchedule,
    /// Trace subsampling period from the solver block.
    pub record_every: usize,
}

/// Concrete solver configuration produced by [`ScenarioFile::build`].
#[derive(Debug, Clone)]
pub enum SolverSpec {
    Admm(AdmmConfig),
    AdmmCompact(AdmmConfig),
    Extragradient(ExtragradientConfig),
    GradientPlay(GradientPlayConfig),
}

impl SolverSpec {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            SolverSpec::Admm(_) => Algorithm::Admm,
            SolverSpec::AdmmCompact(_) => Algorithm::AdmmCompact,
            SolverSpec::Extragradient(_) => Algorithm::Eg,
            SolverSpec::GradientPlay(_) => Algorithm::GradientPlay,
        }
    }
}

impl ScenarioFile {
    /// Number of controllable buses (the feeder head is excluded).
    pub fn controllable_buses(&self) -> usize {
        self.topology.buses.saturating_sub(1)
    }

    /// Resolves the document into a game, a solver configuration, and a
    /// schedule, validating every cross-reference on the way.
    pub fn build(&self) -> Result<BuiltScenario> {
        let game = self.build_game()?;
        let solver = self.build_solver()?;
        let schedule = self.schedule(None);
        schedule.validate()?;
        if self.solver.record_every == 0 {
            return Err(Error::Schema("record_every must be at least 1".into()));
        }
        for t in &self.tunings {
            t.validate()?;
        }
        Ok(BuiltScenario {
            name: self.name.clone(),
            game,
            solver,
            schedule,
            record_every: self.solver.record_every,
        })
    }

    /// Builds just the game, exactly as `build` would.
    pub fn build_game(&self) -> Result<Game> {
        let n = self.controllable_buses();
        if n == 0 {
            return Err(Error::Schema(
                "topology needs at least 2 buses (the feeder head plus one controllable bus)"
                    .into(),
            ));
        }

        let topology = self.build_topology(n)?;
        let convention: WeightConvention = self.weight_convention.into();
        let model = self.build_model(&topology, convention, n)?;

        let mu = self.game.mu.expand(n, "voltage target mu")?;
        let costs = CostModel::new(self.game.gamma, mu, self.expand_costs(n)?)?;
        let limits = self.build_limits(n)?;
        let partition = CommPartition::new(self.partition.clone(), n)?;
        Game::new(topology, model, costs, limits, partition)
    }

    /// Builds the game with every bus's price replaced by the quadratic
    /// curvature `c`, keeping everything else from the document. The
    /// sweep comparison uses this to vary monotonicity without touching
    /// the feeder or the operating point.
    pub fn build_game_with_quadratic_cost(&self, c: f64) -> Result<Game> {
        let mut altered = self.clone();
        altered.game.costs = CostSpec::Uniform { quadratic: c };
        altered.build_game()
    }

    /// Update schedule from the schedule block; `seed_override` replaces
    /// the document's seed (used for the `GNEVOLT_SEED` environment
    /// override) and is ignored for synchronous schedules.
    pub fn schedule(&self, seed_override: Option<u64>) -> UpdateSchedule {
        match self.schedule {
            ScheduleSection::Synchronous => UpdateSchedule::Synchronous,
            ScheduleSection::Asynchronous { delay_bound, seed } => UpdateSchedule::Asynchronous {
                delay_bound,
                seed: seed_override.unwrap_or(seed),
            },
        }
    }

    /// Looks up the sweep tuning row for a cost level, comparing with a
    /// relative tolerance so serialized decimals round-trip.
    pub fn tuning_for(&self, cost: f64) -> Option<&SweepTuning> {
        self.tunings
            .iter()
            .find(|t| (t.cost - cost).abs() <= 1e-9 * cost.abs().max(1e-300))
    }

    fn build_topology(&self, n: usize) -> Result<FeederTopology> {
        let to_pu: Box<dyn Fn(f64) -> f64> = match self.topology.units {
            Units::PerUnit => Box::new(|x| x),
            Units::Ohm => {
                let bases = self.topology.bases.ok_or_else(|| {
                    Error::Schema(
                        "topology.units is \"ohm\" but topology.bases is missing".into(),
                    )
                })?;
                if !(bases.v_base_volt > 0.0 && bases.s_base_va > 0.0) {
                    return Err(Error::Schema(
                        "conversion bases must be strictly positive".into(),
                    ));
                }
                Box::new(move |x| reactance_to_per_unit(x, bases.s_base_va, bases.v_base_volt))
            }
        };
        let edges = self
            .topology
            .edges
            .iter()
            .map(|e| Edge {
                from: e.from,
                to: e.to,
                reactance: to_pu(e.x),
                resistance: to_pu(e.r),
            })
            .collect();
        FeederTopology::new(n, edges)
    }

    fn build_model(
        &self,
        topology: &FeederTopology,
        convention: WeightConvention,
        n: usize,
    ) -> Result<GridModel> {
        let check_len = |v: &[f64], what: &str| -> Result<()> {
            if v.len() == n {
                Ok(())
            } else {
                Err(Error::Schema(format!(
                    "operating_point.{what} lists {} entries for {n} controllable buses",
                    v.len()
                )))
            }
        };
        match (&self.operating_point.v_base, &self.operating_point.w) {
            (Some(_), Some(_)) => Err(Error::Schema(
                "operating_point must give either v_base or w, not both".into(),
            )),
            (None, None) => Err(Error::Schema(
                "operating_point must give v_base or w".into(),
            )),
            (Some(v_base), None) => {
                check_len(v_base, "v_base")?;
                GridModel::from_topology(topology, convention, DVector::from_row_slice(v_base))
            }
            (None, Some(w)) => {
                check_len(w, "w")?;
                let b = build_reduced_laplacian(topology, convention);
                let w = DVector::from_row_slice(w);
                let v_base = b
                    .clone()
                    .cholesky()
                    .ok_or_else(|| {
                        Error::Domain("voltage matrix is not positive definite".into())
                    })?
                    .solve(&w);
                GridModel::new(b, w, v_base)
            }
        }
    }

    fn expand_costs(&self, n: usize) -> Result<Vec<BusCost>> {
        match &self.game.costs {
            CostSpec::Uniform { quadratic } => {
                Ok(vec![BusCost::Quadratic { c: *quadratic }; n])
            }
            CostSpec::PerBusQuadratic { quadratic } => {
                if quadratic.len() != n {
                    return Err(Error::Schema(format!(
                        "costs.quadratic lists {} entries for {n} controllable buses",
                        quadratic.len()
                    )));
                }
                Ok(quadratic.iter().map(|&c| BusCost::Quadratic { c }).collect())
            }
            CostSpec::PerBus { per_bus } => {
                if per_bus.len() != n {
                    return Err(Error::Schema(format!(
                        "costs.per_bus lists {} entries for {n} controllable buses",
                        per_bus.len()
                    )));
                }
                Ok(per_bus.iter().map(|&e| e.into()).collect())
            }
        }
    }

    fn build_limits(&self, n: usize) -> Result<VarLimits> {
        match &self.game.limits {
            LimitSpec::Symmetric { symmetric } => {
                if !(symmetric.is_finite() && *symmetric > 0.0) {
                    return Err(Error::Schema(format!(
                        "symmetric limit must be a positive number, got {symmetric}"
                    )));
                }
                Ok(VarLimits::symmetric(n, *symmetric))
            }
            LimitSpec::Explicit { lower, upper } => {
                if lower.len() != n || upper.len() != n {
                    return Err(Error::Schema(format!(
                        "limits list {} lower and {} upper entries for {n} controllable buses",
                        lower.len(),
                        upper.len()
                    )));
                }
                VarLimits::new(
                    DVector::from_row_slice(lower),
                    DVector::from_row_slice(upper),
                )
            }
        }
    }

    fn build_solver(&self) -> Result<SolverSpec> {
        let s = &self.solver;
        let control = SolveControl::new(s.max_iter, s.tol)?;
        let need = |p: Option<f64>, field: &str| {
            p.ok_or_else(|| {
                Error::Schema(format!(
                    "solver.{field} is required for algorithm \"{}\"",
                    s.algorithm.label()
                ))
            })
        };
        let refuse = |p: Option<f64>, field: &str| {
            if p.is_some() {
                Err(Error::Schema(format!(
                    "solver.{field} does not apply to algorithm \"{}\"",
                    s.algorithm.label()
                )))
            } else {
                Ok(())
            }
        };
        match s.algorithm {
            Algorithm::Admm | Algorithm::AdmmCompact => {
                refuse(s.alpha, "alpha")?;
                refuse(s.epsilon, "epsilon")?;
                let cfg = AdmmConfig::new(need(s.rho, "rho")?, need(s.beta, "beta")?, control)?;
                Ok(match s.algorithm {
                    Algorithm::Admm => SolverSpec::Admm(cfg),
                    _ => SolverSpec::AdmmCompact(cfg),
                })
            }
            Algorithm::Eg => {
                refuse(s.beta, "beta")?;
                refuse(s.epsilon, "epsilon")?;
                let cfg =
                    ExtragradientConfig::new(need(s.alpha, "alpha")?, need(s.rho, "rho")?, control)?;
                Ok(SolverSpec::Extragradient(cfg))
            }
            Algorithm::GradientPlay => {
                refuse(s.rho, "rho")?;
                refuse(s.beta, "beta")?;
                refuse(s.alpha, "alpha")?;
                let cfg = GradientPlayConfig::new(need(s.epsilon, "epsilon")?, control)?;
                Ok(SolverSpec::GradientPlay(cfg))
            }
        }
    }
}

impl SweepTuning {
    fn validate(&self) -> Result<()> {
        let pos = |v: f64, field: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Schema(format!(
                    "tunings.{field} must be a positive number, got {v}"
                )))
            }
        };
        pos(self.cost, "cost")?;
        pos(self.admm.rho, "admm.rho")?;
        pos(self.admm.beta, "admm.beta")?;
        pos(self.eg.alpha, "eg.alpha")?;
        pos(self.eg.rho, "eg.rho")
    }
}
