//! The scenario documents shipped in `scenarios/` are part of the
//! product: the comparison tables and the robustness figures are only
//! reproducible if those files build exactly the systems the library
//! constructs in code. These tests pin the bundle down.

use std::path::PathBuf;

use gnevolt::game::phi_jacobian_symmetric_part_minimum;
use gnevolt::grid::ieee13_scenario;
use gnevolt::scenario::{parse_scenario_path, Algorithm, ScenarioFile, SolverSpec};
use gnevolt::solvers::certificates::step_size_bounds;

const BUNDLE: [&str; 7] =
    ["ieee13", "chain2", "chain3", "star4", "tree6", "feeder12", "toy1"];

/// The four price curvatures the comparison table sweeps.
const SWEEP_COSTS: [f64; 4] = [1e-4, 1e-2, 1e-1, 1.0];

fn bundled(name: &str) -> ScenarioFile {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.scenario"));
    parse_scenario_path(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn every_bundled_document_parses_and_builds() {
    for name in BUNDLE {
        let file = bundled(name);
        assert_eq!(file.name, name, "document name should match its file name");
        let built = file.build().unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(built.game.model.bus_count(), file.controllable_buses());
        assert_eq!(built.game.partition.area_count(), file.partition.len());
    }
}

#[test]
fn the_bundled_feeder_matches_the_library_constructor() {
    let built = bundled("ieee13").build().unwrap();
    let reference = ieee13_scenario();

    let b_file = built.game.model.b();
    let b_code = reference.model.b();
    assert_eq!(b_file.nrows(), b_code.nrows());
    let b_gap = (b_file - b_code).amax() / b_code.amax();
    assert!(b_gap < 1e-12, "voltage matrices differ by {b_gap:e} (relative)");

    let w_gap = (built.game.model.w() - reference.model.w()).amax();
    assert!(w_gap < 1e-9, "operating points differ by {w_gap:e}");
    let v_gap = (built.game.model.v_base() - reference.model.v_base()).amax();
    assert!(v_gap < 1e-12, "no-injection profiles differ by {v_gap:e}");

    assert_eq!(built.game.costs.gamma(), reference.costs.gamma());
    assert_eq!(built.game.costs.mu(), reference.costs.mu());
    assert_eq!(
        built.game.costs.quadratic_curvatures().unwrap(),
        reference.costs.quadratic_curvatures().unwrap()
    );
    assert_eq!(built.game.limits.lower(), reference.limits.lower());
    assert_eq!(built.game.limits.upper(), reference.limits.upper());
    assert_eq!(built.game.partition.areas(), reference.partition.areas());

    match built.solver {
        SolverSpec::Admm(_) => {}
        other => panic!("the feeder document should run the learner, got {:?}", other.algorithm()),
    }
}

#[test]
fn desk_documents_are_strongly_monotone() {
    for name in ["chain2", "chain3", "star4", "tree6", "feeder12"] {
        let game = bundled(name).build_game().unwrap();
        let margin =
            phi_jacobian_symmetric_part_minimum(&game.model, &game.costs, &game.decomp).unwrap();
        assert!(margin > 1e-3, "{name}: monotonicity margin {margin:e} is not comfortably positive");
    }
}

#[test]
fn sweep_tunings_cover_every_cost_and_stay_certified() {
    // Both documents that carry a tunings table list exactly the sweep
    // costs, and each of their learner rows obeys the step-size
    // certificate for the game at that cost.
    for name in ["ieee13", "toy1"] {
        let file = bundled(name);
        for &cost in &SWEEP_COSTS {
            let tuning = file
                .tuning_for(cost)
                .unwrap_or_else(|| panic!("{name}: missing tuning for cost {cost}"));
            let game = file.build_game_with_quadratic_cost(cost).unwrap();
            let bounds = step_size_bounds(&game).unwrap();
            assert!(
                tuning.admm.rho <= bounds.rho_max,
                "{name} cost {cost}: rho {} above the certified ceiling {}",
                tuning.admm.rho,
                bounds.rho_max
            );
            assert!(
                tuning.admm.beta >= bounds.beta_min(tuning.admm.rho),
                "{name} cost {cost}: beta {} below the certified floor {}",
                tuning.admm.beta,
                bounds.beta_min(tuning.admm.rho)
            );
        }
    }
}

#[test]
fn single_area_documents_report_unit_penalty_ceiling() {
    // With one communication area the consensus matrix equals the full
    // voltage matrix, so the certified penalty ceiling is exactly one.
    for name in ["chain2", "toy1"] {
        let game = bundled(name).build_game().unwrap();
        let bounds = step_size_bounds(&game).unwrap();
        assert!(
            (bounds.rho_max - 1.0).abs() < 1e-9,
            "{name}: single-area penalty ceiling should be 1, got {}",
            bounds.rho_max
        );
    }
}

#[test]
fn bundled_solver_blocks_use_their_algorithms_fields_only() {
    // The need/refuse rule is enforced at build time; the bundle must
    // never trip it.
    for name in BUNDLE {
        let file = bundled(name);
        let built = file.build().unwrap();
        assert_eq!(built.solver.algorithm(), Algorithm::Admm);
    }
}
