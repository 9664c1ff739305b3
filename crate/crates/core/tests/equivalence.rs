use restoration_core::mdp_builder::build;
use restoration_core::oracle::{oracle_longest_horizon, oracle_state_count, oracle_value, random_instance};
use restoration_core::solver::{solve, Horizon};
use restoration_core::{DistributionSystem, OptFlags};

const TOLERANCE: f64 = 1e-9;

fn mismatches(sys: &DistributionSystem) -> Vec<String> {
    let horizon = oracle_longest_horizon(sys).unwrap().max(1);
    let expected = oracle_value(sys, horizon).unwrap();
    let reference_states = oracle_state_count(sys).unwrap();
    let mut out = Vec::new();
    for flags in OptFlags::benchmark_subsets() {
        let mdp = build(sys, flags).unwrap();
        assert!(mdp.state_count() <= reference_states, "{flags}");
        assert!(mdp.longest_horizon().unwrap() <= horizon, "{flags}");
        let got = solve(&mdp, Horizon::Fixed(horizon), false).unwrap().initial_value();
        if (got - expected).abs() > TOLERANCE {
            out.push(format!("{} {flags}: {got} vs {expected}", sys.name().unwrap_or("?")));
        }
    }
    out
}

#[test]
fn reduced_models_match_reference_values() {
    let failures: Vec<String> = (0..300u64)
        .flat_map(|seed| mismatches(&random_instance(seed, 6, 2)))
        .collect();
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

/// A stop that is reachable but not attemptable must not replace a direct
/// trip: heading there can force the other team to move.
#[test]
fn on_the_way_stop_must_be_attemptable() {
    assert_eq!(mismatches(&random_instance(1876, 7, 2)), Vec::<String>::new());
}

/// A team that is already en route ends the fused step when it arrives,
/// even if its target can no longer be attempted.
#[test]
fn en_route_arrival_ends_waiting_step() {
    assert_eq!(mismatches(&random_instance(1164, 7, 2)), Vec::<String>::new());
}

#[test]
fn seven_bus_instances_match_reference_values() {
    let failures: Vec<String> = (5000..5150u64)
        .flat_map(|seed| mismatches(&random_instance(seed, 7, 2)))
        .collect();
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
