use proptest::prelude::*;
use restoration_core::energization::{beta, enumerate_outcomes};
use restoration_core::mdp_builder::build;
use restoration_core::oracle::random_instance;
use restoration_core::solver::{solve, Horizon};
use restoration_core::system_model::load_problem;
use restoration_core::{BusStatus, BusStatusVector, OptFlags, TeamCommand};

fn subset() -> impl Strategy<Value = OptFlags> {
    (0..15usize).prop_map(|i| OptFlags::benchmark_subsets()[i])
}

fn status() -> impl Strategy<Value = BusStatus> {
    prop_oneof![Just(BusStatus::Unknown), Just(BusStatus::Damaged), Just(BusStatus::Energized)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn built_models_satisfy_structural_invariants(seed in 0u64..100_000, flags in subset()) {
        let mdp = build(&random_instance(seed, 6, 2), flags).unwrap();
        prop_assert_eq!(mdp.check_invariants(), Vec::<String>::new());
    }

    #[test]
    fn cascades_are_distributions_over_reachable_buses(seed in 0u64..100_000) {
        let system = random_instance(seed, 6, 2);
        let mdp = build(&system, OptFlags::NONE).unwrap();
        for index in 0..mdp.state_count().min(50) {
            let state = mdp.state(index);
            let outcomes = enumerate_outcomes(&system, &state.status, state.positions());
            prop_assert!((outcomes.total_probability() - 1.0).abs() < 1e-12);
            let reachable = beta(&system, &state.status);
            for o in outcomes.iter() {
                for (bus, after) in state.status.changes_to(&o.status) {
                    prop_assert!(reachable.contains(bus));
                    prop_assert_eq!(state.status.get(bus), BusStatus::Unknown);
                    prop_assert_ne!(after, BusStatus::Unknown);
                }
            }
        }
    }

    /// Costs are non-negative, and once every trajectory has ended the value
    /// grows by the same expected terminal cost each step.
    #[test]
    fn value_grows_with_the_horizon(seed in 0u64..100_000, flags in subset()) {
        let mdp = build(&random_instance(seed, 5, 2), flags).unwrap();
        let longest = mdp.longest_horizon().unwrap().max(1);
        let values: Vec<f64> = (1..=longest + 3)
            .map(|h| solve(&mdp, Horizon::Fixed(h), false).unwrap().initial_value())
            .collect();
        for w in values.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9);
        }
        let tail: Vec<f64> = values[longest as usize - 1..].windows(2).map(|w| w[1] - w[0]).collect();
        for d in &tail {
            prop_assert!((d - tail[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn every_reduction_shrinks_the_plain_model(seed in 0u64..100_000, flags in subset()) {
        let system = random_instance(seed, 6, 2);
        let plain = build(&system, OptFlags::NONE).unwrap().state_count();
        let reduced = build(&system, flags).unwrap().state_count();
        let best = build(&system, OptFlags::ALL).unwrap().state_count();
        prop_assert!(reduced <= plain);
        prop_assert!(best <= reduced);
    }

    #[test]
    fn documents_round_trip(seed in 0u64..100_000) {
        let system = random_instance(seed, 6, 2);
        let reloaded = load_problem(&system.to_document().to_json_pretty()).unwrap();
        let a = solve(&build(&system, OptFlags::ALL).unwrap(), Horizon::Fixed(12), false).unwrap();
        let b = solve(&build(&reloaded, OptFlags::ALL).unwrap(), Horizon::Fixed(12), false).unwrap();
        prop_assert_eq!(a.initial_value(), b.initial_value());
        prop_assert_eq!(reloaded.branches(), system.branches());
    }

    #[test]
    fn status_letters_round_trip(v in prop::collection::vec(status(), 1..64)) {
        let letters: String = v.iter().map(|s| s.letter()).collect();
        let parsed = BusStatusVector::from_letters(&letters).unwrap();
        prop_assert_eq!(parsed.statuses(), v);
    }

    #[test]
    fn command_codes_round_trip(bus in 0usize..64, kind in 0u8..3) {
        let cmd = match kind {
            0 => TeamCommand::Wait,
            1 => TeamCommand::Continue,
            _ => TeamCommand::GoTo(bus),
        };
        prop_assert_eq!(TeamCommand::parse_code(&cmd.code()), Some(cmd));
    }
}
