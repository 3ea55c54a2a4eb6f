//! Property tests for the module invariants.

mod common;

use common::random_feasible_decisions;
use edgetimer::domain::{grid_distances, ClusterConfig, SchedulingState};
use edgetimer::rules::{
    allocate_edge, offload, place, AllocationRule, OffloadRule, PlacementRule, RuleInputs,
    RuleParams,
};
use edgetimer::simenv::{Env, EnvOptions};
use edgetimer::workload::{make_pattern, synth_workload, PatternTag, SynthSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cluster(n: usize, s: usize, edge_mem: f64) -> ClusterConfig {
    let mut cfg = ClusterConfig::default_instance();
    cfg.num_edges = n;
    cfg.num_services = s;
    cfg.service_mem_footprint = vec![2.0; s];
    cfg.edge_mem = edge_mem;
    cfg.distance = grid_distances(n, 5.0, 50.0);
    cfg
}

/// Independent naive re-check of the three state invariants.
fn naive_state_ok(cfg: &ClusterConfig, st: &SchedulingState) -> bool {
    for i in 0..cfg.num_edges {
        let mut mem = 0.0;
        let mut cpu = 0.0;
        for s in 0..cfg.num_services {
            if st.placement[i][s] {
                mem += cfg.service_mem_footprint[s];
            }
            cpu += st.allocation[i][s];
            if st.allocation[i][s] < 0.0 {
                return false;
            }
            let dest = st.offload[i][s];
            if dest > cfg.num_edges {
                return false;
            }
            if dest < cfg.num_edges && !st.placement[dest][s] {
                return false;
            }
        }
        if mem > cfg.edge_mem + 1e-9 || cpu > cfg.edge_cpu + 1e-9 {
            return false;
        }
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The validator and a brute-force checker agree on random states, both
    /// feasible ones and mutated (possibly broken) ones.
    #[test]
    fn state_validator_agrees_with_brute_force(seed in 0u64..5000, mutate in 0u8..4) {
        let cfg = cluster(3, 4, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_feasible_decisions(&cfg, &mut rng);
        let mut st = SchedulingState::initial(&cfg);
        st.placement = d.placement;
        st.offload = d.offload;
        st.allocation = d.allocation;
        match mutate {
            1 => st.allocation[0][0] = cfg.edge_cpu + 1.0,
            2 => st.offload[1][1] = 0, // may or may not be feasible
            3 => { st.placement[2] = vec![true; 4]; } // 8 > 4 memory units
            _ => {}
        }
        let validated = st.validate(&cfg).is_empty();
        prop_assert_eq!(validated, naive_state_ok(&cfg, &st));
    }

    /// Every candidate the rules emit satisfies the state invariants.
    #[test]
    fn rule_candidates_respect_invariants(seed in 0u64..5000) {
        let cfg = cluster(3, 4, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let servers = cfg.num_servers();
        use rand::Rng;
        let inputs = RuleInputs {
            windowed_demand: (0..3)
                .map(|_| (0..4).map(|_| rng.random_range(0.0..20.0)).collect())
                .collect(),
            window_slots: 10,
            exec_backlog: (0..servers).map(|_| rng.random_range(0.0..30.0)).collect(),
            exec_counts: (0..servers)
                .map(|_| (0..4).map(|_| rng.random_range(0..5)).collect())
                .collect(),
            exec_demand: (0..servers)
                .map(|_| (0..4).map(|_| rng.random_range(0.0..10.0)).collect())
                .collect(),
        };
        let current = vec![vec![false; 4]; 3];
        let params = RuleParams::default();
        for p_rule in PlacementRule::ALL {
            let x = place(p_rule, &cfg, &current, &params, &inputs);
            for o_rule in OffloadRule::ALL {
                let y = offload(o_rule, &cfg, &x, &params, &inputs);
                for a_rule in AllocationRule::ALL {
                    let z: Vec<Vec<f64>> = (0..3)
                        .map(|i| allocate_edge(a_rule, &cfg, &inputs.exec_demand[i]))
                        .collect();
                    let mut st = SchedulingState::initial(&cfg);
                    st.placement = x.clone();
                    st.offload = y.clone();
                    st.allocation = z;
                    let errs = st.validate(&cfg);
                    prop_assert!(errs.is_empty(), "{p_rule:?}-{o_rule:?}-{a_rule:?}: {errs:?}");
                }
            }
        }
    }

    /// Pattern B preserves each edge's payload multiset; C doubles the event
    /// count; D concatenates all three.
    #[test]
    fn pattern_invariants(seed in 0u64..5000, rate in 0.2f64..2.0) {
        let cfg = cluster(3, 3, 4.0);
        let spec = SynthSpec::constant(rate, 2.0);
        let a = synth_workload(&cfg, 40, &spec, seed);
        let b = make_pattern(&a, PatternTag::B, seed);
        prop_assert_eq!(b.events.len(), a.events.len());
        for edge in 0..3 {
            let key = |t: &edgetimer::Task| (t.service, t.workload.to_bits(), t.delay_budget);
            let mut before: Vec<_> =
                a.events.iter().filter(|t| t.origin_edge == edge).map(key).collect();
            let mut after: Vec<_> =
                b.events.iter().filter(|t| t.origin_edge == edge).map(key).collect();
            before.sort_unstable();
            after.sort_unstable();
            prop_assert_eq!(before, after);
        }
        let c = make_pattern(&a, PatternTag::C, seed);
        prop_assert_eq!(c.events.len(), 2 * a.events.len());
        let d = make_pattern(&a, PatternTag::D, seed);
        prop_assert_eq!(d.events.len(), a.events.len() + b.events.len() + c.events.len());
        prop_assert_eq!(d.horizon, 3 * a.horizon);
    }

    /// Ledger identity and conservation under random decision churn.
    #[test]
    fn env_identities_hold(seed in 0u64..5000) {
        let cfg = cluster(2, 2, 4.0);
        let script = synth_workload(&cfg, 30, &SynthSpec::constant(1.0, 2.0), seed);
        let mut env = Env::new(cfg.clone(), EnvOptions::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        for t in 0..script.horizon {
            let d = random_feasible_decisions(&cfg, &mut rng);
            let ledger = env.step(&d, script.arrivals_at(t)).unwrap();
            for i in 0..cfg.num_edges {
                let a = ledger.update_bits[i];
                let expected = ledger.revenue[i]
                    - if a.a1 { ledger.place_cost[i] } else { 0.0 }
                    - if a.a2 { ledger.offload_cost[i] } else { 0.0 }
                    - if a.a3 { ledger.alloc_cost[i] } else { 0.0 };
                prop_assert!((ledger.profit[i] - expected).abs() < 1e-9);
                prop_assert!(ledger.revenue[i] >= 0.0);
                prop_assert!(ledger.place_cost[i] >= 0.0);
                prop_assert!(ledger.offload_cost[i] >= 0.0);
                prop_assert!(ledger.alloc_cost[i] >= 0.0);
            }
            let c = env.conservation();
            prop_assert_eq!(c.arrived, c.completed + c.violated + c.queued);
        }
    }
}
