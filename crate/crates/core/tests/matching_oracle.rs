mod support;

use proptest::prelude::*;

use edgemarket::harness::ScenarioConfig;
use edgemarket::matchmaker::avl_height_bound;
use support::{engine_match, harness_scenario, random_scenario, reference_match};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn engine_agrees_with_linear_scan(seed in any::<u64>(), max_users in 1usize..=200) {
        let s = random_scenario(seed, max_users);
        prop_assert_eq!(engine_match(&s), reference_match(&s));
    }

    #[test]
    fn harness_populations_agree(seed in any::<u64>(), users in 1u32..=66, cities in 1u32..=4, batch in 1u32..=5) {
        let mut cfg = ScenarioConfig { users_per_role: users, cities, seed, ..ScenarioConfig::default() };
        cfg.cost.eng_batch = batch;
        let s = harness_scenario(&cfg, 0);
        prop_assert_eq!(engine_match(&s), reference_match(&s));
    }
}

#[test]
fn every_engaged_pair_is_admissible_and_unique() {
    for seed in 0..50 {
        let s = random_scenario(seed, 200);
        let pairs = engine_match(&s);
        let user = |id: edgemarket::domain::UserId| &s.users[id.0 as usize];
        let mut providers = std::collections::BTreeSet::new();
        for p in &pairs {
            let c = user(p.consumer);
            assert!(c.admits(user(p.compute_provider)));
            assert!(providers.insert(p.compute_provider));
            assert!(p.storage_providers.len() <= s.config.replication);
            assert!(p.matched_tick >= p.enqueue_tick);
        }
    }
}

#[test]
fn ties_break_by_arrival() {
    // Scenarios with a single price level are all ties.
    let mut checked = 0;
    for seed in 0..400 {
        let s = random_scenario(seed, 60);
        let one_price = s
            .users
            .iter()
            .map(|u| u.price)
            .collect::<std::collections::BTreeSet<_>>()
            .len()
            == 1;
        if one_price {
            assert_eq!(engine_match(&s), reference_match(&s));
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn height_bound_grows_logarithmically() {
    assert!(avl_height_bound(1) >= 1.0);
    assert!(avl_height_bound(1_000_000) < 30.0);
}
