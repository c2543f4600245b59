use edgemarket::harness::{
    run_rounds, run_scenario, run_sweep, write_outputs, ScenarioConfig, SweepSpec,
};
use edgemarket::ledger::TxKind;

fn cfg(users: u32, cities: u32, budget: u64, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        users_per_role: users,
        cities,
        budget_base_usd: budget,
        seed,
        ..ScenarioConfig::default()
    }
}

#[test]
fn same_config_same_everything() {
    let c = cfg(50, 2, 5, 42);
    let (a, b) = (run_rounds(&c).unwrap(), run_rounds(&c).unwrap());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.ledger.export(), y.ledger.export());
        assert_eq!(x.engagements, y.engagements);
        assert_eq!(x.pair_gas, y.pair_gas);
    }
    assert_eq!(run_scenario(&c).unwrap(), run_scenario(&c).unwrap());
    let other = run_scenario(&cfg(50, 2, 5, 43)).unwrap();
    assert_ne!(other.heads, run_scenario(&c).unwrap().heads);
}

#[test]
fn closed_world_audit_holds_everywhere() {
    for (users, cities, budget) in [(25, 2, 5), (75, 4, 50), (125, 1, 5), (10, 4, 50)] {
        let c = cfg(users, cities, budget, 7);
        for r in run_rounds(&c).unwrap() {
            assert!(r.audit(), "{users}/{cities}/{budget} round {}", r.round);
            let l = &r.ledger;
            assert_eq!(l.count(TxKind::Deposit), r.engagements.len());
            assert_eq!(l.count(TxKind::Engaged), r.engagements.len());
            assert_eq!(l.count(TxKind::Registration), 3 * users as usize);
            assert_eq!(l.count(TxKind::ResultDigest), r.settled());
            for s in &r.settlements {
                let e = r
                    .engagements
                    .iter()
                    .find(|e| e.consumer == s.consumer)
                    .unwrap();
                assert_eq!(
                    s.settlement.total().unwrap(),
                    r.population.user(e.consumer).budget
                );
            }
        }
    }
}

#[test]
fn eng_rate_stays_in_unit_interval() {
    let m = run_scenario(&cfg(60, 3, 50, 1)).unwrap();
    for r in &m.eng_rates {
        assert!(*r.numer() <= *r.denom());
    }
}

#[test]
fn more_cities_and_budget_shorten_waits() {
    for seed in [1, 2, 3] {
        for users in [50, 100] {
            let wide = run_scenario(&cfg(users, 4, 50, seed)).unwrap();
            let narrow = run_scenario(&cfg(users, 2, 5, seed)).unwrap();
            assert!(
                wide.latency.avg <= narrow.latency.avg,
                "seed {seed} users {users}: {} > {}",
                wide.latency.avg_f64(),
                narrow.latency.avg_f64()
            );
        }
    }
}

#[test]
fn smallest_population_has_the_lowest_rate() {
    let grid = run_sweep(&SweepSpec::standard(2024)).unwrap();
    for combo in grid.chunks(5) {
        let low = &combo[0].eng_rate.avg;
        assert!(combo[1..].iter().all(|m| m.eng_rate.avg > *low));
    }
}

#[test]
fn sweep_outputs_are_byte_stable() {
    let spec = SweepSpec {
        users: vec![20, 40],
        cities: vec![2],
        budgets: vec![5, 50],
        rounds: 3,
        seed: 5,
        base: ScenarioConfig::default(),
    };
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    write_outputs(&run_sweep(&spec).unwrap(), &a).unwrap();
    write_outputs(&run_sweep(&spec).unwrap(), &b).unwrap();
    for f in ["summary.csv", "heads.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap()
        );
    }
    let summary = std::fs::read_to_string(a.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    let heads = std::fs::read_to_string(a.join("heads.csv")).unwrap();
    assert_eq!(heads.lines().count(), 1 + 4 * 3);
}

#[test]
fn larger_population_extends_smaller_one() {
    use edgemarket::harness::generate_population;
    let small = generate_population(&cfg(25, 2, 5, 9), 0);
    let big = generate_population(&cfg(50, 2, 5, 9), 0);
    assert_eq!(&big.users[..small.users.len()], &small.users[..]);
}
