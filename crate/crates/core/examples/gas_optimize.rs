//! Searches cost arguments for the cheapest and steadiest per-pair gas at a
//! few penalty weights.
//!
//! cargo run --release --example gas_optimize

use num_rational::Ratio;
use num_traits::ToPrimitive;

use edgemarket::gasmeter::CostGrid;
use edgemarket::harness::{optimize_scenario, ScenarioConfig};

fn main() -> Result<(), edgemarket::Error> {
    let cfg = ScenarioConfig {
        users_per_role: 50,
        rounds: 3,
        seed: 8,
        ..ScenarioConfig::default()
    };
    let grid = CostGrid {
        eng_batch: vec![1, 4],
        comm_interval: vec![1, 5],
        setup_share: vec![1, 10],
        ..CostGrid::default()
    };
    let candidates = grid.candidates()?;
    for zeta in [
        Ratio::from_integer(0),
        Ratio::new(1, 100_000),
        Ratio::new(1, 1000),
    ] {
        let r = optimize_scenario(&cfg, &candidates, zeta)?;
        let best = r.scores.iter().find(|s| s.args == r.optimal).unwrap();
        println!(
            "zeta {zeta:>8}: batch={} comm={} share={} avg={:.0} sd={:.0}",
            r.optimal.eng_batch,
            r.optimal.comm_interval,
            r.optimal.setup_share,
            best.stats.avg.to_f64().unwrap(),
            best.stats.var.to_f64().unwrap().sqrt()
        );
    }
    Ok(())
}
