//! Seeded scenarios, metric aggregation, grid sweeps and cost optimisation.

pub mod config;
pub mod metrics;
pub mod population;
pub mod scenario;
pub mod sweep;

use num_rational::Ratio;

use crate::gasmeter::{optimize, CostArgs, OptimizeReport};
use crate::Error;

pub use config::ScenarioConfig;
pub use metrics::{
    emit_csv, emit_heads, linear_fit, LinearFit, RunMetrics, Summary, SummaryRow, SUMMARY_HEADER,
};
pub use population::{generate_population, Population};
pub use scenario::{match_round, run_round, RoundOutcome};
pub use sweep::{parse_list, parse_range, run_sweep, write_outputs, SweepSpec};

/// Runs every round of `cfg` in order.
pub fn run_rounds(cfg: &ScenarioConfig) -> Result<Vec<RoundOutcome>, Error> {
    cfg.validate()?;
    (0..cfg.rounds).map(|r| run_round(cfg, r)).collect()
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunMetrics, Error> {
    RunMetrics::aggregate(cfg, &run_rounds(cfg)?)
}

/// Per-pair gas of completed sessions run under `args`, pooled over rounds.
pub fn pair_gas_under(cfg: &ScenarioConfig, args: &CostArgs) -> Result<Vec<u64>, Error> {
    let cfg = ScenarioConfig {
        cost: *args,
        ..cfg.clone()
    };
    Ok(run_rounds(&cfg)?
        .iter()
        .flat_map(|r| r.completed().map(|i| r.pair_gas[i]))
        .collect())
}

/// Grid search for the cost arguments minimising `avg + ζ·var` of pair gas.
pub fn optimize_scenario(
    cfg: &ScenarioConfig,
    candidates: &[CostArgs],
    zeta: Ratio<i128>,
) -> Result<OptimizeReport, Error> {
    optimize(candidates, zeta, |args| pair_gas_under(cfg, args))
}
