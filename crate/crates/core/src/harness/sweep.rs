//! Grid sweeps over population size, city count and budget.

use std::path::Path;

use rayon::prelude::*;

use crate::Error;

use super::config::ScenarioConfig;
use super::metrics::{emit_csv, emit_heads, RunMetrics};
use super::run_scenario;

/// Parses `start:end:step` (inclusive) or a single value.
pub fn parse_range(s: &str) -> Result<Vec<u32>, Error> {
    let bad = || Error::Config(format!("bad range {s:?}, expected start:end:step"));
    let parts: Vec<u32> = s
        .split(':')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [v] => Ok(vec![v]),
        [start, end, step] if step > 0 && start <= end => {
            Ok((start..=end).step_by(step as usize).collect())
        }
        _ => Err(bad()),
    }
}

/// Parses a comma-separated list.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, Error> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad list item {p:?} in {s:?}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub users: Vec<u32>,
    pub cities: Vec<u32>,
    pub budgets: Vec<u64>,
    pub rounds: u32,
    pub seed: u64,
    /// Everything not swept comes from here.
    pub base: ScenarioConfig,
}

impl SweepSpec {
    /// The evaluation grid: 25..=125 users by 25, 2 or 4 cities, $5 or $50.
    pub fn standard(seed: u64) -> SweepSpec {
        SweepSpec {
            users: vec![25, 50, 75, 100, 125],
            cities: vec![2, 4],
            budgets: vec![5, 50],
            rounds: 10,
            seed,
            base: ScenarioConfig::default(),
        }
    }

    /// Cell configs in combo order: cities, then budget, then users.
    pub fn cells(&self) -> Result<Vec<ScenarioConfig>, Error> {
        let mut out = Vec::new();
        for &cities in &self.cities {
            for &budget in &self.budgets {
                for &users in &self.users {
                    let cfg = ScenarioConfig {
                        users_per_role: users,
                        cities,
                        budget_base_usd: budget,
                        rounds: self.rounds,
                        seed: self.seed,
                        ..self.base.clone()
                    };
                    cfg.validate()?;
                    out.push(cfg);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config("sweep has no cells".into()));
        }
        Ok(out)
    }
}

/// Runs every cell in parallel; results come back in combo order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<RunMetrics>, Error> {
    spec.cells()?.par_iter().map(run_scenario).collect()
}

/// Writes `summary.csv` and `heads.csv` into `out`.
pub fn write_outputs(cells: &[RunMetrics], out: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(out)?;
    emit_csv(cells, &out.join("summary.csv"))?;
    emit_heads(cells, &out.join("heads.csv"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ranges_and_lists() {
        assert_eq!(
            parse_range("25:125:25").unwrap(),
            vec![25, 50, 75, 100, 125]
        );
        assert_eq!(parse_range("40").unwrap(), vec![40]);
        assert!(parse_range("25:125:0").is_err());
        assert!(parse_range("125:25:25").is_err());
        assert!(parse_range("a:b").is_err());
        assert_eq!(parse_list::<u32>("2, 4").unwrap(), vec![2, 4]);
        assert!(parse_list::<u32>("2,x").is_err());
    }

    #[test]
    fn standard_grid_has_twenty_cells() {
        let cells = SweepSpec::standard(1).cells().unwrap();
        assert_eq!(cells.len(), 20);
        assert_eq!(
            (
                cells[0].users_per_role,
                cells[0].cities,
                cells[0].budget_base_usd
            ),
            (25, 2, 5)
        );
        assert_eq!(cells[19].users_per_role, 125);
    }
}
