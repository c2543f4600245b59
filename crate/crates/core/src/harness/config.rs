//! Scenario configuration, read from TOML. Unknown keys are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{ConditionVector, Money};
use crate::escrow::DEFAULT_STORAGE_RATE_PERCENT;
use crate::gasmeter::{CostArgs, GasTable};
use crate::hash::DIGEST_ALGORITHM;
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Consumers, compute providers and storage providers each.
    pub users_per_role: u32,
    pub cities: u32,
    pub budget_base_usd: u64,
    pub rounds: u32,
    pub seed: u64,
    /// Storage providers per engagement, and chunk replication factor.
    pub replication: usize,
    /// Storage provider pay per tick, as a percentage of the compute rate.
    pub storage_rate_percent: u32,
    pub condition_bits: usize,
    /// Probability that a consumer requires, or a provider offers, a condition.
    pub condition_density: f64,
    /// Share of providers whose time window overlaps consumers well enough.
    pub good_window_share: f64,
    /// Ticks of service the agreed charge pays for.
    pub ticks_per_charge: u64,
    /// Consumers check out after a seeded number of ticks in `0..=max_checkout_ticks`.
    pub max_checkout_ticks: u64,
    pub chunk_size: usize,
    pub data_min_bytes: usize,
    pub data_max_bytes: usize,
    /// Must name the ledger's digest; only "sha256" is supported.
    pub digest: String,
    pub gas_table: GasTable,
    pub cost: CostArgs,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            users_per_role: 25,
            cities: 2,
            budget_base_usd: 5,
            rounds: 10,
            seed: 0,
            replication: 2,
            storage_rate_percent: DEFAULT_STORAGE_RATE_PERCENT,
            condition_bits: ConditionVector::DEFAULT_LEN,
            condition_density: 0.5,
            good_window_share: 0.85,
            ticks_per_charge: 4,
            max_checkout_ticks: 3,
            chunk_size: 128,
            data_min_bytes: 64,
            data_max_bytes: 1024,
            digest: DIGEST_ALGORITHM.to_string(),
            gas_table: GasTable::default(),
            cost: CostArgs::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, Error> {
        let cfg: ScenarioConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn budget_base(&self) -> Money {
        Money::from_dollars(self.budget_base_usd)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.users_per_role == 0 {
            return fail("users_per_role must be positive");
        }
        if self.rounds == 0 {
            return fail("rounds must be positive");
        }
        if self.cities == 0 {
            return fail("cities must be positive");
        }
        if self.budget_base_usd == 0 || self.budget_base_usd > 1_000_000 {
            return fail("budget_base_usd must be in 1..=1000000");
        }
        if self.condition_bits == 0 || self.condition_bits > ConditionVector::MAX_LEN {
            return fail("condition_bits must be in 1..=64");
        }
        if !(0.0..=1.0).contains(&self.condition_density) {
            return fail("condition_density must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.good_window_share) {
            return fail("good_window_share must be in [0, 1]");
        }
        if self.ticks_per_charge == 0 {
            return fail("ticks_per_charge must be positive");
        }
        if self.replication > u8::MAX as usize {
            return fail("replication must be at most 255");
        }
        if self.chunk_size == 0 {
            return fail("chunk_size must be positive");
        }
        if self.data_min_bytes == 0 || self.data_min_bytes > self.data_max_bytes {
            return fail("need 0 < data_min_bytes <= data_max_bytes");
        }
        if self.digest != DIGEST_ALGORITHM {
            return fail("digest must be \"sha256\"");
        }
        self.gas_table.validate()?;
        self.cost.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml() {
        let cfg = ScenarioConfig {
            seed: 42,
            cities: 4,
            ..ScenarioConfig::default()
        };
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg =
            ScenarioConfig::from_toml_str("users_per_role = 50\n[gas_table]\ncomparison = 5\n")
                .unwrap();
        assert_eq!(cfg.users_per_role, 50);
        assert_eq!(cfg.gas_table.comparison, 5);
        assert_eq!(cfg.gas_table.storage_write, 20_000);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(ScenarioConfig::from_toml_str("users = 3").is_err());
        assert!(ScenarioConfig::from_toml_str("rounds = 0").is_err());
        assert!(ScenarioConfig::from_toml_str("cities = 0").is_err());
        assert!(ScenarioConfig::from_toml_str("digest = \"md5\"").is_err());
        assert!(ScenarioConfig::from_toml_str("[gas_table]\ncomparison = 0").is_err());
        assert!(ScenarioConfig::from_toml_str("[cost]\neng_batch = 0").is_err());
    }
}
