//! Seeded user populations.
//!
//! User `i` of each role is drawn from its own stream keyed by
//! `(seed, round, i)`, so a population of `n` users is a prefix of the
//! population of `n + 25`. Cells of a sweep that differ only in size
//! therefore share their first users, which keeps size trends from being
//! swamped by sampling noise.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{
    ConditionVector, Money, Region, Role, TimeWindow, UserDraft, UserId, UserSpec,
};

use super::config::ScenarioConfig;

pub const WINDOW_LEN: u64 = 100;

/// SplitMix64 finaliser, used to derive independent stream seeds.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(parts.iter().fold(seed, |acc, &p| mix(acc, p)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population {
    /// Every user, ids assigned in generation order.
    pub users: Vec<UserSpec>,
    /// Order in which users reach their matchmaker: all storage providers
    /// first, then consumers and compute providers interleaved by a seeded key.
    pub arrivals: Vec<UserId>,
}

impl Population {
    pub fn user(&self, id: UserId) -> &UserSpec {
        &self.users[id.0 as usize]
    }

    pub fn consumers(&self) -> impl Iterator<Item = &UserSpec> {
        self.users.iter().filter(|u| u.role == Role::Consumer)
    }
}

fn conditions(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig) -> ConditionVector {
    let mut mask = 0u64;
    for i in 0..cfg.condition_bits {
        if rng.gen_bool(cfg.condition_density) {
            mask |= 1 << i;
        }
    }
    ConditionVector::from_mask(mask, cfg.condition_bits).expect("length validated")
}

fn draft(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig, role: Role) -> UserDraft {
    let region = Region(rng.gen_range(0..cfg.cities));
    let base = cfg.budget_base().micros();
    let conditions = conditions(rng, cfg);
    let (price, budget, start) = match role {
        Role::Consumer => {
            let bid = Money::from_micros(base + rng.gen_range(0..Money::MICROS_PER_DOLLAR));
            (bid, bid, rng.gen_range(0..=25))
        }
        _ => {
            let charge = Money::from_micros(rng.gen_range(base / 2..base + base / 2));
            // Good windows overlap every consumer window by >= 3/4; the rest
            // start late enough that the overlap is always below 3/4.
            let start = if rng.gen_bool(cfg.good_window_share) {
                rng.gen_range(0..=25)
            } else {
                rng.gen_range(51..=75)
            };
            (charge, Money::ZERO, start)
        }
    };
    UserDraft {
        role,
        region,
        price,
        conditions,
        window: TimeWindow::new(start, start + WINDOW_LEN).expect("non-empty"),
        budget,
    }
}

pub fn generate_population(cfg: &ScenarioConfig, round: u32) -> Population {
    const ROLES: [Role; 3] = [Role::Consumer, Role::ComputeProvider, Role::StorageProvider];
    let mut users = Vec::with_capacity(3 * cfg.users_per_role as usize);
    let mut keyed = Vec::new();
    let mut storage = Vec::new();
    for i in 0..cfg.users_per_role as u64 {
        for (r, role) in ROLES.into_iter().enumerate() {
            let mut rng = stream(cfg.seed, &[round as u64, i, r as u64]);
            let arrival_key: u64 = rng.gen();
            let id = UserId(users.len() as u64);
            users.push(draft(&mut rng, cfg, role).with_id(id));
            match role {
                Role::StorageProvider => storage.push(id),
                _ => keyed.push((arrival_key, id)),
            }
        }
    }
    keyed.sort_unstable();
    let arrivals = storage
        .into_iter()
        .chain(keyed.into_iter().map(|(_, id)| id))
        .collect();
    Population { users, arrivals }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::overlap_admissible;

    fn cfg(users: u32, cities: u32, budget: u64) -> ScenarioConfig {
        ScenarioConfig {
            users_per_role: users,
            cities,
            budget_base_usd: budget,
            seed: 11,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let a = generate_population(&cfg(25, 2, 5), 3);
        assert_eq!(a, generate_population(&cfg(25, 2, 5), 3));
        assert_ne!(a, generate_population(&cfg(25, 2, 5), 4));
        let b = generate_population(&cfg(50, 2, 5), 3);
        assert_eq!(&b.users[..75], &a.users[..]);
        let order = |p: &Population| -> Vec<UserId> {
            p.arrivals.iter().copied().filter(|id| id.0 < 75).collect()
        };
        assert_eq!(order(&a), order(&b));
    }

    #[test]
    fn counts_budgets_and_arrival_order() {
        let p = generate_population(&cfg(25, 2, 5), 0);
        assert_eq!(p.users.len(), 75);
        for role in [Role::Consumer, Role::ComputeProvider, Role::StorageProvider] {
            assert_eq!(p.users.iter().filter(|u| u.role == role).count(), 25);
        }
        for c in p.consumers() {
            assert!(c.budget >= Money::from_dollars(5) && c.budget < Money::from_dollars(6));
            assert_eq!(c.budget, c.price);
        }
        for u in p.users.iter().filter(|u| u.role.is_provider()) {
            assert!(
                u.price >= Money::from_micros(2_500_000) && u.price < Money::from_micros(7_500_000)
            );
        }
        assert_eq!(p.arrivals.len(), 75);
        assert!(p.arrivals[..25]
            .iter()
            .all(|id| p.user(*id).role == Role::StorageProvider));
    }

    #[test]
    fn region_histogram_within_three_sigma() {
        let p = generate_population(&cfg(3334, 4, 5), 0);
        let n = p.users.len() as f64;
        let mut hist = [0f64; 4];
        for u in &p.users {
            hist[u.region.index()] += 1.0;
        }
        let sigma = (n * 0.25 * 0.75).sqrt();
        for h in hist {
            assert!((h - n / 4.0).abs() <= 3.0 * sigma, "{hist:?}");
        }
    }

    #[test]
    fn window_split_matches_share() {
        let p = generate_population(&cfg(2000, 2, 5), 0);
        let consumer = TimeWindow::new(25, 125).unwrap();
        let providers: Vec<_> = p.users.iter().filter(|u| u.role.is_provider()).collect();
        let good = providers
            .iter()
            .filter(|u| overlap_admissible(&consumer, &u.window))
            .count() as f64;
        let share = good / providers.len() as f64;
        assert!((share - 0.85).abs() < 0.03, "{share}");
        // Good windows admit every possible consumer window.
        let early = TimeWindow::new(0, 100).unwrap();
        for u in &providers {
            assert_eq!(
                overlap_admissible(&consumer, &u.window),
                overlap_admissible(&early, &u.window)
            );
        }
    }
}
