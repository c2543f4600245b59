//! Shared helpers for integration tests: a brute-force reference matcher and
//! scenario generators.

#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use edgemarket::domain::{ConditionVector, Money, Region, Role, TimeWindow, UserId, UserSpec};
use edgemarket::matchmaker::MatchmakerConfig;
use edgemarket::registry::Registry;
use edgemarket::Env;

/// What the reference matcher and the real one must agree on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Pairing {
    pub consumer: UserId,
    pub compute_provider: UserId,
    pub storage_providers: Vec<UserId>,
    pub enqueue_tick: u64,
    pub matched_tick: u64,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub users: Vec<UserSpec>,
    pub arrivals: Vec<UserId>,
    pub cities: u32,
    pub condition_bits: usize,
    pub config: MatchmakerConfig,
}

#[derive(Default)]
struct RefRegion {
    /// `(charge, insertion seq, spec)`, kept sorted by linear insertion.
    compute: Vec<(Money, u64, UserSpec)>,
    storage: Vec<(Money, u64, UserSpec)>,
    queue: VecDeque<(UserSpec, u64)>,
    seq: u64,
    clock: u64,
    pending: u32,
}

fn sorted_insert(book: &mut Vec<(Money, u64, UserSpec)>, seq: u64, spec: UserSpec) {
    let pos = book
        .iter()
        .position(|(p, s, _)| (*p, *s) > (spec.price, seq))
        .unwrap_or(book.len());
    book.insert(pos, (spec.price, seq, spec));
}

impl RefRegion {
    fn first_fit(&self, c: &UserSpec) -> Option<usize> {
        self.compute.iter().position(|(_, _, p)| c.admits(p))
    }

    fn storage_for(&self, c: &UserSpec, r: usize) -> Vec<UserId> {
        self.storage
            .iter()
            .filter(|(_, _, s)| c.admits(s))
            .take(r)
            .map(|(_, _, s)| s.id)
            .collect()
    }

    fn engage(&mut self, c: &UserSpec, at: usize, enq: u64, tick: u64, r: usize) -> Pairing {
        let (_, _, p) = self.compute.remove(at);
        Pairing {
            consumer: c.id,
            compute_provider: p.id,
            storage_providers: self.storage_for(c, r),
            enqueue_tick: enq,
            matched_tick: tick,
        }
    }

    fn drain(&mut self, tick: u64, r: usize, out: &mut Vec<Pairing>) {
        self.pending = 0;
        let waiting: Vec<_> = self.queue.drain(..).collect();
        for (c, enq) in waiting {
            match self.first_fit(&c) {
                Some(at) => out.push(self.engage(&c, at, enq, tick, r)),
                None => self.queue.push_back((c, enq)),
            }
        }
    }
}

/// Linear-scan matcher with the same arrival, queue and batching rules.
pub fn reference_match(s: &Scenario) -> Vec<Pairing> {
    let by_id: BTreeMap<UserId, &UserSpec> = s.users.iter().map(|u| (u.id, u)).collect();
    let mut regions: Vec<RefRegion> = (0..s.cities).map(|_| RefRegion::default()).collect();
    let r = s.config.replication;
    let mut out = Vec::new();
    for id in &s.arrivals {
        let u = by_id[id].clone();
        let reg = &mut regions[u.region.0 as usize];
        let tick = reg.clock;
        reg.clock += 1;
        match u.role {
            Role::Consumer => match reg.first_fit(&u) {
                Some(at) => out.push(reg.engage(&u, at, tick, tick, r)),
                None => reg.queue.push_back((u, tick)),
            },
            Role::StorageProvider => {
                let seq = reg.seq;
                reg.seq += 1;
                sorted_insert(&mut reg.storage, seq, u);
            }
            Role::ComputeProvider => {
                let seq = reg.seq;
                reg.seq += 1;
                sorted_insert(&mut reg.compute, seq, u);
                reg.pending += 1;
                if reg.pending >= s.config.eng_batch {
                    reg.drain(tick, r, &mut out);
                }
            }
        }
    }
    for reg in &mut regions {
        if reg.pending > 0 {
            let tick = reg.clock;
            reg.drain(tick, r, &mut out);
        }
    }
    out.sort();
    out
}

/// Runs the scenario through the registry and the per-region matchmakers.
pub fn engine_match(s: &Scenario) -> Vec<Pairing> {
    let mut env = Env::default();
    let mut reg = Registry::new(s.cities, s.condition_bits, s.config, &mut env);
    for u in &s.users {
        reg.register_with_id(u.clone(), &mut env).unwrap();
    }
    let mut es = Vec::new();
    for id in &s.arrivals {
        es.extend(reg.allocate_collect(*id, &mut env).unwrap().1);
    }
    es.extend(reg.finish(&mut env));
    let mut out: Vec<Pairing> = es
        .into_iter()
        .map(|e| Pairing {
            consumer: e.consumer,
            compute_provider: e.compute_provider,
            storage_providers: e.storage_providers,
            enqueue_tick: e.enqueue_tick,
            matched_tick: e.matched_tick,
        })
        .collect();
    out.sort();
    out
}

/// Adversarial scenario: few distinct prices (many ties), dense conditions,
/// mixed windows and an arbitrary arrival order with storage providers
/// arriving anywhere.
pub fn random_scenario(seed: u64, max_users: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_users);
    let cities = rng.gen_range(1..=4u32);
    let condition_bits = rng.gen_range(1..=6usize);
    let density = rng.gen_range(0.0..0.8);
    let config = MatchmakerConfig {
        replication: rng.gen_range(0..=3),
        eng_batch: rng.gen_range(1..=4),
    };
    let price_levels = rng.gen_range(1..=8u64);
    let mut users = Vec::with_capacity(n);
    for i in 0..n {
        let role = match rng.gen_range(0..10) {
            0..=3 => Role::Consumer,
            4..=6 => Role::ComputeProvider,
            _ => Role::StorageProvider,
        };
        let mut mask = 0u64;
        for b in 0..condition_bits {
            if rng.gen_bool(density) {
                mask |= 1 << b;
            }
        }
        let price = Money::from_micros(1 + rng.gen_range(0..price_levels) * 250_000);
        let start = rng.gen_range(0..60u64);
        let len = rng.gen_range(1..80u64);
        users.push(UserSpec {
            id: UserId(i as u64),
            role,
            region: Region(rng.gen_range(0..cities)),
            price,
            conditions: ConditionVector::from_mask(mask, condition_bits).unwrap(),
            window: TimeWindow::new(start, start + len).unwrap(),
            budget: if role == Role::Consumer {
                price
            } else {
                Money::ZERO
            },
        });
    }
    let mut arrivals: Vec<UserId> = users.iter().map(|u| u.id).collect();
    for i in (1..arrivals.len()).rev() {
        arrivals.swap(i, rng.gen_range(0..=i));
    }
    Scenario {
        users,
        arrivals,
        cities,
        condition_bits,
        config,
    }
}

/// Scenario built from the harness population generator.
pub fn harness_scenario(cfg: &edgemarket::harness::ScenarioConfig, round: u32) -> Scenario {
    let p = edgemarket::harness::generate_population(cfg, round);
    Scenario {
        users: p.users,
        arrivals: p.arrivals,
        cities: cfg.cities,
        condition_bits: cfg.condition_bits,
        config: MatchmakerConfig {
            replication: cfg.replication,
            eng_batch: cfg.cost.eng_batch,
        },
    }
}
