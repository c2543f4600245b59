//! One simulated round: register, allocate and match a population, then run
//! every engagement's session through key exchange, chunk distribution, DHT
//! verification, computation and settlement.

use rand::{Rng, RngCore};

use crate::domain::{Money, UserId};
use crate::escrow::{Escrow, EscrowConfig, SessionTerms, Settlement, StartOutcome, TickOutcome};
use crate::gasmeter::{Account, Primitive};
use crate::hash::sha256;
use crate::ledger::{Event, Ledger, TxKind};
use crate::matchmaker::{Engagement, MatchmakerConfig, SearchRecord};
use crate::registry::Registry;
use crate::vault::{
    chunk_data, distribute, encrypt_and_sign, fetch_all, result_digest, sign_dht, AccessPolicy,
    CryptoScheme, KeyDirectory, KeySeed, StorageNetwork, ToyScheme,
};
use crate::{Env, Error};

use super::config::ScenarioConfig;
use super::population::{generate_population, mix, stream, Population};

/// Stream tags keeping per-purpose randomness independent.
const KEY_STREAM: u64 = 0x6b65_7973;
const SESSION_STREAM: u64 = 0x7365_7373;

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub round: u32,
    pub population: Population,
    pub consumers: usize,
    pub engagements: Vec<Engagement>,
    pub search_log: Vec<SearchRecord>,
    /// Consumer plus compute-provider gas, one entry per engagement.
    pub pair_gas: Vec<u64>,
    pub consumer_gas: Vec<u64>,
    pub provider_gas: Vec<u64>,
    pub settlements: Vec<SessionResult>,
    pub ledger: Ledger,
}

impl RoundOutcome {
    /// Chain verifies, every deposit is closed by a settlement or abort, and
    /// every settlement pays out exactly its deposit.
    pub fn audit(&self) -> bool {
        let l = &self.ledger;
        let conserved = self.settlements.iter().all(|s| {
            let deposit = self
                .engagements
                .iter()
                .find(|e| e.consumer == s.consumer)
                .map(|e| self.population.user(e.consumer).budget);
            deposit.is_some() && s.settlement.total().ok() == deposit
        });
        l.verify_chain()
            && l.count(TxKind::Settled) + l.count(TxKind::Aborted) == l.count(TxKind::Deposit)
            && conserved
    }

    pub fn settled(&self) -> usize {
        self.settlements
            .iter()
            .filter(|s| !s.settlement.aborted)
            .count()
    }

    pub fn aborted(&self) -> usize {
        self.settlements
            .iter()
            .filter(|s| s.settlement.aborted)
            .count()
    }

    /// Indices of engagements whose session ran to settlement. Gas
    /// statistics only count these: an aborted session never traded.
    pub fn completed(&self) -> impl Iterator<Item = usize> + '_ {
        self.settlements
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.settlement.aborted)
            .map(|(i, _)| i)
    }
}

/// Settlement tagged with the consumer it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionResult {
    pub consumer: UserId,
    pub settlement: Settlement,
}

/// Registers and allocates the round's population and returns the matching
/// state. Sessions have not run yet.
pub fn match_round(
    cfg: &ScenarioConfig,
    round: u32,
) -> Result<(Population, Registry, Env, Vec<Engagement>), Error> {
    let mut env = Env::new(cfg.gas_table.weighted(&cfg.cost.op_mix));
    let mm = MatchmakerConfig {
        replication: cfg.replication,
        eng_batch: cfg.cost.eng_batch,
    };
    let mut registry = Registry::new(cfg.cities, cfg.condition_bits, mm, &mut env);
    let population = generate_population(cfg, round);
    for u in &population.users {
        registry.register_with_id(u.clone(), &mut env)?;
    }
    let mut engagements = Vec::new();
    for id in &population.arrivals {
        let (_, es) = registry.allocate_collect(*id, &mut env)?;
        engagements.extend(es);
    }
    engagements.extend(registry.finish(&mut env));
    Ok((population, registry, env, engagements))
}

pub fn run_round(cfg: &ScenarioConfig, round: u32) -> Result<RoundOutcome, Error> {
    let (population, mut registry, mut env, engagements) = match_round(cfg, round)?;
    let mut escrow = Escrow::new(EscrowConfig {
        setup_share: cfg.cost.setup_share,
        comm_interval: cfg.cost.comm_interval,
    });
    let mut net = StorageNetwork::new();
    let mut settlements = Vec::with_capacity(engagements.len());
    for e in &engagements {
        registry.hold(e);
        let s = run_session(cfg, round, &population, e, &mut escrow, &mut net, &mut env)?;
        registry.release(e);
        settlements.push(SessionResult {
            consumer: e.consumer,
            settlement: s,
        });
    }

    let gas = |id: UserId| env.gas.receipt(Account::User(id)).total();
    let consumer_gas: Vec<u64> = engagements.iter().map(|e| gas(e.consumer)).collect();
    let provider_gas: Vec<u64> = engagements
        .iter()
        .map(|e| gas(e.compute_provider))
        .collect();
    let pair_gas = consumer_gas
        .iter()
        .zip(&provider_gas)
        .map(|(c, p)| c + p)
        .collect();
    let search_log = registry
        .networks()
        .iter()
        .flat_map(|n| n.search_log().iter().copied())
        .collect();
    Ok(RoundOutcome {
        round,
        consumers: population.consumers().count(),
        population,
        engagements,
        search_log,
        pair_gas,
        consumer_gas,
        provider_gas,
        settlements,
        ledger: env.ledger,
    })
}

fn keypair(
    scheme: &ToyScheme,
    cfg: &ScenarioConfig,
    round: u32,
    id: UserId,
) -> Result<crate::vault::KeyPair, Error> {
    let seed = mix(mix(cfg.seed, KEY_STREAM), mix(round as u64, id.0));
    Ok(scheme.keygen(KeySeed::Deterministic(seed))?)
}

/// Drives one engagement from deposit to settlement.
fn run_session(
    cfg: &ScenarioConfig,
    round: u32,
    population: &Population,
    e: &Engagement,
    escrow: &mut Escrow,
    net: &mut StorageNetwork,
    env: &mut Env,
) -> Result<Settlement, Error> {
    let scheme = ToyScheme;
    let mut rng = stream(cfg.seed, &[SESSION_STREAM, round as u64, e.consumer.0]);
    let consumer = population.user(e.consumer);
    let compute_rate = Money::from_micros((e.charge.micros() / cfg.ticks_per_charge).max(1));
    let terms = SessionTerms {
        consumer: e.consumer,
        compute_provider: e.compute_provider,
        storage_providers: e.storage_providers.clone(),
        compute_rate,
        storage_rate: compute_rate.percent(cfg.storage_rate_percent),
        deposit: consumer.budget,
    };
    let session = escrow.open_session(terms, env)?;
    if e.storage_providers.is_empty() {
        return Ok(escrow.abort(session, env)?);
    }

    // Step 1: key exchange.
    let consumer_key = keypair(&scheme, cfg, round, e.consumer)?;
    let provider_key = keypair(&scheme, cfg, round, e.compute_provider)?;
    escrow.record_key_exchange(session, consumer_key.public.clone(), env)?;

    // Steps 2-3: encrypt, sign and spread the chunks, then publish the DHT.
    let len = rng.gen_range(cfg.data_min_bytes..=cfg.data_max_bytes);
    let mut data = vec![0u8; len];
    rng.fill_bytes(&mut data);
    let plain = chunk_data(&data, cfg.chunk_size)?;
    let mut policy = AccessPolicy::new(session);
    policy
        .trust(e.consumer, consumer_key.public.clone())
        .trust(e.compute_provider, provider_key.public.clone());
    let chunks = encrypt_and_sign(&scheme, &plain, &consumer_key, &policy, &mut rng)?;
    let r = cfg.replication.min(e.storage_providers.len());
    let dht = distribute(net, session, &chunks, &e.storage_providers, r)?;
    env.gas.meter_user(
        e.consumer,
        Primitive::MessageEmit,
        (chunks.len() * r) as u64,
    );
    let signed = sign_dht(&scheme, &dht, &consumer_key)?;
    escrow.record_distribution(session, signed, env)?;

    // Step 4: the provider checks the DHT signature before any payment.
    if let StartOutcome::Aborted(s) = escrow.verify_and_start(session, &scheme, env)? {
        return Ok(s);
    }

    // Step 5: fetch, verify and decrypt every chunk, compute, publish digest.
    let keys = KeyDirectory::from_chunks(&chunks);
    let fetched = fetch_all(
        &scheme,
        e.compute_provider,
        &provider_key,
        &consumer_key.public,
        &dht,
        &policy,
        &keys,
        net,
    )?;
    let n = chunks.len() as u64;
    env.gas
        .meter_user(e.compute_provider, Primitive::StorageRead, n);
    env.gas
        .meter_user(e.compute_provider, Primitive::SignatureVerify, n);
    let result = sha256(&fetched).0;
    let index = env.ledger.record(&Event::ResultDigest {
        digest: result_digest(&result),
    });
    env.gas
        .meter_user(e.compute_provider, Primitive::StorageWrite, 1);
    if fetched != data || !env.ledger.verify_result(&result, index)? {
        return Err(Error::Integrity(format!(
            "round {round}: result check failed for consumer {}",
            e.consumer
        )));
    }

    // Step 6: tick until the consumer checks out or the deposit runs dry.
    let checkout_at = rng.gen_range(0..=cfg.max_checkout_ticks);
    loop {
        let s = escrow.session(session).expect("open session");
        if s.ticks() >= checkout_at {
            return Ok(escrow.checkout(session, env)?);
        }
        if let TickOutcome::Settled(s) = escrow.tick(session, env)? {
            return Ok(s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            users_per_role: 25,
            rounds: 2,
            seed: 9,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn round_is_deterministic_and_audits() {
        let a = run_round(&small(), 0).unwrap();
        let b = run_round(&small(), 0).unwrap();
        assert_eq!(a.ledger.head(), b.ledger.head());
        assert_eq!(a.pair_gas, b.pair_gas);
        assert!(a.audit());
        assert!(!a.engagements.is_empty());
        assert_eq!(a.settlements.len(), a.engagements.len());
        assert_eq!(a.ledger.count(TxKind::Deposit), a.engagements.len());
    }

    #[test]
    fn engagements_are_admissible_and_disjoint() {
        let out = run_round(&small(), 1).unwrap();
        let mut consumers = std::collections::BTreeSet::new();
        let mut providers = std::collections::BTreeSet::new();
        for e in &out.engagements {
            let c = out.population.user(e.consumer);
            let p = out.population.user(e.compute_provider);
            assert!(c.admits(p));
            assert_eq!(c.region, p.region);
            assert!(consumers.insert(e.consumer));
            assert!(providers.insert(e.compute_provider));
            for s in &e.storage_providers {
                assert!(c.admits(out.population.user(*s)));
            }
        }
    }

    #[test]
    fn zero_replication_aborts_every_session() {
        let cfg = ScenarioConfig {
            replication: 0,
            ..small()
        };
        let out = run_round(&cfg, 0).unwrap();
        assert_eq!(out.aborted(), out.engagements.len());
        assert!(out.audit());
    }
}
