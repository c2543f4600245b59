//! Per-region matching contract.
//!
//! Compute providers sit in an AVL [`ProviderBook`] keyed by
//! `(charge, arrival seq)`; consumers that find no admissible provider wait in
//! a FIFO [`WaitQueue`] that is re-scanned when compute providers arrive.
//!
//! A match attempt walks candidates in ascending key order with one
//! root-to-leaf descent per candidate and takes the first one whose charge
//! fits the bid, whose capabilities cover the consumer's requirements and
//! whose window covers at least 3/4 of the consumer's window. The walk stops
//! as soon as a candidate's charge exceeds the bid.

mod book;

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

pub use book::{avl_height_bound, BookKey, ProviderBook};

use crate::domain::{overlap_admissible, Money, Region, Role, UserId, UserSpec};
use crate::gasmeter::Primitive;
use crate::ledger::Event;
use crate::Env;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("{id} has role {role:?}, expected {expected}")]
    WrongRole {
        id: UserId,
        role: Role,
        expected: &'static str,
    },
    #[error("{0} is already in the provider book")]
    DuplicateProvider(UserId),
    #[error("{id} belongs to region {found:?}, not {expected:?}")]
    WrongRegion {
        id: UserId,
        found: Region,
        expected: Region,
    },
    #[error("tick {tick} is earlier than the last processed tick {last}")]
    TickRegression { tick: u64, last: u64 },
    #[error("condition vector length mismatch for {0}")]
    ConditionLength(UserId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Waiting {
    pub spec: UserSpec,
    pub enqueue_tick: u64,
    /// Queue length seen on arrival; auxiliary metric only.
    pub queue_len_at_enqueue: usize,
}

#[derive(Debug, Clone, Default)]
pub struct WaitQueue {
    entries: VecDeque<Waiting>,
}

impl WaitQueue {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Waiting> {
        self.entries.iter()
    }

    pub fn contains(&self, id: UserId) -> bool {
        self.entries.iter().any(|w| w.spec.id == id)
    }

    fn push(&mut self, w: Waiting) {
        debug_assert!(self
            .entries
            .back()
            .is_none_or(|b| b.enqueue_tick <= w.enqueue_tick));
        self.entries.push_back(w);
    }

    fn remove(&mut self, id: UserId) -> Option<Waiting> {
        let pos = self.entries.iter().position(|w| w.spec.id == id)?;
        self.entries.remove(pos)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Engagement {
    pub consumer: UserId,
    pub compute_provider: UserId,
    pub storage_providers: Vec<UserId>,
    /// `replication - storage_providers.len()`.
    pub storage_shortfall: usize,
    /// Agreed per-tick charge of the compute provider.
    pub charge: Money,
    pub region: Region,
    pub enqueue_tick: u64,
    pub matched_tick: u64,
    pub latency_ticks: u64,
    pub comparisons_used: u64,
}

/// Realised latency: ticks from arrival at the matchmaker to engagement.
pub fn latency_of(e: &Engagement) -> u64 {
    e.latency_ticks
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchOutcome {
    Engaged(Engagement),
    Queued,
}

/// Counters recorded for one match attempt over the compute book.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchRecord {
    pub book_size: usize,
    pub condition_bits: usize,
    pub descents: u32,
    pub comparisons: u64,
    /// Largest comparison count spent in a single descent plus its checks.
    pub max_descent: u64,
    pub engaged: bool,
}

impl SearchRecord {
    /// `2·ceil(log2(n+1)) + K + 2`.
    pub fn descent_bound(&self) -> u64 {
        let n = self.book_size as u64 + 1;
        let ceil_log = 64 - (n - 1).leading_zeros() as u64;
        2 * ceil_log + self.condition_bits as u64 + 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchmakerConfig {
    /// Storage providers assigned per engagement.
    pub replication: usize,
    /// Compute-provider arrivals between queue drains.
    pub eng_batch: u32,
}

impl Default for MatchmakerConfig {
    fn default() -> Self {
        MatchmakerConfig {
            replication: 2,
            eng_batch: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Matchmaker {
    region: Region,
    config: MatchmakerConfig,
    compute: ProviderBook,
    storage: ProviderBook,
    queue: WaitQueue,
    clock: u64,
    last_tick: u64,
    pending_arrivals: u32,
    engaged: BTreeSet<UserId>,
    history: Vec<Engagement>,
    search_log: Vec<SearchRecord>,
}

struct Candidate {
    provider: UserSpec,
    comparisons: u64,
}

impl Matchmaker {
    pub fn new(region: Region, config: MatchmakerConfig) -> Self {
        Matchmaker {
            region,
            config,
            compute: ProviderBook::new(),
            storage: ProviderBook::new(),
            queue: WaitQueue::default(),
            clock: 0,
            last_tick: 0,
            pending_arrivals: 0,
            engaged: BTreeSet::new(),
            history: Vec::new(),
            search_log: Vec::new(),
        }
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn config(&self) -> MatchmakerConfig {
        self.config
    }

    pub fn compute_book(&self) -> &ProviderBook {
        &self.compute
    }

    pub fn storage_book(&self) -> &ProviderBook {
        &self.storage
    }

    pub fn queue(&self) -> &WaitQueue {
        &self.queue
    }

    /// Region-local clock: number of arrivals processed through [`Matchmaker::arrive`].
    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Every engagement made so far, in order.
    pub fn engagements(&self) -> &[Engagement] {
        &self.history
    }

    pub fn search_log(&self) -> &[SearchRecord] {
        &self.search_log
    }

    pub fn is_engaged(&self, id: UserId) -> bool {
        self.engaged.contains(&id)
    }

    /// Delivers an arrival at the current regional clock and advances it.
    /// Returns the engagements the arrival produced.
    pub fn arrive(&mut self, spec: UserSpec, env: &mut Env) -> Result<Vec<Engagement>, MatchError> {
        let tick = self.clock;
        let out = match spec.role {
            Role::Consumer => match self.match_consumer(spec, tick, env)? {
                MatchOutcome::Engaged(e) => vec![e],
                MatchOutcome::Queued => Vec::new(),
            },
            _ => self.add_provider(spec, tick, env)?,
        };
        self.clock += 1;
        Ok(out)
    }

    fn observe_tick(&mut self, tick: u64) -> Result<(), MatchError> {
        if tick < self.last_tick {
            return Err(MatchError::TickRegression {
                tick,
                last: self.last_tick,
            });
        }
        self.last_tick = tick;
        self.clock = self.clock.max(tick);
        Ok(())
    }

    fn check_region(&self, spec: &UserSpec) -> Result<(), MatchError> {
        if spec.region != self.region {
            return Err(MatchError::WrongRegion {
                id: spec.id,
                found: spec.region,
                expected: self.region,
            });
        }
        Ok(())
    }

    /// Inserts a provider. A compute provider's arrival then triggers a
    /// queue drain (every `eng_batch` arrivals).
    pub fn add_provider(
        &mut self,
        p: UserSpec,
        tick: u64,
        env: &mut Env,
    ) -> Result<Vec<Engagement>, MatchError> {
        if !p.role.is_provider() {
            return Err(MatchError::WrongRole {
                id: p.id,
                role: p.role,
                expected: "a provider",
            });
        }
        self.check_region(&p)?;
        if self.compute.contains(p.id) || self.storage.contains(p.id) {
            return Err(MatchError::DuplicateProvider(p.id));
        }
        self.observe_tick(tick)?;
        let id = p.id;
        let role = p.role;
        let book = match role {
            Role::ComputeProvider => &mut self.compute,
            _ => &mut self.storage,
        };
        let (_, touches) = book.insert(p).expect("presence checked above");
        env.gas.meter_user(id, Primitive::MapInsert, 1);
        env.gas.meter_user(id, Primitive::StorageWrite, 1);
        env.gas.meter_user(id, Primitive::TreeNodeTouch, touches);

        if role != Role::ComputeProvider {
            return Ok(Vec::new());
        }
        self.pending_arrivals += 1;
        if self.pending_arrivals >= self.config.eng_batch {
            Ok(self.try_drain_queue(tick, env))
        } else {
            Ok(Vec::new())
        }
    }

    /// Engages the consumer with the first admissible compute provider or
    /// appends it to the waiting queue.
    pub fn match_consumer(
        &mut self,
        c: UserSpec,
        tick: u64,
        env: &mut Env,
    ) -> Result<MatchOutcome, MatchError> {
        if c.role != Role::Consumer {
            return Err(MatchError::WrongRole {
                id: c.id,
                role: c.role,
                expected: "a consumer",
            });
        }
        self.check_region(&c)?;
        self.observe_tick(tick)?;
        if let Some(p) = self.compute.iter().next().map(|(_, p)| p) {
            if p.conditions.len() != c.conditions.len() {
                return Err(MatchError::ConditionLength(c.id));
            }
        }
        match self.attempt(&c, env) {
            Some(cand) => {
                let e = self.engage(&c, cand, tick, tick, env);
                Ok(MatchOutcome::Engaged(e))
            }
            None => {
                let queue_len = self.queue.len();
                env.gas.meter_user(c.id, Primitive::StorageWrite, 1);
                env.gas.meter_user(c.id, Primitive::MessageEmit, 1);
                env.ledger.record(&Event::Queued {
                    consumer: c.id,
                    tick,
                });
                self.queue.push(Waiting {
                    spec: c,
                    enqueue_tick: tick,
                    queue_len_at_enqueue: queue_len,
                });
                Ok(MatchOutcome::Queued)
            }
        }
    }

    /// One front-to-back pass over the waiting queue, re-trying each
    /// consumer. Remaining consumers keep their relative order.
    pub fn try_drain_queue(&mut self, tick: u64, env: &mut Env) -> Vec<Engagement> {
        self.pending_arrivals = 0;
        let mut out = Vec::new();
        let mut kept = VecDeque::with_capacity(self.queue.len());
        let waiting = std::mem::take(&mut self.queue.entries);
        for w in waiting {
            if self.compute.is_empty() {
                kept.push_back(w);
                continue;
            }
            match self.attempt(&w.spec, env) {
                Some(cand) => out.push(self.engage(&w.spec, cand, w.enqueue_tick, tick, env)),
                None => kept.push_back(w),
            }
        }
        self.queue.entries = kept;
        out
    }

    /// Flushes a partially filled drain batch.
    pub fn finish(&mut self, env: &mut Env) -> Vec<Engagement> {
        if self.pending_arrivals > 0 {
            let tick = self.clock;
            self.try_drain_queue(tick, env)
        } else {
            Vec::new()
        }
    }

    fn attempt(&mut self, c: &UserSpec, env: &mut Env) -> Option<Candidate> {
        let mut rec = SearchRecord {
            book_size: self.compute.len(),
            condition_bits: c.conditions.len(),
            ..SearchRecord::default()
        };
        let mut cursor = None;
        let mut found = None;
        loop {
            let mut cmp = 0;
            let next = self.compute.next_after(cursor, &mut cmp);
            let Some((key, p)) = next else {
                rec.comparisons += cmp;
                rec.max_descent = rec.max_descent.max(cmp);
                break;
            };
            rec.descents += 1;
            env.gas.meter_user(c.id, Primitive::StorageRead, 1);
            let (admissible, checks) = check_admissible(c, p);
            cmp += checks;
            rec.comparisons += cmp;
            rec.max_descent = rec.max_descent.max(cmp);
            if p.price > c.price {
                break;
            }
            if admissible {
                found = Some(p.clone());
                break;
            }
            cursor = Some(key);
        }
        env.gas
            .meter_user(c.id, Primitive::Comparison, rec.comparisons);
        rec.engaged = found.is_some();
        self.search_log.push(rec);
        found.map(|provider| Candidate {
            provider,
            comparisons: rec.comparisons,
        })
    }

    fn select_storage(&self, c: &UserSpec, env: &mut Env) -> Vec<UserId> {
        let mut picked = Vec::with_capacity(self.config.replication);
        let mut checks = 0;
        if self.config.replication > 0 {
            for (_, s) in self.storage.iter() {
                let (ok, n) = check_admissible(c, s);
                checks += n;
                if s.price > c.price {
                    break;
                }
                if ok {
                    picked.push(s.id);
                    if picked.len() == self.config.replication {
                        break;
                    }
                }
            }
        }
        env.gas.meter_user(c.id, Primitive::Comparison, checks);
        picked
    }

    fn engage(
        &mut self,
        c: &UserSpec,
        cand: Candidate,
        enqueue_tick: u64,
        tick: u64,
        env: &mut Env,
    ) -> Engagement {
        let p = cand.provider;
        let (_, touches) = self.compute.remove(p.id).expect("candidate is in the book");
        env.gas.meter_user(p.id, Primitive::MapDelete, 1);
        env.gas.meter_user(p.id, Primitive::TreeNodeTouch, touches);
        env.gas.meter_user(p.id, Primitive::MessageEmit, 1);
        env.gas.meter_user(c.id, Primitive::StorageWrite, 1);
        env.gas.meter_user(c.id, Primitive::MessageEmit, 1);
        self.engaged.insert(p.id);

        let storage_providers = self.select_storage(c, env);
        let e = Engagement {
            consumer: c.id,
            compute_provider: p.id,
            storage_shortfall: self.config.replication - storage_providers.len(),
            storage_providers,
            charge: p.price,
            region: self.region,
            enqueue_tick,
            matched_tick: tick,
            latency_ticks: tick - enqueue_tick,
            comparisons_used: cand.comparisons,
        };
        env.ledger.record(&Event::Engaged {
            consumer: e.consumer,
            compute_provider: e.compute_provider,
            storage_providers: e.storage_providers.clone(),
            tick,
        });
        self.history.push(e.clone());
        e
    }

    /// Removes a provider still in a book (deregistration). Returns the
    /// number of touched nodes, or `None` if it is not in either book.
    pub fn remove_provider(&mut self, id: UserId, env: &mut Env) -> Option<u64> {
        let (_, touches) = self
            .compute
            .remove(id)
            .or_else(|| self.storage.remove(id))?;
        env.gas.meter_user(id, Primitive::MapDelete, 1);
        env.gas.meter_user(id, Primitive::TreeNodeTouch, touches);
        Some(touches)
    }

    /// Removes a waiting consumer (deregistration).
    pub fn remove_waiting(&mut self, id: UserId, env: &mut Env) -> bool {
        let removed = self.queue.remove(id).is_some();
        if removed {
            env.gas.meter_user(id, Primitive::MapDelete, 1);
        }
        removed
    }
}

/// Price, condition and window admissibility with the number of scalar
/// comparisons spent: one for the price, one per inspected condition bit
/// (stopping at the first unmet requirement) and one for the overlap.
pub(crate) fn check_admissible(c: &UserSpec, p: &UserSpec) -> (bool, u64) {
    let mut n = 1;
    if p.price > c.price {
        return (false, n);
    }
    for i in 0..c.conditions.len() {
        n += 1;
        if c.conditions.get(i) && !p.conditions.get(i) {
            return (false, n);
        }
    }
    n += 1;
    (overlap_admissible(&c.window, &p.window), n)
}

/// Engagement rate: matched consumers over all consumers.
pub fn eng_rate(
    records: &[Engagement],
    total_consumers: usize,
) -> Result<num_rational::Ratio<u64>, crate::Error> {
    if total_consumers == 0 {
        return Err(crate::Error::NoConsumers);
    }
    Ok(num_rational::Ratio::new(
        records.len() as u64,
        total_consumers as u64,
    ))
}
