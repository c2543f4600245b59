//! Per-session intermediary contract: holds the consumer's deposit, pays
//! providers every tick and settles on checkout or exhaustion.
//!
//! A session moves strictly forward:
//!
//! ```text
//! Provisioned -> KeysExchanged -> Distributed -> DhtVerified -> Computing -> Settled
//! ```
//!
//! Any state before `Computing` may instead end in `Aborted`, which refunds
//! the whole deposit. A call made in the wrong state errors and leaves the
//! session untouched.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::domain::{DomainError, Money, UserId};
use crate::gasmeter::Primitive;
use crate::ledger::Event;
use crate::matchmaker::Engagement;
use crate::vault::{verify_dht, CryptoScheme, PublicKey, SignedDht};
use crate::Env;

/// Storage is paid this percentage of the compute charge unless configured.
pub const DEFAULT_STORAGE_RATE_PERCENT: u32 = 20;

pub type SessionId = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EscrowError {
    #[error("deposit must be positive")]
    ZeroDeposit,
    #[error("session already open for consumer {consumer} and provider {provider}")]
    AlreadyOpen { consumer: UserId, provider: UserId },
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("session {session} is {found:?}, operation needs {expected:?}")]
    WrongState {
        session: SessionId,
        expected: SessionState,
        found: SessionState,
    },
    #[error(transparent)]
    Money(#[from] DomainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SessionState {
    Provisioned,
    KeysExchanged,
    Distributed,
    DhtVerified,
    Computing,
    Settled,
    Aborted,
}

impl SessionState {
    pub fn is_terminal(self) -> bool {
        matches!(self, SessionState::Settled | SessionState::Aborted)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionTerms {
    pub consumer: UserId,
    pub compute_provider: UserId,
    pub storage_providers: Vec<UserId>,
    /// Paid to the compute provider each tick.
    pub compute_rate: Money,
    /// Paid to each storage provider each tick.
    pub storage_rate: Money,
    pub deposit: Money,
}

impl SessionTerms {
    pub fn from_engagement(e: &Engagement, deposit: Money, storage_rate_percent: u32) -> Self {
        SessionTerms {
            consumer: e.consumer,
            compute_provider: e.compute_provider,
            storage_providers: e.storage_providers.clone(),
            compute_rate: e.charge,
            storage_rate: e.charge.percent(storage_rate_percent),
            deposit,
        }
    }

    /// Total debited from the deposit per tick.
    pub fn tick_debit(&self) -> Result<Money, DomainError> {
        self.storage_rate
            .checked_mul(self.storage_providers.len() as u64)?
            .checked_add(self.compute_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settlement {
    pub session: SessionId,
    pub compute: Money,
    pub storage: Vec<(UserId, Money)>,
    pub refund: Money,
    pub ticks: u64,
    pub aborted: bool,
}

impl Settlement {
    pub fn total(&self) -> Result<Money, DomainError> {
        Money::sum(
            [self.compute, self.refund]
                .into_iter()
                .chain(self.storage.iter().map(|(_, m)| *m)),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TickOutcome {
    Continue { remaining: Money },
    Settled(Settlement),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StartOutcome {
    Started,
    Aborted(Settlement),
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: SessionId,
    pub terms: SessionTerms,
    state: SessionState,
    remaining: Money,
    paid_compute: Money,
    paid_storage: Money,
    ticks: u64,
    consumer_key: Option<PublicKey>,
    dht: Option<SignedDht>,
    settlement: Option<Settlement>,
}

impl Session {
    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn remaining(&self) -> Money {
        self.remaining
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn settlement(&self) -> Option<&Settlement> {
        self.settlement.as_ref()
    }

    pub fn signed_dht(&self) -> Option<&SignedDht> {
        self.dht.as_ref()
    }

    /// Deposit equals everything paid out plus what is still held.
    pub fn is_conserved(&self) -> bool {
        Money::sum([self.remaining, self.paid_compute, self.paid_storage])
            .is_ok_and(|m| m == self.terms.deposit)
    }
}

/// Tunables that change what sessions cost in gas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EscrowConfig {
    /// Sessions served by one contract deployment.
    pub setup_share: u32,
    /// Ticks between provider heartbeat messages.
    pub comm_interval: u32,
}

impl Default for EscrowConfig {
    fn default() -> Self {
        EscrowConfig {
            setup_share: 1,
            comm_interval: 1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Escrow {
    config: EscrowConfig,
    next_id: SessionId,
    sessions: BTreeMap<SessionId, Session>,
    open_pairs: BTreeSet<(UserId, UserId)>,
}

impl Escrow {
    pub fn new(config: EscrowConfig) -> Self {
        Escrow {
            config: EscrowConfig {
                setup_share: config.setup_share.max(1),
                comm_interval: config.comm_interval.max(1),
            },
            ..Default::default()
        }
    }

    pub fn session(&self, id: SessionId) -> Option<&Session> {
        self.sessions.get(&id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    pub fn open_session(
        &mut self,
        terms: SessionTerms,
        env: &mut Env,
    ) -> Result<SessionId, EscrowError> {
        if terms.deposit.is_zero() {
            return Err(EscrowError::ZeroDeposit);
        }
        terms.tick_debit()?;
        let pair = (terms.consumer, terms.compute_provider);
        if self.open_pairs.contains(&pair) {
            return Err(EscrowError::AlreadyOpen {
                consumer: pair.0,
                provider: pair.1,
            });
        }
        let id = self.next_id;
        self.next_id += 1;
        if id.is_multiple_of(self.config.setup_share as u64) {
            env.gas
                .meter_user(terms.consumer, Primitive::ContractSetup, 1);
        }
        env.gas
            .meter_user(terms.consumer, Primitive::StorageWrite, 1);
        env.ledger.record(&Event::Deposit {
            session: id,
            consumer: terms.consumer,
            amount: terms.deposit,
        });
        self.open_pairs.insert(pair);
        self.sessions.insert(
            id,
            Session {
                id,
                remaining: terms.deposit,
                terms,
                state: SessionState::Provisioned,
                paid_compute: Money::ZERO,
                paid_storage: Money::ZERO,
                ticks: 0,
                consumer_key: None,
                dht: None,
                settlement: None,
            },
        );
        Ok(id)
    }

    fn expect(
        &mut self,
        id: SessionId,
        expected: SessionState,
    ) -> Result<&mut Session, EscrowError> {
        let s = self
            .sessions
            .get_mut(&id)
            .ok_or(EscrowError::UnknownSession(id))?;
        if s.state != expected {
            return Err(EscrowError::WrongState {
                session: id,
                expected,
                found: s.state,
            });
        }
        Ok(s)
    }

    /// The consumer publishes the public key that signs its chunks and DHT.
    pub fn record_key_exchange(
        &mut self,
        id: SessionId,
        consumer_key: PublicKey,
        env: &mut Env,
    ) -> Result<(), EscrowError> {
        let s = self.expect(id, SessionState::Provisioned)?;
        env.gas
            .meter_user(s.terms.consumer, Primitive::MessageEmit, 1);
        env.gas
            .meter_user(s.terms.compute_provider, Primitive::MessageEmit, 1);
        s.consumer_key = Some(consumer_key);
        s.state = SessionState::KeysExchanged;
        Ok(())
    }

    /// Stores the signed DHT. Its signature is not checked here; that is
    /// the provider's job in [`Escrow::verify_and_start`].
    pub fn record_distribution(
        &mut self,
        id: SessionId,
        dht: SignedDht,
        env: &mut Env,
    ) -> Result<(), EscrowError> {
        let s = self.expect(id, SessionState::KeysExchanged)?;
        env.gas
            .meter_user(s.terms.consumer, Primitive::StorageWrite, 1);
        s.dht = Some(dht);
        s.state = SessionState::Distributed;
        Ok(())
    }

    /// The provider checks the DHT signature. On success computing starts;
    /// on failure (or malformed bytes) the session aborts with a full refund.
    pub fn verify_and_start(
        &mut self,
        id: SessionId,
        scheme: &dyn CryptoScheme,
        env: &mut Env,
    ) -> Result<StartOutcome, EscrowError> {
        let s = self.expect(id, SessionState::Distributed)?;
        env.gas
            .meter_user(s.terms.compute_provider, Primitive::SignatureVerify, 1);
        let ok = match (&s.dht, &s.consumer_key) {
            (Some(dht), Some(key)) => verify_dht(scheme, dht, key).unwrap_or(false),
            _ => false,
        };
        if !ok {
            return Ok(StartOutcome::Aborted(self.finish_abort(id, env)));
        }
        let s = self.sessions.get_mut(&id).expect("checked above");
        s.state = SessionState::DhtVerified;
        s.state = SessionState::Computing;
        Ok(StartOutcome::Started)
    }

    /// Abandons a session that has not started computing. Full refund.
    pub fn abort(&mut self, id: SessionId, env: &mut Env) -> Result<Settlement, EscrowError> {
        let s = self
            .sessions
            .get(&id)
            .ok_or(EscrowError::UnknownSession(id))?;
        if s.state >= SessionState::Computing {
            return Err(EscrowError::WrongState {
                session: id,
                expected: SessionState::Distributed,
                found: s.state,
            });
        }
        Ok(self.finish_abort(id, env))
    }

    fn finish_abort(&mut self, id: SessionId, env: &mut Env) -> Settlement {
        let s = self.sessions.get_mut(&id).expect("session exists");
        let settlement = Settlement {
            session: id,
            compute: Money::ZERO,
            storage: Vec::new(),
            refund: s.remaining,
            ticks: 0,
            aborted: true,
        };
        env.gas
            .meter_user(s.terms.consumer, Primitive::StorageWrite, 1);
        env.ledger.record(&Event::Aborted {
            session: id,
            refund: s.remaining,
        });
        s.state = SessionState::Aborted;
        s.settlement = Some(settlement.clone());
        self.open_pairs
            .remove(&(s.terms.consumer, s.terms.compute_provider));
        settlement
    }

    /// One tick of computing. Pays the providers if the deposit covers a
    /// full tick, and settles when it does not or will not next tick.
    pub fn tick(&mut self, id: SessionId, env: &mut Env) -> Result<TickOutcome, EscrowError> {
        let comm = self.config.comm_interval as u64;
        let s = self.expect(id, SessionState::Computing)?;
        let debit = s.terms.tick_debit()?;
        if s.remaining < debit {
            return Ok(TickOutcome::Settled(self.settle(id, env)));
        }
        s.remaining = s.remaining.checked_sub(debit)?;
        s.paid_compute = s.paid_compute.checked_add(s.terms.compute_rate)?;
        let storage_total = debit.checked_sub(s.terms.compute_rate)?;
        s.paid_storage = s.paid_storage.checked_add(storage_total)?;
        s.ticks += 1;
        // Balances live in memory until settlement; a tick is one transfer.
        env.gas
            .meter_user(s.terms.consumer, Primitive::MessageEmit, 1);
        if s.ticks % comm == 0 {
            env.gas
                .meter_user(s.terms.compute_provider, Primitive::MessageEmit, 1);
        }
        env.ledger.record(&Event::TickPayment {
            session: id,
            tick: s.ticks,
            compute_amt: s.terms.compute_rate,
            storage_amts: vec![s.terms.storage_rate; s.terms.storage_providers.len()],
        });
        if s.remaining < debit {
            return Ok(TickOutcome::Settled(self.settle(id, env)));
        }
        Ok(TickOutcome::Continue {
            remaining: s.remaining,
        })
    }

    /// Consumer-initiated end of a computing session.
    pub fn checkout(&mut self, id: SessionId, env: &mut Env) -> Result<Settlement, EscrowError> {
        self.expect(id, SessionState::Computing)?;
        Ok(self.settle(id, env))
    }

    fn settle(&mut self, id: SessionId, env: &mut Env) -> Settlement {
        let s = self.sessions.get_mut(&id).expect("session exists");
        let per_storage = s
            .terms
            .storage_rate
            .checked_mul(s.ticks)
            .expect("bounded by deposit");
        let settlement = Settlement {
            session: id,
            compute: s.paid_compute,
            storage: s
                .terms
                .storage_providers
                .iter()
                .map(|p| (*p, per_storage))
                .collect(),
            refund: s.remaining,
            ticks: s.ticks,
            aborted: false,
        };
        env.gas
            .meter_user(s.terms.consumer, Primitive::StorageWrite, 1);
        env.gas
            .meter_user(s.terms.consumer, Primitive::MessageEmit, 1);
        env.ledger.record(&Event::Settled {
            session: id,
            compute: settlement.compute,
            storage: settlement.storage.clone(),
            refund: settlement.refund,
        });
        s.state = SessionState::Settled;
        s.settlement = Some(settlement.clone());
        self.open_pairs
            .remove(&(s.terms.consumer, s.terms.compute_provider));
        settlement
    }
}
