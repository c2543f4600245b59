//! Single-writer hash-chained transaction log.
//!
//! Each transaction links to its predecessor:
//!
//! ```text
//! this_hash = SHA-256(index_be64 || kind_u8 || payload || prev_hash)
//! ```
//!
//! with `prev_hash` of the first transaction all zeros. There is no
//! operation that rewrites or removes a committed transaction; tampering can
//! only happen on an exported copy, and [`Ledger::verify_chain`] detects it.
//!
//! Export format (all integers big-endian):
//!
//! ```text
//! magic "EMLEDGR1" | count u64 | count × (index u64 | kind u8 | len u32 | payload | prev 32 | this 32)
//! ```

use std::path::Path;

use thiserror::Error;

use crate::domain::{Money, Region, Role, UserId};
use crate::hash::{sha256_parts, Hash256, HASH_LEN};

const MAGIC: &[u8; 8] = b"EMLEDGR1";

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("no transaction at index {0}")]
    NoSuchIndex(u64),
    #[error("transaction {index} is {found:?}, expected {expected:?}")]
    WrongKind {
        index: u64,
        found: TxKind,
        expected: TxKind,
    },
    #[error("malformed chain export: {0}")]
    Malformed(String),
    #[error("malformed {kind:?} payload")]
    BadPayload { kind: TxKind },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TxKind {
    Registration,
    Engaged,
    Queued,
    Deposit,
    TickPayment,
    Settled,
    Aborted,
    ResultDigest,
    Deregistration,
}

impl TxKind {
    pub const ALL: [TxKind; 9] = [
        TxKind::Registration,
        TxKind::Engaged,
        TxKind::Queued,
        TxKind::Deposit,
        TxKind::TickPayment,
        TxKind::Settled,
        TxKind::Aborted,
        TxKind::ResultDigest,
        TxKind::Deregistration,
    ];

    pub fn code(self) -> u8 {
        match self {
            TxKind::Registration => 1,
            TxKind::Engaged => 2,
            TxKind::Queued => 3,
            TxKind::Deposit => 4,
            TxKind::TickPayment => 5,
            TxKind::Settled => 6,
            TxKind::Aborted => 7,
            TxKind::ResultDigest => 8,
            TxKind::Deregistration => 9,
        }
    }

    pub fn from_code(code: u8) -> Option<TxKind> {
        TxKind::ALL.into_iter().find(|k| k.code() == code)
    }
}

/// Typed view of a transaction payload. Encodings are fixed per kind:
/// fields in declaration order, integers big-endian, lists prefixed by a
/// u16 count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Registration {
        user_id: UserId,
        role: Role,
        region: Region,
        price: Money,
    },
    Engaged {
        consumer: UserId,
        compute_provider: UserId,
        storage_providers: Vec<UserId>,
        tick: u64,
    },
    Queued {
        consumer: UserId,
        tick: u64,
    },
    Deposit {
        session: u64,
        consumer: UserId,
        amount: Money,
    },
    TickPayment {
        session: u64,
        tick: u64,
        compute_amt: Money,
        storage_amts: Vec<Money>,
    },
    Settled {
        session: u64,
        compute: Money,
        storage: Vec<(UserId, Money)>,
        refund: Money,
    },
    Aborted {
        session: u64,
        refund: Money,
    },
    ResultDigest {
        digest: Hash256,
    },
    Deregistration {
        user_id: UserId,
    },
}

impl Event {
    pub fn kind(&self) -> TxKind {
        match self {
            Event::Registration { .. } => TxKind::Registration,
            Event::Engaged { .. } => TxKind::Engaged,
            Event::Queued { .. } => TxKind::Queued,
            Event::Deposit { .. } => TxKind::Deposit,
            Event::TickPayment { .. } => TxKind::TickPayment,
            Event::Settled { .. } => TxKind::Settled,
            Event::Aborted { .. } => TxKind::Aborted,
            Event::ResultDigest { .. } => TxKind::ResultDigest,
            Event::Deregistration { .. } => TxKind::Deregistration,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Vec::with_capacity(32);
        match self {
            Event::Registration {
                user_id,
                role,
                region,
                price,
            } => {
                put_u64(&mut w, user_id.0);
                w.push(role.code());
                w.extend_from_slice(&region.0.to_be_bytes());
                put_u64(&mut w, price.micros());
            }
            Event::Engaged {
                consumer,
                compute_provider,
                storage_providers,
                tick,
            } => {
                put_u64(&mut w, consumer.0);
                put_u64(&mut w, compute_provider.0);
                put_u16(&mut w, storage_providers.len());
                for s in storage_providers {
                    put_u64(&mut w, s.0);
                }
                put_u64(&mut w, *tick);
            }
            Event::Queued { consumer, tick } => {
                put_u64(&mut w, consumer.0);
                put_u64(&mut w, *tick);
            }
            Event::Deposit {
                session,
                consumer,
                amount,
            } => {
                put_u64(&mut w, *session);
                put_u64(&mut w, consumer.0);
                put_u64(&mut w, amount.micros());
            }
            Event::TickPayment {
                session,
                tick,
                compute_amt,
                storage_amts,
            } => {
                put_u64(&mut w, *session);
                put_u64(&mut w, *tick);
                put_u64(&mut w, compute_amt.micros());
                put_u16(&mut w, storage_amts.len());
                for a in storage_amts {
                    put_u64(&mut w, a.micros());
                }
            }
            Event::Settled {
                session,
                compute,
                storage,
                refund,
            } => {
                put_u64(&mut w, *session);
                put_u64(&mut w, compute.micros());
                put_u16(&mut w, storage.len());
                for (id, amt) in storage {
                    put_u64(&mut w, id.0);
                    put_u64(&mut w, amt.micros());
                }
                put_u64(&mut w, refund.micros());
            }
            Event::Aborted { session, refund } => {
                put_u64(&mut w, *session);
                put_u64(&mut w, refund.micros());
            }
            Event::ResultDigest { digest } => w.extend_from_slice(digest.as_bytes()),
            Event::Deregistration { user_id } => put_u64(&mut w, user_id.0),
        }
        w
    }

    pub fn decode(kind: TxKind, payload: &[u8]) -> Result<Event, LedgerError> {
        let mut r = Reader::new(payload);
        let bad = || LedgerError::BadPayload { kind };
        let ev = (|| -> Option<Event> {
            let ev = match kind {
                TxKind::Registration => Event::Registration {
                    user_id: UserId(r.u64()?),
                    role: Role::from_code(r.u8()?)?,
                    region: Region(r.u32()?),
                    price: Money::from_micros(r.u64()?),
                },
                TxKind::Engaged => {
                    let consumer = UserId(r.u64()?);
                    let compute_provider = UserId(r.u64()?);
                    let n = r.u16()?;
                    let storage_providers =
                        (0..n).map(|_| r.u64().map(UserId)).collect::<Option<_>>()?;
                    Event::Engaged {
                        consumer,
                        compute_provider,
                        storage_providers,
                        tick: r.u64()?,
                    }
                }
                TxKind::Queued => Event::Queued {
                    consumer: UserId(r.u64()?),
                    tick: r.u64()?,
                },
                TxKind::Deposit => Event::Deposit {
                    session: r.u64()?,
                    consumer: UserId(r.u64()?),
                    amount: Money::from_micros(r.u64()?),
                },
                TxKind::TickPayment => {
                    let session = r.u64()?;
                    let tick = r.u64()?;
                    let compute_amt = Money::from_micros(r.u64()?);
                    let n = r.u16()?;
                    let storage_amts = (0..n)
                        .map(|_| r.u64().map(Money::from_micros))
                        .collect::<Option<_>>()?;
                    Event::TickPayment {
                        session,
                        tick,
                        compute_amt,
                        storage_amts,
                    }
                }
                TxKind::Settled => {
                    let session = r.u64()?;
                    let compute = Money::from_micros(r.u64()?);
                    let n = r.u16()?;
                    let storage = (0..n)
                        .map(|_| Some((UserId(r.u64()?), Money::from_micros(r.u64()?))))
                        .collect::<Option<_>>()?;
                    Event::Settled {
                        session,
                        compute,
                        storage,
                        refund: Money::from_micros(r.u64()?),
                    }
                }
                TxKind::Aborted => Event::Aborted {
                    session: r.u64()?,
                    refund: Money::from_micros(r.u64()?),
                },
                TxKind::ResultDigest => Event::ResultDigest {
                    digest: Hash256::from_slice(r.take(HASH_LEN)?)?,
                },
                TxKind::Deregistration => Event::Deregistration {
                    user_id: UserId(r.u64()?),
                },
            };
            Some(ev)
        })()
        .ok_or_else(bad)?;
        if !r.is_done() {
            return Err(bad());
        }
        Ok(ev)
    }
}

fn put_u64(w: &mut Vec<u8>, v: u64) {
    w.extend_from_slice(&v.to_be_bytes());
}

fn put_u16(w: &mut Vec<u8>, n: usize) {
    let n = u16::try_from(n).expect("list longer than u16::MAX");
    w.extend_from_slice(&n.to_be_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.buf.len() < n {
            return None;
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Some(head)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2)
            .map(|b| u16::from_be_bytes(b.try_into().unwrap()))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8)
            .map(|b| u64::from_be_bytes(b.try_into().unwrap()))
    }

    fn is_done(&self) -> bool {
        self.buf.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerTx {
    pub index: u64,
    pub kind: TxKind,
    pub payload: Vec<u8>,
    pub prev_hash: Hash256,
    pub this_hash: Hash256,
}

impl LedgerTx {
    pub fn compute_hash(index: u64, kind: TxKind, payload: &[u8], prev: &Hash256) -> Hash256 {
        sha256_parts(&[
            &index.to_be_bytes(),
            &[kind.code()],
            payload,
            prev.as_bytes(),
        ])
    }

    pub fn event(&self) -> Result<Event, LedgerError> {
        Event::decode(self.kind, &self.payload)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Ledger {
    txs: Vec<LedgerTx>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, kind: TxKind, payload: Vec<u8>) -> u64 {
        let index = self.txs.len() as u64;
        let prev_hash = self.head();
        let this_hash = LedgerTx::compute_hash(index, kind, &payload, &prev_hash);
        self.txs.push(LedgerTx {
            index,
            kind,
            payload,
            prev_hash,
            this_hash,
        });
        index
    }

    pub fn record(&mut self, event: &Event) -> u64 {
        self.append(event.kind(), event.encode())
    }

    /// Hash of the tail, or zeros for an empty chain.
    pub fn head(&self) -> Hash256 {
        self.txs
            .last()
            .map(|t| t.this_hash)
            .unwrap_or(Hash256::ZERO)
    }

    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    pub fn get(&self, index: u64) -> Option<&LedgerTx> {
        self.txs.get(usize::try_from(index).ok()?)
    }

    pub fn transactions(&self) -> &[LedgerTx] {
        &self.txs
    }

    pub fn count(&self, kind: TxKind) -> usize {
        self.txs.iter().filter(|t| t.kind == kind).count()
    }

    /// True iff every transaction's index, back-link and hash recompute.
    /// A truncated chain still verifies; compare [`Ledger::len`] against an
    /// expected count to detect that.
    pub fn verify_chain(&self) -> bool {
        let mut prev = Hash256::ZERO;
        for (i, tx) in self.txs.iter().enumerate() {
            if tx.index != i as u64 || tx.prev_hash != prev {
                return false;
            }
            if LedgerTx::compute_hash(tx.index, tx.kind, &tx.payload, &tx.prev_hash) != tx.this_hash
            {
                return false;
            }
            prev = tx.this_hash;
        }
        true
    }

    /// Compares the digest of `result` with the proof stored at `index`.
    pub fn verify_result(&self, result: &[u8], index: u64) -> Result<bool, LedgerError> {
        let tx = self.get(index).ok_or(LedgerError::NoSuchIndex(index))?;
        if tx.kind != TxKind::ResultDigest {
            return Err(LedgerError::WrongKind {
                index,
                found: tx.kind,
                expected: TxKind::ResultDigest,
            });
        }
        Ok(tx.payload.as_slice() == crate::vault::result_digest(result).as_bytes())
    }

    pub fn export(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.txs.len() * 128);
        out.extend_from_slice(MAGIC);
        put_u64(&mut out, self.txs.len() as u64);
        for tx in &self.txs {
            put_u64(&mut out, tx.index);
            out.push(tx.kind.code());
            out.extend_from_slice(&(tx.payload.len() as u32).to_be_bytes());
            out.extend_from_slice(&tx.payload);
            out.extend_from_slice(tx.prev_hash.as_bytes());
            out.extend_from_slice(tx.this_hash.as_bytes());
        }
        out
    }

    /// Parses an export without verifying links; call
    /// [`Ledger::verify_chain`] on the result.
    pub fn import(bytes: &[u8]) -> Result<Ledger, LedgerError> {
        let malformed = |m: &str| LedgerError::Malformed(m.to_string());
        let mut r = Reader::new(bytes);
        if r.take(MAGIC.len()) != Some(MAGIC.as_slice()) {
            return Err(malformed("bad magic"));
        }
        let count = r.u64().ok_or_else(|| malformed("missing count"))?;
        let mut txs = Vec::new();
        for _ in 0..count {
            let index = r.u64().ok_or_else(|| malformed("truncated index"))?;
            let code = r.u8().ok_or_else(|| malformed("truncated kind"))?;
            let kind = TxKind::from_code(code).ok_or_else(|| malformed("unknown kind"))?;
            let len = r.u32().ok_or_else(|| malformed("truncated length"))? as usize;
            let payload = r.take(len).ok_or_else(|| malformed("truncated payload"))?;
            let prev = r
                .take(HASH_LEN)
                .ok_or_else(|| malformed("truncated prev"))?;
            let this = r
                .take(HASH_LEN)
                .ok_or_else(|| malformed("truncated hash"))?;
            txs.push(LedgerTx {
                index,
                kind,
                payload: payload.to_vec(),
                prev_hash: Hash256::from_slice(prev).unwrap(),
                this_hash: Hash256::from_slice(this).unwrap(),
            });
        }
        if !r.is_done() {
            return Err(malformed("trailing bytes"));
        }
        Ok(Ledger { txs })
    }

    pub fn write_to(&self, path: &Path) -> Result<(), LedgerError> {
        std::fs::write(path, self.export())?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Ledger, LedgerError> {
        Ledger::import(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vault::result_digest;

    fn sample(n: u64) -> Ledger {
        let mut l = Ledger::new();
        for i in 0..n {
            l.record(&Event::Queued {
                consumer: UserId(i),
                tick: i * 3,
            });
        }
        l
    }

    #[test]
    fn first_append_links_to_zero() {
        let mut l = Ledger::new();
        let idx = l.append(TxKind::Queued, vec![1, 2, 3]);
        assert_eq!(idx, 0);
        assert_eq!(l.get(0).unwrap().prev_hash, Hash256::ZERO);
        assert_eq!(l.get(0).unwrap().payload, vec![1, 2, 3]);
    }

    #[test]
    fn hundred_appends_form_a_chain() {
        let l = sample(100);
        let txs = l.transactions();
        for (i, tx) in txs.iter().enumerate() {
            assert_eq!(tx.index, i as u64);
            if i > 0 {
                assert_eq!(tx.prev_hash, txs[i - 1].this_hash);
            }
        }
        assert!(l.verify_chain());
    }

    #[test]
    fn payload_mutation_breaks_chain() {
        let l = sample(10);
        for i in 0..l.len() {
            for b in 0..l.txs[i].payload.len() {
                let mut t = l.clone();
                t.txs[i].payload[b] ^= 0x01;
                assert!(!t.verify_chain(), "tx {i} byte {b}");
            }
        }
    }

    #[test]
    fn truncation_still_verifies() {
        let mut l = sample(10);
        l.txs.truncate(7);
        assert!(l.verify_chain());
        assert_eq!(l.len(), 7);
    }

    #[test]
    fn result_proofs() {
        let mut l = sample(2);
        let result = b"computed output".to_vec();
        let idx = l.record(&Event::ResultDigest {
            digest: result_digest(&result),
        });
        assert_eq!(l.get(idx).unwrap().payload.len(), HASH_LEN);
        assert!(l.verify_result(&result, idx).unwrap());
        let mut tampered = result.clone();
        tampered[0] ^= 0x80;
        assert!(!l.verify_result(&tampered, idx).unwrap());
        assert!(matches!(
            l.verify_result(&result, 0),
            Err(LedgerError::WrongKind { .. })
        ));
        assert!(matches!(
            l.verify_result(&result, 99),
            Err(LedgerError::NoSuchIndex(99))
        ));
    }

    #[test]
    fn export_import_preserves_chain() {
        let l = sample(5);
        let back = Ledger::import(&l.export()).unwrap();
        assert_eq!(back.transactions(), l.transactions());
        assert!(Ledger::import(&l.export()[..20]).is_err());
    }

    #[test]
    fn events_decode_to_themselves() {
        let events = vec![
            Event::Registration {
                user_id: UserId(7),
                role: Role::StorageProvider,
                region: Region(3),
                price: Money::from_micros(5_500_000),
            },
            Event::Engaged {
                consumer: UserId(1),
                compute_provider: UserId(2),
                storage_providers: vec![UserId(3), UserId(4)],
                tick: 9,
            },
            Event::TickPayment {
                session: 1,
                tick: 2,
                compute_amt: Money::from_micros(3),
                storage_amts: vec![Money::from_micros(1), Money::from_micros(1)],
            },
            Event::Settled {
                session: 1,
                compute: Money::from_micros(12),
                storage: vec![(UserId(3), Money::from_micros(4))],
                refund: Money::from_micros(30),
            },
            Event::Aborted {
                session: 2,
                refund: Money::from_micros(50),
            },
            Event::Deregistration { user_id: UserId(5) },
        ];
        for e in events {
            assert_eq!(Event::decode(e.kind(), &e.encode()).unwrap(), e);
        }
        assert!(Event::decode(TxKind::Queued, &[0; 15]).is_err());
        assert!(Event::decode(TxKind::Queued, &[0; 17]).is_err());
    }
}
