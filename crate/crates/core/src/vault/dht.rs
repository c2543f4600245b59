//! Task-to-replica placement table and its signed canonical form.
//!
//! Canonical bytes, sorted ascending by task id:
//!
//! ```text
//! repeat { task_id u32 BE | addr_count u8 | addr_count × node id u64 BE }
//! ```

use std::collections::{BTreeMap, BTreeSet};

use super::crypto::{CryptoScheme, KeyPair, PublicKey};
use super::{PeerId, VaultError};
use crate::domain::UserId;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dht {
    entries: BTreeMap<u32, Vec<PeerId>>,
}

impl Dht {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the replica addresses of one task. Addresses must be
    /// distinct and number between 1 and 255.
    pub fn insert(&mut self, task_id: u32, addrs: Vec<PeerId>) -> Result<(), VaultError> {
        if addrs.is_empty() || addrs.len() > u8::MAX as usize {
            return Err(VaultError::MalformedDht(format!(
                "task {task_id} has {} addresses",
                addrs.len()
            )));
        }
        let distinct: BTreeSet<_> = addrs.iter().collect();
        if distinct.len() != addrs.len() {
            return Err(VaultError::MalformedDht(format!(
                "task {task_id} repeats an address"
            )));
        }
        self.entries.insert(task_id, addrs);
        Ok(())
    }

    pub fn get(&self, task_id: u32) -> Option<&[PeerId]> {
        self.entries.get(&task_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, &[PeerId])> {
        self.entries.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// True iff the key set is exactly `0..n`.
    pub fn is_complete(&self) -> bool {
        self.entries
            .keys()
            .copied()
            .eq(0..self.entries.len() as u32)
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.entries.len() * 21);
        for (task_id, addrs) in &self.entries {
            out.extend_from_slice(&task_id.to_be_bytes());
            out.push(addrs.len() as u8);
            for a in addrs {
                out.extend_from_slice(&a.0.to_be_bytes());
            }
        }
        out
    }

    /// Strict parse: ids strictly ascending, counts in range, no trailing bytes.
    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Dht, VaultError> {
        let bad = |m: &str| VaultError::MalformedDht(m.to_string());
        let mut dht = Dht::new();
        let mut rest = bytes;
        let mut last: Option<u32> = None;
        while !rest.is_empty() {
            if rest.len() < 5 {
                return Err(bad("truncated entry header"));
            }
            let task_id = u32::from_be_bytes(rest[..4].try_into().unwrap());
            let count = rest[4] as usize;
            rest = &rest[5..];
            if last.is_some_and(|l| task_id <= l) {
                return Err(bad("task ids not strictly ascending"));
            }
            last = Some(task_id);
            if rest.len() < count * 8 {
                return Err(bad("truncated address list"));
            }
            let addrs = rest[..count * 8]
                .chunks_exact(8)
                .map(|c| UserId(u64::from_be_bytes(c.try_into().unwrap())))
                .collect();
            rest = &rest[count * 8..];
            dht.insert(task_id, addrs)?;
        }
        Ok(dht)
    }
}

/// Canonical DHT bytes plus the consumer's signature over them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedDht {
    pub bytes: Vec<u8>,
    pub signature: Vec<u8>,
}

impl SignedDht {
    pub fn dht(&self) -> Result<Dht, VaultError> {
        Dht::from_canonical_bytes(&self.bytes)
    }
}

pub fn sign_dht(
    scheme: &dyn CryptoScheme,
    dht: &Dht,
    consumer: &KeyPair,
) -> Result<SignedDht, VaultError> {
    let bytes = dht.canonical_bytes();
    let signature = scheme.sign(consumer, &bytes)?;
    Ok(SignedDht { bytes, signature })
}

/// Errors on malformed bytes; otherwise reports whether the signature
/// verifies under `public`.
pub fn verify_dht(
    scheme: &dyn CryptoScheme,
    signed: &SignedDht,
    public: &PublicKey,
) -> Result<bool, VaultError> {
    signed.dht()?;
    Ok(scheme.verify(public, &signed.bytes, &signed.signature))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vault::crypto::{KeySeed, ToyScheme};

    fn ids(v: &[u64]) -> Vec<PeerId> {
        v.iter().map(|&i| UserId(i)).collect()
    }

    #[test]
    fn canonical_bytes_layout() {
        let mut d = Dht::new();
        d.insert(1, ids(&[0x0102])).unwrap();
        let b = d.canonical_bytes();
        assert_eq!(b, vec![0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 1, 2]);
        assert_eq!(Dht::from_canonical_bytes(&b).unwrap(), d);
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let mut a = Dht::new();
        a.insert(0, ids(&[1, 2])).unwrap();
        a.insert(1, ids(&[2, 3])).unwrap();
        let mut b = Dht::new();
        b.insert(1, ids(&[2, 3])).unwrap();
        b.insert(0, ids(&[1, 2])).unwrap();
        assert_eq!(a.canonical_bytes(), b.canonical_bytes());

        let s = ToyScheme;
        let k = s.keygen(KeySeed::Deterministic(3)).unwrap();
        let signed = sign_dht(&s, &a, &k).unwrap();
        let resigned = SignedDht {
            bytes: b.canonical_bytes(),
            signature: signed.signature.clone(),
        };
        assert!(verify_dht(&s, &resigned, &k.public).unwrap());
    }

    #[test]
    fn wrong_key_fails_and_malformed_errors() {
        let s = ToyScheme;
        let consumer = s.keygen(KeySeed::Deterministic(1)).unwrap();
        let provider = s.keygen(KeySeed::Deterministic(2)).unwrap();
        let mut d = Dht::new();
        d.insert(0, ids(&[5])).unwrap();
        let signed = sign_dht(&s, &d, &consumer).unwrap();
        assert!(verify_dht(&s, &signed, &consumer.public).unwrap());
        assert!(!verify_dht(&s, &signed, &provider.public).unwrap());
        let truncated = SignedDht {
            bytes: signed.bytes[..7].to_vec(),
            signature: signed.signature.clone(),
        };
        assert!(matches!(
            verify_dht(&s, &truncated, &consumer.public),
            Err(VaultError::MalformedDht(_))
        ));
    }

    #[test]
    fn rejects_bad_entries() {
        let mut d = Dht::new();
        assert!(d.insert(0, vec![]).is_err());
        assert!(d.insert(0, ids(&[1, 1])).is_err());
        let mut unsorted = Vec::new();
        for id in [2u32, 1] {
            unsorted.extend_from_slice(&id.to_be_bytes());
            unsorted.push(1);
            unsorted.extend_from_slice(&7u64.to_be_bytes());
        }
        assert!(Dht::from_canonical_bytes(&unsorted).is_err());
    }
}
