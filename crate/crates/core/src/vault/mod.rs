//! Confidential data handling: chunking, encrypt-and-sign, replica placement
//! across storage nodes and trusted retrieval.
//!
//! Each chunk is sealed with ChaCha20-Poly1305 under a fresh per-chunk key.
//! That key is wrapped to every trusted peer's public key, and the consumer
//! signs `task_id BE || ciphertext`. Storage nodes receive only ciphertext and
//! signature; the wrapped keys stay with the consumer's key directory.

pub mod crypto;
pub mod dht;

use std::collections::{BTreeMap, BTreeSet};

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::RngCore;
use thiserror::Error;

use crate::domain::UserId;
use crate::hash::{sha256, Hash256};

pub use crypto::{CryptoScheme, KeyPair, KeySeed, PublicKey, RsaScheme, ToyScheme};
pub use dht::{sign_dht, verify_dht, Dht, SignedDht};

pub type PeerId = UserId;
pub type DatasetId = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VaultError {
    #[error("no data to chunk")]
    EmptyData,
    #[error("chunk size must be positive")]
    ZeroChunkSize,
    #[error("access policy trusts nobody")]
    EmptyPolicy,
    #[error("replication {r} not in 1..={nodes}")]
    ReplicationOutOfRange { r: usize, nodes: usize },
    #[error("storage node {0} listed twice")]
    DuplicateNode(PeerId),
    #[error("storage node {0} is a trusted peer and may not hold ciphertext")]
    StorageNodeTrusted(PeerId),
    #[error("malformed DHT: {0}")]
    MalformedDht(String),
    #[error("crypto failure: {0}")]
    Crypto(String),
    #[error("signature check failed for chunk {task_id}")]
    BadSignature { task_id: u32 },
    #[error("chunk set is not contiguous from 0: missing {0}")]
    MissingChunk(u32),
    #[error("too many chunks")]
    TooManyChunks,
}

/// Retrieval failures. `AccessDenied` carries nothing so an untrusted
/// requester cannot tell a missing chunk from a refused one.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FetchError {
    #[error("access denied")]
    AccessDenied,
    #[error("no live replica holds chunk {task_id}")]
    Unavailable { task_id: u32 },
    #[error(transparent)]
    Vault(#[from] VaultError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlainChunk {
    pub task_id: u32,
    pub data: Vec<u8>,
}

/// Splits `data` into `ceil(len / chunk_size)` chunks with ids `0..n`.
pub fn chunk_data(data: &[u8], chunk_size: usize) -> Result<Vec<PlainChunk>, VaultError> {
    if data.is_empty() {
        return Err(VaultError::EmptyData);
    }
    if chunk_size == 0 {
        return Err(VaultError::ZeroChunkSize);
    }
    if data.len().div_ceil(chunk_size) > u32::MAX as usize {
        return Err(VaultError::TooManyChunks);
    }
    Ok(data
        .chunks(chunk_size)
        .enumerate()
        .map(|(i, c)| PlainChunk {
            task_id: i as u32,
            data: c.to_vec(),
        })
        .collect())
}

/// Concatenates chunks by id. The ids must be exactly `0..n`.
pub fn reassemble(chunks: impl IntoIterator<Item = PlainChunk>) -> Result<Vec<u8>, VaultError> {
    let mut sorted: Vec<_> = chunks.into_iter().collect();
    sorted.sort_by_key(|c| c.task_id);
    let mut out = Vec::new();
    for (i, c) in sorted.into_iter().enumerate() {
        if c.task_id != i as u32 {
            return Err(VaultError::MissingChunk(i as u32));
        }
        out.extend_from_slice(&c.data);
    }
    Ok(out)
}

/// Which peers may read a dataset, with the keys chunk keys are wrapped to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessPolicy {
    pub dataset: DatasetId,
    trusted: BTreeMap<PeerId, PublicKey>,
}

impl AccessPolicy {
    pub fn new(dataset: DatasetId) -> Self {
        AccessPolicy {
            dataset,
            trusted: BTreeMap::new(),
        }
    }

    pub fn trust(&mut self, peer: PeerId, key: PublicKey) -> &mut Self {
        self.trusted.insert(peer, key);
        self
    }

    pub fn is_trusted(&self, peer: PeerId) -> bool {
        self.trusted.contains_key(&peer)
    }

    pub fn trusted_peers(&self) -> impl Iterator<Item = PeerId> + '_ {
        self.trusted.keys().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskChunk {
    pub task_id: u32,
    pub payload: Vec<u8>,
    pub wrapped_keys: BTreeMap<PeerId, Vec<u8>>,
    pub signature: Vec<u8>,
}

/// The bytes the consumer signs for one chunk.
pub fn signed_message(task_id: u32, payload: &[u8]) -> Vec<u8> {
    let mut m = Vec::with_capacity(4 + payload.len());
    m.extend_from_slice(&task_id.to_be_bytes());
    m.extend_from_slice(payload);
    m
}

fn nonce_for(task_id: u32) -> [u8; 12] {
    let mut n = [0u8; 12];
    n[8..].copy_from_slice(&task_id.to_be_bytes());
    n
}

pub fn encrypt_and_sign(
    scheme: &dyn CryptoScheme,
    chunks: &[PlainChunk],
    consumer: &KeyPair,
    policy: &AccessPolicy,
    rng: &mut impl RngCore,
) -> Result<Vec<TaskChunk>, VaultError> {
    if policy.trusted.is_empty() {
        return Err(VaultError::EmptyPolicy);
    }
    chunks
        .iter()
        .map(|c| {
            let mut key = [0u8; 32];
            rng.fill_bytes(&mut key);
            let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
            let aad = c.task_id.to_be_bytes();
            let payload = cipher
                .encrypt(
                    Nonce::from_slice(&nonce_for(c.task_id)),
                    Payload {
                        msg: &c.data,
                        aad: &aad,
                    },
                )
                .map_err(|e| VaultError::Crypto(e.to_string()))?;
            let wrapped_keys = policy
                .trusted
                .iter()
                .map(|(peer, pk)| Ok((*peer, scheme.encrypt(pk, &key)?)))
                .collect::<Result<_, VaultError>>()?;
            let signature = scheme.sign(consumer, &signed_message(c.task_id, &payload))?;
            Ok(TaskChunk {
                task_id: c.task_id,
                payload,
                wrapped_keys,
                signature,
            })
        })
        .collect()
}

/// Checks the consumer's signature, unwraps the chunk key with `key` and
/// decrypts.
pub fn open_chunk(
    scheme: &dyn CryptoScheme,
    chunk: &TaskChunk,
    requester: PeerId,
    key: &KeyPair,
    consumer: &PublicKey,
) -> Result<PlainChunk, VaultError> {
    if !scheme.verify(
        consumer,
        &signed_message(chunk.task_id, &chunk.payload),
        &chunk.signature,
    ) {
        return Err(VaultError::BadSignature {
            task_id: chunk.task_id,
        });
    }
    let wrapped = chunk
        .wrapped_keys
        .get(&requester)
        .ok_or_else(|| VaultError::Crypto("no key wrapped for requester".into()))?;
    let sym = scheme.decrypt(key, wrapped)?;
    if sym.len() != 32 {
        return Err(VaultError::Crypto("unwrapped key has wrong length".into()));
    }
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&sym));
    let aad = chunk.task_id.to_be_bytes();
    let data = cipher
        .decrypt(
            Nonce::from_slice(&nonce_for(chunk.task_id)),
            Payload {
                msg: &chunk.payload,
                aad: &aad,
            },
        )
        .map_err(|e| VaultError::Crypto(e.to_string()))?;
    Ok(PlainChunk {
        task_id: chunk.task_id,
        data,
    })
}

/// Wrapped chunk keys kept by the consumer, indexed by task id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyDirectory {
    keys: BTreeMap<u32, BTreeMap<PeerId, Vec<u8>>>,
}

impl KeyDirectory {
    pub fn from_chunks(chunks: &[TaskChunk]) -> Self {
        KeyDirectory {
            keys: chunks
                .iter()
                .map(|c| (c.task_id, c.wrapped_keys.clone()))
                .collect(),
        }
    }

    pub fn get(&self, task_id: u32, peer: PeerId) -> Option<&[u8]> {
        self.keys.get(&task_id)?.get(&peer).map(Vec::as_slice)
    }
}

/// What a storage node keeps for one chunk. There is no key material here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredBlob {
    pub payload: Vec<u8>,
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageNode {
    pub id: PeerId,
    pub online: bool,
    blobs: BTreeMap<(DatasetId, u32), StoredBlob>,
}

impl StorageNode {
    pub fn blob(&self, dataset: DatasetId, task_id: u32) -> Option<&StoredBlob> {
        self.blobs.get(&(dataset, task_id))
    }

    pub fn blob_count(&self) -> usize {
        self.blobs.len()
    }

    pub fn blobs(&self) -> impl Iterator<Item = (&(DatasetId, u32), &StoredBlob)> {
        self.blobs.iter()
    }

    /// Test hook: overwrite a stored payload in place.
    pub fn tamper(&mut self, dataset: DatasetId, task_id: u32, f: impl FnOnce(&mut StoredBlob)) {
        if let Some(b) = self.blobs.get_mut(&(dataset, task_id)) {
            f(b);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StorageNetwork {
    nodes: BTreeMap<PeerId, StorageNode>,
}

impl StorageNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: PeerId) -> &mut StorageNode {
        self.nodes.entry(id).or_insert_with(|| StorageNode {
            id,
            online: true,
            blobs: BTreeMap::new(),
        })
    }

    pub fn node(&self, id: PeerId) -> Option<&StorageNode> {
        self.nodes.get(&id)
    }

    pub fn node_mut(&mut self, id: PeerId) -> Option<&mut StorageNode> {
        self.nodes.get_mut(&id)
    }

    pub fn set_online(&mut self, id: PeerId, online: bool) {
        if let Some(n) = self.nodes.get_mut(&id) {
            n.online = online;
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &StorageNode> {
        self.nodes.values()
    }
}

/// Places chunk `t` on nodes `(t + j) mod n` for `j < r` and returns the
/// resulting table. Nodes that are unknown to `net` are added.
pub fn distribute(
    net: &mut StorageNetwork,
    dataset: DatasetId,
    chunks: &[TaskChunk],
    nodes: &[PeerId],
    r: usize,
) -> Result<Dht, VaultError> {
    if r == 0 || r > nodes.len() || r > u8::MAX as usize {
        return Err(VaultError::ReplicationOutOfRange {
            r,
            nodes: nodes.len(),
        });
    }
    let mut seen = BTreeSet::new();
    for &n in nodes {
        if !seen.insert(n) {
            return Err(VaultError::DuplicateNode(n));
        }
        if chunks.iter().any(|c| c.wrapped_keys.contains_key(&n)) {
            return Err(VaultError::StorageNodeTrusted(n));
        }
    }
    let mut dht = Dht::new();
    for c in chunks {
        let addrs: Vec<PeerId> = (0..r)
            .map(|j| nodes[(c.task_id as usize + j) % nodes.len()])
            .collect();
        for &a in &addrs {
            net.add_node(a).blobs.insert(
                (dataset, c.task_id),
                StoredBlob {
                    payload: c.payload.clone(),
                    signature: c.signature.clone(),
                },
            );
        }
        dht.insert(c.task_id, addrs)?;
    }
    Ok(dht)
}

/// Fetches one chunk for `requester` from the first live replica.
pub fn fetch_chunk(
    requester: PeerId,
    task_id: u32,
    dht: &Dht,
    policy: &AccessPolicy,
    keys: &KeyDirectory,
    net: &StorageNetwork,
) -> Result<TaskChunk, FetchError> {
    if !policy.is_trusted(requester) {
        return Err(FetchError::AccessDenied);
    }
    let addrs = dht.get(task_id).ok_or(FetchError::AccessDenied)?;
    let wrapped = keys
        .get(task_id, requester)
        .ok_or(FetchError::AccessDenied)?;
    let blob = addrs
        .iter()
        .filter_map(|a| net.node(*a))
        .filter(|n| n.online)
        .find_map(|n| n.blob(policy.dataset, task_id))
        .ok_or(FetchError::Unavailable { task_id })?;
    Ok(TaskChunk {
        task_id,
        payload: blob.payload.clone(),
        wrapped_keys: BTreeMap::from([(requester, wrapped.to_vec())]),
        signature: blob.signature.clone(),
    })
}

/// Fetches, verifies and decrypts every chunk in the table, then reassembles.
#[allow(clippy::too_many_arguments)]
pub fn fetch_all(
    scheme: &dyn CryptoScheme,
    requester: PeerId,
    key: &KeyPair,
    consumer: &PublicKey,
    dht: &Dht,
    policy: &AccessPolicy,
    keys: &KeyDirectory,
    net: &StorageNetwork,
) -> Result<Vec<u8>, FetchError> {
    let plain = dht
        .entries()
        .map(|(t, _)| {
            let c = fetch_chunk(requester, t, dht, policy, keys, net)?;
            Ok(open_chunk(scheme, &c, requester, key, consumer)?)
        })
        .collect::<Result<Vec<_>, FetchError>>()?;
    Ok(reassemble(plain)?)
}

/// Digest recorded on the ledger for a computation result.
pub fn result_digest(result: &[u8]) -> Hash256 {
    sha256(result)
}
