//! Simulator for a contract-mediated marketplace that pairs resource
//! consumers with compute and storage providers at the network edge.
//!
//! The pieces, bottom up:
//!
//! - [`domain`]: users, money, condition vectors, time windows.
//! - [`ledger`]: append-only hash-chained transaction log.
//! - [`gasmeter`]: per-primitive gas accounting and cost-argument search.
//! - [`matchmaker`]: per-region order book and waiting queue.
//! - [`registry`]: registration and routing of users to regions.
//! - [`vault`]: chunk encryption, signing, replica placement and retrieval.
//! - [`escrow`]: per-session deposits, tick payments and settlement.
//! - [`harness`]: seeded scenarios, sweeps and metric export.

pub mod domain;
pub mod escrow;
pub mod gasmeter;
pub mod harness;
pub mod hash;
pub mod ledger;
pub mod matchmaker;
pub mod registry;
pub mod vault;

use thiserror::Error;

use gasmeter::{GasMeter, GasTable};
use ledger::Ledger;

/// Shared mutable context threaded through every contract operation.
#[derive(Debug, Clone)]
pub struct Env {
    pub gas: GasMeter,
    pub ledger: Ledger,
}

impl Env {
    pub fn new(table: GasTable) -> Self {
        Env {
            gas: GasMeter::new(table),
            ledger: Ledger::new(),
        }
    }
}

impl Default for Env {
    fn default() -> Self {
        Env::new(GasTable::default())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("engagement rate is undefined with no consumers")]
    NoConsumers,
    #[error("config: {0}")]
    Config(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error(transparent)]
    Domain(#[from] domain::DomainError),
    #[error(transparent)]
    Registry(#[from] registry::RegistryError),
    #[error(transparent)]
    Match(#[from] matchmaker::MatchError),
    #[error(transparent)]
    Gas(#[from] gasmeter::GasError),
    #[error(transparent)]
    Ledger(#[from] ledger::LedgerError),
    #[error(transparent)]
    Vault(#[from] vault::VaultError),
    #[error(transparent)]
    Fetch(#[from] vault::FetchError),
    #[error(transparent)]
    Escrow(#[from] escrow::EscrowError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
