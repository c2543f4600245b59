//! Operating-cost model: every contract primitive is metered against a
//! [`GasTable`], receipts are kept per account, and [`optimize`] searches a
//! discrete grid of [`CostArgs`] for the minimum of `avg + ζ·var` of the
//! per-pair cost.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::UserId;

#[derive(Debug, Error)]
pub enum GasError {
    #[error("unknown primitive kind `{0}`")]
    UnknownKind(String),
    #[error("charge count must be at least 1")]
    ZeroCount,
    #[error("gas table entry `{0}` must be positive")]
    NonPositive(&'static str),
    #[error("statistics over an empty set")]
    Empty,
    #[error("gas overflow")]
    Overflow,
    #[error("cost argument `{0}` must be at least 1")]
    BadArgument(&'static str),
    #[error("invalid penalty `{0}`")]
    BadPenalty(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Primitive {
    StorageWrite,
    StorageRead,
    MapInsert,
    MapDelete,
    TreeNodeTouch,
    Comparison,
    SignatureVerify,
    MessageEmit,
    ContractSetup,
}

impl Primitive {
    pub const ALL: [Primitive; 9] = [
        Primitive::StorageWrite,
        Primitive::StorageRead,
        Primitive::MapInsert,
        Primitive::MapDelete,
        Primitive::TreeNodeTouch,
        Primitive::Comparison,
        Primitive::SignatureVerify,
        Primitive::MessageEmit,
        Primitive::ContractSetup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::StorageWrite => "storage_write",
            Primitive::StorageRead => "storage_read",
            Primitive::MapInsert => "map_insert",
            Primitive::MapDelete => "map_delete",
            Primitive::TreeNodeTouch => "tree_node_touch",
            Primitive::Comparison => "comparison",
            Primitive::SignatureVerify => "signature_verify",
            Primitive::MessageEmit => "message_emit",
            Primitive::ContractSetup => "contract_setup",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl FromStr for Primitive {
    type Err = GasError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Primitive::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| GasError::UnknownKind(s.to_string()))
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Gas price of each primitive. The defaults loosely shadow EVM magnitudes so
/// that relative trends mean something; they are configuration, not claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GasTable {
    pub storage_write: u64,
    pub storage_read: u64,
    pub map_insert: u64,
    pub map_delete: u64,
    pub tree_node_touch: u64,
    pub comparison: u64,
    pub signature_verify: u64,
    pub message_emit: u64,
    pub contract_setup: u64,
}

impl Default for GasTable {
    fn default() -> Self {
        GasTable {
            storage_write: 20_000,
            storage_read: 200,
            map_insert: 5_000,
            map_delete: 5_000,
            tree_node_touch: 200,
            comparison: 3,
            signature_verify: 3_000,
            message_emit: 375,
            contract_setup: 32_000,
        }
    }
}

impl GasTable {
    pub fn cost(&self, kind: Primitive) -> u64 {
        match kind {
            Primitive::StorageWrite => self.storage_write,
            Primitive::StorageRead => self.storage_read,
            Primitive::MapInsert => self.map_insert,
            Primitive::MapDelete => self.map_delete,
            Primitive::TreeNodeTouch => self.tree_node_touch,
            Primitive::Comparison => self.comparison,
            Primitive::SignatureVerify => self.signature_verify,
            Primitive::MessageEmit => self.message_emit,
            Primitive::ContractSetup => self.contract_setup,
        }
    }

    fn cost_mut(&mut self, kind: Primitive) -> &mut u64 {
        match kind {
            Primitive::StorageWrite => &mut self.storage_write,
            Primitive::StorageRead => &mut self.storage_read,
            Primitive::MapInsert => &mut self.map_insert,
            Primitive::MapDelete => &mut self.map_delete,
            Primitive::TreeNodeTouch => &mut self.tree_node_touch,
            Primitive::Comparison => &mut self.comparison,
            Primitive::SignatureVerify => &mut self.signature_verify,
            Primitive::MessageEmit => &mut self.message_emit,
            Primitive::ContractSetup => &mut self.contract_setup,
        }
    }

    pub fn validate(&self) -> Result<(), GasError> {
        for p in Primitive::ALL {
            if self.cost(p) == 0 {
                return Err(GasError::NonPositive(p.name()));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<GasTable, GasError> {
        let t: GasTable = toml::from_str(s).map_err(|e| GasError::Config(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<GasTable, GasError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Table with the add / delete / lookup groups rescaled by `mix`
    /// (percent, rounded down, floored at 1).
    pub fn weighted(&self, mix: &OpMix) -> GasTable {
        let mut t = *self;
        for p in Primitive::ALL {
            let w = match OpGroup::of(p) {
                Some(OpGroup::Add) => mix.add,
                Some(OpGroup::Delete) => mix.delete,
                Some(OpGroup::Lookup) => mix.lookup,
                None => continue,
            };
            let c = t.cost_mut(p);
            *c = (*c * w as u64 / 100).max(1);
        }
        t
    }
}

/// The three operation families folded into the `Op*` cost factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpGroup {
    Add,
    Delete,
    Lookup,
}

impl OpGroup {
    pub fn of(p: Primitive) -> Option<OpGroup> {
        match p {
            Primitive::StorageWrite | Primitive::MapInsert | Primitive::TreeNodeTouch => {
                Some(OpGroup::Add)
            }
            Primitive::MapDelete => Some(OpGroup::Delete),
            Primitive::StorageRead | Primitive::Comparison => Some(OpGroup::Lookup),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Account {
    System,
    User(UserId),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GasReceipt {
    counts: [u64; 9],
    total: u64,
}

impl GasReceipt {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, table: &GasTable, kind: Primitive, n: u64) -> Result<(), GasError> {
        if n == 0 {
            return Err(GasError::ZeroCount);
        }
        let add = table.cost(kind).checked_mul(n).ok_or(GasError::Overflow)?;
        self.total = self.total.checked_add(add).ok_or(GasError::Overflow)?;
        self.counts[kind.slot()] += n;
        Ok(())
    }

    /// Charges by primitive name, as read from configs or tooling.
    pub fn charge_named(&mut self, table: &GasTable, kind: &str, n: u64) -> Result<(), GasError> {
        self.charge(table, kind.parse()?, n)
    }

    pub fn count(&self, kind: Primitive) -> u64 {
        self.counts[kind.slot()]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn breakdown(&self) -> BTreeMap<Primitive, u64> {
        Primitive::ALL
            .into_iter()
            .filter(|p| self.count(*p) > 0)
            .map(|p| (p, self.count(p)))
            .collect()
    }

    /// Recomputes the total from the breakdown.
    pub fn recompute(&self, table: &GasTable) -> u64 {
        Primitive::ALL
            .into_iter()
            .map(|p| self.count(p) * table.cost(p))
            .sum()
    }

    pub fn merged(&self, other: &GasReceipt) -> GasReceipt {
        let mut out = self.clone();
        for (a, b) in out.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        out.total += other.total;
        out
    }
}

/// Per-account gas accumulator for one simulation.
#[derive(Debug, Clone)]
pub struct GasMeter {
    table: GasTable,
    accounts: BTreeMap<Account, GasReceipt>,
}

impl GasMeter {
    pub fn new(table: GasTable) -> Self {
        GasMeter {
            table,
            accounts: BTreeMap::new(),
        }
    }

    pub fn table(&self) -> &GasTable {
        &self.table
    }

    pub fn charge(&mut self, account: Account, kind: Primitive, n: u64) -> Result<(), GasError> {
        let table = self.table;
        self.accounts
            .entry(account)
            .or_default()
            .charge(&table, kind, n)
    }

    /// Like [`GasMeter::charge`] but a zero count is a no-op. Used where
    /// the count comes from a counter that may legitimately be zero.
    pub(crate) fn meter(&mut self, account: Account, kind: Primitive, n: u64) {
        if n > 0 {
            self.charge(account, kind, n).expect("gas overflow");
        }
    }

    pub(crate) fn meter_user(&mut self, id: UserId, kind: Primitive, n: u64) {
        self.meter(Account::User(id), kind, n)
    }

    pub fn receipt(&self, account: Account) -> GasReceipt {
        self.accounts.get(&account).cloned().unwrap_or_default()
    }

    pub fn total(&self) -> u64 {
        self.accounts.values().map(|r| r.total()).sum()
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&Account, &GasReceipt)> {
        self.accounts.iter()
    }
}

/// Exact population mean and variance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairStats {
    pub count: usize,
    pub avg: Ratio<i128>,
    pub var: Ratio<i128>,
}

impl PairStats {
    pub fn of_totals(totals: &[u64]) -> Result<PairStats, GasError> {
        if totals.is_empty() {
            return Err(GasError::Empty);
        }
        let n = totals.len() as i128;
        let sum: i128 = totals.iter().map(|&t| t as i128).sum();
        let sum_sq: i128 = totals.iter().map(|&t| (t as i128) * (t as i128)).sum();
        Ok(PairStats {
            count: totals.len(),
            avg: Ratio::new(sum, n),
            var: Ratio::new(n * sum_sq - sum * sum, n * n),
        })
    }
}

pub fn pair_stats(receipts: &[GasReceipt]) -> Result<PairStats, GasError> {
    let totals: Vec<u64> = receipts.iter().map(GasReceipt::total).collect();
    PairStats::of_totals(&totals)
}

/// Percent weights applied to the add / delete / lookup primitive groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpMix {
    pub add: u32,
    pub delete: u32,
    pub lookup: u32,
}

impl Default for OpMix {
    fn default() -> Self {
        OpMix {
            add: 100,
            delete: 100,
            lookup: 100,
        }
    }
}

/// Tunables of the operating-cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostArgs {
    /// Pricing weights for additions, deletions and lookups.
    pub op_mix: OpMix,
    /// Compute-provider arrivals between waiting-queue drains.
    pub eng_batch: u32,
    /// Ticks between heartbeat messages during a session.
    pub comm_interval: u32,
    /// Sessions that share one intermediary contract deployment.
    pub setup_share: u32,
}

impl Default for CostArgs {
    fn default() -> Self {
        CostArgs {
            op_mix: OpMix::default(),
            eng_batch: 1,
            comm_interval: 1,
            setup_share: 1,
        }
    }
}

impl CostArgs {
    pub fn validate(&self) -> Result<(), GasError> {
        let checks = [
            (self.op_mix.add, "op_mix.add"),
            (self.op_mix.delete, "op_mix.delete"),
            (self.op_mix.lookup, "op_mix.lookup"),
            (self.eng_batch, "eng_batch"),
            (self.comm_interval, "comm_interval"),
            (self.setup_share, "setup_share"),
        ];
        for (v, name) in checks {
            if v == 0 {
                return Err(GasError::BadArgument(name));
            }
        }
        Ok(())
    }
}

/// Declared discrete grid; candidates are the Cartesian product of the axes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostGrid {
    pub op_add: Vec<u32>,
    pub op_delete: Vec<u32>,
    pub op_lookup: Vec<u32>,
    pub eng_batch: Vec<u32>,
    pub comm_interval: Vec<u32>,
    pub setup_share: Vec<u32>,
}

impl Default for CostGrid {
    fn default() -> Self {
        CostGrid {
            op_add: vec![100],
            op_delete: vec![100],
            op_lookup: vec![100],
            eng_batch: vec![1],
            comm_interval: vec![1],
            setup_share: vec![1],
        }
    }
}

impl CostGrid {
    pub fn from_toml_str(s: &str) -> Result<CostGrid, GasError> {
        toml::from_str(s).map_err(|e| GasError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<CostGrid, GasError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Candidates in lexicographic axis order.
    pub fn candidates(&self) -> Result<Vec<CostArgs>, GasError> {
        let mut out = Vec::new();
        for &add in &self.op_add {
            for &delete in &self.op_delete {
                for &lookup in &self.op_lookup {
                    for &eng_batch in &self.eng_batch {
                        for &comm_interval in &self.comm_interval {
                            for &setup_share in &self.setup_share {
                                let args = CostArgs {
                                    op_mix: OpMix {
                                        add,
                                        delete,
                                        lookup,
                                    },
                                    eng_batch,
                                    comm_interval,
                                    setup_share,
                                };
                                args.validate()?;
                                out.push(args);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Parses a non-negative rational: `3`, `1/1000` or `0.25`.
pub fn parse_penalty(s: &str) -> Result<Ratio<i128>, GasError> {
    let bad = || GasError::BadPenalty(s.to_string());
    let s = s.trim();
    let value = if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 30 {
            return Err(bad());
        }
        let int: i128 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let scale = 10i128.pow(frac.len() as u32);
        let frac: i128 = frac.parse().map_err(|_| bad())?;
        Ratio::new(int * scale + frac, scale)
    } else {
        Ratio::from_str(s).map_err(|_| bad())?
    };
    if value < Ratio::zero() {
        return Err(bad());
    }
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateScore {
    pub args: CostArgs,
    pub stats: PairStats,
    pub objective: Ratio<i128>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptimizeReport {
    pub zeta: Ratio<i128>,
    pub optimal: CostArgs,
    pub args_avg: CostArgs,
    pub args_var: CostArgs,
    pub scores: Vec<CandidateScore>,
}

/// `J = avg + ζ·var`.
pub fn objective(stats: &PairStats, zeta: &Ratio<i128>) -> Ratio<i128> {
    stats.avg + zeta * stats.var
}

/// Index of the first minimum under `key`.
fn first_argmin<T, K: Ord>(items: &[T], key: impl Fn(&T) -> K) -> usize {
    let mut best = 0;
    for i in 1..items.len() {
        if key(&items[i]) < key(&items[best]) {
            best = i;
        }
    }
    best
}

/// Evaluates every candidate (in parallel, merged by index) and returns the
/// minimiser of `avg + ζ·var` along with the pure-mean and pure-variance
/// minimisers. Ties go to the earlier candidate.
pub fn optimize<F, E>(
    candidates: &[CostArgs],
    zeta: Ratio<i128>,
    evaluate: F,
) -> Result<OptimizeReport, E>
where
    F: Fn(&CostArgs) -> Result<Vec<u64>, E> + Sync,
    E: From<GasError> + Send,
{
    if candidates.is_empty() {
        return Err(GasError::Empty.into());
    }
    if zeta < Ratio::zero() {
        return Err(GasError::BadPenalty(zeta.to_string()).into());
    }
    let scores = candidates
        .par_iter()
        .map(|args| {
            let totals = evaluate(args)?;
            let stats = PairStats::of_totals(&totals)?;
            let objective = objective(&stats, &zeta);
            Ok(CandidateScore {
                args: *args,
                stats,
                objective,
            })
        })
        .collect::<Result<Vec<_>, E>>()?;
    let opt = first_argmin(&scores, |s| s.objective);
    let by_avg = first_argmin(&scores, |s| s.stats.avg);
    let by_var = first_argmin(&scores, |s| s.stats.var);
    Ok(OptimizeReport {
        zeta,
        optimal: scores[opt].args,
        args_avg: scores[by_avg].args,
        args_var: scores[by_var].args,
        scores,
    })
}
