//! Aggregation over rounds and CSV export.

use std::collections::BTreeMap;
use std::path::Path;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::hash::Hash256;
use crate::matchmaker::eng_rate;
use crate::Error;

use super::config::ScenarioConfig;
use super::scenario::RoundOutcome;

/// Exact population mean and variance of a sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub count: usize,
    pub avg: Ratio<i128>,
    pub var: Ratio<i128>,
}

impl Summary {
    pub fn of_ratios(xs: &[Ratio<i128>]) -> Summary {
        if xs.is_empty() {
            return Summary {
                count: 0,
                avg: Ratio::zero(),
                var: Ratio::zero(),
            };
        }
        let n = Ratio::from_integer(xs.len() as i128);
        let avg = xs.iter().sum::<Ratio<i128>>() / n;
        let var = xs
            .iter()
            .map(|x| (x - avg) * (x - avg))
            .sum::<Ratio<i128>>()
            / n;
        Summary {
            count: xs.len(),
            avg,
            var,
        }
    }

    pub fn of_ints<T: Copy + Into<i128>>(xs: &[T]) -> Summary {
        if xs.is_empty() {
            return Summary::of_ratios(&[]);
        }
        let n = xs.len() as i128;
        let sum: i128 = xs.iter().map(|&x| x.into()).sum();
        let sum_sq: i128 = xs.iter().map(|&x| x.into() * x.into()).sum();
        Summary {
            count: xs.len(),
            avg: Ratio::new(sum, n),
            var: Ratio::new(n * sum_sq - sum * sum, n * n),
        }
    }

    pub fn avg_f64(&self) -> f64 {
        self.avg.to_f64().unwrap_or(f64::NAN)
    }

    pub fn var_f64(&self) -> f64 {
        self.var.to_f64().unwrap_or(f64::NAN)
    }
}

/// Ordinary least squares `y = slope·x + intercept` with its R².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(points: &[(f64, f64)]) -> Option<LinearFit> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainHead {
    pub round: u32,
    pub tx_count: usize,
    pub head: Hash256,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub users_per_role: u32,
    pub cities: u32,
    pub budget_base_usd: u64,
    pub round_count: u32,
    pub eng_rates: Vec<Ratio<u64>>,
    pub eng_rate: Summary,
    /// Pooled over every engagement of every round.
    pub latency: Summary,
    pub latency_histogram: BTreeMap<u64, usize>,
    /// Comparisons spent by the attempt that produced each engagement.
    pub comparisons: Summary,
    /// Comparisons of every attempt, successful or not.
    pub attempt_comparisons: Summary,
    /// Consumer plus compute-provider gas per completed session.
    pub gas: Summary,
    pub consumer_gas: Summary,
    pub provider_gas: Summary,
    pub sessions_settled: usize,
    pub sessions_aborted: usize,
    /// Every search stayed within its per-descent comparison bound.
    pub descent_bound_held: bool,
    pub search_attempts: usize,
    pub audit_passed: bool,
    pub heads: Vec<ChainHead>,
}

impl RunMetrics {
    pub fn aggregate(cfg: &ScenarioConfig, rounds: &[RoundOutcome]) -> Result<RunMetrics, Error> {
        let mut eng_rates = Vec::with_capacity(rounds.len());
        let mut latencies = Vec::new();
        let mut comparisons = Vec::new();
        let mut attempts = Vec::new();
        let (mut gas, mut consumer_gas, mut provider_gas) = (Vec::new(), Vec::new(), Vec::new());
        let mut histogram = BTreeMap::new();
        let mut descent_bound_held = true;
        for r in rounds {
            eng_rates.push(eng_rate(&r.engagements, r.consumers)?);
            for e in &r.engagements {
                latencies.push(e.latency_ticks);
                *histogram.entry(e.latency_ticks).or_insert(0) += 1;
                comparisons.push(e.comparisons_used);
            }
            for s in &r.search_log {
                attempts.push(s.comparisons);
                descent_bound_held &= s.max_descent <= s.descent_bound();
            }
            for i in r.completed() {
                gas.push(r.pair_gas[i]);
                consumer_gas.push(r.consumer_gas[i]);
                provider_gas.push(r.provider_gas[i]);
            }
        }
        let rates: Vec<Ratio<i128>> = eng_rates
            .iter()
            .map(|r| Ratio::new(*r.numer() as i128, *r.denom() as i128))
            .collect();
        Ok(RunMetrics {
            users_per_role: cfg.users_per_role,
            cities: cfg.cities,
            budget_base_usd: cfg.budget_base_usd,
            round_count: rounds.len() as u32,
            eng_rate: Summary::of_ratios(&rates),
            eng_rates,
            latency: Summary::of_ints(&latencies),
            latency_histogram: histogram,
            comparisons: Summary::of_ints(&comparisons),
            attempt_comparisons: Summary::of_ints(&attempts),
            gas: Summary::of_ints(&gas),
            consumer_gas: Summary::of_ints(&consumer_gas),
            provider_gas: Summary::of_ints(&provider_gas),
            sessions_settled: rounds.iter().map(RoundOutcome::settled).sum(),
            sessions_aborted: rounds.iter().map(RoundOutcome::aborted).sum(),
            descent_bound_held,
            search_attempts: attempts.len(),
            audit_passed: rounds.iter().all(RoundOutcome::audit),
            heads: rounds
                .iter()
                .map(|r| ChainHead {
                    round: r.round,
                    tx_count: r.ledger.len(),
                    head: r.ledger.head(),
                })
                .collect(),
        })
    }

    pub fn csv_row(&self, combo_id: usize) -> SummaryRow {
        let f = |x: f64| format!("{x:.6}");
        SummaryRow {
            combo_id,
            users_per_role: self.users_per_role,
            cities: self.cities,
            budget_base_usd: self.budget_base_usd,
            round_count: self.round_count,
            eng_rate_avg: f(self.eng_rate.avg_f64()),
            eng_rate_var: f(self.eng_rate.var_f64()),
            latency_avg_ticks: f(self.latency.avg_f64()),
            latency_var: f(self.latency.var_f64()),
            comparisons_avg: f(self.comparisons.avg_f64()),
            comparisons_var: f(self.comparisons.var_f64()),
            gas_avg: f(self.gas.avg_f64()),
            gas_var: f(self.gas.var_f64()),
            sessions_settled: self.sessions_settled,
            sessions_aborted: self.sessions_aborted,
        }
    }
}

/// One line of `summary.csv`. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SummaryRow {
    pub combo_id: usize,
    pub users_per_role: u32,
    pub cities: u32,
    pub budget_base_usd: u64,
    pub round_count: u32,
    pub eng_rate_avg: String,
    pub eng_rate_var: String,
    pub latency_avg_ticks: String,
    pub latency_var: String,
    pub comparisons_avg: String,
    pub comparisons_var: String,
    pub gas_avg: String,
    pub gas_var: String,
    pub sessions_settled: usize,
    pub sessions_aborted: usize,
}

pub const SUMMARY_HEADER: [&str; 15] = [
    "combo_id",
    "users_per_role",
    "cities",
    "budget_base_usd",
    "round_count",
    "eng_rate_avg",
    "eng_rate_var",
    "latency_avg_ticks",
    "latency_var",
    "comparisons_avg",
    "comparisons_var",
    "gas_avg",
    "gas_var",
    "sessions_settled",
    "sessions_aborted",
];

#[derive(Debug, Serialize)]
struct HeadRow<'a> {
    combo_id: usize,
    round: u32,
    tx_count: usize,
    head_hash: &'a str,
}

/// Writes `summary.csv`, one row per cell in the given order.
pub fn emit_csv(cells: &[RunMetrics], path: &Path) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, m) in cells.iter().enumerate() {
        w.serialize(m.csv_row(i))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `heads.csv`: the final ledger hash of every round of every cell.
pub fn emit_heads(cells: &[RunMetrics], path: &Path) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, m) in cells.iter().enumerate() {
        for h in &m.heads {
            w.serialize(HeadRow {
                combo_id: i,
                round: h.round,
                tx_count: h.tx_count,
                head_hash: &h.head.to_hex(),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}
