//! Value types shared by every contract: identities, money, regions,
//! condition vectors and time windows, plus the two compatibility
//! predicates used by matching.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("money underflow: {lhs} - {rhs}")]
    Underflow { lhs: Money, rhs: Money },
    #[error("money overflow")]
    Overflow,
    #[error("condition vectors differ in length ({consumer} vs {provider})")]
    LengthMismatch { consumer: usize, provider: usize },
    #[error("condition vector length {0} exceeds 64")]
    TooManyConditions(usize),
    #[error("empty time window [{start}, {end})")]
    EmptyWindow { start: u64, end: u64 },
    #[error("region {city} outside configured city count {cities}")]
    RegionOutOfRange { city: u32, cities: u32 },
    #[error("invalid user spec: {0}")]
    InvalidSpec(&'static str),
}

/// Sequence number assigned at registration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserId(pub u64);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

/// Integer micro-dollars. All arithmetic is checked; nothing rounds.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Money(u64);

impl Money {
    pub const ZERO: Money = Money(0);
    pub const MICROS_PER_DOLLAR: u64 = 1_000_000;

    pub const fn from_micros(micros: u64) -> Self {
        Money(micros)
    }

    pub const fn from_dollars(dollars: u64) -> Self {
        Money(dollars * Self::MICROS_PER_DOLLAR)
    }

    pub const fn micros(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, rhs: Money) -> Result<Money, DomainError> {
        self.0
            .checked_add(rhs.0)
            .map(Money)
            .ok_or(DomainError::Overflow)
    }

    pub fn checked_sub(self, rhs: Money) -> Result<Money, DomainError> {
        self.0
            .checked_sub(rhs.0)
            .map(Money)
            .ok_or(DomainError::Underflow { lhs: self, rhs })
    }

    pub fn checked_mul(self, n: u64) -> Result<Money, DomainError> {
        self.0
            .checked_mul(n)
            .map(Money)
            .ok_or(DomainError::Overflow)
    }

    /// `self * percent / 100`, rounded down.
    pub fn percent(self, percent: u32) -> Money {
        Money((self.0 as u128 * percent as u128 / 100) as u64)
    }

    pub fn sum<I: IntoIterator<Item = Money>>(items: I) -> Result<Money, DomainError> {
        items
            .into_iter()
            .try_fold(Money::ZERO, |acc, m| acc.checked_add(m))
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "${}.{:06}",
            self.0 / Self::MICROS_PER_DOLLAR,
            self.0 % Self::MICROS_PER_DOLLAR
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Region(pub u32);

impl Region {
    pub fn checked(city: u32, cities: u32) -> Result<Region, DomainError> {
        if city < cities {
            Ok(Region(city))
        } else {
            Err(DomainError::RegionOutOfRange { city, cities })
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Fixed-length bit vector of binary conditions (CPU, bandwidth, storage, OS
/// by default). Bit `i` set on a consumer means "requires", on a provider
/// "offers".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConditionVector {
    bits: u64,
    len: u8,
}

impl ConditionVector {
    pub const DEFAULT_LEN: usize = 4;
    pub const MAX_LEN: usize = 64;

    pub fn new(bits: &[bool]) -> Result<Self, DomainError> {
        if bits.len() > Self::MAX_LEN {
            return Err(DomainError::TooManyConditions(bits.len()));
        }
        let packed = bits
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i));
        Ok(ConditionVector {
            bits: packed,
            len: bits.len() as u8,
        })
    }

    pub fn from_mask(mask: u64, len: usize) -> Result<Self, DomainError> {
        if len > Self::MAX_LEN {
            return Err(DomainError::TooManyConditions(len));
        }
        let keep = if len == 64 {
            u64::MAX
        } else {
            (1u64 << len) - 1
        };
        Ok(ConditionVector {
            bits: mask & keep,
            len: len as u8,
        })
    }

    pub fn none(len: usize) -> Result<Self, DomainError> {
        Self::from_mask(0, len)
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len() && (self.bits >> i) & 1 == 1
    }

    pub fn mask(&self) -> u64 {
        self.bits
    }

    /// Pointwise `self <= other`.
    pub fn is_subset_of(&self, other: &ConditionVector) -> bool {
        self.bits & !other.bits == 0
    }
}

/// Half-open tick interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    start: u64,
    end: u64,
}

#[allow(clippy::len_without_is_empty)]
impl TimeWindow {
    pub fn new(start: u64, end: u64) -> Result<Self, DomainError> {
        if start < end {
            Ok(TimeWindow { start, end })
        } else {
            Err(DomainError::EmptyWindow { start, end })
        }
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn end(&self) -> u64 {
        self.end
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn intersection_len(&self, other: &TimeWindow) -> u64 {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }
}

/// Minimum share of the consumer's window a provider must cover.
pub const ENGAGEMENT_OVERLAP: Ratio<u64> = Ratio::new_raw(3, 4);

/// Fraction of the consumer window `a` covered by `b`.
pub fn overlap_fraction(a: &TimeWindow, b: &TimeWindow) -> Ratio<u64> {
    Ratio::new(a.intersection_len(b), a.len())
}

/// Integer form of `overlap_fraction(a, b) >= 3/4`.
pub fn overlap_admissible(consumer: &TimeWindow, provider: &TimeWindow) -> bool {
    4 * consumer.intersection_len(provider) >= 3 * consumer.len()
}

/// True iff every requirement bit of the consumer is offered by the provider.
pub fn conditions_satisfied(
    consumer: &ConditionVector,
    provider: &ConditionVector,
) -> Result<bool, DomainError> {
    if consumer.len() != provider.len() {
        return Err(DomainError::LengthMismatch {
            consumer: consumer.len(),
            provider: provider.len(),
        });
    }
    Ok(consumer.is_subset_of(provider))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Consumer,
    ComputeProvider,
    StorageProvider,
}

impl Role {
    pub fn code(self) -> u8 {
        match self {
            Role::Consumer => 0,
            Role::ComputeProvider => 1,
            Role::StorageProvider => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Role> {
        match code {
            0 => Some(Role::Consumer),
            1 => Some(Role::ComputeProvider),
            2 => Some(Role::StorageProvider),
            _ => None,
        }
    }

    pub fn is_provider(self) -> bool {
        !matches!(self, Role::Consumer)
    }
}

/// Registration payload before an id is assigned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserDraft {
    pub role: Role,
    pub region: Region,
    /// Bid for consumers, per-tick charge for providers.
    pub price: Money,
    pub conditions: ConditionVector,
    pub window: TimeWindow,
    /// Consumer deposit; zero for providers.
    pub budget: Money,
}

impl UserDraft {
    pub fn validate(&self) -> Result<(), DomainError> {
        match self.role {
            Role::Consumer => {
                if self.budget.is_zero() {
                    return Err(DomainError::InvalidSpec("consumer budget is zero"));
                }
                if self.budget < self.price {
                    return Err(DomainError::InvalidSpec("consumer budget below bid"));
                }
            }
            _ => {
                if !self.budget.is_zero() {
                    return Err(DomainError::InvalidSpec("providers carry no budget"));
                }
            }
        }
        Ok(())
    }

    pub fn with_id(self, id: UserId) -> UserSpec {
        UserSpec {
            id,
            role: self.role,
            region: self.region,
            price: self.price,
            conditions: self.conditions,
            window: self.window,
            budget: self.budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSpec {
    pub id: UserId,
    pub role: Role,
    pub region: Region,
    pub price: Money,
    pub conditions: ConditionVector,
    pub window: TimeWindow,
    pub budget: Money,
}

impl UserSpec {
    /// Price, condition and window admissibility of `provider` for this consumer.
    pub fn admits(&self, provider: &UserSpec) -> bool {
        provider.price <= self.price
            && self.conditions.is_subset_of(&provider.conditions)
            && overlap_admissible(&self.window, &provider.window)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(s: u64, e: u64) -> TimeWindow {
        TimeWindow::new(s, e).unwrap()
    }

    fn cv(bits: &[u8]) -> ConditionVector {
        ConditionVector::new(&bits.iter().map(|&b| b == 1).collect::<Vec<_>>()).unwrap()
    }

    // Tick-by-tick membership count, independent of the interval arithmetic.
    fn overlap_by_enumeration(a: &TimeWindow, b: &TimeWindow) -> Ratio<u64> {
        let covered = (a.start()..a.end())
            .filter(|t| (b.start()..b.end()).contains(t))
            .count() as u64;
        Ratio::new(covered, a.len())
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(
            overlap_fraction(&w(0, 100), &w(0, 100)),
            Ratio::from_integer(1)
        );
        assert_eq!(overlap_fraction(&w(0, 100), &w(50, 200)), Ratio::new(1, 2));
        let at_threshold = overlap_fraction(&w(0, 80), &w(20, 200));
        assert_eq!(at_threshold, overlap_by_enumeration(&w(0, 80), &w(20, 200)));
        assert_eq!(at_threshold, Ratio::new(60, 80));
        assert_eq!(at_threshold, ENGAGEMENT_OVERLAP);
        assert!(overlap_admissible(&w(0, 80), &w(20, 200)));
        assert!(!overlap_admissible(&w(0, 80), &w(21, 200)));
    }

    #[test]
    fn empty_window_rejected() {
        assert!(TimeWindow::new(5, 5).is_err());
        assert!(TimeWindow::new(6, 5).is_err());
    }

    #[test]
    fn condition_examples() {
        assert!(conditions_satisfied(&cv(&[0, 0, 0, 0]), &cv(&[0, 1, 0, 1])).unwrap());
        assert!(conditions_satisfied(&cv(&[1, 1, 0, 0]), &cv(&[1, 1, 1, 0])).unwrap());
        assert!(!conditions_satisfied(&cv(&[1, 0, 1, 0]), &cv(&[1, 1, 0, 1])).unwrap());
        assert!(matches!(
            conditions_satisfied(&cv(&[1, 0]), &cv(&[1, 0, 0])),
            Err(DomainError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn money_underflow_is_error() {
        let a = Money::from_dollars(1);
        assert!(matches!(
            a.checked_sub(Money::from_dollars(2)),
            Err(DomainError::Underflow { .. })
        ));
        assert_eq!(Money::from_micros(999).percent(20), Money::from_micros(199));
        assert_eq!(Money::from_micros(5_123_456).to_string(), "$5.123456");
    }

    #[test]
    fn draft_validation() {
        let mut d = UserDraft {
            role: Role::Consumer,
            region: Region(0),
            price: Money::from_dollars(5),
            conditions: ConditionVector::none(4).unwrap(),
            window: w(0, 10),
            budget: Money::from_dollars(4),
        };
        assert!(d.validate().is_err());
        d.budget = Money::from_dollars(5);
        assert!(d.validate().is_ok());
        d.role = Role::ComputeProvider;
        assert!(d.validate().is_err());
    }

    proptest! {
        #[test]
        fn overlap_matches_enumeration(s1 in 0u64..60, l1 in 1u64..60, s2 in 0u64..60, l2 in 1u64..60) {
            let (a, b) = (w(s1, s1 + l1), w(s2, s2 + l2));
            prop_assert_eq!(overlap_fraction(&a, &b), overlap_by_enumeration(&a, &b));
            prop_assert_eq!(overlap_fraction(&a, &a), Ratio::from_integer(1));
            prop_assert_eq!(overlap_admissible(&a, &b), overlap_fraction(&a, &b) >= ENGAGEMENT_OVERLAP);
        }

        #[test]
        fn conditions_monotone_in_capability(c in 0u64..16, p in 0u64..16, extra in 0u64..16) {
            let cons = ConditionVector::from_mask(c, 4).unwrap();
            let prov = ConditionVector::from_mask(p, 4).unwrap();
            let more = ConditionVector::from_mask(p | extra, 4).unwrap();
            if conditions_satisfied(&cons, &prov).unwrap() {
                prop_assert!(conditions_satisfied(&cons, &more).unwrap());
            }
        }

        #[test]
        fn money_ledger_balances(ops in proptest::collection::vec((any::<bool>(), 0u64..1_000_000), 0..50)) {
            let mut balance = Money::ZERO;
            let (mut credits, mut debits) = (0u128, 0u128);
            for (credit, amt) in ops {
                let m = Money::from_micros(amt);
                if credit {
                    balance = balance.checked_add(m).unwrap();
                    credits += amt as u128;
                } else if let Ok(b) = balance.checked_sub(m) {
                    balance = b;
                    debits += amt as u128;
                }
            }
            prop_assert_eq!(credits - debits, balance.micros() as u128);
        }
    }
}
