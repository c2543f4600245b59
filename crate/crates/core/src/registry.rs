//! Registration and regional allocation (the distributed controller).

use std::collections::BTreeMap;

use thiserror::Error;

use crate::domain::{DomainError, Region, Role, UserDraft, UserId, UserSpec};
use crate::gasmeter::{Account, Primitive};
use crate::ledger::Event;
use crate::matchmaker::{Engagement, MatchError, Matchmaker, MatchmakerConfig};
use crate::Env;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registration rejected: {0}")]
    Invalid(#[from] DomainError),
    #[error("{0} is already registered")]
    Duplicate(UserId),
    #[error("unknown user {0}")]
    Unknown(UserId),
    #[error("{0} is inside an active session")]
    ActiveSession(UserId),
    #[error("condition vector length {found}, registry expects {expected}")]
    ConditionLength { found: usize, expected: usize },
    #[error(transparent)]
    Match(#[from] MatchError),
}

/// Holds every registered user and one matchmaker per region.
#[derive(Debug, Clone)]
pub struct Registry {
    next_id: u64,
    condition_bits: usize,
    users: BTreeMap<UserId, UserSpec>,
    allocated: BTreeMap<UserId, Region>,
    active: BTreeMap<UserId, u32>,
    networks: Vec<Matchmaker>,
}

impl Registry {
    /// A registry with `cities` regional networks and fixed condition length.
    pub fn new(
        cities: u32,
        condition_bits: usize,
        config: MatchmakerConfig,
        env: &mut Env,
    ) -> Self {
        // One controller deployment plus one matchmaker per region.
        env.gas
            .meter(Account::System, Primitive::ContractSetup, 1 + cities as u64);
        Registry {
            next_id: 0,
            condition_bits,
            users: BTreeMap::new(),
            allocated: BTreeMap::new(),
            active: BTreeMap::new(),
            networks: (0..cities)
                .map(|c| Matchmaker::new(Region(c), config))
                .collect(),
        }
    }

    pub fn cities(&self) -> u32 {
        self.networks.len() as u32
    }

    pub fn register(&mut self, draft: UserDraft, env: &mut Env) -> Result<UserId, RegistryError> {
        let id = UserId(self.next_id);
        self.insert(draft.with_id(id), env)?;
        self.next_id += 1;
        Ok(id)
    }

    /// Registers a spec that already carries an id (e.g. replayed from a log).
    /// The id must not be taken and must not be behind the counter.
    pub fn register_with_id(
        &mut self,
        spec: UserSpec,
        env: &mut Env,
    ) -> Result<UserId, RegistryError> {
        if self.users.contains_key(&spec.id) || spec.id.0 < self.next_id {
            return Err(RegistryError::Duplicate(spec.id));
        }
        let id = spec.id;
        self.insert(spec, env)?;
        self.next_id = id.0 + 1;
        Ok(id)
    }

    fn insert(&mut self, spec: UserSpec, env: &mut Env) -> Result<(), RegistryError> {
        let draft = UserDraft {
            role: spec.role,
            region: spec.region,
            price: spec.price,
            conditions: spec.conditions,
            window: spec.window,
            budget: spec.budget,
        };
        draft.validate()?;
        Region::checked(spec.region.0, self.cities())?;
        if spec.conditions.len() != self.condition_bits {
            return Err(RegistryError::ConditionLength {
                found: spec.conditions.len(),
                expected: self.condition_bits,
            });
        }
        env.gas.meter_user(spec.id, Primitive::StorageWrite, 1);
        env.gas.meter_user(spec.id, Primitive::MapInsert, 1);
        env.ledger.record(&Event::Registration {
            user_id: spec.id,
            role: spec.role,
            region: spec.region,
            price: spec.price,
        });
        self.users.insert(spec.id, spec);
        Ok(())
    }

    pub fn lookup(&self, id: UserId) -> Option<&UserSpec> {
        self.users.get(&id)
    }

    pub fn users(&self) -> impl Iterator<Item = &UserSpec> {
        self.users.values()
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Hands the user to its region's matchmaker. Idempotent: a second call
    /// returns the same region without doing anything.
    pub fn allocate(&mut self, id: UserId, env: &mut Env) -> Result<Region, RegistryError> {
        self.allocate_collect(id, env).map(|(r, _)| r)
    }

    /// [`Registry::allocate`] that also returns the engagements the arrival
    /// produced.
    pub fn allocate_collect(
        &mut self,
        id: UserId,
        env: &mut Env,
    ) -> Result<(Region, Vec<Engagement>), RegistryError> {
        let spec = self.users.get(&id).ok_or(RegistryError::Unknown(id))?;
        if let Some(r) = self.allocated.get(&id) {
            return Ok((*r, Vec::new()));
        }
        let region = spec.region;
        let spec = spec.clone();
        let engagements = self.networks[region.index()].arrive(spec, env)?;
        self.allocated.insert(id, region);
        Ok((region, engagements))
    }

    pub fn region_of(&self, id: UserId) -> Option<Region> {
        self.allocated.get(&id).copied()
    }

    pub fn network(&self, region: Region) -> &Matchmaker {
        &self.networks[region.index()]
    }

    pub fn network_mut(&mut self, region: Region) -> &mut Matchmaker {
        &mut self.networks[region.index()]
    }

    pub fn networks(&self) -> &[Matchmaker] {
        &self.networks
    }

    /// Flushes any partially filled drain batch in every region.
    pub fn finish(&mut self, env: &mut Env) -> Vec<Engagement> {
        self.networks
            .iter_mut()
            .flat_map(|n| n.finish(env))
            .collect()
    }

    /// Marks every party of an engagement as serving a session.
    pub fn hold(&mut self, e: &Engagement) {
        for id in parties(e) {
            *self.active.entry(id).or_default() += 1;
        }
    }

    pub fn release(&mut self, e: &Engagement) {
        for id in parties(e) {
            if let Some(n) = self.active.get_mut(&id) {
                *n -= 1;
                if *n == 0 {
                    self.active.remove(&id);
                }
            }
        }
    }

    pub fn in_session(&self, id: UserId) -> bool {
        self.active.contains_key(&id)
    }

    pub fn deregister(&mut self, id: UserId, env: &mut Env) -> Result<(), RegistryError> {
        let spec = self.users.get(&id).ok_or(RegistryError::Unknown(id))?;
        if self.in_session(id) {
            return Err(RegistryError::ActiveSession(id));
        }
        let role = spec.role;
        if let Some(region) = self.allocated.remove(&id) {
            let net = &mut self.networks[region.index()];
            match role {
                Role::Consumer => {
                    net.remove_waiting(id, env);
                }
                _ => {
                    net.remove_provider(id, env);
                }
            }
        }
        self.users.remove(&id);
        env.gas.meter_user(id, Primitive::MapDelete, 1);
        env.ledger.record(&Event::Deregistration { user_id: id });
        Ok(())
    }
}

fn parties(e: &Engagement) -> impl Iterator<Item = UserId> + '_ {
    [e.consumer, e.compute_provider]
        .into_iter()
        .chain(e.storage_providers.iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ConditionVector, Money, TimeWindow};
    use crate::gasmeter::GasTable;
    use crate::ledger::TxKind;

    fn draft(role: Role, city: u32, dollars: u64) -> UserDraft {
        UserDraft {
            role,
            region: Region(city),
            price: Money::from_dollars(dollars),
            conditions: ConditionVector::none(4).unwrap(),
            window: TimeWindow::new(0, 100).unwrap(),
            budget: if role == Role::Consumer {
                Money::from_dollars(dollars)
            } else {
                Money::ZERO
            },
        }
    }

    fn setup(cities: u32) -> (Registry, Env) {
        let mut env = Env::new(GasTable::default());
        let reg = Registry::new(cities, 4, MatchmakerConfig::default(), &mut env);
        (reg, env)
    }

    #[test]
    fn first_id_is_zero_and_gas_matches_table() {
        let (mut reg, mut env) = setup(2);
        let mut d = draft(Role::Consumer, 1, 5);
        d.price = Money::from_micros(5_400_000);
        d.budget = d.price;
        let id = reg.register(d, &mut env).unwrap();
        assert_eq!(id, UserId(0));
        let t = GasTable::default();
        assert_eq!(
            env.gas.receipt(Account::User(id)).total(),
            t.storage_write + t.map_insert
        );
        assert_eq!(reg.allocate(id, &mut env).unwrap(), Region(1));
        assert!(reg.network(Region(1)).queue().contains(id));
        assert_eq!(env.ledger.count(TxKind::Registration), 1);
    }

    #[test]
    fn invalid_and_duplicate_rejected() {
        let (mut reg, mut env) = setup(2);
        let mut d = draft(Role::Consumer, 0, 5);
        d.budget = Money::from_dollars(1);
        assert!(matches!(
            reg.register(d, &mut env),
            Err(RegistryError::Invalid(_))
        ));
        assert!(reg.register(draft(Role::Consumer, 5, 5), &mut env).is_err());
        let id = reg
            .register(draft(Role::ComputeProvider, 0, 5), &mut env)
            .unwrap();
        let spec = reg.lookup(id).unwrap().clone();
        assert!(matches!(
            reg.register_with_id(spec, &mut env),
            Err(RegistryError::Duplicate(_))
        ));
    }

    #[test]
    fn routing_and_idempotence() {
        let (mut reg, mut env) = setup(2);
        let p = reg
            .register(draft(Role::ComputeProvider, 0, 5), &mut env)
            .unwrap();
        assert_eq!(reg.allocate(p, &mut env).unwrap(), Region(0));
        assert!(reg.network(Region(0)).compute_book().contains(p));
        assert!(!reg.network(Region(1)).compute_book().contains(p));
        let gas_before = env.gas.total();
        assert_eq!(reg.allocate(p, &mut env).unwrap(), Region(0));
        assert_eq!(env.gas.total(), gas_before);
        assert_eq!(reg.network(Region(0)).compute_book().len(), 1);
        assert!(matches!(
            reg.allocate(UserId(99), &mut env),
            Err(RegistryError::Unknown(_))
        ));
    }

    #[test]
    fn deregister_flow() {
        let (mut reg, mut env) = setup(1);
        let ids: Vec<_> = (0..10)
            .map(|i| {
                let id = reg
                    .register(draft(Role::ComputeProvider, 0, 3 + i), &mut env)
                    .unwrap();
                reg.allocate(id, &mut env).unwrap();
                id
            })
            .collect();
        let before = reg.network(Region(0)).compute_book().len();
        reg.deregister(ids[4], &mut env).unwrap();
        assert!(reg.lookup(ids[4]).is_none());
        assert_eq!(reg.network(Region(0)).compute_book().len(), before - 1);
        reg.network(Region(0))
            .compute_book()
            .check_invariants()
            .unwrap();
        assert!(matches!(
            reg.deregister(ids[4], &mut env),
            Err(RegistryError::Unknown(_))
        ));

        let c = reg
            .register(draft(Role::Consumer, 0, 50), &mut env)
            .unwrap();
        let (_, engs) = reg.allocate_collect(c, &mut env).unwrap();
        assert_eq!(engs.len(), 1);
        reg.hold(&engs[0]);
        assert!(matches!(
            reg.deregister(engs[0].compute_provider, &mut env),
            Err(RegistryError::ActiveSession(_))
        ));
        reg.release(&engs[0]);
        reg.deregister(engs[0].compute_provider, &mut env).unwrap();
    }
}
