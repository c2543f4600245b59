//! One session through the escrow: deposit, key exchange, signed DHT,
//! verification, tick payments and checkout. A second session with a forged
//! DHT signature aborts with a full refund.
//!
//! cargo run --example escrow_session

use edgemarket::domain::{Money, UserId};
use edgemarket::escrow::{Escrow, SessionTerms, StartOutcome, TickOutcome};
use edgemarket::gasmeter::Account;
use edgemarket::vault::{sign_dht, CryptoScheme, Dht, KeySeed, ToyScheme};
use edgemarket::Env;

fn terms(consumer: u64) -> SessionTerms {
    SessionTerms {
        consumer: UserId(consumer),
        compute_provider: UserId(100 + consumer),
        storage_providers: vec![UserId(200), UserId(201)],
        compute_rate: Money::from_dollars(1),
        storage_rate: Money::from_micros(200_000),
        deposit: Money::from_micros(5_500_000),
    }
}

fn main() -> Result<(), edgemarket::Error> {
    let scheme = ToyScheme;
    let key = scheme.keygen(KeySeed::Deterministic(42))?;
    let mut dht = Dht::new();
    dht.insert(0, vec![UserId(200), UserId(201)])?;
    dht.insert(1, vec![UserId(201), UserId(200)])?;
    let mut env = Env::default();
    let mut escrow = Escrow::default();

    let id = escrow.open_session(terms(1), &mut env)?;
    escrow.record_key_exchange(id, key.public.clone(), &mut env)?;
    escrow.record_distribution(id, sign_dht(&scheme, &dht, &key)?, &mut env)?;
    assert_eq!(
        escrow.verify_and_start(id, &scheme, &mut env)?,
        StartOutcome::Started
    );
    for _ in 0..2 {
        if let TickOutcome::Continue { remaining } = escrow.tick(id, &mut env)? {
            println!("tick paid, {remaining} left");
        }
    }
    let s = escrow.checkout(id, &mut env)?;
    println!(
        "checkout after {} ticks: compute {}, storage {:?}, refund {}",
        s.ticks, s.compute, s.storage, s.refund
    );

    let forged = escrow.open_session(terms(2), &mut env)?;
    escrow.record_key_exchange(forged, key.public.clone(), &mut env)?;
    let mut signed = sign_dht(&scheme, &dht, &key)?;
    signed.signature[0] ^= 1;
    escrow.record_distribution(forged, signed, &mut env)?;
    if let StartOutcome::Aborted(s) = escrow.verify_and_start(forged, &scheme, &mut env)? {
        println!(
            "forged DHT rejected: refund {} of {}",
            s.refund,
            terms(2).deposit
        );
    }

    for who in [UserId(1), UserId(101)] {
        let r = env.gas.receipt(Account::User(who));
        println!("gas for {who}: {} {:?}", r.total(), r.breakdown());
    }
    println!(
        "chain of {} entries verifies: {}",
        env.ledger.len(),
        env.ledger.verify_chain()
    );
    Ok(())
}
