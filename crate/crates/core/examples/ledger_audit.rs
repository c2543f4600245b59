//! Runs one round, exports its ledger, audits it, then flips one byte and
//! audits again.
//!
//! cargo run --example ledger_audit

use edgemarket::harness::{run_round, ScenarioConfig};
use edgemarket::ledger::{Ledger, TxKind};

fn main() -> Result<(), edgemarket::Error> {
    let cfg = ScenarioConfig {
        users_per_role: 40,
        seed: 3,
        ..ScenarioConfig::default()
    };
    let round = run_round(&cfg, 0)?;
    let ledger = &round.ledger;
    for kind in TxKind::ALL {
        println!("{kind:?}: {}", ledger.count(kind));
    }
    println!(
        "head {} over {} entries; audit passed: {}",
        ledger.head().to_hex(),
        ledger.len(),
        round.audit()
    );

    let mut bytes = ledger.export();
    let copy = Ledger::import(&bytes)?;
    println!("re-imported copy verifies: {}", copy.verify_chain());
    let at = bytes.len() / 3;
    bytes[at] ^= 0x01;
    match Ledger::import(&bytes) {
        Ok(l) => println!("byte {at} flipped: chain verifies: {}", l.verify_chain()),
        Err(e) => println!("byte {at} flipped: import refused: {e}"),
    }
    Ok(())
}
