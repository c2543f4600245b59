//! A single region: providers join the book, consumers match or wait, and a
//! late provider drains the queue.
//!
//! cargo run --example matching

use edgemarket::domain::{ConditionVector, Money, Region, Role, TimeWindow, UserId, UserSpec};
use edgemarket::matchmaker::{Matchmaker, MatchmakerConfig};
use edgemarket::Env;

fn user(id: u64, role: Role, micros: u64, mask: u64, start: u64) -> UserSpec {
    UserSpec {
        id: UserId(id),
        role,
        region: Region(0),
        price: Money::from_micros(micros),
        conditions: ConditionVector::from_mask(mask, 4).unwrap(),
        window: TimeWindow::new(start, start + 100).unwrap(),
        budget: if role == Role::Consumer {
            Money::from_micros(micros)
        } else {
            Money::ZERO
        },
    }
}

fn main() -> Result<(), edgemarket::Error> {
    let mut env = Env::default();
    let mut mm = Matchmaker::new(Region(0), MatchmakerConfig::default());
    let arrivals = [
        user(0, Role::StorageProvider, 2_000_000, 0b1111, 0),
        user(1, Role::StorageProvider, 4_000_000, 0b0011, 10),
        user(2, Role::ComputeProvider, 3_000_000, 0b0001, 0),
        user(3, Role::ComputeProvider, 6_000_000, 0b1111, 5),
        // Needs bit 1, which the cheap provider lacks: takes the $6 one.
        user(4, Role::Consumer, 7_000_000, 0b0010, 0),
        // Nothing left within $2.50: waits.
        user(5, Role::Consumer, 2_500_000, 0b0000, 0),
        // Window starts at 60, covers only 40% of the waiting consumer's.
        user(6, Role::ComputeProvider, 1_000_000, 0b1111, 60),
        // Covers 80% and fits the bid: drains the queue. Only one storage
        // provider is cheap enough, so the engagement records a shortfall.
        user(7, Role::ComputeProvider, 2_200_000, 0b0000, 20),
    ];
    for u in arrivals {
        let (id, role) = (u.id, u.role);
        let tick = mm.clock();
        for e in mm.arrive(u, &mut env)? {
            println!(
                "tick {tick}: consumer {} <- compute {} at {} (storage {:?}, shortfall {}, waited {} ticks, {} comparisons)",
                e.consumer,
                e.compute_provider,
                e.charge,
                e.storage_providers,
                e.storage_shortfall,
                e.latency_ticks,
                e.comparisons_used
            );
        }
        if mm.queue().contains(id) {
            println!("tick {tick}: {id} ({role:?}) queued");
        }
    }
    println!(
        "book: {} compute, {} storage, {} waiting; {} ledger entries",
        mm.compute_book().len(),
        mm.storage_book().len(),
        mm.queue().len(),
        env.ledger.len()
    );
    for r in mm.search_log() {
        println!(
            "search over {} providers: {} descents, {} comparisons (per-descent max {} <= bound {})",
            r.book_size, r.descents, r.comparisons, r.max_descent, r.descent_bound()
        );
    }
    Ok(())
}
