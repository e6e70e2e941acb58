//! Benchmark fixtures.

use pmbench_core::episode::{BookSnapshot, Episode};
use pmbench_core::orderbook::Book;
use pmbench_core::synth::{generate_synthetic, SynthConfig};
use pmbench_core::types::EventKey;

/// A book with `levels` price levels per side, `depth` contracts each,
/// YES bids from 49c down and NO bids from 49c down.
pub fn deep_book(levels: u8, depth: u64) -> Book {
    let snap = BookSnapshot {
        yes_bids: (0..levels).map(|i| (49 - i, depth)).collect(),
        no_bids: (0..levels).map(|i| (49 - i, depth)).collect(),
    };
    let mut book = Book::new("BENCH");
    book.apply_snapshot(&snap, EventKey::new(0, 0)).expect("uncrossed");
    book
}

/// A synthetic episode `hours` long with default market parameters.
pub fn episode(seed: u64, hours: u64) -> Episode {
    generate_synthetic(&SynthConfig { seed, duration_s: hours * 3600, ..SynthConfig::default() }).expect("valid config")
}
