//! Displayed depth for binary contracts.
//!
//! Only YES bids and NO bids are stored. A YES ask at `p` is a NO bid at
//! `100 - p`, so asks are always derived.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::episode::{BookDelta, BookSnapshot};
use crate::types::{BookSide, Cents, EventKey, HalfCents, Qty};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BookError {
    #[error("crossed snapshot: best YES bid {yes_bid} >= derived YES ask {yes_ask}")]
    CrossedSnapshot { yes_bid: Cents, yes_ask: Cents },
    #[error("delta would cross the book at {side:?} {price}")]
    CrossedDelta { side: BookSide, price: Cents },
}

/// Emitted when a delta would take a level below zero; the level is clamped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeDepth {
    pub side: BookSide,
    pub price: Cents,
    pub had: Qty,
    pub delta: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Quotes {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub yes_bid: Option<Cents>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bid_size: Option<Qty>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub yes_ask: Option<Cents>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ask_size: Option<Qty>,
}

impl Quotes {
    pub fn mid(&self) -> Option<HalfCents> {
        Some(HalfCents(self.yes_bid? as u32 + self.yes_ask? as u32))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Book {
    pub ticker: String,
    pub yes_bids: BTreeMap<Cents, Qty>,
    pub no_bids: BTreeMap<Cents, Qty>,
    pub last_trade_price: Option<Cents>,
    pub last_update: Option<EventKey>,
}

impl Book {
    pub fn new(ticker: impl Into<String>) -> Self {
        Self { ticker: ticker.into(), ..Default::default() }
    }

    pub fn levels(&self, side: BookSide) -> &BTreeMap<Cents, Qty> {
        match side {
            BookSide::YesBid => &self.yes_bids,
            BookSide::NoBid => &self.no_bids,
        }
    }

    fn levels_mut(&mut self, side: BookSide) -> &mut BTreeMap<Cents, Qty> {
        match side {
            BookSide::YesBid => &mut self.yes_bids,
            BookSide::NoBid => &mut self.no_bids,
        }
    }

    pub fn depth(&self, side: BookSide, price: Cents) -> Qty {
        self.levels(side).get(&price).copied().unwrap_or(0)
    }

    pub fn total_depth(&self) -> Qty {
        self.yes_bids.values().chain(self.no_bids.values()).sum()
    }

    /// Replaces the whole book. A crossed snapshot leaves the book untouched.
    pub fn apply_snapshot(&mut self, snap: &BookSnapshot, at: EventKey) -> Result<(), BookError> {
        let best_yes = snap.yes_bids.iter().map(|l| l.0).max();
        let best_no = snap.no_bids.iter().map(|l| l.0).max();
        if let (Some(y), Some(n)) = (best_yes, best_no) {
            if y as u32 + n as u32 >= 100 {
                return Err(BookError::CrossedSnapshot { yes_bid: y, yes_ask: 100 - n });
            }
        }
        self.yes_bids = snap.yes_bids.iter().copied().filter(|l| l.1 > 0).collect();
        self.no_bids = snap.no_bids.iter().copied().filter(|l| l.1 > 0).collect();
        self.last_update = Some(at);
        Ok(())
    }

    /// Adds a signed count change at one level.
    ///
    /// Returns `Ok(Some(_))` when the level was clamped at zero, and
    /// `Err(CrossedDelta)` (book untouched) when an increase would put the
    /// level through the opposite side.
    pub fn apply_delta(&mut self, delta: &BookDelta, at: EventKey) -> Result<Option<NegativeDepth>, BookError> {
        if delta.delta > 0 {
            let opposite = match delta.side {
                BookSide::YesBid => BookSide::NoBid,
                BookSide::NoBid => BookSide::YesBid,
            };
            if let Some(&best_opp) = self.levels(opposite).keys().next_back() {
                if delta.price as u32 + best_opp as u32 >= 100 {
                    return Err(BookError::CrossedDelta { side: delta.side, price: delta.price });
                }
            }
        }
        let levels = self.levels_mut(delta.side);
        let had = levels.get(&delta.price).copied().unwrap_or(0);
        let next = had as i128 + delta.delta as i128;
        let warning = (next < 0).then_some(NegativeDepth { side: delta.side, price: delta.price, had, delta: delta.delta });
        let next = next.clamp(0, Qty::MAX as i128) as Qty;
        if next == 0 {
            levels.remove(&delta.price);
        } else {
            levels.insert(delta.price, next);
        }
        self.last_update = Some(at);
        Ok(warning)
    }

    pub fn record_trade(&mut self, price: Cents, at: EventKey) {
        self.last_trade_price = Some(price);
        self.last_update = Some(at);
    }

    pub fn best_quotes(&self) -> Quotes {
        let bid = self.yes_bids.iter().next_back();
        let no = self.no_bids.iter().next_back();
        Quotes {
            yes_bid: bid.map(|l| *l.0),
            bid_size: bid.map(|l| *l.1),
            yes_ask: no.map(|l| 100 - *l.0),
            ask_size: no.map(|l| *l.1),
        }
    }

    /// Mid of the best quotes, falling back to the last trade.
    pub fn mark_price(&self) -> Option<HalfCents> {
        self.best_quotes()
            .mid()
            .or_else(|| self.last_trade_price.map(HalfCents::from_cents))
    }

    /// YES asks as `(price, size)`, best (lowest) first.
    pub fn yes_asks(&self) -> impl Iterator<Item = (Cents, Qty)> + '_ {
        self.no_bids.iter().rev().map(|(p, q)| (100 - p, *q))
    }
}
