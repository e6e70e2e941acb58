//! Primitive domain types shared across the engine.
//!
//! Money is integer micro-USD, prices are integer cents on the 1..=99 grid
//! and marks are integer half-cents. Nothing in the accounting path uses
//! floating point.

use std::fmt;

use serde::{Deserialize, Serialize};

/// UTC timestamp in milliseconds.
pub type Ts = i64;

/// Integer micro-USD (1 USD = 1,000,000).
pub type Micros = i64;

/// Contract count.
pub type Qty = u64;

/// Price in whole cents, always within [`MIN_PRICE`]..=[`MAX_PRICE`].
pub type Cents = u8;

pub const MIN_PRICE: Cents = 1;
pub const MAX_PRICE: Cents = 99;

/// Micro-USD per cent of contract value.
pub const MICROS_PER_CENT: Micros = 10_000;
/// Micro-USD per half-cent.
pub const MICROS_PER_HALF_CENT: Micros = 5_000;
/// Payout of one winning contract.
pub const MICROS_PER_CONTRACT: Micros = 1_000_000;

pub fn price_in_range(p: i64) -> bool {
    (MIN_PRICE as i64..=MAX_PRICE as i64).contains(&p)
}

/// Position of an event in the replay stream: `(ts, seq)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct EventKey {
    pub ts: Ts,
    pub seq: u64,
}

impl EventKey {
    pub fn new(ts: Ts, seq: u64) -> Self {
        Self { ts, seq }
    }
}

/// A mark in half-cents (0..=200), so a 42/45 mid of 43.5c is `HalfCents(87)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HalfCents(pub u32);

impl HalfCents {
    pub fn from_cents(c: Cents) -> Self {
        HalfCents(2 * c as u32)
    }

    /// The complementary mark (NO value of a YES mark).
    pub fn complement(self) -> Self {
        HalfCents(200 - self.0)
    }

    pub fn micros_per_contract(self) -> Micros {
        self.0 as Micros * MICROS_PER_HALF_CENT
    }
}

impl fmt::Display for HalfCents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(2) {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}.5", self.0 / 2)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Yes,
    No,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Yes => Side::No,
            Side::No => Side::Yes,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Yes => "yes",
            Side::No => "no",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Buy,
    Sell,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Buy => "buy",
            Direction::Sell => "sell",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderType {
    Market,
    Limit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeInForce {
    Ioc,
    Gtc,
    PostOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Liquidity {
    Maker,
    Taker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    TakerOnly,
    #[default]
    MakerTaker,
}

impl ExecutionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecutionMode::TakerOnly => "taker_only",
            ExecutionMode::MakerTaker => "maker_taker",
        }
    }
}

impl std::str::FromStr for ExecutionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "taker_only" => Ok(ExecutionMode::TakerOnly),
            "maker_taker" => Ok(ExecutionMode::MakerTaker),
            other => Err(format!("unknown execution mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MakerQueueMode {
    #[default]
    TradeOnly,
}

/// Settlement result of a binary contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "YES")]
    Yes,
    #[serde(rename = "NO")]
    No,
}

impl Outcome {
    pub fn winning_side(self) -> Side {
        match self {
            Outcome::Yes => Side::Yes,
            Outcome::No => Side::No,
        }
    }
}

/// One of the two stored sides of a binary book.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BookSide {
    YesBid,
    NoBid,
}

impl BookSide {
    /// The stored side holding bids for `side`.
    pub fn bids_of(side: Side) -> BookSide {
        match side {
            Side::Yes => BookSide::YesBid,
            Side::No => BookSide::NoBid,
        }
    }
}

/// Formats `num / den` as a decimal string with `dp` places, rounding half
/// away from zero. `den` must be non-zero.
pub fn format_ratio(num: i128, den: i128, dp: u32) -> String {
    assert!(den != 0, "zero denominator");
    let negative = (num < 0) != (den < 0) && num != 0;
    let (n, d) = (num.unsigned_abs(), den.unsigned_abs());
    let scale = 10u128.pow(dp);
    let scaled = n * scale;
    let mut q = scaled / d;
    if (scaled % d) * 2 >= d {
        q += 1;
    }
    let int = q / scale;
    let frac = q % scale;
    let sign = if negative && q != 0 { "-" } else { "" };
    if dp == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac:0width$}", width = dp as usize)
    }
}

/// Formats micro-USD as dollars with all six decimals.
pub fn format_usd(micros: Micros) -> String {
    format_ratio(micros as i128, MICROS_PER_CONTRACT as i128, 6)
}
