//! Order execution against replayed liquidity.
//!
//! Takers walk a local copy of the displayed depth, best price first. Makers
//! rest behind the displayed volume at their price and, in `trade_only` queue
//! mode, are filled exclusively by later trade prints at or through their
//! limit. Every fill pays the quadratic fee
//! `rate * p * (1 - p)` per contract, rounded half up per fill in micro-USD.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{BookDelta, BookSnapshot, TradePrint};
use crate::orderbook::Book;
use crate::types::{
    price_in_range, BookSide, Cents, Direction, EventKey, ExecutionMode, HalfCents, Liquidity, Micros,
    OrderType, Qty, Side, TimeInForce, Ts, MICROS_PER_CENT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeeModel {
    pub taker_rate_bp: u32,
    pub maker_rate_bp: u32,
}

impl Default for FeeModel {
    fn default() -> Self {
        Self { taker_rate_bp: 700, maker_rate_bp: 175 }
    }
}

impl FeeModel {
    pub fn rate_bp(&self, liquidity: Liquidity) -> u32 {
        match liquidity {
            Liquidity::Taker => self.taker_rate_bp,
            Liquidity::Maker => self.maker_rate_bp,
        }
    }

    /// Fee for one fill in micro-USD:
    /// `round_half_up(rate_bp * price * (100 - price) * qty / 100)`.
    pub fn fee(&self, liquidity: Liquidity, price: Cents, qty: Qty) -> Micros {
        debug_assert!(price_in_range(price as i64));
        let p = price as u128;
        let exact_x100 = self.rate_bp(liquidity) as u128 * p * (100 - p) * qty as u128;
        ((exact_x100 + 50) / 100) as Micros
    }

    /// Per-contract fee rounded up. `qty * fee_ceil_per_contract` bounds the
    /// rounded fee of any split of `qty` into fills at this price.
    pub fn fee_ceil_per_contract(&self, liquidity: Liquidity, price: Cents) -> Micros {
        let p = price as u128;
        let exact_x100 = self.rate_bp(liquidity) as u128 * p * (100 - p);
        exact_x100.div_ceil(100) as Micros
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderSpec {
    pub ticker: String,
    pub side: Side,
    pub direction: Direction,
    pub order_type: OrderType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_price: Option<Cents>,
    pub quantity: Qty,
    pub tif: TimeInForce,
}

impl OrderSpec {
    pub fn market(ticker: impl Into<String>, side: Side, direction: Direction, quantity: Qty) -> Self {
        Self {
            ticker: ticker.into(),
            side,
            direction,
            order_type: OrderType::Market,
            limit_price: None,
            quantity,
            tif: TimeInForce::Ioc,
        }
    }

    pub fn limit(
        ticker: impl Into<String>,
        side: Side,
        direction: Direction,
        price: Cents,
        quantity: Qty,
        tif: TimeInForce,
    ) -> Self {
        Self {
            ticker: ticker.into(),
            side,
            direction,
            order_type: OrderType::Limit,
            limit_price: Some(price),
            quantity,
            tif,
        }
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        if self.quantity == 0 {
            return Err(ExecError::InvalidSpec("quantity must be at least 1".into()));
        }
        match self.order_type {
            OrderType::Limit => match self.limit_price {
                None => Err(ExecError::InvalidSpec("limit order requires limit_price".into())),
                Some(p) if !price_in_range(p as i64) => {
                    Err(ExecError::InvalidSpec(format!("limit_price {p} outside 1..=99")))
                }
                Some(_) => Ok(()),
            },
            OrderType::Market => {
                if self.limit_price.is_some() {
                    Err(ExecError::InvalidSpec("market order must not carry limit_price".into()))
                } else if self.tif != TimeInForce::Ioc {
                    Err(ExecError::InvalidSpec("market orders are IOC only".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Stored book side this order consumes when it takes liquidity.
    pub fn taker_source(&self) -> BookSide {
        match (self.direction, self.side) {
            (Direction::Buy, Side::Yes) | (Direction::Sell, Side::No) => BookSide::NoBid,
            (Direction::Buy, Side::No) | (Direction::Sell, Side::Yes) => BookSide::YesBid,
        }
    }

    /// Execution price, in this order's side, of a stored level at `level`.
    pub fn exec_price(&self, level: Cents) -> Cents {
        match self.direction {
            Direction::Buy => 100 - level,
            Direction::Sell => level,
        }
    }

    /// Whether a price in this order's side satisfies its limit.
    pub fn accepts(&self, price: Cents) -> bool {
        match (self.limit_price, self.direction) {
            (None, _) => true,
            (Some(l), Direction::Buy) => price <= l,
            (Some(l), Direction::Sell) => price >= l,
        }
    }

    /// Stored level whose displayed count a resting order at `limit` queues
    /// behind.
    pub fn queue_level(&self, limit: Cents) -> (BookSide, Cents) {
        match self.direction {
            Direction::Buy => (BookSide::bids_of(self.side), limit),
            // A resting sell of `side` at `l` is an ask, i.e. a bid on the
            // other side at 100 - l.
            Direction::Sell => (BookSide::bids_of(self.side.opposite()), 100 - limit),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("invalid order: {0}")]
    InvalidSpec(String),
    #[error("time-in-force {0:?} unsupported in {1:?} mode")]
    UnsupportedTif(TimeInForce, ExecutionMode),
    #[error("post-only order would cross")]
    WouldCross,
    #[error("unknown ticker {0:?}")]
    UnknownTicker(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CancelError {
    #[error("unknown order {0}")]
    UnknownOrder(u64),
    #[error("order {0} is no longer resting")]
    AlreadyFilled(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fill {
    pub order_id: u64,
    pub ticker: String,
    pub side: Side,
    pub direction: Direction,
    pub price: Cents,
    pub quantity: Qty,
    pub liquidity: Liquidity,
    pub fee: Micros,
    pub ts: Ts,
    pub mid_at_submit: Option<HalfCents>,
}

impl Fill {
    /// Contract notional `price * qty` in micro-USD, fee excluded.
    pub fn notional(&self) -> Micros {
        self.price as Micros * self.quantity as Micros * MICROS_PER_CENT
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestingOrder {
    pub order_id: u64,
    pub spec: OrderSpec,
    pub remaining: Qty,
    pub queue_ahead: Qty,
    pub placed_at: EventKey,
    pub mid_at_submit: Option<HalfCents>,
}

impl RestingOrder {
    pub fn limit(&self) -> Cents {
        self.spec.limit_price.expect("resting orders are limits")
    }
}

/// One level consumed by a taker walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TakerFill {
    pub price: Cents,
    pub quantity: Qty,
    pub fee: Micros,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TakerMatch {
    pub fills: Vec<TakerFill>,
    pub remainder: Qty,
    /// Market order found nothing to trade against.
    pub no_liquidity: bool,
}

/// Walks the displayed depth opposing `spec`, best price first, up to its
/// limit, decrementing the consumed levels of `book`.
pub fn match_taker(book: &mut Book, spec: &OrderSpec, fees: &FeeModel) -> TakerMatch {
    let source = spec.taker_source();
    let levels = match source {
        BookSide::YesBid => &mut book.yes_bids,
        BookSide::NoBid => &mut book.no_bids,
    };
    let mut remaining = spec.quantity;
    let mut fills = Vec::new();
    // For both buys and sells the best level is the highest stored bid.
    for (&level, count) in levels.iter_mut().rev() {
        if remaining == 0 {
            break;
        }
        let price = spec.exec_price(level);
        if !spec.accepts(price) {
            break;
        }
        let take = remaining.min(*count);
        *count -= take;
        remaining -= take;
        fills.push(TakerFill { price, quantity: take, fee: fees.fee(Liquidity::Taker, price, take) });
    }
    levels.retain(|_, c| *c > 0);
    TakerMatch {
        no_liquidity: fills.is_empty() && spec.order_type == OrderType::Market,
        fills,
        remainder: remaining,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderAck {
    pub order_id: u64,
    pub immediate_fills: Vec<Fill>,
    pub resting: Option<RestingOrder>,
    /// Quantity canceled at placement (IOC remainder).
    pub canceled: Qty,
    pub no_liquidity: bool,
}

impl OrderAck {
    pub fn filled(&self) -> Qty {
        self.immediate_fills.iter().map(|f| f.quantity).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CancelAck {
    pub order_id: u64,
    pub canceled: Qty,
}

/// Matching state for one episode: local depth copies, resting orders and
/// the order id counter.
#[derive(Debug, Clone)]
pub struct ExecutionEngine {
    mode: ExecutionMode,
    fees: FeeModel,
    next_order_id: u64,
    local: BTreeMap<String, Book>,
    // Keyed by order id, which is also time priority.
    resting: BTreeMap<u64, RestingOrder>,
}

impl ExecutionEngine {
    pub fn new(mode: ExecutionMode, fees: FeeModel) -> Self {
        Self { mode, fees, next_order_id: 1, local: BTreeMap::new(), resting: BTreeMap::new() }
    }

    pub fn mode(&self) -> ExecutionMode {
        self.mode
    }

    pub fn fees(&self) -> &FeeModel {
        &self.fees
    }

    /// Local (agent-consumable) depth for `ticker`.
    pub fn local_book(&self, ticker: &str) -> Option<&Book> {
        self.local.get(ticker)
    }

    pub fn ensure_ticker(&mut self, ticker: &str) {
        self.local.entry(ticker.to_string()).or_insert_with(|| Book::new(ticker));
    }

    /// Refreshes the local copy from an accepted snapshot.
    pub fn sync_snapshot(&mut self, ticker: &str, snap: &BookSnapshot, at: EventKey) {
        let book = self.local.entry(ticker.to_string()).or_insert_with(|| Book::new(ticker));
        let _ = book.apply_snapshot(snap, at);
    }

    /// Mirrors an accepted delta onto the local copy.
    pub fn sync_delta(&mut self, ticker: &str, delta: &BookDelta, at: EventKey) {
        let book = self.local.entry(ticker.to_string()).or_insert_with(|| Book::new(ticker));
        let _ = book.apply_delta(delta, at);
    }

    pub fn resting_orders(&self) -> impl Iterator<Item = &RestingOrder> {
        self.resting.values()
    }

    pub fn resting_order(&self, order_id: u64) -> Option<&RestingOrder> {
        self.resting.get(&order_id)
    }

    /// Taker walk on a scratch copy of the local book; nothing is consumed.
    pub fn preview_taker(&self, spec: &OrderSpec) -> TakerMatch {
        match self.local.get(&spec.ticker) {
            Some(book) => match_taker(&mut book.clone(), spec, &self.fees),
            None => TakerMatch { fills: vec![], remainder: spec.quantity, no_liquidity: spec.order_type == OrderType::Market },
        }
    }

    /// Validates `spec` against the mode without mutating anything.
    pub fn check(&self, spec: &OrderSpec) -> Result<(), ExecError> {
        spec.validate()?;
        if !self.local.contains_key(&spec.ticker) {
            return Err(ExecError::UnknownTicker(spec.ticker.clone()));
        }
        if self.mode == ExecutionMode::TakerOnly && spec.tif != TimeInForce::Ioc {
            return Err(ExecError::UnsupportedTif(spec.tif, self.mode));
        }
        if spec.tif == TimeInForce::PostOnly && !self.preview_taker(spec).fills.is_empty() {
            return Err(ExecError::WouldCross);
        }
        Ok(())
    }

    /// Places an order: the crossing part trades immediately as taker, an IOC
    /// remainder is canceled, a GTC or post-only remainder rests.
    pub fn place(&mut self, spec: OrderSpec, now: EventKey, mid_at_submit: Option<HalfCents>) -> Result<OrderAck, ExecError> {
        self.check(&spec)?;
        let order_id = self.next_order_id;
        self.next_order_id += 1;

        let book = self.local.get_mut(&spec.ticker).expect("checked");
        let m = match_taker(book, &spec, &self.fees);
        let immediate_fills = m
            .fills
            .iter()
            .map(|f| Fill {
                order_id,
                ticker: spec.ticker.clone(),
                side: spec.side,
                direction: spec.direction,
                price: f.price,
                quantity: f.quantity,
                liquidity: Liquidity::Taker,
                fee: f.fee,
                ts: now.ts,
                mid_at_submit,
            })
            .collect();

        let mut ack = OrderAck { order_id, immediate_fills, resting: None, canceled: 0, no_liquidity: m.no_liquidity };
        if m.remainder == 0 {
            return Ok(ack);
        }
        match spec.tif {
            TimeInForce::Ioc => ack.canceled = m.remainder,
            TimeInForce::Gtc | TimeInForce::PostOnly => {
                let limit = spec.limit_price.expect("validated limit");
                let (side, level) = spec.queue_level(limit);
                let queue_ahead = book.depth(side, level);
                let order = RestingOrder { order_id, spec, remaining: m.remainder, queue_ahead, placed_at: now, mid_at_submit };
                self.resting.insert(order_id, order.clone());
                ack.resting = Some(order);
            }
        }
        Ok(ack)
    }

    /// Advances maker queues with a public print and returns maker fills.
    pub fn on_trade_print(&mut self, ticker: &str, print: &TradePrint, ts: Ts) -> Vec<Fill> {
        let mut fills = Vec::new();
        let mut used: Qty = 0;
        let mut done = Vec::new();
        for order in self.resting.values_mut().filter(|o| o.spec.ticker == ticker) {
            let print_price = match order.spec.side {
                Side::Yes => print.price,
                Side::No => 100 - print.price,
            };
            // Buyers trade on prints at or below their limit, sellers at or above.
            let through = match order.spec.direction {
                Direction::Buy => print_price <= order.limit(),
                Direction::Sell => print_price >= order.limit(),
            };
            if !through {
                continue;
            }
            let absorbed = order.queue_ahead.min(print.count);
            order.queue_ahead -= absorbed;
            let residual = print.count - absorbed;
            let qty = residual.min(order.remaining).min(print.count - used);
            if qty == 0 {
                continue;
            }
            used += qty;
            order.remaining -= qty;
            let price = order.limit();
            fills.push(Fill {
                order_id: order.order_id,
                ticker: ticker.to_string(),
                side: order.spec.side,
                direction: order.spec.direction,
                price,
                quantity: qty,
                liquidity: Liquidity::Maker,
                fee: self.fees.fee(Liquidity::Maker, price, qty),
                ts,
                mid_at_submit: order.mid_at_submit,
            });
            if order.remaining == 0 {
                done.push(order.order_id);
            }
        }
        for id in done {
            self.resting.remove(&id);
        }
        fills
    }

    pub fn cancel(&mut self, order_id: u64) -> Result<CancelAck, CancelError> {
        match self.resting.remove(&order_id) {
            Some(o) => Ok(CancelAck { order_id, canceled: o.remaining }),
            None if order_id >= 1 && order_id < self.next_order_id => Err(CancelError::AlreadyFilled(order_id)),
            None => Err(CancelError::UnknownOrder(order_id)),
        }
    }

    /// Cancels every resting order, or only those of `ticker`.
    pub fn cancel_all(&mut self, ticker: Option<&str>) -> Vec<CancelAck> {
        let ids: Vec<u64> = self
            .resting
            .values()
            .filter(|o| ticker.is_none_or(|t| o.spec.ticker == t))
            .map(|o| o.order_id)
            .collect();
        ids.into_iter().filter_map(|id| self.cancel(id).ok()).collect()
    }
}
