//! The tool surface agents see during a decision step.
//!
//! An [`AgentContext`] is created per step and borrows the simulator world.
//! Every tool except `done` is charged against the step's call budget;
//! actions take effect immediately and later reads in the same step see them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::execution::{CancelAck, CancelError, ExecError, OrderAck, OrderSpec};
use crate::portfolio::PortfolioError;
use crate::simulator::{OrderError, TickerStatus, World};
use crate::types::{Cents, Direction, ExecutionMode, Liquidity, Micros, Qty, Side, Ts};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("agent failed: {0}")]
    Failed(String),
    #[error("agent process crashed: {0}")]
    Crashed(String),
    #[error("agent timed out after {0} ms")]
    Timeout(u64),
    #[error("agent protocol error: {0}")]
    Protocol(String),
}

/// Static facts handed to an agent before the first step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeInfo {
    pub episode_id: String,
    pub tickers: Vec<String>,
    pub bankroll: Micros,
    pub start_ts: Ts,
    pub end_ts: Ts,
    pub execution_mode: ExecutionMode,
    pub cadence_s: u64,
    pub max_tool_calls: u32,
    pub rng_seed: u64,
}

pub trait Agent {
    fn name(&self) -> &str;

    fn begin_episode(&mut self, _info: &EpisodeInfo) -> Result<(), AgentError> {
        Ok(())
    }

    /// One decision step. Returning `Err` aborts the episode.
    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), AgentError>;

    fn end_episode(&mut self) {}

    /// True when the run depended on wall-clock behavior (e.g. a timeout).
    fn non_reproducible(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ToolError {
    #[error("tool budget of {0} calls exhausted for this step")]
    BudgetExhausted(u32),
    #[error("no step in progress")]
    NotInStep,
    #[error("unknown ticker {0:?}")]
    UnknownTicker(String),
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("invalid arguments: {0}")]
    InvalidArguments(String),
    #[error(transparent)]
    Order(#[from] OrderError),
}

impl ToolError {
    /// Stable error code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            ToolError::BudgetExhausted(_) => "BudgetExhausted",
            ToolError::NotInStep => "NotInStep",
            ToolError::UnknownTicker(_) => "UnknownTicker",
            ToolError::UnknownTool(_) => "UnknownTool",
            ToolError::InvalidArguments(_) => "InvalidArguments",
            ToolError::Order(e) => match e {
                OrderError::Exec(ExecError::InvalidSpec(_)) => "InvalidSpec",
                OrderError::Exec(ExecError::UnsupportedTif(..)) => "UnsupportedTif",
                OrderError::Exec(ExecError::WouldCross) => "WouldCross",
                OrderError::Exec(ExecError::UnknownTicker(_)) => "UnknownTicker",
                OrderError::Cancel(CancelError::UnknownOrder(_)) => "UnknownOrder",
                OrderError::Cancel(CancelError::AlreadyFilled(_)) => "AlreadyFilled",
                OrderError::Portfolio(PortfolioError::InsufficientFunds { .. }) => "InsufficientFunds",
                OrderError::Portfolio(PortfolioError::InsufficientPosition { .. }) => "InsufficientPosition",
                OrderError::Portfolio(PortfolioError::UnknownTicker(_)) => "UnknownTicker",
                OrderError::MarketClosed(_) => "MarketClosed",
            },
        }
    }
}

/// A tool invocation in wire form: a name plus a JSON argument object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToolCall {
    GetMarkets,
    GetOrderbook { ticker: String, depth: Option<usize> },
    GetPositions,
    GetOrders,
    PlaceOrder(OrderSpec),
    CancelOrder { order_id: u64 },
    Done,
}

impl ToolCall {
    pub fn name(&self) -> &'static str {
        match self {
            ToolCall::GetMarkets => "get_markets",
            ToolCall::GetOrderbook { .. } => "get_orderbook",
            ToolCall::GetPositions => "get_positions",
            ToolCall::GetOrders => "get_orders",
            ToolCall::PlaceOrder(_) => "place_order",
            ToolCall::CancelOrder { .. } => "cancel_order",
            ToolCall::Done => "done",
        }
    }

    pub fn args(&self) -> Value {
        match self {
            ToolCall::GetOrderbook { ticker, depth } => match depth {
                Some(d) => json!({ "ticker": ticker, "depth": d }),
                None => json!({ "ticker": ticker }),
            },
            ToolCall::PlaceOrder(spec) => serde_json::to_value(spec).expect("serializable"),
            ToolCall::CancelOrder { order_id } => json!({ "order_id": order_id }),
            _ => json!({}),
        }
    }

    pub fn from_wire(tool: &str, args: &Value) -> Result<ToolCall, ToolError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct BookArgs {
            ticker: String,
            #[serde(default)]
            depth: Option<usize>,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct CancelArgs {
            order_id: u64,
        }
        let args = if args.is_null() { json!({}) } else { args.clone() };
        let bad = |e: serde_json::Error| ToolError::InvalidArguments(e.to_string());
        Ok(match tool {
            "get_markets" => ToolCall::GetMarkets,
            "get_positions" => ToolCall::GetPositions,
            "get_orders" => ToolCall::GetOrders,
            "done" => ToolCall::Done,
            "get_orderbook" => {
                let a: BookArgs = serde_json::from_value(args).map_err(bad)?;
                ToolCall::GetOrderbook { ticker: a.ticker, depth: a.depth }
            }
            "place_order" => ToolCall::PlaceOrder(serde_json::from_value(args).map_err(bad)?),
            "cancel_order" => {
                let a: CancelArgs = serde_json::from_value(args).map_err(bad)?;
                ToolCall::CancelOrder { order_id: a.order_id }
            }
            other => return Err(ToolError::UnknownTool(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketSummary {
    pub ticker: String,
    pub status: TickerStatus,
    pub yes_bid: Option<Cents>,
    pub bid_size: Option<Qty>,
    pub yes_ask: Option<Cents>,
    pub ask_size: Option<Qty>,
    pub last_price: Option<Cents>,
    pub time_to_settlement_s: i64,
}

/// Depth-limited book; bids best first, asks derived from the opposite bids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderbookView {
    pub ticker: String,
    pub yes_bids: Vec<(Cents, Qty)>,
    pub no_bids: Vec<(Cents, Qty)>,
    pub yes_asks: Vec<(Cents, Qty)>,
    pub no_asks: Vec<(Cents, Qty)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionView {
    pub ticker: String,
    pub yes_qty: Qty,
    pub no_qty: Qty,
    pub yes_cost: Micros,
    pub no_cost: Micros,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionsView {
    pub cash: Micros,
    pub available_cash: Micros,
    pub equity: Micros,
    pub realized_pnl: Micros,
    pub fees_paid: Micros,
    pub positions: Vec<PositionView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenOrder {
    pub order_id: u64,
    pub ticker: String,
    pub side: Side,
    pub direction: Direction,
    pub limit_price: Cents,
    pub remaining: Qty,
    pub queue_ahead: Qty,
    pub placed_ts: Ts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillView {
    pub price: Cents,
    pub quantity: Qty,
    pub fee: Micros,
    pub liquidity: Liquidity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderAckView {
    pub order_id: u64,
    pub filled: Qty,
    pub fills: Vec<FillView>,
    pub resting: bool,
    pub remaining: Qty,
    pub queue_ahead: Option<Qty>,
    pub canceled: Qty,
    pub no_liquidity: bool,
}

impl From<&OrderAck> for OrderAckView {
    fn from(a: &OrderAck) -> Self {
        OrderAckView {
            order_id: a.order_id,
            filled: a.filled(),
            fills: a
                .immediate_fills
                .iter()
                .map(|f| FillView { price: f.price, quantity: f.quantity, fee: f.fee, liquidity: f.liquidity })
                .collect(),
            resting: a.resting.is_some(),
            remaining: a.resting.as_ref().map(|r| r.remaining).unwrap_or(0),
            queue_ahead: a.resting.as_ref().map(|r| r.queue_ahead),
            canceled: a.canceled,
            no_liquidity: a.no_liquidity,
        }
    }
}

/// State handed to the agent at the start of each step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step_index: u64,
    pub now_ts: Ts,
    pub cash: Micros,
    pub equity: Micros,
    pub markets: Vec<MarketSummary>,
    pub positions: Vec<PositionView>,
    pub open_orders: Vec<OpenOrder>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRecord {
    pub tool: String,
    pub args: Value,
    pub ok: bool,
    pub result: Value,
}

/// One decision step as stored in a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based count of completed steps.
    pub step: u64,
    pub ts: Ts,
    pub summary: StepSummary,
    pub calls: Vec<ToolCallRecord>,
}

fn error_value(e: &ToolError) -> Value {
    json!({ "code": e.code(), "message": e.to_string() })
}

pub struct AgentContext<'a> {
    world: &'a mut World,
    step_index: u64,
    now_ts: Ts,
    budget: u32,
    used: u32,
    done: bool,
    settle_times: &'a BTreeMap<String, Ts>,
    end_ts: Ts,
    summary: StepSummary,
    calls: Option<Vec<ToolCallRecord>>,
}

impl<'a> AgentContext<'a> {
    pub fn new(
        world: &'a mut World,
        step_index: u64,
        now_ts: Ts,
        budget: u32,
        settle_times: &'a BTreeMap<String, Ts>,
        end_ts: Ts,
        recording: bool,
    ) -> Self {
        let mut ctx = AgentContext {
            world,
            step_index,
            now_ts,
            budget,
            used: 0,
            done: false,
            settle_times,
            end_ts,
            summary: StepSummary {
                step_index,
                now_ts,
                cash: 0,
                equity: 0,
                markets: vec![],
                positions: vec![],
                open_orders: vec![],
            },
            calls: recording.then(Vec::new),
        };
        ctx.summary = ctx.build_summary();
        ctx
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn now_ts(&self) -> Ts {
        self.now_ts
    }

    pub fn calls_used(&self) -> u32 {
        self.used
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// The state summary captured when the step began. Free of charge.
    pub fn summary(&self) -> &StepSummary {
        &self.summary
    }

    pub fn into_parts(self) -> (StepSummary, Option<Vec<ToolCallRecord>>) {
        (self.summary, self.calls)
    }

    fn time_to_settlement_s(&self, ticker: &str) -> i64 {
        let at = self.settle_times.get(ticker).copied().unwrap_or(self.end_ts);
        ((at - self.now_ts) / 1000).max(0)
    }

    fn markets(&self) -> Vec<MarketSummary> {
        self.world
            .tickers()
            .iter()
            .map(|t| {
                let q = self.world.quotes(t);
                MarketSummary {
                    ticker: t.clone(),
                    status: self.world.status(t),
                    yes_bid: q.yes_bid,
                    bid_size: q.bid_size,
                    yes_ask: q.yes_ask,
                    ask_size: q.ask_size,
                    last_price: self.world.book(t).and_then(|b| b.last_trade_price),
                    time_to_settlement_s: self.time_to_settlement_s(t),
                }
            })
            .collect()
    }

    fn positions(&self) -> Vec<PositionView> {
        self.world
            .portfolio()
            .positions
            .iter()
            .filter(|(_, p)| !p.is_flat())
            .map(|(t, p)| PositionView {
                ticker: t.clone(),
                yes_qty: p.yes_qty,
                no_qty: p.no_qty,
                yes_cost: p.yes_cost,
                no_cost: p.no_cost,
            })
            .collect()
    }

    fn open_orders(&self) -> Vec<OpenOrder> {
        self.world
            .engine()
            .resting_orders()
            .map(|o| OpenOrder {
                order_id: o.order_id,
                ticker: o.spec.ticker.clone(),
                side: o.spec.side,
                direction: o.spec.direction,
                limit_price: o.limit(),
                remaining: o.remaining,
                queue_ahead: o.queue_ahead,
                placed_ts: o.placed_at.ts,
            })
            .collect()
    }

    fn build_summary(&self) -> StepSummary {
        StepSummary {
            step_index: self.step_index,
            now_ts: self.now_ts,
            cash: self.world.portfolio().cash,
            equity: self.world.equity(),
            markets: self.markets(),
            positions: self.positions(),
            open_orders: self.open_orders(),
        }
    }

    fn charge(&mut self) -> Result<(), ToolError> {
        if self.done {
            return Err(ToolError::NotInStep);
        }
        if self.used >= self.budget {
            return Err(ToolError::BudgetExhausted(self.budget));
        }
        self.used += 1;
        Ok(())
    }

    fn invoke<T: Serialize>(
        &mut self,
        call: ToolCall,
        f: impl FnOnce(&mut Self) -> Result<T, ToolError>,
    ) -> Result<T, ToolError> {
        let r = self.charge().and_then(|_| f(self));
        if let Some(calls) = &mut self.calls {
            let (ok, result) = match &r {
                Ok(v) => (true, serde_json::to_value(v).expect("serializable")),
                Err(e) => (false, error_value(e)),
            };
            calls.push(ToolCallRecord { tool: call.name().to_string(), args: call.args(), ok, result });
        }
        r
    }

    pub fn get_markets(&mut self) -> Result<Vec<MarketSummary>, ToolError> {
        self.invoke(ToolCall::GetMarkets, |c| Ok(c.markets()))
    }

    pub fn get_orderbook(&mut self, ticker: &str, depth: Option<usize>) -> Result<OrderbookView, ToolError> {
        let call = ToolCall::GetOrderbook { ticker: ticker.to_string(), depth };
        self.invoke(call, |c| {
            if depth == Some(0) {
                return Err(ToolError::InvalidArguments("depth must be at least 1".into()));
            }
            let book = c
                .world
                .tradable_book(ticker)
                .ok_or_else(|| ToolError::UnknownTicker(ticker.to_string()))?;
            let take = depth.unwrap_or(usize::MAX);
            let desc = |m: &BTreeMap<Cents, Qty>| m.iter().rev().take(take).map(|(p, q)| (*p, *q)).collect::<Vec<_>>();
            let asks = |m: &BTreeMap<Cents, Qty>| m.iter().rev().take(take).map(|(p, q)| (100 - *p, *q)).collect::<Vec<_>>();
            Ok(OrderbookView {
                ticker: ticker.to_string(),
                yes_bids: desc(&book.yes_bids),
                no_bids: desc(&book.no_bids),
                yes_asks: asks(&book.no_bids),
                no_asks: asks(&book.yes_bids),
            })
        })
    }

    pub fn get_positions(&mut self) -> Result<PositionsView, ToolError> {
        self.invoke(ToolCall::GetPositions, |c| {
            let p = c.world.portfolio();
            Ok(PositionsView {
                cash: p.cash,
                available_cash: c.world.available_cash(),
                equity: c.world.equity(),
                realized_pnl: p.realized_pnl,
                fees_paid: p.fees_paid,
                positions: c.positions(),
            })
        })
    }

    pub fn get_orders(&mut self) -> Result<Vec<OpenOrder>, ToolError> {
        self.invoke(ToolCall::GetOrders, |c| Ok(c.open_orders()))
    }

    pub fn place_order(&mut self, spec: OrderSpec) -> Result<OrderAckView, ToolError> {
        self.invoke(ToolCall::PlaceOrder(spec.clone()), |c| {
            if !c.world.tickers().contains(&spec.ticker) {
                return Err(ToolError::UnknownTicker(spec.ticker.clone()));
            }
            let ack = c.world.place_order(spec)?;
            Ok(OrderAckView::from(&ack))
        })
    }

    pub fn cancel_order(&mut self, order_id: u64) -> Result<CancelAck, ToolError> {
        self.invoke(ToolCall::CancelOrder { order_id }, |c| Ok(c.world.cancel_order(order_id)?))
    }

    /// Ends the step. Not charged against the budget.
    pub fn done(&mut self) -> Result<(), ToolError> {
        let r = if self.done {
            Err(ToolError::NotInStep)
        } else {
            self.done = true;
            Ok(())
        };
        if let Some(calls) = &mut self.calls {
            let (ok, result) = match &r {
                Ok(()) => (true, json!({})),
                Err(e) => (false, error_value(e)),
            };
            calls.push(ToolCallRecord { tool: "done".into(), args: json!({}), ok, result });
        }
        r
    }

    /// Executes a wire-form call and returns its JSON result.
    pub fn call(&mut self, call: ToolCall) -> Result<Value, ToolError> {
        fn v<T: Serialize>(r: Result<T, ToolError>) -> Result<Value, ToolError> {
            r.map(|x| serde_json::to_value(x).expect("serializable"))
        }
        match call {
            ToolCall::GetMarkets => v(self.get_markets()),
            ToolCall::GetOrderbook { ticker, depth } => v(self.get_orderbook(&ticker, depth)),
            ToolCall::GetPositions => v(self.get_positions()),
            ToolCall::GetOrders => v(self.get_orders()),
            ToolCall::PlaceOrder(spec) => v(self.place_order(spec)),
            ToolCall::CancelOrder { order_id } => v(self.cancel_order(order_id)),
            ToolCall::Done => self.done().map(|_| json!({})),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::BookSnapshot;
    use crate::episode::{EventPayload, MarketEvent};
    use crate::execution::FeeModel;
    use crate::types::{ExecutionMode, TimeInForce};

    fn world() -> World {
        let tickers = vec!["A".to_string(), "B".to_string()];
        let mut w = World::new(&tickers, 1_000_000_000, ExecutionMode::MakerTaker, FeeModel::default(), 0);
        w.apply_event(&MarketEvent {
            ts: 0,
            seq: 0,
            ticker: "A".into(),
            payload: EventPayload::BookSnapshot(BookSnapshot {
                yes_bids: vec![(40, 10), (41, 20), (42, 30)],
                no_bids: vec![(53, 15), (54, 25), (55, 35)],
            }),
        });
        w
    }

    fn ctx<'a>(w: &'a mut World, times: &'a BTreeMap<String, Ts>) -> AgentContext<'a> {
        AgentContext::new(w, 0, 1000, 24, times, 3_600_000, true)
    }

    #[test]
    fn markets_match_best_quotes() {
        let mut w = world();
        let times = BTreeMap::from([("A".to_string(), 61_000)]);
        let mut c = ctx(&mut w, &times);
        let m = c.get_markets().unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!((m[0].yes_bid, m[0].yes_ask), (Some(42), Some(45)));
        assert_eq!(m[0].time_to_settlement_s, 60);
        assert_eq!((m[1].yes_bid, m[1].yes_ask), (None, None));
        assert_eq!(m[1].time_to_settlement_s, 3599);
        assert_eq!(m[1].status, TickerStatus::Open);
    }

    #[test]
    fn orderbook_depth_limits() {
        let mut w = world();
        let times = BTreeMap::new();
        let mut c = ctx(&mut w, &times);
        let full = c.get_orderbook("A", None).unwrap();
        assert_eq!(full.yes_bids, vec![(42, 30), (41, 20), (40, 10)]);
        assert_eq!(full.yes_asks, vec![(45, 35), (46, 25), (47, 15)]);
        let two = c.get_orderbook("A", Some(2)).unwrap();
        assert_eq!(two.yes_bids, vec![(42, 30), (41, 20)]);
        assert_eq!(two.no_asks, vec![(58, 30), (59, 20)]);
        let one = c.get_orderbook("A", Some(1)).unwrap();
        assert_eq!(one.yes_bids.len() + one.no_bids.len(), 2);
        assert!(matches!(c.get_orderbook("Z", None), Err(ToolError::UnknownTicker(_))));
    }

    #[test]
    fn budget_is_enforced() {
        let mut w = world();
        let times = BTreeMap::new();
        let mut c = AgentContext::new(&mut w, 0, 0, 2, &times, 1, false);
        c.get_markets().unwrap();
        c.get_orders().unwrap();
        assert_eq!(c.get_markets(), Err(ToolError::BudgetExhausted(2)));
        assert_eq!(c.calls_used(), 2);
        c.done().unwrap();
        assert_eq!(c.done(), Err(ToolError::NotInStep));
        assert_eq!(c.get_markets(), Err(ToolError::NotInStep));
    }

    #[test]
    fn actions_visible_within_step() {
        let mut w = world();
        let times = BTreeMap::new();
        let mut c = ctx(&mut w, &times);
        let flat = c.get_positions().unwrap();
        assert!(flat.positions.is_empty());
        assert_eq!(flat.cash, 1_000_000_000);
        let ack = c.place_order(OrderSpec::market("A", Side::Yes, Direction::Buy, 5)).unwrap();
        assert_eq!(ack.filled, 5);
        let pos = c.get_positions().unwrap();
        assert_eq!(pos.positions[0].yes_qty, 5);
        assert_eq!(pos.positions[0].yes_cost, 5 * 450_000 + FeeModel::default().fee(Liquidity::Taker, 45, 5));
        let gtc = c
            .place_order(OrderSpec::limit("A", Side::Yes, Direction::Buy, 41, 3, TimeInForce::Gtc))
            .unwrap();
        assert!(gtc.resting);
        assert_eq!(gtc.queue_ahead, Some(20));
        assert_eq!(c.get_orders().unwrap().len(), 1);
        c.cancel_order(gtc.order_id).unwrap();
        assert!(c.get_orders().unwrap().is_empty());
        assert_eq!(c.cancel_order(77).unwrap_err().code(), "UnknownOrder");
        let err = c
            .place_order(OrderSpec::limit("A", Side::Yes, Direction::Buy, 45, 1, TimeInForce::PostOnly))
            .unwrap_err();
        assert_eq!(err.code(), "WouldCross");
        let (_, calls) = c.into_parts();
        assert_eq!(calls.unwrap().len(), 9);
    }

    #[test]
    fn repeated_reads_are_stable() {
        let mut w = world();
        let times = BTreeMap::new();
        let mut c = ctx(&mut w, &times);
        assert_eq!(c.get_markets().unwrap(), c.get_markets().unwrap());
        assert_eq!(c.get_orderbook("A", None).unwrap(), c.get_orderbook("A", None).unwrap());
        let markets = c.summary().markets.clone();
        assert_eq!(markets, c.get_markets().unwrap());
    }

    #[test]
    fn wire_calls_parse() {
        let call = ToolCall::from_wire("get_orderbook", &json!({"ticker": "A", "depth": 2})).unwrap();
        assert_eq!(call, ToolCall::GetOrderbook { ticker: "A".into(), depth: Some(2) });
        assert_eq!(ToolCall::from_wire("get_markets", &Value::Null).unwrap(), ToolCall::GetMarkets);
        let spec = OrderSpec::limit("A", Side::No, Direction::Buy, 30, 2, TimeInForce::Gtc);
        let call = ToolCall::PlaceOrder(spec.clone());
        assert_eq!(ToolCall::from_wire(call.name(), &call.args()).unwrap(), call);
        assert!(matches!(ToolCall::from_wire("nope", &json!({})), Err(ToolError::UnknownTool(_))));
        assert!(matches!(
            ToolCall::from_wire("cancel_order", &json!({"id": 1})),
            Err(ToolError::InvalidArguments(_))
        ));
    }

    #[test]
    fn sell_without_position_rejected() {
        let mut w = world();
        let times = BTreeMap::new();
        let mut c = ctx(&mut w, &times);
        let err = c.place_order(OrderSpec::market("A", Side::No, Direction::Sell, 1)).unwrap_err();
        assert_eq!(err.code(), "InsufficientPosition");
    }
}
