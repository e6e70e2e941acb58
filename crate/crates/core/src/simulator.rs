//! The deterministic replay loop.
//!
//! Events are applied strictly in `(ts, seq)` order. Decision ticks fall at
//! `start_ts + k * cadence` and equity samples at `start_ts + k * interval`;
//! at any tick every event with `ts <= tick` has already been applied. The
//! run ends right after the last settlement event.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent_api::{Agent, AgentContext, EpisodeInfo, StepRecord};
use crate::episode::{Episode, EpisodeError, EventPayload, MarketEvent, MarketStatus};
use crate::execution::{CancelAck, CancelError, ExecError, ExecutionEngine, FeeModel, OrderAck, OrderSpec};
use crate::metrics::{compute_metrics, EpisodeMetrics};
use crate::orderbook::{Book, Quotes};
use crate::portfolio::{Portfolio, PortfolioError};
use crate::tradelog::{self, CancelReason, CancelRecord, LogEntry, OrderRecord, SettlementRecord};
use crate::types::{
    Direction, EventKey, ExecutionMode, HalfCents, Liquidity, MakerQueueMode, Micros, OrderType, Side, Ts,
    MICROS_PER_CENT,
};

/// Flat per-step call budget granted for each tool round.
pub const CALLS_PER_ROUND: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub cadence_s: u64,
    pub equity_sample_s: u64,
    pub max_tool_rounds: u32,
    pub rng_seed: u64,
    /// Overrides the episode's execution mode when set.
    pub execution_mode: Option<ExecutionMode>,
    pub maker_queue_mode: MakerQueueMode,
    pub fees: FeeModel,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            cadence_s: 300,
            equity_sample_s: 60,
            max_tool_rounds: 3,
            rng_seed: 0,
            execution_mode: None,
            maker_queue_mode: MakerQueueMode::TradeOnly,
            fees: FeeModel::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.cadence_s == 0 || self.equity_sample_s == 0 || self.max_tool_rounds == 0 {
            return Err(SimError::InvalidConfig(
                "cadence_s, equity_sample_s and max_tool_rounds must be at least 1".into(),
            ));
        }
        if self.fees.taker_rate_bp > 10_000 || self.fees.maker_rate_bp > 10_000 {
            return Err(SimError::InvalidConfig("fee rates above 10000 bp".into()));
        }
        Ok(())
    }

    pub fn tool_budget(&self) -> u32 {
        self.max_tool_rounds * CALLS_PER_ROUND
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] EpisodeError),
}

/// Rejections surfaced to agents when placing or canceling.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrderError {
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Cancel(#[from] CancelError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error("market {0} is closed")]
    MarketClosed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TickerStatus {
    Open,
    Closed,
    Settled,
}

#[derive(Debug, Clone, Default)]
struct TickerState {
    closed: bool,
    settled: bool,
    frozen_mark: Option<HalfCents>,
}

/// Everything the replay mutates: books, matching, portfolio and logs.
#[derive(Debug, Clone)]
pub struct World {
    tickers: Vec<String>,
    books: BTreeMap<String, Book>,
    engine: ExecutionEngine,
    portfolio: Portfolio,
    state: BTreeMap<String, TickerState>,
    log: Vec<LogEntry>,
    warnings: Vec<String>,
    now: EventKey,
}

impl World {
    pub fn new(tickers: &[String], bankroll: Micros, mode: ExecutionMode, fees: FeeModel, start: Ts) -> Self {
        let mut engine = ExecutionEngine::new(mode, fees);
        for t in tickers {
            engine.ensure_ticker(t);
        }
        Self {
            tickers: tickers.to_vec(),
            books: tickers.iter().map(|t| (t.clone(), Book::new(t.as_str()))).collect(),
            engine,
            portfolio: Portfolio::new(bankroll, tickers.iter().cloned()),
            state: tickers.iter().map(|t| (t.clone(), TickerState::default())).collect(),
            log: Vec::new(),
            warnings: Vec::new(),
            now: EventKey::new(start, 0),
        }
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn now(&self) -> EventKey {
        self.now
    }

    pub fn portfolio(&self) -> &Portfolio {
        &self.portfolio
    }

    pub fn engine(&self) -> &ExecutionEngine {
        &self.engine
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Historical (replayed) book.
    pub fn book(&self, ticker: &str) -> Option<&Book> {
        self.books.get(ticker)
    }

    /// Depth the agent can trade against: the replayed book minus what the
    /// agent consumed since the last snapshot.
    pub fn tradable_book(&self, ticker: &str) -> Option<&Book> {
        self.engine.local_book(ticker)
    }

    pub fn quotes(&self, ticker: &str) -> Quotes {
        self.tradable_book(ticker).map(Book::best_quotes).unwrap_or_default()
    }

    pub fn status(&self, ticker: &str) -> TickerStatus {
        match self.state.get(ticker) {
            Some(s) if s.settled => TickerStatus::Settled,
            Some(s) if s.closed => TickerStatus::Closed,
            _ => TickerStatus::Open,
        }
    }

    /// Equity mark for `ticker`: replayed mid with last-trade fallback, frozen
    /// while the market is closed.
    pub fn mark(&self, ticker: &str) -> Option<HalfCents> {
        let st = self.state.get(ticker)?;
        if st.settled {
            None
        } else if st.closed {
            st.frozen_mark
        } else {
            self.books.get(ticker).and_then(Book::mark_price)
        }
    }

    pub fn marks(&self) -> BTreeMap<String, Option<HalfCents>> {
        self.tickers.iter().map(|t| (t.clone(), self.mark(t))).collect()
    }

    pub fn equity(&self) -> Micros {
        self.portfolio.equity(&self.marks())
    }

    /// Cash earmarked for resting buys at their limit price plus maker fee.
    pub fn reserved_cash(&self) -> Micros {
        let fees = self.engine.fees();
        self.engine
            .resting_orders()
            .filter(|o| o.spec.direction == Direction::Buy)
            .map(|o| {
                let limit = o.limit();
                o.remaining as Micros * (limit as Micros * MICROS_PER_CENT + fees.fee_ceil_per_contract(Liquidity::Maker, limit))
            })
            .sum()
    }

    pub fn available_cash(&self) -> Micros {
        self.portfolio.cash - self.reserved_cash()
    }

    /// Held contracts not already committed to resting sells.
    pub fn available_position(&self, ticker: &str, side: Side) -> u64 {
        let committed: u64 = self
            .engine
            .resting_orders()
            .filter(|o| o.spec.ticker == ticker && o.spec.side == side && o.spec.direction == Direction::Sell)
            .map(|o| o.remaining)
            .sum();
        self.portfolio.position(ticker).qty(side).saturating_sub(committed)
    }

    fn warn(&mut self, msg: String) {
        self.warnings.push(format!("{} {} {}", self.now.ts, self.now.seq, msg));
    }

    fn apply_fill_logged(&mut self, fill: crate::execution::Fill) {
        if let Err(e) = self.portfolio.apply_fill(&fill) {
            // Placement checks make this unreachable; keep the run going and visible.
            self.warn(format!("internal: fill for order {} rejected by portfolio: {e}", fill.order_id));
            return;
        }
        self.log.push(LogEntry::Fill(fill));
    }

    fn log_cancels(&mut self, acks: Vec<CancelAck>, reason: CancelReason, tickers: &BTreeMap<u64, String>) {
        for a in acks {
            self.log.push(LogEntry::Cancel(CancelRecord {
                order_id: a.order_id,
                ts: self.now.ts,
                ticker: tickers.get(&a.order_id).cloned().unwrap_or_default(),
                canceled: a.canceled,
                reason,
            }));
        }
    }

    fn cancel_resting(&mut self, ticker: Option<&str>, reason: CancelReason) {
        let owners: BTreeMap<u64, String> =
            self.engine.resting_orders().map(|o| (o.order_id, o.spec.ticker.clone())).collect();
        let acks = self.engine.cancel_all(ticker);
        self.log_cancels(acks, reason, &owners);
    }

    /// Applies one replayed event.
    pub fn apply_event(&mut self, ev: &MarketEvent) {
        self.now = ev.key();
        let Some(st) = self.state.get(&ev.ticker) else {
            self.warn(format!("event for unknown ticker {}", ev.ticker));
            return;
        };
        if st.settled {
            self.warn(format!("{}: event after settlement ignored", ev.ticker));
            return;
        }
        let at = ev.key();
        match &ev.payload {
            EventPayload::BookSnapshot(snap) => {
                let book = self.books.get_mut(&ev.ticker).expect("known ticker");
                match book.apply_snapshot(snap, at) {
                    Ok(()) => self.engine.sync_snapshot(&ev.ticker, snap, at),
                    Err(e) => self.warn(format!("{}: {e}; snapshot skipped", ev.ticker)),
                }
            }
            EventPayload::BookDelta(delta) => {
                let book = self.books.get_mut(&ev.ticker).expect("known ticker");
                match book.apply_delta(delta, at) {
                    Ok(clamped) => {
                        self.engine.sync_delta(&ev.ticker, delta, at);
                        if let Some(w) = clamped {
                            self.warn(format!(
                                "{}: delta {} at {:?} {} clamped (had {})",
                                ev.ticker, w.delta, w.side, w.price, w.had
                            ));
                        }
                    }
                    Err(e) => self.warn(format!("{}: {e}; delta skipped", ev.ticker)),
                }
            }
            EventPayload::TradePrint(print) => {
                self.books.get_mut(&ev.ticker).expect("known ticker").record_trade(print.price, at);
                for fill in self.engine.on_trade_print(&ev.ticker, print, ev.ts) {
                    self.apply_fill_logged(fill);
                }
            }
            EventPayload::Lifecycle(MarketStatus::Closed) => {
                let mark = self.mark(&ev.ticker);
                let st = self.state.get_mut(&ev.ticker).expect("known ticker");
                if !st.closed {
                    st.closed = true;
                    st.frozen_mark = mark;
                }
                self.cancel_resting(Some(&ev.ticker.clone()), CancelReason::MarketClosed);
            }
            EventPayload::Lifecycle(MarketStatus::Open) => {
                let st = self.state.get_mut(&ev.ticker).expect("known ticker");
                st.closed = false;
                st.frozen_mark = None;
            }
            EventPayload::Settlement(outcome) => {
                self.cancel_resting(Some(&ev.ticker.clone()), CancelReason::Settlement);
                match self.portfolio.settle(&ev.ticker, *outcome) {
                    Ok(r) => self.log.push(LogEntry::Settlement(SettlementRecord {
                        ts: ev.ts,
                        ticker: r.ticker,
                        outcome: r.outcome,
                        yes_qty: r.yes_qty,
                        no_qty: r.no_qty,
                        payout: r.payout,
                    })),
                    Err(e) => self.warn(format!("{}: {e}", ev.ticker)),
                }
                let st = self.state.get_mut(&ev.ticker).expect("known ticker");
                st.settled = true;
                st.closed = true;
            }
        }
    }

    /// Worst-case cash a buy can consume.
    fn worst_case_cost(&self, spec: &OrderSpec) -> Micros {
        match spec.order_type {
            OrderType::Market => self
                .engine
                .preview_taker(spec)
                .fills
                .iter()
                .map(|f| f.price as Micros * f.quantity as Micros * MICROS_PER_CENT + f.fee)
                .sum(),
            OrderType::Limit => {
                let limit = spec.limit_price.expect("validated");
                spec.quantity as Micros
                    * (limit as Micros * MICROS_PER_CENT
                        + self.engine.fees().fee_ceil_per_contract(Liquidity::Taker, limit))
            }
        }
    }

    /// Places an agent order at the current time, enforcing affordability
    /// and the no-shorts rule, and logs everything it does.
    pub fn place_order(&mut self, spec: OrderSpec) -> Result<OrderAck, OrderError> {
        self.engine.check(&spec)?;
        if self.status(&spec.ticker) != TickerStatus::Open {
            return Err(OrderError::MarketClosed(spec.ticker.clone()));
        }
        match spec.direction {
            Direction::Buy => {
                let needed = self.worst_case_cost(&spec);
                let available = self.available_cash();
                if needed > available {
                    return Err(PortfolioError::InsufficientFunds { needed, available }.into());
                }
            }
            Direction::Sell => {
                let held = self.available_position(&spec.ticker, spec.side);
                if held < spec.quantity {
                    return Err(PortfolioError::InsufficientPosition {
                        ticker: spec.ticker.clone(),
                        side: spec.side,
                        needed: spec.quantity,
                        held,
                    }
                    .into());
                }
            }
        }
        let mid = self.quotes(&spec.ticker).mid();
        let record = OrderRecord::new(0, self.now.ts, &spec, mid);
        let ticker = spec.ticker.clone();
        let ack = self.engine.place(spec, self.now, mid)?;
        self.log.push(LogEntry::Order(OrderRecord { order_id: ack.order_id, ..record }));
        for f in ack.immediate_fills.clone() {
            self.apply_fill_logged(f);
        }
        if ack.canceled > 0 {
            self.log.push(LogEntry::Cancel(CancelRecord {
                order_id: ack.order_id,
                ts: self.now.ts,
                ticker,
                canceled: ack.canceled,
                reason: CancelReason::Ioc,
            }));
        }
        Ok(ack)
    }

    pub fn cancel_order(&mut self, order_id: u64) -> Result<CancelAck, OrderError> {
        let ticker = self.engine.resting_order(order_id).map(|o| o.spec.ticker.clone());
        let ack = self.engine.cancel(order_id)?;
        self.log.push(LogEntry::Cancel(CancelRecord {
            order_id,
            ts: self.now.ts,
            ticker: ticker.unwrap_or_default(),
            canceled: ack.canceled,
            reason: CancelReason::Agent,
        }));
        Ok(ack)
    }

    fn set_time(&mut self, ts: Ts) {
        if ts > self.now.ts {
            self.now = EventKey::new(ts, self.now.seq);
        }
    }
}

/// Receives a record after every completed decision step.
pub trait StepObserver {
    fn on_step(&mut self, record: &StepRecord) -> std::io::Result<()>;
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub bankroll: Micros,
    pub log: Vec<LogEntry>,
    pub equity_curve: Vec<(Ts, Micros)>,
    pub metrics: EpisodeMetrics,
    pub warnings: Vec<String>,
    /// Number of decision steps the agent ran.
    pub steps: u64,
    pub aborted: Option<String>,
    pub non_reproducible: bool,
    pub final_portfolio: Portfolio,
}

impl EpisodeResult {
    pub fn final_equity(&self) -> Micros {
        self.equity_curve.last().map(|p| p.1).unwrap_or(self.bankroll)
    }

    pub fn trades_jsonl(&self) -> Vec<u8> {
        tradelog::to_jsonl(&self.log)
    }

    pub fn equity_csv(&self) -> Vec<u8> {
        render_equity_csv(&self.equity_curve)
    }
}

pub fn render_equity_csv(curve: &[(Ts, Micros)]) -> Vec<u8> {
    let mut out = String::from("ts_ms,equity_micro_usd\n");
    for (ts, e) in curve {
        out.push_str(&format!("{ts},{e}\n"));
    }
    out.into_bytes()
}

pub fn run_episode(episode: &Episode, agent: &mut dyn Agent, cfg: &SimConfig) -> Result<EpisodeResult, SimError> {
    run_episode_observed(episode, agent, cfg, None)
}

/// Runs one episode. With an observer, every step's tool calls are recorded
/// and handed over once the step completes.
pub fn run_episode_observed(
    episode: &Episode,
    agent: &mut dyn Agent,
    cfg: &SimConfig,
    mut observer: Option<&mut dyn StepObserver>,
) -> Result<EpisodeResult, SimError> {
    cfg.validate()?;
    episode.validate()?;
    let meta = &episode.metadata;
    let mode = cfg.execution_mode.unwrap_or(meta.execution_mode);
    let mut world = World::new(&meta.tickers, meta.bankroll, mode, cfg.fees, meta.start_ts);

    let settle_times: BTreeMap<String, Ts> =
        episode.settlements().into_iter().map(|(t, (k, _))| (t.to_string(), k.ts)).collect();
    let info = EpisodeInfo {
        episode_id: meta.episode_id.clone(),
        tickers: meta.tickers.clone(),
        bankroll: meta.bankroll,
        start_ts: meta.start_ts,
        end_ts: meta.end_ts,
        execution_mode: mode,
        cadence_s: cfg.cadence_s,
        max_tool_calls: cfg.tool_budget(),
        rng_seed: cfg.rng_seed,
    };

    let events = &episode.events;
    let final_settlement = events.iter().rposition(|e| matches!(e.payload, EventPayload::Settlement(_)));
    let horizon = final_settlement.map(|i| events[i].ts).unwrap_or(meta.end_ts);
    let cadence_ms = cfg.cadence_s as Ts * 1000;
    let sample_ms = cfg.equity_sample_s as Ts * 1000;

    let mut curve: Vec<(Ts, Micros)> = Vec::new();
    let mut aborted: Option<String> = agent.begin_episode(&info).err().map(|e| e.to_string());
    let mut steps: u64 = 0;
    let mut next_tick = meta.start_ts;
    let mut next_sample = meta.start_ts;
    let mut i = 0;
    let mut finished = false;

    while aborted.is_none() && !finished {
        let boundary = next_tick.min(next_sample);
        if boundary > horizon {
            while i < events.len() && events[i].ts <= horizon {
                world.apply_event(&events[i]);
                finished |= Some(i) == final_settlement;
                i += 1;
                if finished {
                    break;
                }
            }
            world.set_time(horizon);
            break;
        }
        while i < events.len() && events[i].ts <= boundary {
            world.apply_event(&events[i]);
            let last = Some(i) == final_settlement;
            i += 1;
            if last {
                finished = true;
                break;
            }
        }
        if finished {
            break;
        }
        world.set_time(boundary);
        if boundary == next_sample {
            curve.push((boundary, world.equity()));
            next_sample += sample_ms;
        }
        if boundary == next_tick {
            let recording = observer.is_some();
            let mut ctx = AgentContext::new(&mut world, steps, boundary, cfg.tool_budget(), &settle_times, meta.end_ts, recording);
            let outcome = agent.step(&mut ctx);
            let (summary, calls) = ctx.into_parts();
            steps += 1;
            if let Err(e) = outcome {
                aborted = Some(e.to_string());
            }
            if let Some(obs) = observer.as_deref_mut() {
                let record = StepRecord { step: steps, ts: boundary, summary, calls: calls.unwrap_or_default() };
                if let Err(e) = obs.on_step(&record) {
                    aborted = Some(format!("trajectory checkpoint failed: {e}"));
                }
            }
            next_tick += cadence_ms;
        }
    }

    world.cancel_resting(None, CancelReason::EndOfEpisode);
    let end_ts = world.now.ts;
    match curve.last_mut() {
        Some(last) if last.0 == end_ts => last.1 = world.equity(),
        _ => curve.push((end_ts, world.equity())),
    }
    let non_reproducible = agent.non_reproducible();
    agent.end_episode();

    let fills: Vec<_> = tradelog::fills(&world.log).cloned().collect();
    let orders: Vec<_> = tradelog::orders(&world.log).cloned().collect();
    let mut metrics = compute_metrics(&curve, &fills, &orders, meta.bankroll).expect("curve is non-empty");
    metrics.data_warnings = world.warnings.len() as u64;

    Ok(EpisodeResult {
        episode_id: meta.episode_id.clone(),
        bankroll: meta.bankroll,
        log: world.log,
        equity_curve: curve,
        metrics,
        warnings: world.warnings,
        steps,
        aborted,
        non_reproducible,
        final_portfolio: world.portfolio,
    })
}
