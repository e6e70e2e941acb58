//! Built-in baseline agents.

use std::collections::{BTreeMap, VecDeque};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent_api::{Agent, AgentContext, AgentError, EpisodeInfo, MarketSummary, PositionView, StepSummary};
use crate::execution::OrderSpec;
use crate::simulator::TickerStatus;
use crate::types::{Cents, Direction, Qty, Side, TimeInForce};

/// Names accepted by `agent_by_name`.
pub const BUILTIN_AGENTS: [&str; 4] = ["null", "random", "bollinger", "scripted"];

pub fn agent_by_name(name: &str) -> Option<Box<dyn Agent + Send>> {
    match name {
        "null" => Some(Box::new(NullAgent)),
        "random" => Some(Box::new(RandomAgent::new(RandomConfig::default()))),
        "bollinger" => Some(Box::new(BollingerAgent::new(BollingerConfig::default()))),
        "scripted" => Some(Box::new(ScriptedAgent)),
        _ => None,
    }
}

/// Ends every step without acting.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullAgent;

impl Agent for NullAgent {
    fn name(&self) -> &str {
        "null"
    }

    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), AgentError> {
        let _ = ctx.done();
        Ok(())
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Per-episode RNG seed for the random baseline.
pub fn episode_seed(episode_id: &str, rng_seed: u64) -> u64 {
    fnv1a64(episode_id.as_bytes()) ^ rng_seed
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomConfig {
    /// Trade probability as `num / den`.
    pub trade_prob_num: u64,
    pub trade_prob_den: u64,
    pub min_qty: Qty,
    pub max_qty: Qty,
    pub position_cap: Qty,
}

impl Default for RandomConfig {
    fn default() -> Self {
        Self { trade_prob_num: 1, trade_prob_den: 10, min_qty: 1, max_qty: 3, position_cap: 10 }
    }
}

impl RandomConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.trade_prob_den == 0 || self.trade_prob_num > self.trade_prob_den {
            return Err("trade probability must lie in [0, 1]".into());
        }
        if self.min_qty == 0 || self.min_qty > self.max_qty {
            return Err("need 1 <= min_qty <= max_qty".into());
        }
        Ok(())
    }
}

/// What the random baseline did on one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RandomDecision {
    Idle,
    /// The coin fired but no market had both quotes.
    NoMarket,
    /// The order would have breached the position cap.
    CapSkip(OrderSpec),
    Submit(OrderSpec),
}

/// Coin-flip market-order baseline.
///
/// Draw order per step, each a full `next_u64`: the coin
/// (`(x >> 11) * den < num * 2^53`), then if it fires the market index
/// (`x % n` over tickers with both quotes, in ticker order), the side
/// (`x % 2`, 0 = yes), the direction (`x % 2`, 0 = buy) and the quantity
/// (`min + x % (max - min + 1)`).
#[derive(Debug, Clone)]
pub struct RandomAgent {
    pub cfg: RandomConfig,
    rng: ChaCha8Rng,
    pub fires: u64,
    pub submissions: u64,
    pub cap_skips: u64,
}

impl RandomAgent {
    pub fn new(cfg: RandomConfig) -> Self {
        Self { cfg, rng: ChaCha8Rng::seed_from_u64(0), fires: 0, submissions: 0, cap_skips: 0 }
    }

    pub fn reseed(&mut self, episode_id: &str, rng_seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(episode_seed(episode_id, rng_seed));
        self.fires = 0;
        self.submissions = 0;
        self.cap_skips = 0;
    }

    fn coin(&mut self) -> bool {
        let x = self.rng.next_u64() >> 11;
        (x as u128) * (self.cfg.trade_prob_den as u128) < (self.cfg.trade_prob_num as u128) << 53
    }

    /// Consumes the step's random draws and picks an action.
    pub fn decide(&mut self, markets: &[MarketSummary], positions: &[PositionView]) -> RandomDecision {
        if !self.coin() {
            return RandomDecision::Idle;
        }
        self.fires += 1;
        let quoted: Vec<&MarketSummary> = markets
            .iter()
            .filter(|m| m.status == TickerStatus::Open && m.yes_bid.is_some() && m.yes_ask.is_some())
            .collect();
        if quoted.is_empty() {
            return RandomDecision::NoMarket;
        }
        let m = quoted[(self.rng.next_u64() % quoted.len() as u64) as usize];
        let side = if self.rng.next_u64().is_multiple_of(2) { Side::Yes } else { Side::No };
        let direction = if self.rng.next_u64().is_multiple_of(2) { Direction::Buy } else { Direction::Sell };
        let span = self.cfg.max_qty - self.cfg.min_qty + 1;
        let qty = self.cfg.min_qty + self.rng.next_u64() % span;
        let spec = OrderSpec::market(m.ticker.as_str(), side, direction, qty);
        let net = positions
            .iter()
            .find(|p| p.ticker == m.ticker)
            .map(|p| p.yes_qty as i64 - p.no_qty as i64)
            .unwrap_or(0);
        let delta = match (side, direction) {
            (Side::Yes, Direction::Buy) | (Side::No, Direction::Sell) => qty as i64,
            _ => -(qty as i64),
        };
        if (net + delta).unsigned_abs() > self.cfg.position_cap {
            self.cap_skips += 1;
            return RandomDecision::CapSkip(spec);
        }
        RandomDecision::Submit(spec)
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> &str {
        "random"
    }

    fn begin_episode(&mut self, info: &EpisodeInfo) -> Result<(), AgentError> {
        self.reseed(&info.episode_id, info.rng_seed);
        Ok(())
    }

    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), AgentError> {
        let summary = ctx.summary().clone();
        if let RandomDecision::Submit(spec) = self.decide(&summary.markets, &summary.positions) {
            self.submissions += 1;
            let _ = ctx.place_order(spec);
        }
        let _ = ctx.done();
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BollingerConfig {
    pub period: usize,
    /// Band width as `k_num / k_den` standard deviations.
    pub k_num: u64,
    pub k_den: u64,
    pub order_qty: Qty,
}

impl Default for BollingerConfig {
    fn default() -> Self {
        Self { period: 20, k_num: 2, k_den: 1, order_qty: 5 }
    }
}

impl BollingerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.period < 2 {
            return Err("period must be at least 2".into());
        }
        if self.k_num == 0 || self.k_den == 0 {
            return Err("k must be positive".into());
        }
        if self.order_qty == 0 {
            return Err("order_qty must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    /// Mid crossed below the lower band.
    Lower,
    /// Mid crossed above the upper band.
    Upper,
}

/// Where a value sits relative to the bands of its own window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandPosition {
    Below,
    Inside,
    Above,
}

/// Classifies `x` against `mean ± k·σ` of `window` (population σ), exactly.
///
/// With `n` points, `S = Σx`, `D = n·Σx² − S²`: `x` is below the lower band
/// iff `k_den·(S − n·x) > k_num·√D`, compared by squaring when both sides are
/// non-negative.
pub fn band_position(window: &[u32], x: u32, k_num: u64, k_den: u64) -> BandPosition {
    let n = window.len() as i128;
    let s: i128 = window.iter().map(|&v| v as i128).sum();
    let q: i128 = window.iter().map(|&v| (v as i128) * (v as i128)).sum();
    let d = n * q - s * s;
    let (kn, kd) = (k_num as i128, k_den as i128);
    let beyond = |lhs: i128| lhs > 0 && kd * kd * lhs * lhs > kn * kn * d;
    let dev = n * x as i128 - s;
    if beyond(-dev) {
        BandPosition::Below
    } else if beyond(dev) {
        BandPosition::Above
    } else {
        BandPosition::Inside
    }
}

/// Rolling mid history with edge-triggered band crossings.
#[derive(Debug, Clone)]
pub struct BandTracker {
    period: usize,
    k_num: u64,
    k_den: u64,
    history: VecDeque<u32>,
    prev: Option<BandPosition>,
    observed: u64,
}

impl BandTracker {
    pub fn new(period: usize, k_num: u64, k_den: u64) -> Self {
        Self { period, k_num, k_den, history: VecDeque::with_capacity(period), prev: None, observed: 0 }
    }

    pub fn observed(&self) -> u64 {
        self.observed
    }

    /// Adds a mid (half-cents) and reports a crossing, if any.
    pub fn push(&mut self, mid: u32) -> Option<Signal> {
        if self.history.len() == self.period {
            self.history.pop_front();
        }
        self.history.push_back(mid);
        self.observed += 1;
        if self.history.len() < self.period {
            return None;
        }
        let window: Vec<u32> = self.history.iter().copied().collect();
        let pos = band_position(&window, mid, self.k_num, self.k_den);
        let prev = self.prev.replace(pos)?;
        match (prev, pos) {
            (BandPosition::Below, _) | (_, BandPosition::Inside) => None,
            (_, BandPosition::Below) => Some(Signal::Lower),
            (BandPosition::Above, BandPosition::Above) => None,
            (_, BandPosition::Above) => Some(Signal::Upper),
        }
    }
}

/// One emitted crossing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub ticker: String,
    /// 0-based index into that ticker's observed mids.
    pub index: u64,
    pub step_index: u64,
    pub signal: Signal,
}

/// Mean-reversion on band crossings using resting limit orders.
#[derive(Debug, Clone)]
pub struct BollingerAgent {
    pub cfg: BollingerConfig,
    trackers: BTreeMap<String, BandTracker>,
    open: BTreeMap<String, u64>,
    pub signals: Vec<SignalRecord>,
    pub mids: BTreeMap<String, Vec<u32>>,
}

impl BollingerAgent {
    pub fn new(cfg: BollingerConfig) -> Self {
        Self { cfg, trackers: BTreeMap::new(), open: BTreeMap::new(), signals: Vec::new(), mids: BTreeMap::new() }
    }

    fn order_for(&self, signal: Signal, m: &MarketSummary, held_yes: Qty) -> Option<OrderSpec> {
        let gtc = |side, direction, price: Cents, qty| {
            OrderSpec::limit(m.ticker.as_str(), side, direction, price, qty, TimeInForce::Gtc)
        };
        match signal {
            Signal::Lower => Some(gtc(Side::Yes, Direction::Buy, m.yes_bid?, self.cfg.order_qty)),
            Signal::Upper if held_yes > 0 => Some(gtc(Side::Yes, Direction::Sell, m.yes_ask?, held_yes)),
            Signal::Upper => Some(gtc(Side::No, Direction::Buy, 100 - m.yes_ask?, self.cfg.order_qty)),
        }
    }

    fn act(&mut self, ctx: &mut AgentContext<'_>, summary: &StepSummary) {
        for m in &summary.markets {
            if m.status != TickerStatus::Open {
                continue;
            }
            let (Some(bid), Some(ask)) = (m.yes_bid, m.yes_ask) else { continue };
            let mid = bid as u32 + ask as u32;
            self.mids.entry(m.ticker.clone()).or_default().push(mid);
            let (period, kn, kd) = (self.cfg.period, self.cfg.k_num, self.cfg.k_den);
            let tracker = self.trackers.entry(m.ticker.clone()).or_insert_with(|| BandTracker::new(period, kn, kd));
            let index = tracker.observed();
            let Some(signal) = tracker.push(mid) else { continue };
            self.signals.push(SignalRecord { ticker: m.ticker.clone(), index, step_index: summary.step_index, signal });
            if let Some(id) = self.open.remove(&m.ticker) {
                if summary.open_orders.iter().any(|o| o.order_id == id) {
                    let _ = ctx.cancel_order(id);
                }
            }
            let held_yes = summary.positions.iter().find(|p| p.ticker == m.ticker).map(|p| p.yes_qty).unwrap_or(0);
            if let Some(spec) = self.order_for(signal, m, held_yes) {
                if let Ok(ack) = ctx.place_order(spec) {
                    if ack.resting {
                        self.open.insert(m.ticker.clone(), ack.order_id);
                    }
                }
            }
        }
    }
}

impl Agent for BollingerAgent {
    fn name(&self) -> &str {
        "bollinger"
    }

    fn begin_episode(&mut self, _info: &EpisodeInfo) -> Result<(), AgentError> {
        self.trackers.clear();
        self.open.clear();
        self.signals.clear();
        self.mids.clear();
        Ok(())
    }

    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), AgentError> {
        let summary = ctx.summary().clone();
        self.act(ctx, &summary);
        let _ = ctx.done();
        Ok(())
    }
}

/// Fixed script used to compare in-process and bridged execution: one
/// `get_markets` call, then on even steps a 1-lot market buy of YES and on odd
/// steps a 1-lot market sell of YES, in the first market with both quotes.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedAgent;

impl ScriptedAgent {
    pub fn order(step_index: u64, markets: &[MarketSummary]) -> Option<OrderSpec> {
        let m = markets
            .iter()
            .find(|m| m.status == TickerStatus::Open && m.yes_bid.is_some() && m.yes_ask.is_some())?;
        let direction = if step_index.is_multiple_of(2) { Direction::Buy } else { Direction::Sell };
        Some(OrderSpec::market(m.ticker.as_str(), Side::Yes, direction, 1))
    }
}

impl Agent for ScriptedAgent {
    fn name(&self) -> &str {
        "scripted"
    }

    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), AgentError> {
        if let Ok(markets) = ctx.get_markets() {
            if let Some(spec) = Self::order(ctx.step_index(), &markets) {
                let _ = ctx.place_order(spec);
            }
        }
        let _ = ctx.done();
        Ok(())
    }
}
