//! Trade-log records: one JSON object per line in `trades.jsonl`.

use serde::{Deserialize, Serialize};

use crate::execution::{Fill, OrderSpec};
use crate::types::{Cents, Direction, HalfCents, Micros, OrderType, Outcome, Qty, Side, TimeInForce, Ts};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderRecord {
    pub order_id: u64,
    pub ts: Ts,
    pub ticker: String,
    pub side: Side,
    pub direction: Direction,
    pub order_type: OrderType,
    pub limit_price: Option<Cents>,
    pub quantity: Qty,
    pub tif: TimeInForce,
    pub mid_at_submit: Option<HalfCents>,
}

impl OrderRecord {
    pub fn new(order_id: u64, ts: Ts, spec: &OrderSpec, mid_at_submit: Option<HalfCents>) -> Self {
        Self {
            order_id,
            ts,
            ticker: spec.ticker.clone(),
            side: spec.side,
            direction: spec.direction,
            order_type: spec.order_type,
            limit_price: spec.limit_price,
            quantity: spec.quantity,
            tif: spec.tif,
            mid_at_submit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CancelReason {
    /// Immediate-or-cancel remainder.
    Ioc,
    Agent,
    MarketClosed,
    Settlement,
    EndOfEpisode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CancelRecord {
    pub order_id: u64,
    pub ts: Ts,
    pub ticker: String,
    pub canceled: Qty,
    pub reason: CancelReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementRecord {
    pub ts: Ts,
    pub ticker: String,
    pub outcome: Outcome,
    pub yes_qty: Qty,
    pub no_qty: Qty,
    pub payout: Micros,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEntry {
    Order(OrderRecord),
    Fill(Fill),
    Cancel(CancelRecord),
    Settlement(SettlementRecord),
}

pub fn fills(log: &[LogEntry]) -> impl Iterator<Item = &Fill> {
    log.iter().filter_map(|e| match e {
        LogEntry::Fill(f) => Some(f),
        _ => None,
    })
}

pub fn orders(log: &[LogEntry]) -> impl Iterator<Item = &OrderRecord> {
    log.iter().filter_map(|e| match e {
        LogEntry::Order(o) => Some(o),
        _ => None,
    })
}

/// Renders the log as JSON lines.
pub fn to_jsonl(log: &[LogEntry]) -> Vec<u8> {
    let mut out = Vec::new();
    for e in log {
        serde_json::to_writer(&mut out, e).expect("in-memory serialization");
        out.push(b'\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<LogEntry>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}
