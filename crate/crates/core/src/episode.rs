//! Portable episode directories.
//!
//! An episode is a self-contained directory:
//!
//! ```text
//! metadata.json     single JSON object
//! orderbook.jsonl   snapshots, deltas and lifecycle events, one per line
//! trades.jsonl      trade prints, one per line (optional on load)
//! settlement.json   ticker -> outcome + settlement (ts, seq)
//! ```
//!
//! Every line is UTF-8 JSON with a fixed key order and integer-only values,
//! so the bytes written for a given episode are fully determined by its
//! content. `FORMAT.md` at the repository root documents every field.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsio::write_atomic;
use crate::types::{
    price_in_range, BookSide, Cents, EventKey, ExecutionMode, MakerQueueMode, Micros, Outcome, Qty,
    Ts,
};

pub const FORMAT_VERSION: &str = "1";

pub const METADATA_FILE: &str = "metadata.json";
pub const ORDERBOOK_FILE: &str = "orderbook.jsonl";
pub const TRADES_FILE: &str = "trades.jsonl";
pub const SETTLEMENT_FILE: &str = "settlement.json";

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("missing {file} in {dir}")]
    MissingFile { dir: PathBuf, file: &'static str },
    #[error("{file}:{line}: malformed record: {message}")]
    MalformedRecord { file: String, line: usize, message: String },
    #[error("{file}:{line}: events out of (ts, seq) order: {message}")]
    UnsortedEvents { file: String, line: usize, message: String },
    #[error("unknown ticker {ticker:?} in {file}")]
    UnknownTicker { ticker: String, file: String },
    #[error("format version mismatch: found {found:?}, expected {expected:?}")]
    VersionMismatch { found: String, expected: String },
    #[error("ticker {0:?} has market events but no settlement")]
    MissingSettlement(String),
    #[error("invalid metadata: {0}")]
    InvalidMetadata(String),
    #[error("invalid episode: {0}")]
    InvalidEpisode(String),
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How the orderbook file represents depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderbookKind {
    #[default]
    Snapshot,
    Delta,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeMetadata {
    pub episode_id: String,
    pub tickers: Vec<String>,
    pub start_ts: Ts,
    pub end_ts: Ts,
    /// Initial cash in micro-USD.
    pub bankroll: Micros,
    pub execution_mode: ExecutionMode,
    pub maker_queue_mode: MakerQueueMode,
    pub fee_model_version: String,
    pub format_version: String,
    #[serde(default)]
    pub orderbook_kind: OrderbookKind,
}

impl EpisodeMetadata {
    pub fn validate(&self) -> Result<(), EpisodeError> {
        if self.format_version != FORMAT_VERSION {
            return Err(EpisodeError::VersionMismatch {
                found: self.format_version.clone(),
                expected: FORMAT_VERSION.to_string(),
            });
        }
        if self.start_ts >= self.end_ts {
            return Err(EpisodeError::InvalidMetadata(format!(
                "start_ts {} must be before end_ts {}",
                self.start_ts, self.end_ts
            )));
        }
        if self.tickers.is_empty() {
            return Err(EpisodeError::InvalidMetadata("tickers must be non-empty".into()));
        }
        let unique: BTreeSet<&str> = self.tickers.iter().map(String::as_str).collect();
        if unique.len() != self.tickers.len() {
            return Err(EpisodeError::InvalidMetadata("tickers must be unique".into()));
        }
        if self.bankroll <= 0 {
            return Err(EpisodeError::InvalidMetadata("bankroll must be positive".into()));
        }
        Ok(())
    }
}

/// Full replacement of one ticker's displayed depth. Levels are ascending by
/// price with strictly positive counts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BookSnapshot {
    pub yes_bids: Vec<(Cents, Qty)>,
    pub no_bids: Vec<(Cents, Qty)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookDelta {
    pub side: BookSide,
    pub price: Cents,
    pub delta: i64,
}

/// A public trade at a YES price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradePrint {
    pub price: Cents,
    pub count: Qty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventPayload {
    BookSnapshot(BookSnapshot),
    BookDelta(BookDelta),
    TradePrint(TradePrint),
    Lifecycle(MarketStatus),
    Settlement(Outcome),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarketEvent {
    pub ts: Ts,
    pub seq: u64,
    pub ticker: String,
    pub payload: EventPayload,
}

impl MarketEvent {
    pub fn key(&self) -> EventKey {
        EventKey::new(self.ts, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub metadata: EpisodeMetadata,
    /// Sorted by `(ts, seq)`, keys unique.
    pub events: Vec<MarketEvent>,
}

impl Episode {
    /// Checks every format invariant. Used on load and before write.
    pub fn validate(&self) -> Result<(), EpisodeError> {
        self.metadata.validate()?;
        let known: BTreeSet<&str> = self.metadata.tickers.iter().map(String::as_str).collect();
        let mut prev: Option<EventKey> = None;
        let mut active: BTreeSet<&str> = BTreeSet::new();
        let mut settled: BTreeSet<&str> = BTreeSet::new();
        for (i, ev) in self.events.iter().enumerate() {
            let key = ev.key();
            if let Some(p) = prev {
                if key <= p {
                    return Err(EpisodeError::UnsortedEvents {
                        file: "<stream>".into(),
                        line: i + 1,
                        message: format!("({}, {}) after ({}, {})", key.ts, key.seq, p.ts, p.seq),
                    });
                }
            }
            prev = Some(key);
            if !known.contains(ev.ticker.as_str()) {
                return Err(EpisodeError::UnknownTicker {
                    ticker: ev.ticker.clone(),
                    file: "<stream>".into(),
                });
            }
            check_payload(&ev.payload).map_err(|message| EpisodeError::MalformedRecord {
                file: "<stream>".into(),
                line: i + 1,
                message,
            })?;
            match ev.payload {
                EventPayload::Settlement(_) => {
                    if !settled.insert(ev.ticker.as_str()) {
                        return Err(EpisodeError::InvalidEpisode(format!(
                            "ticker {:?} settles more than once",
                            ev.ticker
                        )));
                    }
                }
                EventPayload::BookSnapshot(_) | EventPayload::BookDelta(_) | EventPayload::TradePrint(_) => {
                    active.insert(ev.ticker.as_str());
                }
                EventPayload::Lifecycle(_) => {}
            }
        }
        if let Some(t) = active.difference(&settled).next() {
            return Err(EpisodeError::MissingSettlement(t.to_string()));
        }
        Ok(())
    }

    /// Settlement `(key, outcome)` per ticker, if present in the stream.
    pub fn settlements(&self) -> BTreeMap<&str, (EventKey, Outcome)> {
        self.events
            .iter()
            .filter_map(|e| match e.payload {
                EventPayload::Settlement(o) => Some((e.ticker.as_str(), (e.key(), o))),
                _ => None,
            })
            .collect()
    }
}

fn check_levels(levels: &[(Cents, Qty)]) -> Result<(), String> {
    let mut prev: Option<Cents> = None;
    for &(p, c) in levels {
        if !price_in_range(p as i64) {
            return Err(format!("price {p} outside 1..=99"));
        }
        if c == 0 {
            return Err(format!("zero count at price {p}"));
        }
        if prev.is_some_and(|q| q >= p) {
            return Err("levels must be strictly ascending by price".into());
        }
        prev = Some(p);
    }
    Ok(())
}

fn check_payload(payload: &EventPayload) -> Result<(), String> {
    match payload {
        EventPayload::BookSnapshot(s) => {
            check_levels(&s.yes_bids)?;
            check_levels(&s.no_bids)
        }
        EventPayload::BookDelta(d) => {
            if !price_in_range(d.price as i64) {
                return Err(format!("price {} outside 1..=99", d.price));
            }
            Ok(())
        }
        EventPayload::TradePrint(t) => {
            if !price_in_range(t.price as i64) {
                return Err(format!("price {} outside 1..=99", t.price));
            }
            if t.count == 0 {
                return Err("trade count must be at least 1".into());
            }
            Ok(())
        }
        EventPayload::Lifecycle(_) | EventPayload::Settlement(_) => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Line records

#[derive(Serialize, Deserialize)]
struct BookLine {
    ts: Ts,
    seq: u64,
    ticker: String,
    #[serde(flatten)]
    body: BookBody,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum BookBody {
    Snapshot { yes_bids: Vec<(Cents, Qty)>, no_bids: Vec<(Cents, Qty)> },
    Delta { side: BookSide, price: Cents, delta: i64 },
    Lifecycle { status: MarketStatus },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TradeLine {
    ts: Ts,
    seq: u64,
    ticker: String,
    price: Cents,
    count: Qty,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SettlementRecord {
    outcome: Outcome,
    ts: Ts,
    seq: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SettlementFile {
    settlements: BTreeMap<String, SettlementRecord>,
}

fn pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("in-memory serialization");
    out.push(b'\n');
    out
}

/// Renders the four files of an episode. The result is a pure function of
/// the episode value.
pub fn render_episode(episode: &Episode) -> Result<BTreeMap<&'static str, Vec<u8>>, EpisodeError> {
    episode
        .validate()
        .map_err(|e| EpisodeError::InvalidEpisode(e.to_string()))?;
    let mut book = Vec::new();
    let mut trades = Vec::new();
    let mut settlements = BTreeMap::new();
    for ev in &episode.events {
        let body = match &ev.payload {
            EventPayload::BookSnapshot(s) => BookBody::Snapshot {
                yes_bids: s.yes_bids.clone(),
                no_bids: s.no_bids.clone(),
            },
            EventPayload::BookDelta(d) => BookBody::Delta { side: d.side, price: d.price, delta: d.delta },
            EventPayload::Lifecycle(status) => BookBody::Lifecycle { status: *status },
            EventPayload::TradePrint(t) => {
                let line = TradeLine { ts: ev.ts, seq: ev.seq, ticker: ev.ticker.clone(), price: t.price, count: t.count };
                serde_json::to_writer(&mut trades, &line).expect("in-memory serialization");
                trades.push(b'\n');
                continue;
            }
            EventPayload::Settlement(outcome) => {
                settlements.insert(
                    ev.ticker.clone(),
                    SettlementRecord { outcome: *outcome, ts: ev.ts, seq: ev.seq },
                );
                continue;
            }
        };
        let line = BookLine { ts: ev.ts, seq: ev.seq, ticker: ev.ticker.clone(), body };
        serde_json::to_writer(&mut book, &line).expect("in-memory serialization");
        book.push(b'\n');
    }
    let mut files = BTreeMap::new();
    files.insert(METADATA_FILE, pretty_json(&episode.metadata));
    files.insert(ORDERBOOK_FILE, book);
    files.insert(TRADES_FILE, trades);
    files.insert(SETTLEMENT_FILE, pretty_json(&SettlementFile { settlements }));
    Ok(files)
}

/// Writes `episode` into `dir` (created if needed).
pub fn write_episode(episode: &Episode, dir: &Path) -> Result<(), EpisodeError> {
    let files = render_episode(episode)?;
    fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        write_atomic(&dir.join(name), &bytes)?;
    }
    Ok(())
}

fn read_required(dir: &Path, file: &'static str) -> Result<String, EpisodeError> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(EpisodeError::MissingFile { dir: dir.to_path_buf(), file });
    }
    Ok(fs::read_to_string(path)?)
}

fn malformed(file: &str, line: usize, message: impl Into<String>) -> EpisodeError {
    EpisodeError::MalformedRecord { file: file.to_string(), line, message: message.into() }
}

fn parse_lines<T: for<'de> Deserialize<'de>>(
    file: &'static str,
    text: &str,
) -> Result<Vec<(usize, T)>, EpisodeError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(raw).map_err(|e| malformed(file, i + 1, e.to_string()))?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

fn check_sorted(file: &str, events: &[(usize, MarketEvent)]) -> Result<(), EpisodeError> {
    for w in events.windows(2) {
        let (a, b) = (&w[0].1, &w[1].1);
        if b.key() <= a.key() {
            return Err(EpisodeError::UnsortedEvents {
                file: file.to_string(),
                line: w[1].0,
                message: format!("({}, {}) after ({}, {})", b.ts, b.seq, a.ts, a.seq),
            });
        }
    }
    Ok(())
}

fn check_ticker(known: &BTreeSet<String>, file: &str, ticker: &str) -> Result<(), EpisodeError> {
    if known.contains(ticker) {
        Ok(())
    } else {
        Err(EpisodeError::UnknownTicker { ticker: ticker.to_string(), file: file.to_string() })
    }
}

/// Loads and validates the episode stored in `dir`.
pub fn load_episode(dir: &Path) -> Result<Episode, EpisodeError> {
    let meta_text = read_required(dir, METADATA_FILE)?;
    let book_text = read_required(dir, ORDERBOOK_FILE)?;
    let settle_text = read_required(dir, SETTLEMENT_FILE)?;
    let trades_path = dir.join(TRADES_FILE);
    let trades_text = if trades_path.is_file() { fs::read_to_string(trades_path)? } else { String::new() };

    // Version is checked before the full schema so old files fail clearly.
    let raw_meta: serde_json::Value =
        serde_json::from_str(&meta_text).map_err(|e| malformed(METADATA_FILE, e.line(), e.to_string()))?;
    if let Some(v) = raw_meta.get("format_version").and_then(|v| v.as_str()) {
        if v != FORMAT_VERSION {
            return Err(EpisodeError::VersionMismatch { found: v.to_string(), expected: FORMAT_VERSION.into() });
        }
    }
    let metadata: EpisodeMetadata =
        serde_json::from_value(raw_meta).map_err(|e| malformed(METADATA_FILE, 1, e.to_string()))?;
    metadata.validate()?;
    let known: BTreeSet<String> = metadata.tickers.iter().cloned().collect();

    let mut book_events = Vec::new();
    for (line, rec) in parse_lines::<BookLine>(ORDERBOOK_FILE, &book_text)? {
        check_ticker(&known, ORDERBOOK_FILE, &rec.ticker)?;
        let payload = match rec.body {
            BookBody::Snapshot { yes_bids, no_bids } => EventPayload::BookSnapshot(BookSnapshot { yes_bids, no_bids }),
            BookBody::Delta { side, price, delta } => EventPayload::BookDelta(BookDelta { side, price, delta }),
            BookBody::Lifecycle { status } => EventPayload::Lifecycle(status),
        };
        check_payload(&payload).map_err(|m| malformed(ORDERBOOK_FILE, line, m))?;
        book_events.push((line, MarketEvent { ts: rec.ts, seq: rec.seq, ticker: rec.ticker, payload }));
    }
    check_sorted(ORDERBOOK_FILE, &book_events)?;

    let mut trade_events = Vec::new();
    for (line, rec) in parse_lines::<TradeLine>(TRADES_FILE, &trades_text)? {
        check_ticker(&known, TRADES_FILE, &rec.ticker)?;
        let payload = EventPayload::TradePrint(TradePrint { price: rec.price, count: rec.count });
        check_payload(&payload).map_err(|m| malformed(TRADES_FILE, line, m))?;
        trade_events.push((line, MarketEvent { ts: rec.ts, seq: rec.seq, ticker: rec.ticker, payload }));
    }
    check_sorted(TRADES_FILE, &trade_events)?;

    let settlement: SettlementFile =
        serde_json::from_str(&settle_text).map_err(|e| malformed(SETTLEMENT_FILE, e.line(), e.to_string()))?;
    let mut settle_events: Vec<MarketEvent> = Vec::new();
    for (ticker, rec) in settlement.settlements {
        check_ticker(&known, SETTLEMENT_FILE, &ticker)?;
        settle_events.push(MarketEvent { ts: rec.ts, seq: rec.seq, ticker, payload: EventPayload::Settlement(rec.outcome) });
    }
    settle_events.sort_by_key(MarketEvent::key);

    let events = merge_sorted(
        book_events.into_iter().map(|(_, e)| e).collect(),
        trade_events.into_iter().map(|(_, e)| e).collect(),
        settle_events,
    );
    let episode = Episode { metadata, events };
    episode.validate()?;
    Ok(episode)
}

/// Three-way merge of individually sorted streams.
fn merge_sorted(a: Vec<MarketEvent>, b: Vec<MarketEvent>, c: Vec<MarketEvent>) -> Vec<MarketEvent> {
    let mut out = Vec::with_capacity(a.len() + b.len() + c.len());
    let mut its = [a.into_iter().peekable(), b.into_iter().peekable(), c.into_iter().peekable()];
    loop {
        let next = its
            .iter_mut()
            .enumerate()
            .filter_map(|(i, it)| it.peek().map(|e| (e.key(), i)))
            .min();
        match next {
            Some((_, i)) => out.push(its[i].next().expect("peeked")),
            None => return out,
        }
    }
}
