//! Seeded synthetic episodes.
//!
//! Each ticker follows a latent probability (in cents) that moves as a
//! bounded random walk. Every book period a snapshot straddles the latent mid
//! with three levels per side; trade prints arrive as a Poisson process and
//! execute at the touch. The outcome is YES iff the final latent mid is at
//! least 50.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::episode::{
    BookSnapshot, Episode, EpisodeError, EpisodeMetadata, EventPayload, MarketEvent, MarketStatus,
    OrderbookKind, TradePrint, FORMAT_VERSION,
};
use crate::types::{Cents, ExecutionMode, MakerQueueMode, Micros, Outcome, Qty, Ts};

/// 2026-01-01T00:00:00Z.
pub const SYNTH_START_TS: Ts = 1_767_225_600_000;

const LEVELS_PER_SIDE: u8 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_tickers: u32,
    pub duration_s: u64,
    pub book_update_period_s: u64,
    /// Expected trade prints per minute per ticker.
    pub trade_rate_per_min: f64,
    pub spread_c: u8,
    pub depth_per_level: Qty,
    pub vol_per_step_c: u8,
    pub bankroll: Micros,
    pub execution_mode: ExecutionMode,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_tickers: 2,
            duration_s: 3600,
            book_update_period_s: 10,
            trade_rate_per_min: 2.0,
            spread_c: 2,
            depth_per_level: 50,
            vol_per_step_c: 1,
            bankroll: 1_000_000_000,
            execution_mode: ExecutionMode::MakerTaker,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), EpisodeError> {
        let bad = |m: &str| Err(EpisodeError::InvalidConfig(m.to_string()));
        if self.n_tickers == 0 {
            return bad("n_tickers must be at least 1");
        }
        if self.duration_s == 0 || self.book_update_period_s == 0 {
            return bad("duration_s and book_update_period_s must be positive");
        }
        if !(self.trade_rate_per_min.is_finite() && self.trade_rate_per_min >= 0.0) {
            return bad("trade_rate_per_min must be finite and non-negative");
        }
        if self.spread_c == 0 || self.spread_c as u32 + 2 > 98 {
            return bad("spread_c must satisfy 1 <= spread_c and spread_c + 2 <= 98");
        }
        if self.depth_per_level == 0 {
            return bad("depth_per_level must be positive");
        }
        if self.bankroll <= 0 {
            return bad("bankroll must be positive");
        }
        Ok(())
    }
}

struct Pending {
    ts: Ts,
    ticker: usize,
    // Orders same-ts events: snapshot, trade, lifecycle, settlement.
    rank: u8,
    payload: EventPayload,
}

fn snapshot_around(mid: u8, spread: u8, depth: Qty) -> (BookSnapshot, Cents, Cents) {
    let bid = (mid as i32 - spread as i32 / 2).clamp(1, 99 - spread as i32) as u8;
    let ask = bid + spread;
    let mut yes_bids = Vec::new();
    let mut no_bids = Vec::new();
    for i in (0..LEVELS_PER_SIDE).rev() {
        if bid > i {
            yes_bids.push((bid - i, depth));
        }
        let no = 100 - ask;
        if no > i {
            no_bids.push((no - i, depth));
        }
    }
    (BookSnapshot { yes_bids, no_bids }, bid, ask)
}

/// Deterministically generates an episode from `cfg`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Episode, EpisodeError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = SYNTH_START_TS;
    let end = start + cfg.duration_s as Ts * 1000;
    let period_ms = cfg.book_update_period_s as Ts * 1000;
    let tickers: Vec<String> = (0..cfg.n_tickers).map(|i| format!("SYN{}-T{:02}", cfg.seed, i)).collect();
    let expected_per_period = cfg.trade_rate_per_min * cfg.book_update_period_s as f64 / 60.0;
    let poisson = (expected_per_period > 0.0).then(|| Poisson::new(expected_per_period).expect("positive rate"));
    let vol = cfg.vol_per_step_c as i32;
    let max_print = (cfg.depth_per_level / 2).max(1);

    let mut pending = Vec::new();
    for (ti, _) in tickers.iter().enumerate() {
        let mut mid: i32 = rng.random_range(20..=80);
        let mut t = start;
        while t < end {
            let (snap, bid, ask) = snapshot_around(mid as u8, cfg.spread_c, cfg.depth_per_level);
            pending.push(Pending { ts: t, ticker: ti, rank: 0, payload: EventPayload::BookSnapshot(snap) });
            let period_end = (t + period_ms).min(end);
            if let Some(dist) = &poisson {
                let n = dist.sample(&mut rng) as u64;
                let span = period_end - t;
                for _ in 0..n {
                    let offset = if span > 1 { rng.random_range(1..span) } else { 0 };
                    let price = if rng.random_bool(0.5) { bid } else { ask };
                    let count = rng.random_range(1..=max_print);
                    pending.push(Pending {
                        ts: t + offset,
                        ticker: ti,
                        rank: 1,
                        payload: EventPayload::TradePrint(TradePrint { price, count }),
                    });
                }
            }
            if vol > 0 {
                mid = (mid + rng.random_range(-vol..=vol)).clamp(2, 98);
            }
            t += period_ms;
        }
        let outcome = if mid >= 50 { Outcome::Yes } else { Outcome::No };
        pending.push(Pending { ts: end, ticker: ti, rank: 2, payload: EventPayload::Lifecycle(MarketStatus::Closed) });
        pending.push(Pending { ts: end, ticker: ti, rank: 3, payload: EventPayload::Settlement(outcome) });
    }
    // Stable sort keeps the sampling order among equal keys.
    pending.sort_by_key(|p| (p.ts, p.rank, p.ticker));
    let events = pending
        .into_iter()
        .enumerate()
        .map(|(seq, p)| MarketEvent { ts: p.ts, seq: seq as u64, ticker: tickers[p.ticker].clone(), payload: p.payload })
        .collect();

    let metadata = EpisodeMetadata {
        episode_id: format!("synth-{}", cfg.seed),
        tickers,
        start_ts: start,
        end_ts: end,
        bankroll: cfg.bankroll,
        execution_mode: cfg.execution_mode,
        maker_queue_mode: MakerQueueMode::TradeOnly,
        fee_model_version: "quadratic-v1".into(),
        format_version: FORMAT_VERSION.into(),
        orderbook_kind: OrderbookKind::Snapshot,
    };
    let episode = Episode { metadata, events };
    episode.validate()?;
    Ok(episode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::render_episode;

    #[test]
    fn same_config_same_bytes() {
        let cfg = SynthConfig { seed: 11, ..Default::default() };
        let a = render_episode(&generate_synthetic(&cfg).unwrap()).unwrap();
        let b = render_episode(&generate_synthetic(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = render_episode(&generate_synthetic(&SynthConfig { seed: 12, ..cfg }).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_vol_keeps_mid_constant() {
        let cfg = SynthConfig { seed: 3, vol_per_step_c: 0, n_tickers: 1, ..Default::default() };
        let ep = generate_synthetic(&cfg).unwrap();
        let mids: Vec<u32> = ep
            .events
            .iter()
            .filter_map(|e| match &e.payload {
                EventPayload::BookSnapshot(s) => {
                    let bid = s.yes_bids.last().unwrap().0 as u32;
                    let ask = 100 - s.no_bids.last().unwrap().0 as u32;
                    Some(bid + ask)
                }
                _ => None,
            })
            .collect();
        assert_eq!(mids.len(), 360);
        assert!(mids.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn zero_trade_rate_has_no_prints() {
        let cfg = SynthConfig { seed: 3, trade_rate_per_min: 0.0, ..Default::default() };
        let ep = generate_synthetic(&cfg).unwrap();
        assert!(!ep.events.iter().any(|e| matches!(e.payload, EventPayload::TradePrint(_))));
    }

    #[test]
    fn snapshot_levels_fit_grid() {
        for mid in 2..=98u8 {
            for spread in [1u8, 2, 5, 96] {
                let (snap, bid, ask) = snapshot_around(mid, spread, 7);
                assert!(bid >= 1 && ask <= 99 && ask - bid == spread);
                assert_eq!(snap.yes_bids.last().unwrap().0, bid);
                assert_eq!(100 - snap.no_bids.last().unwrap().0, ask);
                assert!(snap.yes_bids.len() <= 3 && snap.no_bids.len() <= 3);
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            SynthConfig { n_tickers: 0, ..Default::default() },
            SynthConfig { spread_c: 0, ..Default::default() },
            SynthConfig { spread_c: 97, ..Default::default() },
            SynthConfig { duration_s: 0, ..Default::default() },
            SynthConfig { trade_rate_per_min: f64::NAN, ..Default::default() },
        ] {
            assert!(matches!(generate_synthetic(&cfg), Err(EpisodeError::InvalidConfig(_))));
        }
    }
}
