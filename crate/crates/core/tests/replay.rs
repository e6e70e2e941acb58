use pmbench_core::agent_api::{Agent, AgentContext, AgentError};
use pmbench_core::episode::{
    load_episode, write_episode, BookDelta, BookSnapshot, Episode, EpisodeMetadata, EventPayload, MarketEvent, MarketStatus,
    OrderbookKind, TradePrint, FORMAT_VERSION,
};
use pmbench_core::execution::OrderSpec;
use pmbench_core::simulator::{run_episode, SimConfig};
use pmbench_core::tradelog::{CancelReason, LogEntry};
use pmbench_core::types::{BookSide, Direction, ExecutionMode, Liquidity, MakerQueueMode, Outcome, Side, TimeInForce};

const MIN: i64 = 60_000;

fn ev(ts: i64, seq: u64, payload: EventPayload) -> MarketEvent {
    MarketEvent { ts, seq, ticker: "K".into(), payload }
}

fn delta(side: BookSide, price: u8, delta: i64) -> EventPayload {
    EventPayload::BookDelta(BookDelta { side, price, delta })
}

/// One market, fed by deltas, closed before it settles YES.
fn episode() -> Episode {
    let events = vec![
        ev(0, 0, EventPayload::BookSnapshot(BookSnapshot { yes_bids: vec![(40, 10), (41, 10)], no_bids: vec![(55, 10), (56, 10)] })),
        ev(30_000, 1, delta(BookSide::YesBid, 42, 5)),
        // would cross: 42 + 58 = 100
        ev(MIN + 10_000, 2, delta(BookSide::NoBid, 58, 3)),
        ev(MIN + 20_000, 3, EventPayload::TradePrint(TradePrint { price: 42, count: 30 })),
        ev(2 * MIN + 5_000, 4, delta(BookSide::NoBid, 56, -50)),
        ev(2 * MIN + 30_000, 5, EventPayload::Lifecycle(MarketStatus::Closed)),
        ev(2 * MIN + 40_000, 6, delta(BookSide::YesBid, 42, -5)),
        ev(4 * MIN, 7, EventPayload::Settlement(Outcome::Yes)),
    ];
    Episode {
        metadata: EpisodeMetadata {
            episode_id: "delta-feed".into(),
            tickers: vec!["K".into()],
            start_ts: 0,
            end_ts: 5 * MIN,
            bankroll: 100_000_000,
            execution_mode: ExecutionMode::MakerTaker,
            maker_queue_mode: MakerQueueMode::TradeOnly,
            fee_model_version: "quadratic-v1".into(),
            format_version: FORMAT_VERSION.into(),
            orderbook_kind: OrderbookKind::Mixed,
        },
        events,
    }
}

/// Step 0: take 4 YES and rest a NO bid. Step 1: rest a YES bid at 42.
/// Step 3, after the close: try to trade.
struct Script {
    refused_after_close: bool,
}

impl Agent for Script {
    fn name(&self) -> &str {
        "script"
    }

    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), AgentError> {
        let fail = |e: pmbench_core::ToolError| AgentError::Failed(e.to_string());
        match ctx.step_index() {
            0 => {
                ctx.place_order(OrderSpec::market("K", Side::Yes, Direction::Buy, 4)).map_err(fail)?;
                ctx.place_order(OrderSpec::limit("K", Side::No, Direction::Buy, 50, 2, TimeInForce::Gtc)).map_err(fail)?;
            }
            1 => {
                ctx.place_order(OrderSpec::limit("K", Side::Yes, Direction::Buy, 42, 3, TimeInForce::Gtc)).map_err(fail)?;
            }
            3 => {
                self.refused_after_close = ctx.place_order(OrderSpec::market("K", Side::Yes, Direction::Buy, 1)).is_err();
            }
            _ => {}
        }
        let _ = ctx.done();
        Ok(())
    }
}

#[test]
fn delta_episode_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let ep = episode();
    write_episode(&ep, dir.path()).unwrap();
    assert_eq!(load_episode(dir.path()).unwrap(), ep);
}

#[test]
fn delta_feed_replay() {
    let ep = episode();
    let cfg = SimConfig { cadence_s: 60, equity_sample_s: 60, ..SimConfig::default() };
    let mut agent = Script { refused_after_close: false };
    let r = run_episode(&ep, &mut agent, &cfg).unwrap();
    assert!(r.aborted.is_none());
    assert!(agent.refused_after_close);
    assert_eq!(r.steps, 4);

    // The crossing delta is skipped and the oversized removal clamped, each with a warning.
    assert_eq!(r.warnings.len(), 2, "{:?}", r.warnings);
    assert!(r.warnings[0].contains("delta skipped"));
    assert!(r.warnings[1].contains("clamped"));

    let fills: Vec<_> = r.log.iter().filter_map(|e| if let LogEntry::Fill(f) = e { Some(f) } else { None }).collect();
    // 4 YES taken at 100 - 56 = 44, then the resting YES bid at 42 fills on the print.
    assert_eq!(fills.len(), 2, "{fills:?}");
    assert_eq!((fills[0].price, fills[0].quantity, fills[0].liquidity), (44, 4, Liquidity::Taker));
    assert_eq!((fills[1].price, fills[1].quantity, fills[1].liquidity), (42, 3, Liquidity::Maker));
    // 42 was a new level at 5 ahead, the print of 30 clears it.
    assert_eq!(fills[1].ts, MIN + 20_000);

    // The NO bid at 50 never fills and is canceled when the market closes.
    let cancels: Vec<_> = r.log.iter().filter_map(|e| if let LogEntry::Cancel(c) = e { Some(c) } else { None }).collect();
    assert_eq!(cancels.len(), 1);
    assert_eq!((cancels[0].order_id, cancels[0].canceled, cancels[0].reason), (2, 2, CancelReason::MarketClosed));

    let p = &r.final_portfolio;
    let identity = p.sale_proceeds + p.settlement_proceeds - p.purchase_costs - p.fees_paid;
    assert_eq!(r.final_equity() - r.bankroll, identity);
    assert_eq!(p.settlement_proceeds, 7_000_000);
    assert_eq!(r.final_equity(), p.cash);

    // The mark froze at the close (42 bid, 100 - 55 ask); the later delta at 42 does not move it.
    let at = |ts: i64| r.equity_curve.iter().find(|p| p.0 == ts).unwrap().1;
    let cash_after_buys = r.bankroll - 4 * 440_000 - fills[0].fee - 3 * 420_000 - fills[1].fee;
    assert_eq!(at(3 * MIN), cash_after_buys + 7 * (42 + 45) * 5_000);
    assert_eq!(r.equity_curve.last().unwrap().0, 4 * MIN);
}
