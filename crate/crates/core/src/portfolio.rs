//! Cash, positions, fees and P&L in integer micro-USD.
//!
//! Cost basis is the average cost per `(ticker, side)` and includes the
//! purchase fees, so `cash + open cost basis == bankroll + realized_pnl`
//! holds exactly after every operation.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::execution::Fill;
use crate::types::{Direction, HalfCents, Micros, Outcome, Qty, Side, MICROS_PER_CONTRACT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PortfolioError {
    #[error("insufficient funds: need {needed} micro-USD, have {available}")]
    InsufficientFunds { needed: Micros, available: Micros },
    #[error("insufficient {side:?} position in {ticker}: need {needed}, hold {held}")]
    InsufficientPosition { ticker: String, side: Side, needed: Qty, held: Qty },
    #[error("unknown ticker {0:?}")]
    UnknownTicker(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Position {
    pub yes_qty: Qty,
    pub no_qty: Qty,
    pub yes_cost: Micros,
    pub no_cost: Micros,
}

impl Position {
    pub fn qty(&self, side: Side) -> Qty {
        match side {
            Side::Yes => self.yes_qty,
            Side::No => self.no_qty,
        }
    }

    pub fn cost(&self, side: Side) -> Micros {
        match side {
            Side::Yes => self.yes_cost,
            Side::No => self.no_cost,
        }
    }

    fn parts_mut(&mut self, side: Side) -> (&mut Qty, &mut Micros) {
        match side {
            Side::Yes => (&mut self.yes_qty, &mut self.yes_cost),
            Side::No => (&mut self.no_qty, &mut self.no_cost),
        }
    }

    pub fn is_flat(&self) -> bool {
        self.yes_qty == 0 && self.no_qty == 0
    }

    /// Signed net exposure `yes_qty - no_qty`.
    pub fn net(&self) -> i64 {
        self.yes_qty as i64 - self.no_qty as i64
    }

    /// Value at a YES mark; without a mark the position is held at cost.
    pub fn value(&self, mark: Option<HalfCents>) -> Micros {
        match mark {
            Some(m) => {
                self.yes_qty as Micros * m.micros_per_contract()
                    + self.no_qty as Micros * m.complement().micros_per_contract()
            }
            None => self.yes_cost + self.no_cost,
        }
    }
}

/// What a settlement did to one ticker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SettlementResult {
    pub ticker: String,
    pub outcome: Outcome,
    pub yes_qty: Qty,
    pub no_qty: Qty,
    pub payout: Micros,
    pub realized: Micros,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Portfolio {
    pub bankroll: Micros,
    pub cash: Micros,
    pub positions: BTreeMap<String, Position>,
    pub fees_paid: Micros,
    pub realized_pnl: Micros,
    /// Contract notional paid on buys (fees excluded).
    pub purchase_costs: Micros,
    /// Contract notional received on sells (fees excluded).
    pub sale_proceeds: Micros,
    pub settlement_proceeds: Micros,
    pub settled: BTreeSet<String>,
}

impl Portfolio {
    pub fn new(bankroll: Micros, tickers: impl IntoIterator<Item = String>) -> Self {
        Self {
            bankroll,
            cash: bankroll,
            positions: tickers.into_iter().map(|t| (t, Position::default())).collect(),
            fees_paid: 0,
            realized_pnl: 0,
            purchase_costs: 0,
            sale_proceeds: 0,
            settlement_proceeds: 0,
            settled: BTreeSet::new(),
        }
    }

    pub fn position(&self, ticker: &str) -> Position {
        self.positions.get(ticker).copied().unwrap_or_default()
    }

    pub fn apply_fill(&mut self, fill: &Fill) -> Result<(), PortfolioError> {
        debug_assert!(fill.quantity >= 1 && fill.fee >= 0);
        let pos = self
            .positions
            .get_mut(&fill.ticker)
            .ok_or_else(|| PortfolioError::UnknownTicker(fill.ticker.clone()))?;
        let notional = fill.notional();
        match fill.direction {
            Direction::Buy => {
                let needed = notional + fill.fee;
                if self.cash < needed {
                    return Err(PortfolioError::InsufficientFunds { needed, available: self.cash });
                }
                self.cash -= needed;
                self.purchase_costs += notional;
                let (qty, cost) = pos.parts_mut(fill.side);
                *qty += fill.quantity;
                *cost += needed;
            }
            Direction::Sell => {
                let (qty, cost) = pos.parts_mut(fill.side);
                if *qty < fill.quantity {
                    return Err(PortfolioError::InsufficientPosition {
                        ticker: fill.ticker.clone(),
                        side: fill.side,
                        needed: fill.quantity,
                        held: *qty,
                    });
                }
                let removed = if fill.quantity == *qty {
                    *cost
                } else {
                    (*cost as i128 * fill.quantity as i128 / *qty as i128) as Micros
                };
                *qty -= fill.quantity;
                *cost -= removed;
                let net = notional - fill.fee;
                self.cash += net;
                self.sale_proceeds += notional;
                self.realized_pnl += net - removed;
            }
        }
        self.fees_paid += fill.fee;
        Ok(())
    }

    /// Pays out the winning side at $1 per contract and clears the ticker.
    pub fn settle(&mut self, ticker: &str, outcome: Outcome) -> Result<SettlementResult, PortfolioError> {
        let pos = self
            .positions
            .get_mut(ticker)
            .ok_or_else(|| PortfolioError::UnknownTicker(ticker.to_string()))?;
        let held = std::mem::take(pos);
        let winners = held.qty(outcome.winning_side());
        let payout = winners as Micros * MICROS_PER_CONTRACT;
        let realized = payout - held.yes_cost - held.no_cost;
        self.cash += payout;
        self.settlement_proceeds += payout;
        self.realized_pnl += realized;
        self.settled.insert(ticker.to_string());
        Ok(SettlementResult {
            ticker: ticker.to_string(),
            outcome,
            yes_qty: held.yes_qty,
            no_qty: held.no_qty,
            payout,
            realized,
        })
    }

    /// Cash plus marked positions.
    pub fn equity(&self, marks: &BTreeMap<String, Option<HalfCents>>) -> Micros {
        self.cash
            + self
                .positions
                .iter()
                .map(|(t, p)| p.value(marks.get(t).copied().flatten()))
                .sum::<Micros>()
    }

    pub fn open_cost_basis(&self) -> Micros {
        self.positions.values().map(|p| p.yes_cost + p.no_cost).sum()
    }

    pub fn unrealized_pnl(&self, marks: &BTreeMap<String, Option<HalfCents>>) -> Micros {
        self.equity(marks) - self.cash - self.open_cost_basis()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::execution::FeeModel;
    use crate::types::Liquidity;
    use proptest::prelude::*;

    fn fill(side: Side, direction: Direction, price: u8, qty: Qty, liq: Liquidity) -> Fill {
        Fill {
            order_id: 1,
            ticker: "A".into(),
            side,
            direction,
            price,
            quantity: qty,
            liquidity: liq,
            fee: FeeModel::default().fee(liq, price, qty),
            ts: 0,
            mid_at_submit: None,
        }
    }

    fn fresh() -> Portfolio {
        Portfolio::new(1_000_000_000, ["A".to_string(), "B".to_string()])
    }

    #[test]
    fn buy_then_sell_round_trip() {
        let mut p = fresh();
        p.apply_fill(&fill(Side::Yes, Direction::Buy, 50, 10, Liquidity::Taker)).unwrap();
        assert_eq!(p.cash, 994_825_000);
        assert_eq!(p.position("A").yes_cost, 5_175_000);
        p.apply_fill(&fill(Side::Yes, Direction::Sell, 50, 10, Liquidity::Taker)).unwrap();
        assert_eq!(p.cash, 999_650_000);
        assert_eq!(p.realized_pnl, -350_000);
        assert_eq!(p.fees_paid, 350_000);
        assert!(p.position("A").is_flat());
        assert_eq!(p.position("A").yes_cost, 0);
    }

    #[test]
    fn sell_without_position_rejected() {
        let mut p = fresh();
        let err = p.apply_fill(&fill(Side::No, Direction::Sell, 50, 1, Liquidity::Taker)).unwrap_err();
        assert!(matches!(err, PortfolioError::InsufficientPosition { .. }));
        assert_eq!(p, fresh());
    }

    #[test]
    fn unaffordable_buy_rejected() {
        let mut p = Portfolio::new(100_000, ["A".to_string()]);
        let err = p.apply_fill(&fill(Side::Yes, Direction::Buy, 50, 10, Liquidity::Taker)).unwrap_err();
        assert!(matches!(err, PortfolioError::InsufficientFunds { .. }));
    }

    fn holding_yes_at_cost(cost: Micros) -> Portfolio {
        let mut p = fresh();
        let pos = p.positions.get_mut("A").unwrap();
        pos.yes_qty = 10;
        pos.yes_cost = cost;
        p.cash -= cost;
        p
    }

    #[test]
    fn settle_yes_pays_one_dollar() {
        let mut p = holding_yes_at_cost(5_000_000);
        let cash0 = p.cash;
        let r = p.settle("A", Outcome::Yes).unwrap();
        assert_eq!(p.cash - cash0, 10_000_000);
        assert_eq!(p.realized_pnl, 5_000_000);
        assert_eq!(r.payout, 10_000_000);
        assert!(p.position("A").is_flat());
    }

    #[test]
    fn settle_no_pays_nothing_to_yes() {
        let mut p = holding_yes_at_cost(5_000_000);
        let cash0 = p.cash;
        p.settle("A", Outcome::No).unwrap();
        assert_eq!(p.cash, cash0);
        assert_eq!(p.realized_pnl, -5_000_000);
    }

    #[test]
    fn settle_flat_only_marks_settled() {
        let mut p = fresh();
        let r = p.settle("B", Outcome::Yes).unwrap();
        assert_eq!(r.payout, 0);
        assert!(p.settled.contains("B"));
        assert_eq!(p.cash, p.bankroll);
        assert!(matches!(p.settle("Z", Outcome::No), Err(PortfolioError::UnknownTicker(_))));
    }

    #[test]
    fn equity_marks() {
        let mut p = fresh();
        assert_eq!(p.equity(&BTreeMap::new()), p.cash);
        p.positions.get_mut("A").unwrap().yes_qty = 10;
        p.positions.get_mut("A").unwrap().yes_cost = 4_000_000;
        let mut marks = BTreeMap::new();
        marks.insert("A".to_string(), Some(HalfCents(87)));
        assert_eq!(p.equity(&marks), p.cash + 4_350_000);
        marks.insert("A".to_string(), None);
        assert_eq!(p.equity(&marks), p.cash + 4_000_000);
    }

    #[test]
    fn complementary_pair_is_mark_independent() {
        let pos = Position { yes_qty: 10, no_qty: 10, yes_cost: 3, no_cost: 4 };
        for m in 0..=200 {
            assert_eq!(pos.value(Some(HalfCents(m))), 10_000_000);
        }
    }

    proptest! {
        #[test]
        fn accounting_identity_holds(trades in proptest::collection::vec((any::<bool>(), any::<bool>(), 1u8..=99, 1u64..20, any::<bool>()), 1..60), outcome_yes in any::<bool>()) {
            let mut p = fresh();
            for (yes, buy, price, qty, maker) in trades {
                let side = if yes { Side::Yes } else { Side::No };
                let dir = if buy { Direction::Buy } else { Direction::Sell };
                let liq = if maker { Liquidity::Maker } else { Liquidity::Taker };
                let before = p.clone();
                if p.apply_fill(&fill(side, dir, price, qty, liq)).is_err() {
                    prop_assert_eq!(&p, &before);
                }
                prop_assert!(p.cash >= 0);
                prop_assert!(p.fees_paid >= before.fees_paid);
                prop_assert_eq!(p.cash + p.open_cost_basis(), p.bankroll + p.realized_pnl);
                for pos in p.positions.values() {
                    prop_assert!(pos.yes_qty > 0 || pos.yes_cost == 0);
                    prop_assert!(pos.no_qty > 0 || pos.no_cost == 0);
                }
            }
            p.settle("A", if outcome_yes { Outcome::Yes } else { Outcome::No }).unwrap();
            p.settle("B", Outcome::No).unwrap();
            let marks = BTreeMap::new();
            prop_assert_eq!(p.equity(&marks), p.cash);
            prop_assert_eq!(
                p.cash - p.bankroll,
                p.sale_proceeds + p.settlement_proceeds - p.purchase_costs - p.fees_paid
            );
            prop_assert_eq!(p.cash - p.bankroll, p.realized_pnl);
        }
    }
}
