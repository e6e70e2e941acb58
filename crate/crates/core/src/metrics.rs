//! Per-episode and aggregate metrics.
//!
//! Everything except Sharpe is exact: money stays in micro-USD and ratios are
//! carried as integer fractions until they are rendered as fixed-point
//! decimal strings with [`DECIMALS`] places.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::execution::Fill;
use crate::tradelog::OrderRecord;
use crate::types::{format_ratio, Direction, Liquidity, Micros, Qty, Side, Ts};

pub const DECIMALS: u32 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("equity curve is empty")]
    EmptyCurve,
    #[error("no episodes to aggregate")]
    NoEpisodes,
    #[error("malformed decimal {0:?}")]
    BadDecimal(String),
}

/// A non-negative fraction `num / den` with `den > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub num: i128,
    pub den: i128,
}

impl Fraction {
    pub const ZERO: Fraction = Fraction { num: 0, den: 1 };

    pub fn new(num: i128, den: i128) -> Self {
        assert!(den > 0);
        Self { num, den }
    }

    pub fn cmp_value(&self, other: &Fraction) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }

    pub fn pct_string(&self) -> String {
        format_ratio(self.num * 100, self.den, DECIMALS)
    }
}

/// Largest peak-to-trough decline relative to the running peak, in one pass.
pub fn max_drawdown(equity: &[Micros]) -> Fraction {
    let mut peak: Option<Micros> = None;
    let mut worst = Fraction::ZERO;
    for &e in equity {
        let p = match peak {
            Some(p) if p >= e => p,
            _ => {
                peak = Some(e);
                e
            }
        };
        if p > 0 && e < p {
            let dd = Fraction::new((p - e) as i128, p as i128);
            if dd.cmp_value(&worst) == Ordering::Greater {
                worst = dd;
            }
        }
    }
    worst
}

/// Per-sample simple returns; samples following a non-positive equity are
/// skipped.
pub fn simple_returns(equity: &[Micros]) -> Vec<f64> {
    equity
        .windows(2)
        .filter(|w| w[0] > 0)
        .map(|w| (w[1] - w[0]) as f64 / w[0] as f64)
        .collect()
}

/// Non-annualized `mean / population std` of per-sample returns, with the
/// number of returns used. `None` with fewer than two returns or zero
/// dispersion.
pub fn sharpe(equity: &[Micros]) -> (Option<f64>, usize) {
    let r = simple_returns(equity);
    let n = r.len();
    if n < 2 {
        return (None, n);
    }
    let mean = r.iter().sum::<f64>() / n as f64;
    let var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return (None, n);
    }
    (Some(mean / var.sqrt()), n)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub bankroll: Micros,
    pub final_equity: Micros,
    pub pnl: Micros,
    pub return_pct: String,
    pub max_drawdown_pct: String,
    pub sharpe: Option<String>,
    pub sharpe_samples: usize,
    pub fees_paid: Micros,
    pub avg_slippage_c: Option<String>,
    pub fill_ratio_pct: Option<String>,
    pub contracts_traded: Qty,
    pub contracts_submitted: Qty,
    pub orders_submitted: u64,
    pub data_warnings: u64,
}

pub fn compute_metrics(
    equity_curve: &[(Ts, Micros)],
    fills: &[Fill],
    orders: &[OrderRecord],
    bankroll: Micros,
) -> Result<EpisodeMetrics, MetricsError> {
    let last = equity_curve.last().ok_or(MetricsError::EmptyCurve)?;
    let values: Vec<Micros> = equity_curve.iter().map(|p| p.1).collect();
    let pnl = last.1 - bankroll;
    let (sharpe_value, sharpe_samples) = sharpe(&values);

    let contracts_traded: Qty = fills.iter().map(|f| f.quantity).sum();
    let contracts_submitted: Qty = orders.iter().map(|o| o.quantity).sum();
    let fill_ratio_pct = (contracts_submitted > 0)
        .then(|| format_ratio(100 * contracts_traded as i128, contracts_submitted as i128, DECIMALS));

    // Slippage in half-cents per contract, positive = worse than mid.
    let mut slip_num: i128 = 0;
    let mut slip_qty: i128 = 0;
    for f in fills.iter().filter(|f| f.liquidity == Liquidity::Taker) {
        let Some(mid) = f.mid_at_submit else { continue };
        let side_mid = match f.side {
            Side::Yes => mid.0 as i128,
            Side::No => 200 - mid.0 as i128,
        };
        let diff = 2 * f.price as i128 - side_mid;
        let signed = match f.direction {
            Direction::Buy => diff,
            Direction::Sell => -diff,
        };
        slip_num += signed * f.quantity as i128;
        slip_qty += f.quantity as i128;
    }
    let avg_slippage_c = (slip_qty > 0).then(|| format_ratio(slip_num, 2 * slip_qty, DECIMALS));

    Ok(EpisodeMetrics {
        bankroll,
        final_equity: last.1,
        pnl,
        return_pct: format_ratio(100 * pnl as i128, bankroll as i128, DECIMALS),
        max_drawdown_pct: max_drawdown(&values).pct_string(),
        sharpe: sharpe_value.map(|s| s.to_string()),
        sharpe_samples,
        fees_paid: fills.iter().map(|f| f.fee).sum(),
        avg_slippage_c,
        fill_ratio_pct,
        contracts_traded,
        contracts_submitted,
        orders_submitted: orders.len() as u64,
        data_warnings: 0,
    })
}

/// Parses a fixed-point decimal produced by [`format_ratio`] into an integer
/// scaled by `10^DECIMALS`.
pub fn parse_fixed(s: &str) -> Result<i128, MetricsError> {
    let bad = || MetricsError::BadDecimal(s.to_string());
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if frac.len() > DECIMALS as usize || int.is_empty() {
        return Err(bad());
    }
    let int: i128 = int.parse().map_err(|_| bad())?;
    let frac_val: i128 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    let frac_scaled = frac_val * 10i128.pow(DECIMALS - frac.len() as u32);
    let v = int * 10i128.pow(DECIMALS) + frac_scaled;
    Ok(if neg { -v } else { v })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub episodes: usize,
    pub bankroll: Micros,
    pub pnl: Micros,
    pub return_pct: String,
    /// Worst per-episode drawdown.
    pub max_drawdown_pct: String,
    pub fees_paid: Micros,
    pub fill_ratio_pct: Option<String>,
    pub contracts_traded: Qty,
    pub contracts_submitted: Qty,
    pub orders_submitted: u64,
    pub data_warnings: u64,
}

pub fn aggregate(per_episode: &[EpisodeMetrics]) -> Result<AggregateMetrics, MetricsError> {
    if per_episode.is_empty() {
        return Err(MetricsError::NoEpisodes);
    }
    let bankroll: Micros = per_episode.iter().map(|m| m.bankroll).sum();
    let pnl: Micros = per_episode.iter().map(|m| m.pnl).sum();
    let contracts_traded: Qty = per_episode.iter().map(|m| m.contracts_traded).sum();
    let contracts_submitted: Qty = per_episode.iter().map(|m| m.contracts_submitted).sum();
    let mut worst = &per_episode[0].max_drawdown_pct;
    let mut worst_val = parse_fixed(worst)?;
    for m in &per_episode[1..] {
        let v = parse_fixed(&m.max_drawdown_pct)?;
        if v > worst_val {
            worst_val = v;
            worst = &m.max_drawdown_pct;
        }
    }
    Ok(AggregateMetrics {
        episodes: per_episode.len(),
        bankroll,
        pnl,
        return_pct: format_ratio(100 * pnl as i128, bankroll as i128, DECIMALS),
        max_drawdown_pct: worst.clone(),
        fees_paid: per_episode.iter().map(|m| m.fees_paid).sum(),
        fill_ratio_pct: (contracts_submitted > 0)
            .then(|| format_ratio(100 * contracts_traded as i128, contracts_submitted as i128, DECIMALS)),
        contracts_traded,
        contracts_submitted,
        orders_submitted: per_episode.iter().map(|m| m.orders_submitted).sum(),
        data_warnings: per_episode.iter().map(|m| m.data_warnings).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{HalfCents, OrderType, TimeInForce};
    use proptest::prelude::*;

    const USD: Micros = 1_000_000;

    fn curve(dollars: &[i64]) -> Vec<(Ts, Micros)> {
        dollars.iter().enumerate().map(|(i, d)| (i as Ts * 60_000, d * USD)).collect()
    }

    fn brute_drawdown(e: &[Micros]) -> Fraction {
        // Every (earlier, later) pair.
        let mut worst = Fraction::ZERO;
        for j in 0..e.len() {
            for i in 0..=j {
                if e[i] > 0 && e[j] < e[i] {
                    let dd = Fraction::new((e[i] - e[j]) as i128, e[i] as i128);
                    if dd.cmp_value(&worst) == Ordering::Greater {
                        worst = dd;
                    }
                }
            }
        }
        worst
    }

    #[test]
    fn flat_curve() {
        let m = compute_metrics(&curve(&[1000, 1000, 1000]), &[], &[], 1000 * USD).unwrap();
        assert_eq!(m.pnl, 0);
        assert_eq!(m.max_drawdown_pct, "0.000000");
        assert_eq!(m.sharpe, None);
        assert_eq!(m.fill_ratio_pct, None);
        assert_eq!(m.avg_slippage_c, None);
    }

    #[test]
    fn drawdown_example() {
        let m = compute_metrics(&curve(&[1000, 1100, 990, 1050]), &[], &[], 1000 * USD).unwrap();
        assert_eq!(m.max_drawdown_pct, "10.000000");
        assert_eq!(m.pnl, 50 * USD);
        assert_eq!(m.return_pct, "5.000000");
    }

    #[test]
    fn empty_curve_errors() {
        assert_eq!(compute_metrics(&[], &[], &[], 1), Err(MetricsError::EmptyCurve));
    }

    fn order(qty: Qty) -> OrderRecord {
        OrderRecord {
            order_id: 1,
            ts: 0,
            ticker: "A".into(),
            side: Side::Yes,
            direction: Direction::Buy,
            order_type: OrderType::Market,
            limit_price: None,
            quantity: qty,
            tif: TimeInForce::Ioc,
            mid_at_submit: None,
        }
    }

    fn fill(side: Side, direction: Direction, price: u8, qty: Qty, liq: Liquidity, mid: Option<u32>) -> Fill {
        Fill {
            order_id: 1,
            ticker: "A".into(),
            side,
            direction,
            price,
            quantity: qty,
            liquidity: liq,
            fee: 0,
            ts: 0,
            mid_at_submit: mid.map(HalfCents),
        }
    }

    #[test]
    fn fill_ratio_and_slippage() {
        let orders = vec![order(60), order(40)];
        let fills = vec![
            // Bought YES at 45 vs mid 43.5: 1.5c worse.
            fill(Side::Yes, Direction::Buy, 45, 50, Liquidity::Taker, Some(87)),
            // Sold NO at 55 vs NO mid 56.5: 1.5c worse.
            fill(Side::No, Direction::Sell, 55, 30, Liquidity::Taker, Some(87)),
            // Maker fills carry no slippage.
            fill(Side::Yes, Direction::Buy, 40, 4, Liquidity::Maker, Some(87)),
        ];
        let m = compute_metrics(&curve(&[1000]), &fills, &orders, 1000 * USD).unwrap();
        assert_eq!(m.fill_ratio_pct.as_deref(), Some("84.000000"));
        assert_eq!(m.avg_slippage_c.as_deref(), Some("1.500000"));
        assert_eq!(m.contracts_traded, 84);
        assert_eq!(m.orders_submitted, 2);
    }

    #[test]
    fn sharpe_reference() {
        let e: Vec<Micros> = vec![100, 110, 99, 120, 118];
        let (s, n) = sharpe(&e);
        assert_eq!(n, 4);
        let r = [0.1, -0.1, 21.0 / 99.0, -2.0 / 120.0];
        let mean = r.iter().sum::<f64>() / 4.0;
        let sd = (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((s.unwrap() - mean / sd).abs() <= 1e-12 * (mean / sd).abs());
    }

    #[test]
    fn parse_fixed_round_trips() {
        for (n, d) in [(1i128, 3i128), (-7, 9), (123456789, 1000), (0, 5)] {
            let s = format_ratio(n, d, DECIMALS);
            assert_eq!(format_ratio(parse_fixed(&s).unwrap(), 10i128.pow(DECIMALS), DECIMALS), s);
        }
        assert!(parse_fixed("abc").is_err());
    }

    fn with(pnl: Micros, bankroll: Micros, submitted: Qty, traded: Qty) -> EpisodeMetrics {
        let mut m = compute_metrics(&[(0, bankroll + pnl)], &[], &[], bankroll).unwrap();
        m.contracts_submitted = submitted;
        m.contracts_traded = traded;
        m
    }

    #[test]
    fn aggregate_rules() {
        let one = with(10 * USD, 1000 * USD, 10, 10);
        let agg = aggregate(std::slice::from_ref(&one)).unwrap();
        assert_eq!(agg.pnl, one.pnl);
        assert_eq!(agg.return_pct, one.return_pct);
        assert_eq!(agg.max_drawdown_pct, one.max_drawdown_pct);

        let agg = aggregate(&[with(10 * USD, 1000 * USD, 0, 0), with(-10 * USD, 1000 * USD, 0, 0)]).unwrap();
        assert_eq!(agg.pnl, 0);
        assert_eq!(agg.return_pct, "0.000000");

        let agg = aggregate(&[with(0, USD, 10, 10), with(0, USD, 90, 45)]).unwrap();
        assert_eq!(agg.fill_ratio_pct.as_deref(), Some("55.000000"));
        assert_eq!(aggregate(&[]), Err(MetricsError::NoEpisodes));
    }

    proptest! {
        #[test]
        fn streaming_drawdown_matches_brute_force(e in proptest::collection::vec(1i64..2_000, 1..80)) {
            let fast = max_drawdown(&e);
            let slow = brute_drawdown(&e);
            prop_assert_eq!(fast.cmp_value(&slow), Ordering::Equal);
        }
    }
}
