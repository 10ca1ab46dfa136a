//! Daily account simulator: integer micro-unit cash, integer share
//! positions, tiered commissions, regulatory fees, debit interest,
//! dividends, splits and close-auction execution.

mod fees;
mod sim;

pub use fees::{from_micros, to_micros, FeeSchedule, OrderFees, RateSeries, MICROS};
pub use sim::{rolling_volatility, run_simulation, BasketRule, SimConfig, SimulationResult};

use std::fmt::Write as _;

use chrono::{Datelike, NaiveDate};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::panel::{DayRecord, MarketStore};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CostTotals {
    pub commission: i64,
    pub notional: i64,
    pub sec: i64,
    pub interest: i64,
    pub dividends: i64,
    /// Mark-to-market gains net of trade cash flows.
    pub trading_pnl: i64,
}

impl CostTotals {
    pub fn fees(&self) -> i64 {
        self.commission + self.notional + self.sec
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccountState {
    pub date: Option<NaiveDate>,
    /// Shares per store asset.
    pub shares: Vec<i64>,
    pub cash: i64,
    pub month_to_date_volume: i64,
    pub totals: CostTotals,
    pub positions_value: i64,
}

impl AccountState {
    pub fn new(n_assets: usize, cash: i64) -> Self {
        Self { date: None, shares: vec![0; n_assets], cash, month_to_date_volume: 0, totals: CostTotals::default(), positions_value: 0 }
    }

    pub fn nlv(&self) -> i64 {
        self.cash + self.positions_value
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trade {
    pub date: NaiveDate,
    pub asset: String,
    pub shares: i64,
    pub price: f64,
    pub commission: i64,
    pub notional_fee: i64,
    pub sec_fee: i64,
    pub forced: bool,
}

/// Cash movements of one day, each in micro-units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DayFlows {
    /// Signed: buys positive, sells and cash in lieu negative.
    pub trade_notional: i64,
    pub fees: i64,
    pub interest: i64,
    pub dividends: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerRow {
    pub date: NaiveDate,
    pub nlv: i64,
    pub cash: i64,
    pub positions_value: i64,
    pub totals: CostTotals,
    pub flows: DayFlows,
    /// `NLV − Σ max(0, −sᵢpᵢ)`, reported only.
    pub margin_excess: i64,
}

pub const LEDGER_HEADER: &str = "date,nlv,cash,positions_value,fees_commission,fees_notional,fees_sec,interest,dividends";
pub const TRADE_HEADER: &str = "date,asset,shares,price,commission,notional_fee,sec_fee,forced";

pub fn ledger_csv(rows: &[LedgerRow]) -> String {
    let m = from_micros;
    let mut s = format!("{LEDGER_HEADER}\n");
    for r in rows {
        let t = &r.totals;
        writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.date,
            m(r.nlv),
            m(r.cash),
            m(r.positions_value),
            m(t.commission),
            m(t.notional),
            m(t.sec),
            m(t.interest),
            m(t.dividends)
        )
        .unwrap();
    }
    s
}

pub fn trades_csv(trades: &[Trade]) -> String {
    let m = from_micros;
    let mut s = format!("{TRADE_HEADER}\n");
    for t in trades {
        writeln!(
            s,
            "{},{},{},{},{:.6},{:.6},{:.6},{}",
            t.date,
            t.asset,
            t.shares,
            t.price,
            m(t.commission),
            m(t.notional_fee),
            m(t.sec_fee),
            t.forced as u8
        )
        .unwrap();
    }
    s
}

/// `round(x)` to an integer share count, half away from zero.
pub fn round_shares(x: f64) -> i64 {
    x.round() as i64
}

/// Account bound to a record store.
pub struct Broker<'a> {
    store: &'a MarketStore,
    pub fees: FeeSchedule,
    pub rates: RateSeries,
    pub state: AccountState,
    pub trades: Vec<Trade>,
    pub ledger: Vec<LedgerRow>,
}

impl<'a> Broker<'a> {
    pub fn new(store: &'a MarketStore, fees: FeeSchedule, rates: RateSeries, cash: f64) -> Result<Self> {
        if !store.has_records() {
            return Err(Error::MissingData("the account simulator needs daily records".into()));
        }
        fees.validate()?;
        Ok(Self { store, fees, rates, state: AccountState::new(store.n_assets(), to_micros(cash)), trades: Vec::new(), ledger: Vec::new() })
    }

    fn record(&self, row: usize, asset: usize) -> Option<&DayRecord> {
        self.store.record(row, asset)
    }

    fn close(&self, row: usize, asset: usize) -> Result<f64> {
        self.record(row, asset).map(|r| r.close).ok_or_else(|| {
            Error::MissingData(format!("no close for held asset {} on {}", self.store.assets()[asset], self.store.dates()[row]))
        })
    }

    /// Opening price when quoted, else the latest earlier close divided by
    /// every split since, including today's.
    pub fn estimate_prices(&self, row: usize, assets: &[usize]) -> Result<Vec<f64>> {
        self.store.records_for_execution(row, assets)?;
        assets
            .iter()
            .map(|&a| {
                if let Some(open) = self.record(row, a).and_then(|r| r.open) {
                    return Ok(open);
                }
                let ratio = self.record(row, a).map_or(1.0, |r| r.split_ratio);
                if let Some(r) = (0..row).rev().find_map(|p| self.record(p, a)) {
                    return Ok(r.close / ratio);
                }
                Err(Error::MissingData(format!("no price history for {} before {}", self.store.assets()[a], self.store.dates()[row])))
            })
            .collect()
    }

    /// Overnight debit interest, month rollover, then today's splits and
    /// dividends on the positions carried in.
    pub fn accrue_daily(&mut self, row: usize, flows: &mut DayFlows) -> Result<()> {
        let date = self.store.dates()[row];
        if let Some(prev) = self.state.date {
            if date <= prev {
                return Err(Error::InvalidInput(format!("{date} does not follow {prev}")));
            }
            let days = (date - prev).num_days();
            let interest = self.fees.debit_interest(self.state.cash, self.rates.at(prev), days);
            self.state.cash -= interest;
            self.state.totals.interest += interest;
            flows.interest += interest;
            if (date.year(), date.month()) != (prev.year(), prev.month()) {
                self.state.month_to_date_volume = 0;
            }
        }
        self.state.date = Some(date);

        let held: Vec<usize> = (0..self.state.shares.len()).filter(|&a| self.state.shares[a] != 0).collect();
        self.store.records_for_execution(row, &held)?;
        for a in held {
            let Some(rec) = self.record(row, a).copied() else { continue };
            if rec.split_ratio != 1.0 {
                let exact = self.state.shares[a] as f64 * rec.split_ratio;
                let kept = exact.trunc() as i64;
                let lieu = to_micros((exact - kept as f64) * rec.close);
                self.state.shares[a] = kept;
                self.state.cash += lieu;
                flows.trade_notional -= lieu;
            }
            if rec.dividend_cash != 0.0 {
                let d = to_micros(self.state.shares[a] as f64 * rec.dividend_cash);
                self.state.cash += d;
                self.state.totals.dividends += d;
                flows.dividends += d;
            }
        }
        Ok(())
    }

    fn execute(&mut self, row: usize, asset: usize, delta: i64, forced: bool, flows: &mut DayFlows) -> Result<()> {
        if delta == 0 {
            return Ok(());
        }
        let price = self.close(row, asset)?;
        let fees = self.fees.order_fees(delta, price, self.state.month_to_date_volume);
        let notional = to_micros(delta.unsigned_abs() as f64 * price) * delta.signum();
        self.state.cash -= notional + fees.total();
        self.state.shares[asset] += delta;
        self.state.month_to_date_volume += delta.abs();
        self.state.totals.commission += fees.commission;
        self.state.totals.notional += fees.notional;
        self.state.totals.sec += fees.sec;
        flows.trade_notional += notional;
        flows.fees += fees.total();
        self.trades.push(Trade {
            date: self.store.dates()[row],
            asset: self.store.assets()[asset].clone(),
            shares: delta,
            price,
            commission: fees.commission,
            notional_fee: fees.notional,
            sec_fee: fees.sec,
            forced,
        });
        Ok(())
    }

    /// Moves positions to `round(wᵢ·NLV̂ / p̂ᵢ)` shares, executing at today's
    /// close. Held assets absent from `targets` are closed out.
    pub fn rebalance(&mut self, row: usize, targets: &[(usize, f64)], flows: &mut DayFlows) -> Result<()> {
        let mut assets: Vec<usize> = (0..self.state.shares.len()).filter(|&a| self.state.shares[a] != 0).collect();
        assets.extend(targets.iter().map(|(a, _)| *a));
        assets.sort_unstable();
        assets.dedup();
        let p_hat = self.estimate_prices(row, &assets)?;
        let nlv_hat = from_micros(self.state.cash) + assets.iter().zip(&p_hat).map(|(&a, p)| self.state.shares[a] as f64 * p).sum::<f64>();
        let mut target = vec![0i64; assets.len()];
        for &(a, w) in targets {
            let k = assets.binary_search(&a).expect("asset listed");
            target[k] = round_shares(w * nlv_hat / p_hat[k]);
        }
        for (k, &a) in assets.iter().enumerate() {
            self.execute(row, a, target[k] - self.state.shares[a], false, flows)?;
        }
        Ok(())
    }

    /// One trading day: accrual and corporate actions, an optional
    /// rebalance, forced sales of delisting assets, then the close mark.
    pub fn step(&mut self, row: usize, targets: Option<&[(usize, f64)]>) -> Result<&LedgerRow> {
        let mut flows = DayFlows::default();
        let pv_before = self.state.positions_value;
        let cash_before = self.state.cash;
        self.accrue_daily(row, &mut flows)?;
        if let Some(t) = targets {
            self.rebalance(row, t, &mut flows)?;
        }
        let held: Vec<usize> = (0..self.state.shares.len()).filter(|&a| self.state.shares[a] != 0).collect();
        self.store.records_for_execution(row, &held)?;
        for &a in &held {
            if self.record(row, a).is_some_and(|r| r.delist) {
                let s = self.state.shares[a];
                self.execute(row, a, -s, true, &mut flows)?;
            }
        }

        let mut pv = 0i64;
        let mut short = 0i64;
        for a in 0..self.state.shares.len() {
            let s = self.state.shares[a];
            if s != 0 {
                let v = to_micros(s as f64 * self.close(row, a)?);
                pv += v;
                short += (-v).max(0);
            }
        }
        self.state.positions_value = pv;
        let trade_cash = -flows.trade_notional;
        self.state.totals.trading_pnl += pv - pv_before + trade_cash;
        debug_assert_eq!(self.state.cash - cash_before, -flows.trade_notional - flows.fees - flows.interest + flows.dividends);
        self.ledger.push(LedgerRow {
            date: self.store.dates()[row],
            nlv: self.state.nlv(),
            cash: self.state.cash,
            positions_value: pv,
            totals: self.state.totals,
            flows,
            margin_excess: self.state.nlv() - short,
        });
        Ok(self.ledger.last().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::AssetDayRecord;

    fn rec(date: &str, id: &str, open: Option<f64>, close: f64, split: f64, div: f64) -> AssetDayRecord {
        AssetDayRecord {
            date: date.parse().unwrap(),
            asset_id: id.into(),
            open,
            close,
            adj_factor: 1.0,
            volume: 1e6,
            shares_outstanding: 1e7,
            dividend_cash: div,
            split_ratio: split,
            auction_flag: true,
            delist_flag: false,
        }
    }

    fn store(rows: Vec<AssetDayRecord>) -> MarketStore {
        MarketStore::from_asset_records(&rows).unwrap()
    }

    #[test]
    fn price_estimate_uses_open_then_split_adjusted_close() {
        let s = store(vec![
            rec("2020-01-02", "A", Some(99.0), 100.0, 1.0, 0.0),
            rec("2020-01-03", "A", None, 51.0, 2.0, 0.0),
            rec("2020-01-06", "A", Some(52.0), 52.0, 1.0, 0.0),
        ]);
        let b = Broker::new(&s, FeeSchedule::default(), RateSeries::Constant(0.0), 0.0).unwrap();
        assert_eq!(b.estimate_prices(1, &[0]).unwrap(), vec![50.0]);
        assert_eq!(b.estimate_prices(2, &[0]).unwrap(), vec![52.0]);
        assert!(b.estimate_prices(0, &[0]).is_ok());
    }

    #[test]
    fn new_asset_without_history_has_no_price() {
        let s = store(vec![rec("2020-01-02", "A", None, 10.0, 1.0, 0.0), rec("2020-01-03", "B", None, 10.0, 1.0, 0.0)]);
        let b = Broker::new(&s, FeeSchedule::default(), RateSeries::Constant(0.0), 0.0).unwrap();
        assert!(b.estimate_prices(1, &[1]).is_err());
    }

    #[test]
    fn buy_then_split_then_dividend() {
        let s = store(vec![
            rec("2020-01-02", "A", Some(50.0), 50.0, 1.0, 0.0),
            rec("2020-01-03", "A", None, 25.0, 2.0, 0.0),
            rec("2020-01-06", "A", None, 25.0, 1.0, 0.5),
        ]);
        let mut b = Broker::new(&s, FeeSchedule::default(), RateSeries::Constant(0.0), 5000.0 + 4.575).unwrap();
        let day0 = b.step(0, Some(&[(0, 1.0)])).unwrap().clone();
        assert_eq!(b.state.shares[0], 100);
        assert_eq!(day0.totals.fees(), 350_000 + 4_225_000);
        assert_eq!(day0.cash, 0);
        let day1 = b.step(1, None).unwrap().clone();
        assert_eq!(b.state.shares[0], 200);
        assert_eq!(day1.nlv, day0.nlv);
        let day2 = b.step(2, None).unwrap().clone();
        assert_eq!(day2.totals.dividends, 100_000_000);
        assert_eq!(day2.nlv, day0.nlv + 100_000_000);
    }

    #[test]
    fn unchanged_allocation_trades_nothing() {
        let s = store(vec![rec("2020-01-02", "A", Some(20.0), 20.0, 1.0, 0.0), rec("2020-01-03", "A", Some(20.0), 20.0, 1.0, 0.0)]);
        let mut b = Broker::new(&s, FeeSchedule::default(), RateSeries::Constant(0.0), 10_000.0).unwrap();
        b.step(0, Some(&[(0, 0.5)])).unwrap();
        assert_eq!(b.state.shares[0], 250);
        let w = 250.0 * 20.0 / from_micros(b.state.nlv());
        let fees = b.state.totals;
        b.step(1, Some(&[(0, w)])).unwrap();
        assert_eq!(b.trades.len(), 1);
        assert_eq!(b.state.totals.fees(), fees.fees());
    }

    #[test]
    fn debit_interest_over_a_weekend() {
        let s = store(vec![rec("2020-01-03", "A", None, 10.0, 1.0, 0.0), rec("2020-01-06", "A", None, 10.0, 1.0, 0.0)]);
        let mut b = Broker::new(&s, FeeSchedule::default(), RateSeries::Constant(0.05), -100_000.0).unwrap();
        b.step(0, None).unwrap();
        let r = b.step(1, None).unwrap();
        assert_eq!(r.totals.interest, (100_000e6_f64 * 0.065 / 360.0 * 3.0).round() as i64);
    }
}
