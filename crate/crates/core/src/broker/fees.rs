use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MICROS: f64 = 1e6;

/// Currency amount to integer micro-units, half away from zero.
pub fn to_micros(x: f64) -> i64 {
    (x * MICROS).round() as i64
}

pub fn from_micros(m: i64) -> f64 {
    m as f64 / MICROS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeeSchedule {
    /// Currency per share below the monthly tier boundary.
    pub commission_low: f64,
    /// Currency per share above it.
    pub commission_high: f64,
    pub tier_shares: i64,
    pub ticket_minimum: f64,
    /// Exchange, clearing and regulatory charges on both sides.
    pub notional_rate: f64,
    /// Charged on sell notional only.
    pub sec_rate: f64,
    /// Added to the reference rate on debit balances.
    pub debit_spread: f64,
    pub day_count: f64,
}

impl Default for FeeSchedule {
    fn default() -> Self {
        Self {
            commission_low: 0.0035,
            commission_high: 0.0020,
            tier_shares: 300_000,
            ticket_minimum: 0.35,
            notional_rate: 0.000845,
            sec_rate: 0.000_115_7,
            debit_spread: 0.015,
            day_count: 360.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OrderFees {
    pub commission: i64,
    pub notional: i64,
    pub sec: i64,
}

impl OrderFees {
    pub fn total(&self) -> i64 {
        self.commission + self.notional + self.sec
    }
}

impl FeeSchedule {
    pub fn validate(&self) -> Result<()> {
        let rates = [self.commission_low, self.commission_high, self.ticket_minimum, self.notional_rate, self.sec_rate, self.debit_spread];
        if rates.iter().any(|r| !(*r >= 0.0)) || self.tier_shares < 0 || !(self.day_count > 0.0) {
            return Err(Error::InvalidInput("fee rates must be non-negative".into()));
        }
        Ok(())
    }

    /// Fees on one order of `shares` (signed: negative sells) executed at
    /// `price`, given shares already routed this month. An order straddling
    /// the tier boundary is charged pro rata.
    pub fn order_fees(&self, shares: i64, price: f64, month_to_date: i64) -> OrderFees {
        if shares == 0 {
            return OrderFees::default();
        }
        let qty = shares.unsigned_abs() as i64;
        let low = qty.min((self.tier_shares - month_to_date).max(0));
        let high = qty - low;
        let per_share = to_micros(low as f64 * self.commission_low + high as f64 * self.commission_high);
        let commission = per_share.max(to_micros(self.ticket_minimum));
        let notional = to_micros(qty as f64 * price);
        let notional_fee = (notional as f64 * self.notional_rate).round() as i64;
        let sec = if shares < 0 { (notional as f64 * self.sec_rate).round() as i64 } else { 0 };
        OrderFees { commission, notional: notional_fee, sec }
    }

    /// Interest on a debit balance over `days` calendar days; zero on credit.
    pub fn debit_interest(&self, cash: i64, reference_rate: f64, days: i64) -> i64 {
        if cash >= 0 || days <= 0 {
            return 0;
        }
        let rate = reference_rate + self.debit_spread;
        ((-cash) as f64 * rate / self.day_count * days as f64).round() as i64
    }
}

/// Reference rate as a constant or a dated step function.
#[derive(Clone, Debug, PartialEq)]
pub enum RateSeries {
    Constant(f64),
    /// Ascending dates; the latest entry on or before a date applies, the
    /// first entry before the series starts.
    Dated(Vec<(NaiveDate, f64)>),
}

impl RateSeries {
    pub fn at(&self, date: NaiveDate) -> f64 {
        match self {
            RateSeries::Constant(r) => *r,
            RateSeries::Dated(v) => {
                let k = v.partition_point(|(d, _)| *d <= date);
                v[k.saturating_sub(1)].1
            }
        }
    }

    /// `date,rate` CSV with annual rates as decimals.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut out: Vec<(NaiveDate, f64)> = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            let err = |m: String| Error::Parse { path: path.to_path_buf(), line, message: m };
            let date: NaiveDate = row.get(0).unwrap_or("").trim().parse().map_err(|e| err(format!("date: {e}")))?;
            let rate: f64 = row.get(1).unwrap_or("").trim().parse().map_err(|e| err(format!("rate: {e}")))?;
            if out.last().is_some_and(|(d, _)| *d >= date) {
                return Err(err("dates must increase".into()));
            }
            out.push((date, rate));
        }
        if out.is_empty() {
            return Err(Error::MissingData(format!("{}: no rates", path.display())));
        }
        Ok(RateSeries::Dated(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_fixtures() {
        let f = FeeSchedule::default();
        let buy = f.order_fees(100, 50.0, 0);
        assert_eq!(buy, OrderFees { commission: 350_000, notional: 4_225_000, sec: 0 });
        let sell = f.order_fees(-1000, 50.0, 0);
        assert_eq!(sell.sec, 5_785_000);
        assert_eq!(sell.commission, 3_500_000);
        assert_eq!(f.order_fees(0, 50.0, 0), OrderFees::default());
    }

    #[test]
    fn tier_split_inside_an_order() {
        let f = FeeSchedule::default();
        let o = f.order_fees(1000, 10.0, 299_500);
        assert_eq!(o.commission, to_micros(500.0 * 0.0035 + 500.0 * 0.0020));
        assert_eq!(f.order_fees(1000, 10.0, 400_000).commission, 2_000_000);
    }

    #[test]
    fn interest_fixture() {
        let f = FeeSchedule::default();
        assert_eq!(f.debit_interest(to_micros(-100_000.0), 0.05, 1), 18_055_556);
        assert_eq!(f.debit_interest(to_micros(100_000.0), 0.05, 1), 0);
    }

    #[test]
    fn rate_lookup() {
        let d = |s: &str| s.parse::<NaiveDate>().unwrap();
        let r = RateSeries::Dated(vec![(d("2020-01-01"), 0.01), (d("2020-02-01"), 0.02)]);
        assert_eq!(r.at(d("2019-12-01")), 0.01);
        assert_eq!(r.at(d("2020-01-15")), 0.01);
        assert_eq!(r.at(d("2020-02-01")), 0.02);
    }
}
