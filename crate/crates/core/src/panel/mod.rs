//! Return panels, per-asset daily records and guarded window extraction.

mod ingest;
mod synthetic;
mod universe;

pub use ingest::{ingest_csv, ingest_reader, write_csv, CSV_HEADER};
pub use synthetic::{business_days, generate_synthetic, CorporateAction, Innovation, SyntheticMarket, SyntheticMarketSpec};
pub use universe::{filter_universe, low_variance_outlier_mask, quantile_type7, FilterConfig, OutlierMask, Universe};

use std::collections::{BTreeSet, HashMap};
use std::sync::Mutex;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One asset on one day, as ingested.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetDayRecord {
    pub date: NaiveDate,
    pub asset_id: String,
    pub open: Option<f64>,
    pub close: f64,
    pub adj_factor: f64,
    pub volume: f64,
    pub shares_outstanding: f64,
    pub dividend_cash: f64,
    pub split_ratio: f64,
    pub auction_flag: bool,
    pub delist_flag: bool,
}

/// Grid cell of a [`MarketStore`]; the key lives in the grid position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DayRecord {
    pub open: Option<f64>,
    pub close: f64,
    pub adj_factor: f64,
    pub volume: f64,
    pub shares_outstanding: f64,
    pub dividend_cash: f64,
    pub split_ratio: f64,
    pub auction: bool,
    pub delist: bool,
}

impl From<&AssetDayRecord> for DayRecord {
    fn from(r: &AssetDayRecord) -> Self {
        Self {
            open: r.open,
            close: r.close,
            adj_factor: r.adj_factor,
            volume: r.volume,
            shares_outstanding: r.shares_outstanding,
            dividend_cash: r.dividend_cash,
            split_ratio: r.split_ratio,
            auction: r.auction_flag,
            delist: r.delist_flag,
        }
    }
}

impl DayRecord {
    pub fn adjusted_close(&self) -> f64 {
        self.close * self.adj_factor
    }

    pub fn market_cap(&self) -> f64 {
        self.close * self.shares_outstanding
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.close > 0.0) || self.open.is_some_and(|o| !(o > 0.0)) {
            return Err("prices must be positive".into());
        }
        if !(self.split_ratio > 0.0) {
            return Err("split ratio must be positive".into());
        }
        if !(self.adj_factor > 0.0) {
            return Err("adjustment factor must be positive".into());
        }
        Ok(())
    }
}

/// Dated matrix of daily fractional returns.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnPanel {
    pub dates: Vec<NaiveDate>,
    pub assets: Vec<String>,
    /// `[Δt, n]`
    pub returns: DMatrix<f64>,
}

impl ReturnPanel {
    pub fn new(dates: Vec<NaiveDate>, assets: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.shape() != (dates.len(), assets.len()) {
            return Err(Error::Shape(format!("returns {:?} vs {} dates × {} assets", returns.shape(), dates.len(), assets.len())));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::NonMonotoneDates(format!("{} then {}", w[0], w[1])));
        }
        if let Some(bad) = returns.iter().find(|r| !(r.abs() < 1.0)) {
            return Err(Error::InvalidInput(format!("return {bad} outside the daily sanity bound")));
        }
        Ok(Self { dates, assets, returns })
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    /// `q = n / Δt`.
    pub fn aspect_ratio(&self) -> f64 {
        self.n_assets() as f64 / self.n_days() as f64
    }
}

/// Why a block of rows was read; used by the leakage audit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessKind {
    /// Input to a decision taken at `decision_row`; must end before it.
    Decision,
    /// Realized returns used to score a decision, never to make it.
    Evaluation,
    /// Delisting flags inside the notice period, the one permitted look-ahead.
    DelistNotice,
    /// Same-day prices and corporate actions used to execute a decision at
    /// the close; must not go past the decision row.
    Execution,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Access {
    pub kind: AccessKind,
    pub decision_row: usize,
    pub first_row: usize,
    pub last_row: usize,
}

impl Access {
    pub fn is_leak(&self) -> bool {
        match self.kind {
            AccessKind::Decision => self.last_row >= self.decision_row,
            AccessKind::Execution => self.last_row > self.decision_row,
            AccessKind::Evaluation | AccessKind::DelistNotice => false,
        }
    }
}

/// Dense dates × assets store of returns and, optionally, full daily records.
#[derive(Debug)]
pub struct MarketStore {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    /// `[dates, assets]`, NaN where no return is defined.
    returns: DMatrix<f64>,
    /// Row-major `dates × assets`; absent for returns-only stores.
    records: Option<Vec<Option<DayRecord>>>,
    index: HashMap<String, usize>,
    audit: Option<Mutex<Vec<Access>>>,
}

impl Clone for MarketStore {
    fn clone(&self) -> Self {
        Self {
            dates: self.dates.clone(),
            assets: self.assets.clone(),
            returns: self.returns.clone(),
            records: self.records.clone(),
            index: self.index.clone(),
            audit: None,
        }
    }
}

impl MarketStore {
    /// Store built from daily records; returns come from adjusted closes on
    /// consecutive rows.
    pub fn from_records(dates: Vec<NaiveDate>, assets: Vec<String>, records: Vec<Option<DayRecord>>) -> Result<Self> {
        let (t, n) = (dates.len(), assets.len());
        if records.len() != t * n {
            return Err(Error::Shape(format!("{} records for a {t}×{n} grid", records.len())));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::NonMonotoneDates(format!("{} then {}", w[0], w[1])));
        }
        let mut returns = DMatrix::from_element(t, n, f64::NAN);
        for i in 1..t {
            for j in 0..n {
                if let (Some(prev), Some(cur)) = (&records[(i - 1) * n + j], &records[i * n + j]) {
                    let r = cur.adjusted_close() / prev.adjusted_close() - 1.0;
                    if !(r.abs() < 1.0) {
                        return Err(Error::InvalidInput(format!(
                            "return {r} for {} on {} outside the daily sanity bound",
                            assets[j], dates[i]
                        )));
                    }
                    returns[(i, j)] = r;
                }
            }
        }
        let index = assets.iter().enumerate().map(|(k, a)| (a.clone(), k)).collect();
        Ok(Self { dates, assets, returns, records: Some(records), index, audit: None })
    }

    /// Store from records in any order; dates and asset ids are sorted.
    pub fn from_asset_records(rows: &[AssetDayRecord]) -> Result<Self> {
        let dates: Vec<NaiveDate> = rows.iter().map(|r| r.date).collect::<BTreeSet<_>>().into_iter().collect();
        let assets: Vec<String> = rows.iter().map(|r| r.asset_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let date_idx: HashMap<NaiveDate, usize> = dates.iter().enumerate().map(|(k, d)| (*d, k)).collect();
        let asset_idx: HashMap<&str, usize> = assets.iter().enumerate().map(|(k, a)| (a.as_str(), k)).collect();
        let n = assets.len();
        let mut grid: Vec<Option<DayRecord>> = vec![None; dates.len() * n];
        for r in rows {
            let cell = &mut grid[date_idx[&r.date] * n + asset_idx[r.asset_id.as_str()]];
            if cell.is_some() {
                return Err(Error::DuplicateKey { date: r.date.to_string(), asset: r.asset_id.clone() });
            }
            *cell = Some(DayRecord::from(r));
        }
        Self::from_records(dates, assets, grid)
    }

    /// Store carrying returns only; the universe filter is unavailable.
    pub fn from_panel(panel: &ReturnPanel) -> Self {
        let index = panel.assets.iter().enumerate().map(|(k, a)| (a.clone(), k)).collect();
        Self { dates: panel.dates.clone(), assets: panel.assets.clone(), returns: panel.returns.clone(), records: None, index, audit: None }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn asset_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Full return grid with NaN for undefined entries. Unaudited.
    pub fn raw_returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn has_records(&self) -> bool {
        self.records.is_some()
    }

    pub fn record(&self, row: usize, asset: usize) -> Option<&DayRecord> {
        self.records.as_ref()?.get(row * self.assets.len() + asset)?.as_ref()
    }

    pub fn return_at(&self, row: usize, asset: usize) -> Option<f64> {
        let r = self.returns[(row, asset)];
        (!r.is_nan()).then_some(r)
    }

    /// Starts recording every guarded read.
    pub fn enable_audit(&mut self) {
        self.audit = Some(Mutex::new(Vec::new()));
    }

    pub fn audit_log(&self) -> Vec<Access> {
        self.audit.as_ref().map(|m| m.lock().expect("audit lock").clone()).unwrap_or_default()
    }

    pub(crate) fn log(&self, kind: AccessKind, decision_row: usize, first_row: usize, last_row: usize) -> Result<()> {
        let access = Access { kind, decision_row, first_row, last_row };
        if let Some(m) = &self.audit {
            m.lock().expect("audit lock").push(access);
        }
        if access.is_leak() {
            return Err(Error::Leakage { decision_row, row: last_row });
        }
        Ok(())
    }

    fn block(&self, first: usize, len: usize, assets: &[usize]) -> Result<DMatrix<f64>> {
        if first + len > self.n_days() {
            return Err(Error::InfeasibleSpan(format!("rows [{first}, {}) beyond {} days", first + len, self.n_days())));
        }
        if let Some(&a) = assets.iter().find(|&&a| a >= self.n_assets()) {
            return Err(Error::InvalidInput(format!("asset index {a} out of range")));
        }
        // undefined returns are zero-filled
        Ok(DMatrix::from_fn(len, assets.len(), |i, j| {
            let r = self.returns[(first + i, assets[j])];
            if r.is_nan() {
                0.0
            } else {
                r
            }
        }))
    }

    /// The `len` rows immediately before `decision_row`, chronological.
    pub fn history(&self, decision_row: usize, len: usize, assets: &[usize]) -> Result<DMatrix<f64>> {
        if len > decision_row {
            return Err(Error::InfeasibleSpan(format!("{len} rows of history before row {decision_row}")));
        }
        let first = decision_row - len;
        self.log(AccessKind::Decision, decision_row, first, decision_row.saturating_sub(1))?;
        self.block(first, len, assets)
    }

    /// Realized returns on rows `[first, first + len)` to score a decision
    /// taken at `decision_row`.
    pub fn evaluation(&self, decision_row: usize, first: usize, len: usize, assets: &[usize]) -> Result<DMatrix<f64>> {
        if first < decision_row {
            return Err(Error::InvalidInput("evaluation rows must follow the decision".into()));
        }
        self.log(AccessKind::Evaluation, decision_row, first, first + len.max(1) - 1)?;
        self.block(first, len, assets)
    }

    /// Arbitrary guarded read: any row at or after `decision_row` is a leak.
    pub fn rows_for_decision(&self, decision_row: usize, first: usize, len: usize, assets: &[usize]) -> Result<DMatrix<f64>> {
        self.log(AccessKind::Decision, decision_row, first, (first + len).saturating_sub(1))?;
        self.block(first, len, assets)
    }

    /// Records on `row` read for a decision at `decision_row`; `row` must
    /// precede it.
    pub fn records_for_decision(&self, decision_row: usize, row: usize, assets: &[usize]) -> Result<Vec<Option<DayRecord>>> {
        self.log(AccessKind::Decision, decision_row, row, row)?;
        Ok(assets.iter().map(|&a| self.record(row, a).copied()).collect())
    }

    /// Same-day records used to execute at `row`.
    pub fn records_for_execution(&self, row: usize, assets: &[usize]) -> Result<Vec<Option<DayRecord>>> {
        self.log(AccessKind::Execution, row, row, row)?;
        Ok(assets.iter().map(|&a| self.record(row, a).copied()).collect())
    }

    /// Whether each asset stops trading within `[first, first + len)`: a
    /// delisting flag or missing record, or an undefined return on a
    /// returns-only store.
    pub fn delist_notice(&self, decision_row: usize, first: usize, len: usize, assets: &[usize]) -> Result<Vec<bool>> {
        let end = (first + len).min(self.n_days());
        if end <= first {
            return Ok(vec![false; assets.len()]);
        }
        self.log(AccessKind::DelistNotice, decision_row, first, end - 1)?;
        Ok(assets
            .iter()
            .map(|&a| {
                (first..end).any(|i| match &self.records {
                    Some(_) => self.record(i, a).is_none_or(|r| r.delist),
                    None => self.returns[(i, a)].is_nan(),
                })
            })
            .collect())
    }

    /// Returns-only panel over a row range, zero-filled.
    pub fn panel(&self, first: usize, len: usize) -> Result<ReturnPanel> {
        let all: Vec<usize> = (0..self.n_assets()).collect();
        let returns = self.block(first, len, &all)?;
        Ok(ReturnPanel { dates: self.dates[first..first + len].to_vec(), assets: self.assets.clone(), returns })
    }

    /// Assets with a defined return on every row of `[first, first + len)`.
    pub fn complete_assets(&self, first: usize, len: usize) -> Vec<usize> {
        (0..self.n_assets()).filter(|&j| (first..first + len).all(|i| !self.returns[(i, j)].is_nan())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn rec(close: f64) -> Option<DayRecord> {
        Some(DayRecord {
            open: Some(close),
            close,
            adj_factor: 1.0,
            volume: 1e6,
            shares_outstanding: 1e7,
            dividend_cash: 0.0,
            split_ratio: 1.0,
            auction: true,
            delist: false,
        })
    }

    #[test]
    fn returns_from_adjusted_closes() {
        let s = MarketStore::from_records(vec![d("2020-01-02"), d("2020-01-03")], vec!["A".into()], vec![rec(100.0), rec(101.0)]).unwrap();
        assert!(s.return_at(0, 0).is_none());
        assert!((s.return_at(1, 0).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn history_guard() {
        let mut s = MarketStore::from_records(
            vec![d("2020-01-02"), d("2020-01-03"), d("2020-01-06")],
            vec!["A".into()],
            vec![rec(100.0), rec(101.0), rec(99.0)],
        )
        .unwrap();
        s.enable_audit();
        let h = s.history(2, 2, &[0]).unwrap();
        assert_eq!(h[(0, 0)], 0.0); // undefined first return is zero-filled
        assert!(matches!(s.rows_for_decision(1, 0, 2, &[0]), Err(Error::Leakage { .. })));
        assert_eq!(s.audit_log().iter().filter(|a| a.is_leak()).count(), 1);
    }

    #[test]
    fn panel_checks() {
        let m = DMatrix::from_row_slice(2, 1, &[0.1, 1.5]);
        assert!(ReturnPanel::new(vec![d("2020-01-02"), d("2020-01-03")], vec!["A".into()], m).is_err());
        let m = DMatrix::from_row_slice(2, 1, &[0.1, 0.2]);
        assert!(ReturnPanel::new(vec![d("2020-01-03"), d("2020-01-02")], vec!["A".into()], m.clone()).is_err());
        let p = ReturnPanel::new(vec![d("2020-01-02"), d("2020-01-03")], vec!["A".into()], m).unwrap();
        assert_eq!(p.aspect_ratio(), 0.5);
    }
}
