use serde::{Deserialize, Serialize};

use super::{from_micros, Broker, FeeSchedule, LedgerRow, RateSeries, Trade};
use crate::backtest::{metrics, Metrics, PerformanceHistory, TRADING_DAYS};
use crate::error::{Error, Result};
use crate::gmv::{self, Constraint};
use crate::panel::{filter_universe, FilterConfig, MarketStore};
use crate::strategy::{DecisionInput, Strategy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BasketRule {
    /// The full liquidity and history filter, largest caps first.
    Filtered(FilterConfig),
    /// Largest caps among assets with a full input window and no delisting
    /// notice for the holding period.
    TopCap,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub start_row: usize,
    pub days: usize,
    pub initial_cash: f64,
    pub interval: usize,
    pub n: usize,
    pub dt_in: usize,
    pub constraint: Constraint,
    pub basket: BasketRule,
    pub fees: FeeSchedule,
    pub rates: RateSeries,
    pub calibration_end: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            start_row: 0,
            days: 0,
            initial_cash: 1_000_000.0,
            interval: 5,
            n: 1000,
            dt_in: 1200,
            constraint: Constraint::Unconstrained,
            basket: BasketRule::Filtered(FilterConfig::default()),
            fees: FeeSchedule::default(),
            rates: RateSeries::Constant(0.0),
            calibration_end: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimulationResult {
    pub ledger: Vec<LedgerRow>,
    pub trades: Vec<Trade>,
    pub history: PerformanceHistory,
    pub metrics: Metrics,
    /// Annualized volatility of the trailing year of daily NLV returns; NaN
    /// until a full year is available.
    pub rolling_vol: Vec<f64>,
}

pub fn rolling_volatility(returns: &[f64], window: usize) -> Vec<f64> {
    (0..returns.len())
        .map(|i| {
            if i + 1 < window || window < 2 {
                return f64::NAN;
            }
            let w = &returns[i + 1 - window..=i];
            let m = w.iter().sum::<f64>() / window as f64;
            let v = w.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (window - 1) as f64;
            (v * TRADING_DAYS).sqrt()
        })
        .collect()
}

fn top_cap(store: &MarketStore, t: usize, cfg: &SimConfig) -> Result<Vec<usize>> {
    let all: Vec<usize> = (0..store.n_assets()).collect();
    let notice = store.delist_notice(t, t, cfg.interval, &all)?;
    let recs = store.records_for_decision(t, t - 1, &all)?;
    let mut ranked: Vec<(f64, usize)> = all
        .iter()
        .filter(|&&a| !notice[a] && (t - cfg.dt_in..t).all(|i| store.return_at(i, a).is_some()))
        .filter_map(|&a| recs[a].map(|r| (r.market_cap(), a)))
        .collect();
    ranked.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    ranked.truncate(cfg.n);
    let mut out: Vec<usize> = ranked.into_iter().map(|(_, a)| a).collect();
    out.sort_unstable();
    Ok(out)
}

pub fn run_simulation(store: &MarketStore, strategy: &Strategy, cfg: &SimConfig) -> Result<SimulationResult> {
    if cfg.days < 2 || cfg.interval == 0 {
        return Err(Error::InvalidInput("simulation needs at least 2 days and a positive interval".into()));
    }
    if cfg.start_row <= cfg.dt_in || cfg.start_row + cfg.days > store.n_days() {
        return Err(Error::InfeasibleSpan(format!(
            "rows [{}, {}) with {} days of history in a {}-day store",
            cfg.start_row,
            cfg.start_row + cfg.days,
            cfg.dt_in,
            store.n_days()
        )));
    }
    if cfg.calibration_end.is_some_and(|c| c >= cfg.start_row) {
        return Err(Error::InvalidInput("trading starts before the strategy's calibration ends".into()));
    }
    let mut broker = Broker::new(store, cfg.fees.clone(), cfg.rates.clone(), cfg.initial_cash)?;
    let mut history = PerformanceHistory::default();
    let mut prev_nlv = broker.state.nlv();
    let end = cfg.start_row + cfg.days;

    for row in cfg.start_row..end {
        let targets = if (row - cfg.start_row) % cfg.interval == 0 {
            let basket = match &cfg.basket {
                BasketRule::TopCap => top_cap(store, row, cfg)?,
                BasketRule::Filtered(f) => {
                    let f = FilterConfig { dt_in: cfg.dt_in, dt_out: cfg.interval, ..f.clone() };
                    filter_universe(store, row, cfg.n, &f, None)?.assets
                }
            };
            if basket.is_empty() {
                return Err(Error::MissingData(format!("empty basket on {}", store.dates()[row])));
            }
            let mut basket = basket;
            basket.sort_unstable();
            let window = store.history(row, cfg.dt_in, &basket)?;
            let recs = store.records_for_decision(row, row - 1, &basket)?;
            let caps: Option<Vec<f64>> = recs.iter().map(|r| r.map(|r| r.market_cap())).collect();
            let input = DecisionInput { window: &window, assets: &basket, caps: caps.as_deref() };
            let w = strategy
                .weights(&input, cfg.constraint)
                .map_err(|e| Error::InvalidInput(format!("{strategy} failed on {}: {e}", store.dates()[row])))?;
            let held = store.evaluation(row, row, cfg.interval.min(end - row), &basket)?;
            history.losses.push(gmv::loss(&w.w, &held));
            let alloc: Vec<(usize, f64)> = basket.iter().copied().zip(w.w).collect();
            history.allocations.push(alloc.clone());
            Some(alloc)
        } else {
            None
        };
        let nlv = broker.step(row, targets.as_deref())?.nlv;
        history.dates.push(store.dates()[row]);
        history.daily_returns.push(from_micros(nlv) / from_micros(prev_nlv) - 1.0);
        prev_nlv = nlv;
    }
    let metrics = metrics(&history)?;
    let rolling_vol = rolling_volatility(&history.daily_returns, TRADING_DAYS as usize);
    Ok(SimulationResult { ledger: broker.ledger, trades: broker.trades, history, metrics, rolling_vol })
}
