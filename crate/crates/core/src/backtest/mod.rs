//! Frictionless bootstrap backtests and the shared performance metrics.

mod metrics;

pub use metrics::{max_drawdown, metrics, turnover, Allocation, Metrics, PerformanceHistory, TRADING_DAYS};

use std::fmt::Write as _;

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmv::{self, Constraint};
use crate::panel::MarketStore;
use crate::rng::{self, streams};
use crate::strategy::{DecisionInput, Strategy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub n: usize,
    pub rebalances: usize,
    pub interval: usize,
    pub dt_in: usize,
    pub constraint: Constraint,
    pub replications: usize,
    pub seed: u64,
    /// Inclusive row span every trading day must fall in.
    pub first_row: usize,
    pub last_row: usize,
    /// Last row the strategy was calibrated on; trading must start after it.
    pub calibration_end: Option<usize>,
    pub parallel: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            n: 300,
            rebalances: 250,
            interval: 5,
            dt_in: 1200,
            constraint: Constraint::Unconstrained,
            replications: 1000,
            seed: 0,
            first_row: 0,
            last_row: 0,
            calibration_end: None,
            parallel: true,
        }
    }
}

impl BacktestConfig {
    fn horizon(&self) -> usize {
        self.rebalances * self.interval
    }

    /// Inclusive range of feasible start rows.
    fn start_rows(&self, n_days: usize) -> Result<(usize, usize)> {
        if self.n == 0 || self.rebalances == 0 || self.interval == 0 || self.replications == 0 {
            return Err(Error::InvalidInput("basket size, rebalances, interval and replications must be positive".into()));
        }
        let mut lo = self.first_row.max(self.dt_in + 1);
        if let Some(c) = self.calibration_end {
            lo = lo.max(c + 1);
        }
        let last = self.last_row.min(n_days.saturating_sub(1));
        match (last + 1).checked_sub(self.horizon()) {
            Some(hi) if hi >= lo => Ok((lo, hi)),
            _ => Err(Error::InfeasibleSpan(format!("rows [{lo}, {last}] cannot hold {} trading days", self.horizon()))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Replication {
    pub start_row: usize,
    pub metrics: Metrics,
    pub history: PerformanceHistory,
}

#[derive(Clone, Debug)]
pub struct BacktestReport {
    pub strategy: String,
    pub constraint: Constraint,
    pub replications: Vec<Replication>,
    pub aggregate: Metrics,
}

const COLUMNS: [&str; 10] =
    ["loss", "ann_return", "ann_vol", "sharpe", "sortino", "turnover", "leverage", "n_eff", "max_drawdown", "start_row"];

fn metric_row(m: &Metrics) -> [f64; 9] {
    [m.loss, m.ann_return, m.ann_vol, m.sharpe, m.sortino, m.turnover, m.leverage, m.n_eff, m.max_drawdown]
}

impl BacktestReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("replication,{}\n", COLUMNS.join(","));
        for (k, r) in self.replications.iter().enumerate() {
            let vals: Vec<String> = metric_row(&r.metrics).iter().map(|v| format!("{v:e}")).collect();
            writeln!(s, "{k},{},{}", vals.join(","), r.start_row).unwrap();
        }
        let vals: Vec<String> = metric_row(&self.aggregate).iter().map(|v| format!("{v:e}")).collect();
        writeln!(s, "mean,{},", vals.join(",")).unwrap();
        s
    }

    /// One-line summary in the column order of the usual results table.
    pub fn table(reports: &[BacktestReport]) -> String {
        let mut s = format!(
            "{:<8} {:>10} {:>9} {:>9} {:>7} {:>8} {:>9} {:>9} {:>8} {:>8}\n",
            "model", "loss", "ret%", "vol%", "sharpe", "sortino", "turnover", "leverage", "n_eff", "mdd%"
        );
        for r in reports {
            let m = &r.aggregate;
            writeln!(
                s,
                "{:<8} {:>10.3e} {:>9.2} {:>9.2} {:>7.2} {:>8.2} {:>9.3} {:>9.2} {:>8.1} {:>8.2}",
                r.strategy,
                m.loss,
                100.0 * m.ann_return,
                100.0 * m.ann_vol,
                m.sharpe,
                m.sortino,
                m.turnover,
                m.leverage,
                m.n_eff,
                100.0 * m.max_drawdown
            )
            .unwrap();
        }
        s
    }
}

/// Assets tradable for a decision at `t`: a full input window and no
/// delisting inside the holding period.
fn eligible(store: &MarketStore, t: usize, cfg: &BacktestConfig, assets: &[usize]) -> Result<Vec<bool>> {
    let notice = store.delist_notice(t, t, cfg.interval, assets)?;
    Ok(assets.iter().zip(notice).map(|(&a, delists)| !delists && (t - cfg.dt_in..t).all(|i| store.return_at(i, a).is_some())).collect())
}

fn run_one(store: &MarketStore, strategy: &Strategy, cfg: &BacktestConfig, range: (usize, usize), rep: usize) -> Result<Replication> {
    let mut r = rng::substream(cfg.seed, streams::BACKTEST, rep as u64);
    let start = r.random_range(range.0..=range.1);
    let all: Vec<usize> = (0..store.n_assets()).collect();
    let mut basket: Vec<usize> = Vec::new();
    let mut history = PerformanceHistory::default();

    for k in 0..cfg.rebalances {
        let t = start + k * cfg.interval;
        let ok = eligible(store, t, cfg, &basket)?;
        basket = basket.into_iter().zip(ok).filter_map(|(a, keep)| keep.then_some(a)).collect();
        if basket.len() < cfg.n {
            let pool_ok = eligible(store, t, cfg, &all)?;
            let pool: Vec<usize> = all.iter().copied().filter(|&a| pool_ok[a] && !basket.contains(&a)).collect();
            let need = cfg.n - basket.len();
            if pool.len() < need {
                return Err(Error::InfeasibleSpan(format!("row {t}: {} eligible assets for {need} open slots", pool.len())));
            }
            basket.extend(sample_indices(&mut r, pool.len(), need).into_iter().map(|i| pool[i]));
            basket.sort_unstable();
        }

        let window = store.history(t, cfg.dt_in, &basket)?;
        let caps: Option<Vec<f64>> = if store.has_records() {
            let recs = store.records_for_decision(t, t - 1, &basket)?;
            recs.iter().map(|r| r.map(|r| r.market_cap())).collect()
        } else {
            None
        };
        let input = DecisionInput { window: &window, assets: &basket, caps: caps.as_deref() };
        let w = strategy.weights(&input, cfg.constraint)?.w;

        let held = store.evaluation(t, t, cfg.interval, &basket)?;
        history.losses.push(gmv::loss(&w, &held));
        let mut h = w.clone();
        for (i, row) in held.row_iter().enumerate() {
            let before: f64 = h.iter().sum();
            for (hj, rj) in h.iter_mut().zip(row.iter()) {
                *hj *= 1.0 + rj;
            }
            history.daily_returns.push(h.iter().sum::<f64>() / before - 1.0);
            history.dates.push(store.dates()[t + i]);
        }
        history.allocations.push(basket.iter().copied().zip(w).collect());
    }
    Ok(Replication { start_row: start, metrics: metrics(&history)?, history })
}

pub fn run_frictionless(store: &MarketStore, strategy: &Strategy, cfg: &BacktestConfig) -> Result<BacktestReport> {
    if let Strategy::Nn(model) = strategy {
        if model.dt_in() != cfg.dt_in {
            return Err(Error::InvalidInput(format!("model expects dt_in={} but the backtest uses {}", model.dt_in(), cfg.dt_in)));
        }
    }
    let range = cfg.start_rows(store.n_days())?;
    let one = |k: usize| run_one(store, strategy, cfg, range, k);
    let reps: Vec<Replication> = if cfg.parallel {
        (0..cfg.replications).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        (0..cfg.replications).map(one).collect::<Result<_>>()?
    };
    let aggregate = aggregate(&reps);
    Ok(BacktestReport { strategy: strategy.to_string(), constraint: cfg.constraint, replications: reps, aggregate })
}

fn aggregate(reps: &[Replication]) -> Metrics {
    let m = reps.len() as f64;
    let avg = |f: fn(&Metrics) -> f64| reps.iter().map(|r| f(&r.metrics)).sum::<f64>() / m;
    Metrics {
        loss: avg(|x| x.loss),
        ann_return: avg(|x| x.ann_return),
        ann_vol: avg(|x| x.ann_vol),
        sharpe: avg(|x| x.sharpe),
        sortino: avg(|x| x.sortino),
        turnover: avg(|x| x.turnover),
        leverage: avg(|x| x.leverage),
        n_eff: avg(|x| x.n_eff),
        max_drawdown: avg(|x| x.max_drawdown),
        max_drawdown_by_year: Default::default(),
    }
}

/// Paired bootstrap on per-replication losses: the share of resampled mean
/// differences `a − b` that are not negative. Small values mean `a` has the
/// lower loss.
pub fn paired_bootstrap(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() || resamples == 0 {
        return Err(Error::InvalidInput("paired bootstrap needs two equal, non-empty samples".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mut r = rng::stream(seed, streams::MONTE_CARLO);
    let m = d.len();
    let hits = (0..resamples).filter(|_| (0..m).map(|_| d[r.random_range(0..m)]).sum::<f64>() >= 0.0).count();
    Ok(hits as f64 / resamples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{generate_synthetic, CorporateAction, SyntheticMarketSpec};

    fn market(n: usize, days: usize) -> crate::panel::SyntheticMarket {
        generate_synthetic(&SyntheticMarketSpec { n_assets: n, n_days: days, seed: 5, ..Default::default() }).unwrap()
    }

    fn cfg(n: usize) -> BacktestConfig {
        BacktestConfig {
            n,
            rebalances: 6,
            interval: 5,
            dt_in: 60,
            replications: 4,
            seed: 2,
            first_row: 0,
            last_row: 199,
            ..Default::default()
        }
    }

    #[test]
    fn single_asset_tracks_the_asset() {
        let m = market(1, 200);
        let store = MarketStore::from_panel(&m.panel);
        let rep = run_frictionless(&store, &Strategy::Mle, &cfg(1)).unwrap();
        for r in &rep.replications {
            assert_eq!(r.metrics.turnover, 0.0);
            for (k, x) in r.history.daily_returns.iter().enumerate() {
                let direct = m.panel.returns[(r.start_row + k, 0)];
                assert!((x - direct).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cap_weighted_matches_straight_replication() {
        let m = market(12, 200);
        let store = m.to_store(&[]).unwrap();
        let rep = run_frictionless(&store, &Strategy::Mcw, &cfg(12)).unwrap();
        let r = &rep.replications[0];
        for k in 0..6 {
            let t = r.start_row + k * 5;
            let caps: Vec<f64> = (0..12).map(|a| store.record(t - 1, a).unwrap().market_cap()).collect();
            let total: f64 = caps.iter().sum();
            let mut value_before = 1.0;
            let mut value: Vec<f64> = caps.iter().map(|c| c / total).collect();
            for d in 0..5 {
                for (a, v) in value.iter_mut().enumerate() {
                    *v *= 1.0 + store.return_at(t + d, a).unwrap();
                }
                let after: f64 = value.iter().sum();
                let expected = after / value_before - 1.0;
                assert!((r.history.daily_returns[k * 5 + d] - expected).abs() < 1e-10);
                value_before = after;
            }
        }
    }

    #[test]
    fn long_only_leverage_is_one_and_replacements_keep_n() {
        let m = market(20, 200);
        let actions = [CorporateAction::Delist { asset: 3, row: 150 }, CorporateAction::Delist { asset: 7, row: 120 }];
        let mut store = m.to_store(&actions).unwrap();
        store.enable_audit();
        let c = BacktestConfig { constraint: Constraint::LongOnly, n: 15, ..cfg(15) };
        let rep = run_frictionless(&store, &Strategy::Qis, &c).unwrap();
        assert!((rep.aggregate.leverage - 1.0).abs() < 1e-10);
        for r in &rep.replications {
            assert!(r.history.allocations.iter().all(|a| a.len() == 15));
            let recomputed = r.history.losses.iter().sum::<f64>() / r.history.losses.len() as f64;
            assert_eq!(recomputed, r.metrics.loss);
            assert!(r.metrics.n_eff >= 1.0 && r.metrics.n_eff <= 15.0);
        }
        assert!(store.audit_log().iter().all(|a| !a.is_leak()));
    }

    #[test]
    fn bootstrap_sides() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 3.0, 4.0, 5.0];
        assert_eq!(paired_bootstrap(&a, &b, 200, 1).unwrap(), 0.0);
        assert_eq!(paired_bootstrap(&b, &a, 200, 1).unwrap(), 1.0);
        assert!(paired_bootstrap(&a, &b[..3], 200, 1).is_err());
    }

    #[test]
    fn order_and_threads_do_not_matter() {
        let store = MarketStore::from_panel(&market(10, 200).panel);
        let a = run_frictionless(&store, &Strategy::Mle, &cfg(6)).unwrap();
        let b = run_frictionless(&store, &Strategy::Mle, &BacktestConfig { parallel: false, ..cfg(6) }).unwrap();
        assert_eq!(a.aggregate, b.aggregate);
        assert!(a.to_csv().lines().count() == 6);
    }
}
