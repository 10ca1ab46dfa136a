use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::Serialize;

use crate::error::{Error, Result};

pub const TRADING_DAYS: f64 = 252.0;

/// Target weights chosen at one rebalance, keyed by store asset index.
pub type Allocation = Vec<(usize, f64)>;

/// What a run leaves behind for scoring.
#[derive(Clone, Debug, Default)]
pub struct PerformanceHistory {
    pub dates: Vec<NaiveDate>,
    pub daily_returns: Vec<f64>,
    pub allocations: Vec<Allocation>,
    /// Short-horizon loss of each rebalance.
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Metrics {
    pub loss: f64,
    pub ann_return: f64,
    pub ann_vol: f64,
    pub sharpe: f64,
    pub sortino: f64,
    pub turnover: f64,
    pub leverage: f64,
    pub n_eff: f64,
    pub max_drawdown: f64,
    #[serde(skip)]
    pub max_drawdown_by_year: BTreeMap<i32, f64>,
}

/// Largest peak-to-trough fall of the compounded value curve, as a fraction
/// of the peak. The curve starts at one before the first return.
pub fn max_drawdown(returns: &[f64]) -> f64 {
    let mut value = 1.0;
    let mut peak: f64 = 1.0;
    let mut worst: f64 = 0.0;
    for r in returns {
        value *= 1.0 + r;
        peak = peak.max(value);
        worst = worst.max(1.0 - value / peak);
    }
    worst
}

/// `½ Σ |a − b|` over the union of assets.
pub fn turnover(old: &Allocation, new: &Allocation) -> f64 {
    let mut diff: BTreeMap<usize, f64> = BTreeMap::new();
    for &(a, w) in new {
        *diff.entry(a).or_default() += w;
    }
    for &(a, w) in old {
        *diff.entry(a).or_default() -= w;
    }
    0.5 * diff.values().map(|d| d.abs()).sum::<f64>()
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        f64::NAN
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

pub fn metrics(h: &PerformanceHistory) -> Result<Metrics> {
    let r = &h.daily_returns;
    if r.len() < 2 {
        return Err(Error::InvalidInput(format!("metrics need at least 2 periods, got {}", r.len())));
    }
    if h.dates.len() != r.len() {
        return Err(Error::Shape(format!("{} dates for {} returns", h.dates.len(), r.len())));
    }
    let m = mean(r);
    let var = r.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (r.len() - 1) as f64;
    let ann_vol = var.sqrt() * TRADING_DAYS.sqrt();
    let ann_return = m * TRADING_DAYS;
    let downside = (r.iter().map(|x| x.min(0.0).powi(2)).sum::<f64>() / r.len() as f64).sqrt() * TRADING_DAYS.sqrt();
    let ratio = |den: f64| if den > 0.0 { ann_return / den } else { f64::NAN };

    let mut by_year: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for (d, x) in h.dates.iter().zip(r) {
        by_year.entry(d.year()).or_default().push(*x);
    }

    let turnovers: Vec<f64> = h.allocations.windows(2).map(|w| turnover(&w[0], &w[1])).collect();
    let leverage: Vec<f64> = h.allocations.iter().map(|a| a.iter().map(|(_, w)| w.abs()).sum()).collect();
    let n_eff: Vec<f64> = h.allocations.iter().map(|a| 1.0 / a.iter().map(|(_, w)| w * w).sum::<f64>()).collect();
    Ok(Metrics {
        loss: mean(&h.losses),
        ann_return,
        ann_vol,
        sharpe: ratio(ann_vol),
        sortino: ratio(downside),
        turnover: if turnovers.is_empty() { 0.0 } else { mean(&turnovers) },
        leverage: mean(&leverage),
        n_eff: mean(&n_eff),
        max_drawdown: max_drawdown(r),
        max_drawdown_by_year: by_year.into_iter().map(|(y, v)| (y, max_drawdown(&v))).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        crate::panel::business_days(NaiveDate::from_ymd_opt(2001, 12, 24).unwrap(), n)
    }

    #[test]
    fn drawdown_fixtures() {
        assert_eq!(max_drawdown(&[0.01, 0.02, 0.0, 0.03]), 0.0);
        assert!((max_drawdown(&[0.1, -0.5, 0.2]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn equal_weights_and_constant_allocations() {
        let a: Allocation = (0..4).map(|i| (i, 0.25)).collect();
        let h = PerformanceHistory {
            dates: dates(10),
            daily_returns: vec![0.01, -0.01, 0.02, 0.0, 0.01, -0.02, 0.01, 0.0, 0.005, 0.0],
            allocations: vec![a.clone(), a.clone(), a],
            losses: vec![1.0, 3.0],
        };
        let m = metrics(&h).unwrap();
        assert_eq!(m.turnover, 0.0);
        assert_eq!(m.n_eff, 4.0);
        assert_eq!(m.leverage, 1.0);
        assert_eq!(m.loss, 2.0);
        assert!(m.max_drawdown_by_year.contains_key(&2001) && m.max_drawdown_by_year.contains_key(&2002));
    }

    #[test]
    fn zero_volatility_sharpe_is_nan() {
        let h = PerformanceHistory { dates: dates(3), daily_returns: vec![0.0; 3], ..Default::default() };
        assert!(metrics(&h).unwrap().sharpe.is_nan());
    }

    #[test]
    fn turnover_over_changing_baskets() {
        let old = vec![(0, 0.5), (1, 0.5)];
        let new = vec![(1, 0.5), (2, 0.5)];
        assert!((turnover(&old, &new) - 0.5).abs() < 1e-15);
    }
}
