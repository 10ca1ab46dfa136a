//! Investable-universe selection on a decision date.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{AccessKind, MarketStore};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub dt_in: usize,
    pub dt_out: usize,
    pub auction_window: usize,
    pub auction_min_fraction: f64,
    pub liquidity_window: usize,
    pub min_volume_fraction: f64,
    pub min_dollar_volume_fraction: f64,
    pub min_shares_outstanding: f64,
    pub min_price: f64,
    pub max_price: f64,
    pub iqr_multiplier: f64,
    pub short_vol_window: usize,
    pub long_vol_window: usize,
    pub max_correlation: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            dt_in: 1200,
            dt_out: 5,
            auction_window: 252,
            auction_min_fraction: 0.95,
            liquidity_window: 5,
            min_volume_fraction: 0.01,
            min_dollar_volume_fraction: 0.01,
            min_shares_outstanding: 5e6,
            min_price: 10.0,
            max_price: 2000.0,
            iqr_multiplier: 1.5,
            short_vol_window: 5,
            long_vol_window: 20,
            max_correlation: 0.95,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Universe {
    /// Selected asset indices, by descending market cap.
    pub assets: Vec<usize>,
    pub shortfall: bool,
    /// A volatility window had zero variance for every asset.
    pub degenerate_vol_window: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutlierMask {
    pub excluded: Vec<bool>,
    pub degenerate: bool,
}

/// Linear-interpolation quantile on sorted data (`h = (N−1)p`).
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn lower_fence(values: &[f64], k: f64) -> Option<f64> {
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return None;
    }
    finite.sort_by(f64::total_cmp);
    let q1 = quantile_type7(&finite, 0.25);
    let q3 = quantile_type7(&finite, 0.75);
    Some(q1 - k * (q3 - q1))
}

/// Flags assets whose log volatility is below `Q1 − k·IQR` in both windows.
/// Zero volatility (`log = −∞`) counts as below any fence.
pub fn low_variance_outlier_mask(short: &[f64], long: &[f64], k: f64) -> Result<OutlierMask> {
    if short.len() != long.len() {
        return Err(Error::Shape("volatility windows cover different assets".into()));
    }
    if short.len() < 4 {
        return Err(Error::InvalidInput(format!("IQR fence needs at least 4 assets, got {}", short.len())));
    }
    let (Some(fs), Some(fl)) = (lower_fence(short, k), lower_fence(long, k)) else {
        return Ok(OutlierMask { excluded: vec![false; short.len()], degenerate: true });
    };
    let below = |v: f64, fence: f64| v.is_nan() || v < fence;
    let excluded = short.iter().zip(long).map(|(&s, &l)| below(s, fs) && below(l, fl)).collect();
    Ok(OutlierMask { excluded, degenerate: false })
}

fn log_std(store: &MarketStore, asset: usize, first: usize, last: usize) -> f64 {
    let xs: Vec<f64> = (first..=last).map(|r| store.return_at(r, asset).unwrap_or(0.0)).collect();
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    v.sqrt().ln()
}

/// Issuer key: the asset id up to its first `.`.
pub fn issuer(asset_id: &str) -> &str {
    asset_id.split('.').next().unwrap_or(asset_id)
}

/// Selects up to `n_target` assets for a decision on `row`, reading rows
/// before `row` plus delisting flags over the following `dt_out` rows.
///
/// The volatility fence is computed over every asset quoted on `row − 1`,
/// independently of `candidates`, so re-filtering a result is a no-op.
pub fn filter_universe(
    store: &MarketStore,
    row: usize,
    n_target: usize,
    cfg: &FilterConfig,
    candidates: Option<&[usize]>,
) -> Result<Universe> {
    if !store.has_records() {
        return Err(Error::MissingData("universe filter needs daily records".into()));
    }
    let lookback = cfg.dt_in.max(cfg.long_vol_window).max(cfg.liquidity_window);
    if row < lookback || row == 0 {
        return Err(Error::InfeasibleSpan(format!("row {row} has fewer than {lookback} rows of history")));
    }
    let prev = row - 1;
    store.log(AccessKind::Decision, row, row - lookback, prev)?;
    let notice_end = (row + cfg.dt_out).min(store.n_days());
    if notice_end > row {
        store.log(AccessKind::DelistNotice, row, row, notice_end - 1)?;
    }

    let all: Vec<usize> = (0..store.n_assets()).collect();
    let pool: Vec<usize> = candidates.map(<[usize]>::to_vec).unwrap_or(all);

    // volatility fence over the whole quoted cross-section
    let quoted: Vec<usize> = (0..store.n_assets()).filter(|&j| store.record(prev, j).is_some()).collect();
    let mut degenerate = false;
    let mut low_vol: HashSet<usize> = HashSet::new();
    if quoted.len() >= 4 {
        let short: Vec<f64> = quoted.iter().map(|&j| log_std(store, j, row - cfg.short_vol_window, prev)).collect();
        let long: Vec<f64> = quoted.iter().map(|&j| log_std(store, j, row - cfg.long_vol_window, prev)).collect();
        let mask = low_variance_outlier_mask(&short, &long, cfg.iqr_multiplier)?;
        degenerate = mask.degenerate;
        low_vol.extend(quoted.iter().zip(&mask.excluded).filter(|(_, &e)| e).map(|(&j, _)| j));
    }

    let mut survivors: Vec<(usize, f64)> = Vec::new();
    for &j in &pool {
        if j >= store.n_assets() || low_vol.contains(&j) {
            continue;
        }
        if (row..notice_end).any(|r| store.record(r, j).is_some_and(|rec| rec.delist)) {
            continue;
        }
        if !passes_recent(store, j, row, cfg) || !passes_auction(store, j, row, cfg) {
            continue;
        }
        let cap = store.record(prev, j).map(|r| r.market_cap()).unwrap_or(0.0);
        survivors.push((j, cap));
    }
    survivors.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut issuers: HashSet<&str> = HashSet::new();
    let mut kept: Vec<usize> = Vec::new();
    let mut standardized: Vec<Vec<f64>> = Vec::new();
    for (j, _) in survivors {
        if kept.len() == n_target {
            break;
        }
        if !issuers.insert(issuer(&store.assets()[j])) {
            continue;
        }
        let z = standardize(store, j, row - cfg.dt_in, prev);
        let too_close = standardized.iter().any(|other| {
            let c: f64 = z.iter().zip(other).map(|(a, b)| a * b).sum::<f64>() / z.len() as f64;
            c > cfg.max_correlation
        });
        if too_close {
            continue;
        }
        kept.push(j);
        standardized.push(z);
    }
    Ok(Universe { shortfall: kept.len() < n_target, assets: kept, degenerate_vol_window: degenerate })
}

fn passes_recent(store: &MarketStore, j: usize, row: usize, cfg: &FilterConfig) -> bool {
    let (mut vol, mut shares, mut dollar, mut cap) = (0.0, 0.0, 0.0, 0.0);
    for r in row - cfg.liquidity_window..row {
        let Some(rec) = store.record(r, j) else { return false };
        if rec.close < cfg.min_price || rec.close > cfg.max_price || rec.shares_outstanding <= cfg.min_shares_outstanding {
            return false;
        }
        vol += rec.volume;
        shares += rec.shares_outstanding;
        dollar += rec.volume * rec.close;
        cap += rec.market_cap();
    }
    vol >= cfg.min_volume_fraction * shares && dollar >= cfg.min_dollar_volume_fraction * cap
}

fn passes_auction(store: &MarketStore, j: usize, row: usize, cfg: &FilterConfig) -> bool {
    let first = row - cfg.dt_in;
    let window = cfg.auction_window.min(cfg.dt_in);
    let mut prefix = Vec::with_capacity(cfg.dt_in + 1);
    prefix.push(0usize);
    for r in first..row {
        let hit = store.record(r, j).is_some_and(|rec| rec.auction) as usize;
        prefix.push(prefix.last().unwrap() + hit);
    }
    let need = cfg.auction_min_fraction * window as f64;
    (0..=cfg.dt_in - window).all(|s| (prefix[s + window] - prefix[s]) as f64 >= need)
}

fn standardize(store: &MarketStore, j: usize, first: usize, last: usize) -> Vec<f64> {
    let xs: Vec<f64> = (first..=last).map(|r| store.return_at(r, j).unwrap_or(0.0)).collect();
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt();
    if sd > 0.0 {
        xs.iter().map(|x| (x - m) / sd).collect()
    } else {
        vec![0.0; xs.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_are_type7() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&x, 0.25), 1.75);
        assert_eq!(quantile_type7(&x, 0.75), 3.25);
        assert_eq!(quantile_type7(&x, 0.5), 2.5);
    }

    #[test]
    fn equal_vols_exclude_nothing() {
        let v = vec![0.3f64.ln(); 6];
        let m = low_variance_outlier_mask(&v, &v, 1.5).unwrap();
        assert!(m.excluded.iter().all(|&e| !e));
    }

    #[test]
    fn tiny_vol_in_both_windows_is_excluded() {
        let mut s: Vec<f64> = [0.29, 0.3, 0.31, 0.32, 0.28, 0.3].iter().map(|v: &f64| v.ln()).collect();
        let mut l = s.clone();
        s[2] = 1e-6f64.ln();
        l[2] = 1e-6f64.ln();
        let m = low_variance_outlier_mask(&s, &l, 1.5).unwrap();
        assert_eq!(m.excluded, vec![false, false, true, false, false, false]);
        l[2] = 0.3f64.ln();
        let m = low_variance_outlier_mask(&s, &l, 1.5).unwrap();
        assert!(m.excluded.iter().all(|&e| !e));
    }

    #[test]
    fn degenerate_window() {
        let z = vec![f64::NEG_INFINITY; 5];
        let m = low_variance_outlier_mask(&z, &z, 1.5).unwrap();
        assert!(m.degenerate);
        assert!(m.excluded.iter().all(|&e| !e));
        assert!(low_variance_outlier_mask(&z[..3], &z[..3], 1.5).is_err());
    }

    #[test]
    fn issuer_prefix() {
        assert_eq!(issuer("BRK.A"), "BRK");
        assert_eq!(issuer("AAPL"), "AAPL");
    }
}
