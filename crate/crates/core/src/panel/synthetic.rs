//! Factor-model return panels with a closed-form population covariance.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use super::{DayRecord, MarketStore, ReturnPanel};
use crate::error::{Error, Result};
use crate::rng::{self, streams, Rng};

/// Largest absolute daily return emitted; tail draws are clipped here.
pub const RETURN_CLIP: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Innovation {
    Gaussian,
    StudentT { nu: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMarketSpec {
    pub n_assets: usize,
    pub n_days: usize,
    pub n_factors: usize,
    /// Annualized volatility scale of factor loadings.
    pub loading_scale: f64,
    /// Annualized idiosyncratic volatility range.
    pub idio_vol_min: f64,
    pub idio_vol_max: f64,
    pub innovation: Innovation,
    pub seed: u64,
}

impl Default for SyntheticMarketSpec {
    fn default() -> Self {
        Self {
            n_assets: 100,
            n_days: 1500,
            n_factors: 3,
            loading_scale: 0.15,
            idio_vol_min: 0.15,
            idio_vol_max: 0.45,
            innovation: Innovation::StudentT { nu: 5.0 },
            seed: 0,
        }
    }
}

impl SyntheticMarketSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_assets == 0 || self.n_days < 2 {
            return Err(Error::InvalidInput("synthetic panel needs assets and at least 2 days".into()));
        }
        if !(self.idio_vol_min > 0.0 && self.idio_vol_min <= self.idio_vol_max) {
            return Err(Error::InvalidInput("idiosyncratic volatility range must be positive and ordered".into()));
        }
        if !(self.loading_scale >= 0.0) {
            return Err(Error::InvalidInput("loading scale must be non-negative".into()));
        }
        if let Innovation::StudentT { nu } = self.innovation {
            if !(nu > 2.0) {
                return Err(Error::InvalidInput(format!("Student-t needs ν > 2, got {nu}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticMarket {
    pub spec: SyntheticMarketSpec,
    pub panel: ReturnPanel,
    /// Daily population covariance `B Bᵀ + Diag(idiosyncratic variances)`.
    pub covariance: DMatrix<f64>,
    /// Daily loadings `[n, k]`.
    pub loadings: DMatrix<f64>,
    pub idio_var: Vec<f64>,
}

/// Consecutive weekdays starting at `start` (moved forward to a weekday).
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

/// Unit-variance innovation sampler.
struct Shock {
    t: Option<(StudentT<f64>, f64)>,
}

impl Shock {
    fn new(law: Innovation) -> Result<Self> {
        Ok(Self {
            t: match law {
                Innovation::Gaussian => None,
                Innovation::StudentT { nu } => {
                    let dist = StudentT::new(nu).map_err(|e| Error::InvalidInput(e.to_string()))?;
                    Some((dist, ((nu - 2.0) / nu).sqrt()))
                }
            },
        })
    }

    fn draw(&self, r: &mut Rng) -> f64 {
        match &self.t {
            None => StandardNormal.sample(r),
            Some((dist, s)) => dist.sample(r) * s,
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticMarketSpec) -> Result<SyntheticMarket> {
    spec.validate()?;
    let (n, t, k) = (spec.n_assets, spec.n_days, spec.n_factors);
    let mut r = rng::stream(spec.seed, streams::SYNTHETIC);
    let daily = 1.0 / 252f64.sqrt();

    let first = Normal::new(1.0, 0.3).expect("valid normal");
    let loadings = DMatrix::from_fn(n, k, |_, f| {
        let z: f64 = if f == 0 { Distribution::<f64>::sample(&first, &mut r).abs() } else { StandardNormal.sample(&mut r) };
        z * spec.loading_scale * daily
    });
    let idio_var: Vec<f64> = (0..n)
        .map(|_| {
            let v = if spec.idio_vol_max > spec.idio_vol_min {
                r.random_range(spec.idio_vol_min..spec.idio_vol_max)
            } else {
                spec.idio_vol_min
            };
            (v * daily).powi(2)
        })
        .collect();
    let mut covariance = &loadings * loadings.transpose();
    for i in 0..n {
        covariance[(i, i)] += idio_var[i];
    }

    let shock = Shock::new(spec.innovation)?;
    let idio_sd: Vec<f64> = idio_var.iter().map(|v| v.sqrt()).collect();
    let mut returns = DMatrix::zeros(t, n);
    let mut factors = vec![0.0; k];
    for row in 0..t {
        factors.iter_mut().for_each(|f| *f = shock.draw(&mut r));
        for i in 0..n {
            let mut x = idio_sd[i] * shock.draw(&mut r);
            for (f, fv) in factors.iter().enumerate() {
                x += loadings[(i, f)] * fv;
            }
            returns[(row, i)] = x.clamp(-RETURN_CLIP, RETURN_CLIP);
        }
    }
    let assets = (0..n).map(|i| format!("S{i:04}")).collect();
    let panel = ReturnPanel::new(business_days(epoch(), t), assets, returns)?;
    Ok(SyntheticMarket { spec: spec.clone(), panel, covariance, loadings, idio_var })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CorporateAction {
    /// `ratio` new shares per old share, effective at the open of `row`.
    Split { asset: usize, row: usize, ratio: f64 },
    /// Cash dividend worth `fraction` of the pre-dividend price, paid on `row`.
    Dividend { asset: usize, row: usize, fraction: f64 },
    /// Delisting flag on `row`; no records afterwards.
    Delist { asset: usize, row: usize },
}

impl SyntheticMarket {
    /// Daily records whose adjusted closes reproduce the panel's returns
    /// (row 0 carries the initial price; its return is undefined).
    pub fn to_store(&self, actions: &[CorporateAction]) -> Result<MarketStore> {
        let p = &self.panel;
        let (t, n) = (p.n_days(), p.n_assets());
        let mut r = rng::stream(self.spec.seed, streams::SYNTHETIC ^ 0xABCD);
        let mut grid: Vec<Option<DayRecord>> = vec![None; t * n];
        for j in 0..n {
            let mut adjusted = r.random_range(20.0..200.0);
            let shares0 = r.random_range(2e7..5e8);
            let mut factor = 1.0;
            let mut splits = 1.0;
            let mut delisted_after = usize::MAX;
            for row in 0..t {
                if row > delisted_after {
                    break;
                }
                if row > 0 {
                    adjusted *= 1.0 + p.returns[(row, j)];
                }
                let mut rec = DayRecord {
                    open: None,
                    close: 0.0,
                    adj_factor: 1.0,
                    volume: 0.0,
                    shares_outstanding: shares0 * splits,
                    dividend_cash: 0.0,
                    split_ratio: 1.0,
                    auction: true,
                    delist: false,
                };
                let mut dividend_fraction = 0.0;
                for a in actions {
                    match *a {
                        CorporateAction::Split { asset, row: s, ratio } if asset == j && s == row => {
                            factor *= ratio;
                            splits *= ratio;
                            rec.split_ratio = ratio;
                            rec.shares_outstanding = shares0 * splits;
                        }
                        CorporateAction::Dividend { asset, row: s, fraction } if asset == j && s == row => {
                            dividend_fraction = fraction;
                        }
                        CorporateAction::Delist { asset, row: s } if asset == j && s == row => {
                            rec.delist = true;
                            delisted_after = row;
                        }
                        _ => {}
                    }
                }
                if dividend_fraction > 0.0 {
                    let pre = adjusted / factor;
                    rec.dividend_cash = dividend_fraction * pre;
                    factor /= 1.0 - dividend_fraction;
                }
                rec.close = adjusted / factor;
                rec.adj_factor = factor;
                rec.open = Some(rec.close * (1.0 - 0.5 * p.returns[(row, j)]));
                rec.volume = (rec.shares_outstanding * r.random_range(0.012..0.04)).round();
                grid[row * n + j] = Some(rec);
            }
        }
        MarketStore::from_records(p.dates.clone(), p.assets.clone(), grid)
    }
}
