use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::panel::MarketStore;
use crate::rng::Rng;

/// One training example: inputs on `[t−Δt_in, t−1]`, evaluation on
/// `[t+1, t+Δt_out]`.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub t: usize,
    pub assets: Vec<usize>,
    /// Chronological `[Δt_in, n]`.
    pub window: DMatrix<f64>,
    /// `[Δt_out, n]`.
    pub r_out: DMatrix<f64>,
    pub q: f64,
}

impl TrainSample {
    pub fn n(&self) -> usize {
        self.assets.len()
    }

    pub fn last_input_row(&self) -> usize {
        self.t - 1
    }

    pub fn first_output_row(&self) -> usize {
        self.t + 1
    }
}

/// Feasible decision rows inside the inclusive row span `[first, last]`.
pub fn feasible_decisions(first: usize, last: usize, dt_in: usize, dt_out: usize) -> Option<(usize, usize)> {
    let lo = first + dt_in + 1;
    let hi = last.checked_sub(dt_out)?;
    (lo <= hi).then_some((lo, hi))
}

/// Uniform decision row, uniform basket size in `n_range`, and a uniform
/// basket among assets with data on every input and evaluation row. The
/// basket is capped by the pool size; a pool below `n_range.0` is an error.
pub fn draw_sample(
    store: &MarketStore,
    span: (usize, usize),
    dt_in: usize,
    dt_out: usize,
    n_range: (usize, usize),
    rng: &mut Rng,
) -> Result<TrainSample> {
    let (first, last) = span;
    if last >= store.n_days() {
        return Err(Error::InfeasibleSpan(format!("span ends at row {last} beyond {} days", store.n_days())));
    }
    let (lo, hi) = feasible_decisions(first, last, dt_in, dt_out)
        .ok_or_else(|| Error::InfeasibleSpan(format!("rows [{first}, {last}] cannot hold {dt_in} + 1 + {dt_out} days plus one")))?;
    let (n_min, n_max) = n_range;
    if n_min < 2 || n_min > n_max {
        return Err(Error::InvalidInput(format!("bad asset range [{n_min}, {n_max}]")));
    }
    let t = rng.random_range(lo..=hi);
    let n = rng.random_range(n_min..=n_max);
    let pool = store.complete_assets(t - dt_in, dt_in + 1 + dt_out);
    if pool.len() < n_min {
        return Err(Error::InfeasibleSpan(format!("{} complete assets at row {t}, need {n_min}", pool.len())));
    }
    let n = n.min(pool.len());
    let mut assets: Vec<usize> = sample_indices(rng, pool.len(), n).into_iter().map(|k| pool[k]).collect();
    assets.sort_unstable();

    let window = store.history(t, dt_in, &assets)?;
    let r_out = store.evaluation(t, t + 1, dt_out, &assets)?;
    let s = TrainSample { t, assets, window, r_out, q: n as f64 / dt_in as f64 };
    if t - dt_in <= first || t + dt_out > last {
        return Err(Error::Leakage { decision_row: t, row: t + dt_out });
    }
    Ok(s)
}
