//! Monte-Carlo check of out-of-sample variance inflation for plug-in GMV.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

/// `1 + q/(1 − q)`.
pub fn predicted_inflation(n: usize, dt_in: usize) -> f64 {
    let q = n as f64 / dt_in as f64;
    1.0 + q / (1.0 - q)
}

#[derive(Clone, Debug, Serialize)]
pub struct InflationEstimate {
    pub n: usize,
    pub dt_in: usize,
    pub trials: usize,
    /// Mean of `wᵀΣw / σ★²` with the population covariance.
    pub population_ratio: f64,
    /// Mean realized variance over `Δt_out` days relative to the optimum's.
    pub realized_ratio: f64,
    pub predicted: f64,
}

/// Population covariance with one market factor and heterogeneous volatilities.
fn population(n: usize) -> DMatrix<f64> {
    let vols: Vec<f64> = (0..n).map(|i| 0.01 * (1.0 + i as f64 / n as f64)).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let rho = if i == j { 1.0 } else { 0.3 };
        rho * vols[i] * vols[j]
    })
}

/// Plug-in GMV weights from the non-demeaned sample covariance of `Δt_in`
/// Gaussian draws, scored against the population optimum.
pub fn variance_inflation_mc(n: usize, dt_in: usize, dt_out: usize, trials: usize, seed: u64) -> Result<InflationEstimate> {
    if dt_in <= n + 2 {
        return Err(Error::InvalidInput(format!("need Δt_in > n + 2, got n={n}, Δt_in={dt_in}")));
    }
    if trials == 0 || dt_out == 0 {
        return Err(Error::InvalidInput("trials and Δt_out must be positive".into()));
    }
    let sigma = population(n);
    let chol = sigma.clone().cholesky().ok_or_else(|| Error::Singular("population".into()))?;
    let l = chol.l();
    let w_star = super::gmv_weights_from_covariance(&sigma)?.w;
    let w_star = DVector::from_vec(w_star);
    let var_star = (w_star.transpose() * &sigma * &w_star)[(0, 0)];

    let per_trial: Vec<Result<(f64, f64)>> = (0..trials as u64)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::substream(seed, rng::streams::MONTE_CARLO, k);
            let mut draw = |rows: usize| -> DMatrix<f64> {
                let z = DMatrix::<f64>::from_fn(rows, n, |_, _| StandardNormal.sample(&mut r));
                z * l.transpose()
            };
            let x = draw(dt_in);
            let s = linalg::symmetrize(&(x.transpose() * &x / dt_in as f64));
            let w = DVector::from_vec(super::gmv_weights_from_covariance(&s)?.w);
            let pop = (w.transpose() * &sigma * &w)[(0, 0)] / var_star;
            let out = draw(dt_out);
            let realized = (&out * &w).norm_squared();
            let realized_star = (&out * &w_star).norm_squared();
            Ok((pop, realized / realized_star))
        })
        .collect();
    let mut pop_sum = 0.0;
    let mut real_sum = 0.0;
    for t in per_trial {
        let (p, r) = t?;
        pop_sum += p;
        real_sum += r;
    }
    Ok(InflationEstimate {
        n,
        dt_in,
        trials,
        population_ratio: pop_sum / trials as f64,
        realized_ratio: real_sum / trials as f64,
        predicted: predicted_inflation(n, dt_in),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_values() {
        assert_eq!(predicted_inflation(50, 100), 2.0);
        assert!((predicted_inflation(20, 80) - 4.0 / 3.0).abs() < 1e-15);
        assert!((predicted_inflation(10, 10_000) - 1.001).abs() < 1e-5);
    }

    #[test]
    fn rejects_short_window() {
        assert!(variance_inflation_mc(10, 12, 5, 10, 0).is_err());
    }

    #[test]
    fn small_run_is_inflated() {
        let est = variance_inflation_mc(10, 40, 5, 200, 1).unwrap();
        assert!(est.population_ratio > 1.0);
        assert!((est.population_ratio / est.predicted - 1.0).abs() < 0.1);
    }
}
