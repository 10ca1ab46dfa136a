use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Debug)]
pub struct LedoitWolf {
    pub covariance: DMatrix<f64>,
    pub shrinkage: f64,
}

/// `(1 − ρ)S + ρ·μI` with `μ = trace(S)/n`.
pub fn shrink_with_intensity(s: &DMatrix<f64>, rho: f64) -> DMatrix<f64> {
    let n = s.nrows();
    let mu = s.trace() / n as f64;
    let mut out = s * (1.0 - rho);
    for i in 0..n {
        out[(i, i)] += rho * mu;
    }
    out
}

/// Linear shrinkage toward a scaled identity with the data-driven intensity.
/// Columns of `x` (`[Δt, n]`) are demeaned first.
pub fn ledoit_wolf(x: &DMatrix<f64>) -> Result<LedoitWolf> {
    let (t, n) = x.shape();
    if t < 2 {
        return Err(Error::InvalidInput("linear shrinkage needs at least 2 observations".into()));
    }
    let mean = x.row_mean();
    let xc = DMatrix::from_fn(t, n, |i, j| x[(i, j)] - mean[j]);
    let tf = t as f64;
    let s = linalg::symmetrize(&(xc.transpose() * &xc / tf));
    let mu = s.trace() / n as f64;

    let x2 = xc.map(|v| v * v);
    let beta_raw: f64 = (x2.transpose() * &x2).sum();
    let delta_raw: f64 = s.iter().map(|v| v * v).sum();
    let beta = (beta_raw / tf - delta_raw) / (n as f64 * tf);
    let delta = (delta_raw - 2.0 * mu * s.trace() + n as f64 * mu * mu) / n as f64;
    let beta = beta.min(delta);
    let shrinkage = if beta <= 0.0 || delta <= 0.0 { 0.0 } else { (beta / delta).clamp(0.0, 1.0) };
    Ok(LedoitWolf { covariance: shrink_with_intensity(&s, shrinkage), shrinkage })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_intensities() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 4.0]);
        assert_eq!(shrink_with_intensity(&s, 0.0), s);
        assert_eq!(shrink_with_intensity(&s, 1.0), DMatrix::identity(2, 2) * 3.0);
    }

    #[test]
    fn intensity_in_unit_interval() {
        let x = DMatrix::from_fn(20, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let lw = ledoit_wolf(&x).unwrap();
        assert!((0.0..=1.0).contains(&lw.shrinkage));
    }
}
