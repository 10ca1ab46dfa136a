use crate::error::{Error, Result};
use crate::gmv::{Constraint, PortfolioWeights};

fn proportional(x: &[f64], what: &str) -> Result<PortfolioWeights> {
    if x.is_empty() || x.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput(format!("{what} must be positive")));
    }
    let s: f64 = x.iter().sum();
    Ok(PortfolioWeights { w: x.iter().map(|v| v / s).collect(), constraint: Constraint::LongOnly })
}

/// `wᵢ ∝ 1/σᵢ²`.
pub fn erb_weights(variances: &[f64]) -> Result<PortfolioWeights> {
    if variances.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidInput("variances must be positive".into()));
    }
    let inv: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
    proportional(&inv, "variances")
}

/// `wᵢ ∝ capᵢ`.
pub fn mcw_weights(caps: &[f64]) -> Result<PortfolioWeights> {
    proportional(caps, "market caps")
}
