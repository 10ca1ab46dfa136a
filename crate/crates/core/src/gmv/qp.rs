//! Long-only GMV: `min wᵀΣw` s.t. `1ᵀw = 1`, `w ≥ 0`, by a primal active-set
//! method. The budget constraint is handled in closed form on the free set.

use nalgebra::{DMatrix, DVector};

use super::{Constraint, PortfolioWeights};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Copy, Debug)]
pub struct QpOptions {
    /// Pivot cap; `None` means `10·n²`.
    pub max_iterations: Option<usize>,
    /// Multiplier tolerance relative to `trace(Σ)/n`.
    pub tolerance: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { max_iterations: None, tolerance: 1e-12 }
    }
}

/// KKT residuals, each relative to `trace(Σ)/n` where units apply.
#[derive(Clone, Copy, Debug, Default)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub weights: PortfolioWeights,
    /// Budget multiplier `ν` in `2Σw = ν1 + z`.
    pub nu: f64,
    /// Bound multipliers `z ≥ 0`.
    pub z: Vec<f64>,
    pub iterations: usize,
    pub jittered: bool,
    pub kkt: KktResiduals,
}

/// Minimizer of `wᵀΣw` on `free` with the others at zero and `Σw = 1`.
fn free_set_optimum(sigma: &DMatrix<f64>, free: &[usize]) -> Result<Vec<f64>> {
    let m = free.len();
    let sub = DMatrix::from_fn(m, m, |i, j| sigma[(free[i], free[j])]);
    let x = linalg::spd_solve(&sub, &DVector::from_element(m, 1.0))?;
    let s = x.sum();
    if !(s > 0.0) {
        return Err(Error::Singular("free-set budget is not positive".into()));
    }
    let mut w = vec![0.0; sigma.nrows()];
    for (k, &i) in free.iter().enumerate() {
        w[i] = x[k] / s;
    }
    Ok(w)
}

fn kkt(sigma: &DMatrix<f64>, w: &[f64], scale: f64) -> (f64, Vec<f64>, KktResiduals) {
    let n = w.len();
    let g: Vec<f64> = (0..n).map(|i| 2.0 * (0..n).map(|j| sigma[(i, j)] * w[j]).sum::<f64>()).collect();
    let free: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
    let nu = if free.is_empty() { 0.0 } else { free.iter().map(|&i| g[i]).sum::<f64>() / free.len() as f64 };
    let z: Vec<f64> = g.iter().map(|gi| gi - nu).collect();
    let mut r = KktResiduals { primal: (w.iter().sum::<f64>() - 1.0).abs(), ..Default::default() };
    for i in 0..n {
        r.primal = r.primal.max((-w[i]).max(0.0));
        if w[i] > 0.0 {
            r.stationarity = r.stationarity.max(z[i].abs() / scale);
        } else {
            r.dual = r.dual.max((-z[i]).max(0.0) / scale);
        }
        r.complementarity = r.complementarity.max((w[i] * z[i]).abs() / scale);
    }
    (nu, z, r)
}

pub fn gmv_weights_longonly(sigma: &DMatrix<f64>, opts: QpOptions) -> Result<QpSolution> {
    let n = sigma.nrows();
    if n == 0 || sigma.ncols() != n {
        return Err(Error::Shape(format!("QP needs a square matrix, got {:?}", sigma.shape())));
    }
    let scale = sigma.trace() / n as f64;
    if !(scale > 0.0) {
        return Err(Error::InvalidInput("covariance trace must be positive".into()));
    }
    let mut sigma = linalg::symmetrize(sigma);
    let smallest = linalg::eigh(&sigma)?.values[0];
    let jittered = smallest < 1e-12 * scale;
    if jittered {
        for i in 0..n {
            sigma[(i, i)] += 1e-10 * scale;
        }
    }

    let cap = opts.max_iterations.unwrap_or(10 * n * n).max(1);
    let mut w = vec![1.0 / n as f64; n];
    let mut active = vec![false; n];
    for iteration in 1..=cap {
        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        let target = free_set_optimum(&sigma, &free)?;

        let mut step = 1.0;
        let mut blocking = None;
        for &i in &free {
            if target[i] < w[i] {
                let t = w[i] / (w[i] - target[i]);
                if t < step {
                    step = t;
                    blocking = Some(i);
                }
            }
        }
        for &i in &free {
            w[i] += step * (target[i] - w[i]);
        }
        if let Some(b) = blocking {
            active[b] = true;
            w[b] = 0.0;
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            continue;
        }

        // at the free-set optimum: release the most negative bound multiplier
        let (_, z, _) = kkt(&sigma, &w, scale);
        let release = (0..n).filter(|&i| active[i] && z[i] < -opts.tolerance * scale).min_by(|&a, &b| z[a].total_cmp(&z[b]));
        match release {
            Some(i) => active[i] = false,
            None => {
                for i in 0..n {
                    if active[i] {
                        w[i] = 0.0;
                    }
                }
                let (nu, z, kkt) = kkt(&sigma, &w, scale);
                return Ok(QpSolution {
                    weights: PortfolioWeights { w, constraint: Constraint::LongOnly },
                    nu,
                    z,
                    iterations: iteration,
                    jittered,
                    kkt,
                });
            }
        }
    }
    Err(Error::NonConvergence { iterations: cap, context: "long-only active set".into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(sigma: &DMatrix<f64>) -> QpSolution {
        gmv_weights_longonly(sigma, QpOptions::default()).unwrap()
    }

    #[test]
    fn symmetric_pair() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.99, 0.99, 1.0]);
        let sol = solve(&s);
        assert!((sol.weights.w[0] - 0.5).abs() < 1e-12);
        assert!(sol.kkt.max() < 1e-8);
    }

    #[test]
    fn boundary_solution() {
        // unconstrained optimum (1.5, -0.5): σ₁² = 1, σ₂² = 2, cov = 1.25
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.25, 1.25, 2.0]);
        let unc = super::super::gmv_weights_from_covariance(&s).unwrap();
        assert!((unc.w[0] - 1.5).abs() < 1e-12);
        let sol = solve(&s);
        assert_eq!(sol.weights.w, vec![1.0, 0.0]);
        assert!(sol.z[1] > 0.0);
        assert!(sol.kkt.max() < 1e-8);
    }

    #[test]
    fn slack_constraints_match_closed_form() {
        let s = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.2, 1.5, 0.3, 0.1, 0.3, 2.0]);
        let unc = super::super::gmv_weights_from_covariance(&s).unwrap();
        let sol = solve(&s);
        for (a, b) in unc.w.iter().zip(&sol.weights.w) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_input_is_jittered() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let sol = solve(&s);
        assert!(sol.jittered);
        assert!((sol.weights.w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
