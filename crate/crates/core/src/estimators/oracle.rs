use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

pub const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct OracleEigenvalues {
    /// `fₖ = Σₗ λₗ ψₖₗ`, one per column of `V̂`.
    pub values: Vec<f64>,
    /// `ψₖₗ = Σᵢ (v̂ᵢₖ vᵢₗ)²`.
    pub overlap: DMatrix<f64>,
    /// `v̂ₖᵀ C v̂ₖ`, computed directly.
    pub direct: Vec<f64>,
}

impl OracleEigenvalues {
    /// Largest deviation of a row or column sum of `Ψ` from one.
    pub fn stochastic_error(&self) -> f64 {
        let rows = self.overlap.row_iter().map(|r| (r.sum() - 1.0).abs());
        let cols = self.overlap.column_iter().map(|c| (c.sum() - 1.0).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}

/// Frobenius-optimal eigenvalues for the sample eigenvectors `v_hat` against
/// a reference correlation `c_ref`.
pub fn oracle_eigenvalues(v_hat: &DMatrix<f64>, c_ref: &DMatrix<f64>) -> Result<OracleEigenvalues> {
    let n = v_hat.nrows();
    if v_hat.shape() != (n, n) || c_ref.shape() != (n, n) {
        return Err(Error::Shape("oracle inputs must be square and of equal size".into()));
    }
    let gram = v_hat.transpose() * v_hat;
    let off = (gram - DMatrix::<f64>::identity(n, n)).abs().max();
    if off > ORTHONORMAL_TOL {
        return Err(Error::InvalidInput(format!("sample eigenvectors are not orthonormal (error {off:e})")));
    }
    let dec = linalg::eigh(c_ref)?;
    let proj = v_hat.transpose() * &dec.vectors;
    let overlap = proj.map(|x| x * x);
    let values = (0..n).map(|k| (0..n).map(|l| dec.values[l] * overlap[(k, l)]).sum()).collect();
    let cv = c_ref * v_hat;
    let direct = (0..n).map(|k| v_hat.column(k).dot(&cv.column(k))).collect();
    Ok(OracleEigenvalues { values, overlap, direct })
}
