//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct SpectralDecomp {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SpectralDecomp {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(f) Vᵀ`.
    pub fn reassemble(&self, eigenvalues: &[f64]) -> DMatrix<f64> {
        let v = &self.vectors;
        let mut scaled = v.clone();
        for (k, &f) in eigenvalues.iter().enumerate() {
            scaled.column_mut(k).scale_mut(f);
        }
        symmetrize(&(scaled * v.transpose()))
    }
}

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Symmetric eigendecomposition: ascending eigenvalues, each eigenvector
/// oriented so its largest-magnitude component is positive.
pub fn eigh(a: &DMatrix<f64>) -> Result<SpectralDecomp> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Shape(format!("eigh needs a square matrix, got {:?}", a.shape())));
    }
    if !a.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("eigh input".into()));
    }
    let scale = a.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    let asym = max_asymmetry(a);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let sym = symmetrize(a);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 100 * n.max(10)).ok_or(Error::EigenNonConvergence(n))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));

    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() + 1e-14 {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, k)] = sign * col[i];
        }
    }
    Ok(SpectralDecomp { values, vectors })
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = a.clone().cholesky().ok_or_else(|| Error::Singular("Cholesky factorization failed".into()))?;
    Ok(chol.solve(b))
}

pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = a.clone().cholesky().ok_or_else(|| Error::Singular("Cholesky factorization failed".into()))?;
    Ok(symmetrize(&chol.inverse()))
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales a symmetric matrix to unit diagonal.
pub fn to_unit_diagonal(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    if let Some(i) = d.iter().position(|&x| x <= 0.0 || !x.is_finite()) {
        return Err(Error::Singular(format!("non-positive diagonal entry at {i}")));
    }
    let s: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let mut out = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * s[i] * s[j]);
    for i in 0..n {
        out[(i, i)] = 1.0;
    }
    Ok(out)
}

/// Floors the spectrum at `floor` and reassembles.
pub fn psd_floor(a: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let dec = eigh(a)?;
    if dec.values[0] >= floor {
        return Ok(a.clone());
    }
    let vals: Vec<f64> = dec.values.iter().map(|&x| x.max(floor)).collect();
    Ok(dec.reassemble(&vals))
}

/// Sample mean and population standard deviation of each column.
pub fn column_moments(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let t = x.nrows() as f64;
    let mut means = Vec::with_capacity(x.ncols());
    let mut stds = Vec::with_capacity(x.ncols());
    for col in x.column_iter() {
        let m = col.sum() / t;
        let v = col.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / t;
        means.push(m);
        stds.push(v.sqrt());
    }
    (means, stds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_eigenvalues() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let d = eigh(&a).unwrap();
        assert!((d.values[0] - 1.0).abs() < 1e-14);
        assert!((d.values[1] - 3.0).abs() < 1e-14);
        let back = d.reassemble(&d.values);
        assert!((back - a).abs().max() < 1e-14);
    }

    #[test]
    fn identity_gives_canonical_basis() {
        let d = eigh(&DMatrix::identity(4, 4)).unwrap();
        assert!(d.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!((d.vectors.clone() - DMatrix::<f64>::identity(4, 4)).abs().max() < 1e-15);
    }

    #[test]
    fn rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(eigh(&a), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn unit_diagonal_rescale() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 9.0]);
        let c = to_unit_diagonal(&a).unwrap();
        assert_eq!(c[(0, 0)], 1.0);
        assert!((c[(0, 1)] - 1.0 / 6.0).abs() < 1e-15);
    }
}
