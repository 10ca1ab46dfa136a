//! Inverse-covariance assembly, GMV weights and the out-of-sample loss.
//!
//! Plain functions operate on nalgebra matrices; the `*_tape` variants build
//! the same quantities on an autodiff tape for training.

mod montecarlo;
mod qp;

pub use montecarlo::{predicted_inflation, variance_inflation_mc, InflationEstimate};
pub use qp::{gmv_weights_longonly, KktResiduals, QpOptions, QpSolution};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::linalg::{self, SpectralDecomp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    Unconstrained,
    LongOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PortfolioWeights {
    pub w: Vec<f64>,
    pub constraint: Constraint,
}

impl PortfolioWeights {
    pub fn leverage(&self) -> f64 {
        self.w.iter().map(|x| x.abs()).sum()
    }

    pub fn effective_assets(&self) -> f64 {
        1.0 / self.w.iter().map(|x| x * x).sum::<f64>()
    }

    /// `asset_id,weight` lines with a header.
    pub fn to_csv(&self, assets: &[String]) -> String {
        let mut out = String::from("asset_id,weight\n");
        for (a, w) in assets.iter().zip(&self.w) {
            out.push_str(&format!("{a},{w:.17e}\n"));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct PrecisionEstimate {
    pub precision: DMatrix<f64>,
    /// Diagonal of `D_NN⁻¹`.
    pub inv_vol: Vec<f64>,
    pub v_nn: DMatrix<f64>,
    /// Diagonal of `Λ_NN⁻¹`.
    pub inv_eigenvalues: Vec<f64>,
}

/// Standardized sample correlation of the columns of `x` (`[Δt, n]`) and its
/// eigendecomposition. The diagonal is set to exactly one.
pub fn sample_correlation(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, SpectralDecomp)> {
    let t = x.nrows() as f64;
    let (means, stds) = linalg::column_moments(x);
    if let Some(j) = stds.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::ZeroVariance(j));
    }
    let z = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - means[j]) / stds[j]);
    let mut c = linalg::symmetrize(&(z.transpose() * &z / t));
    c.fill_diagonal(1.0);
    let dec = linalg::eigh(&c)?;
    Ok((c, dec))
}

/// `V_NN = Diag(diag(Ṽ Λ Ṽᵀ))^{-1/2} Ṽ`.
pub fn project_eigvecs(v: &DMatrix<f64>, lambda: &[f64]) -> Result<DMatrix<f64>> {
    let n = v.nrows();
    let mut out = v.clone();
    for i in 0..n {
        let d: f64 = (0..n).map(|k| v[(i, k)] * v[(i, k)] * lambda[k]).sum();
        if !(d > 0.0) {
            return Err(Error::Singular(format!("zero diagonal at row {i} of the projected matrix")));
        }
        out.row_mut(i).scale_mut(1.0 / d.sqrt());
    }
    Ok(out)
}

/// `Σ⁻¹ = D⁻¹ V Λ⁻¹ Vᵀ D⁻¹`.
pub fn assemble_precision(inv_vol: &[f64], v_nn: &DMatrix<f64>, inv_eigenvalues: &[f64]) -> Result<PrecisionEstimate> {
    let n = inv_vol.len();
    if v_nn.shape() != (n, n) || inv_eigenvalues.len() != n {
        return Err(Error::Shape("precision blocks disagree in size".into()));
    }
    let mut left = v_nn.clone();
    for i in 0..n {
        left.row_mut(i).scale_mut(inv_vol[i]);
    }
    let mut scaled = left.clone();
    for (k, &f) in inv_eigenvalues.iter().enumerate() {
        scaled.column_mut(k).scale_mut(f);
    }
    let precision = linalg::symmetrize(&(scaled * left.transpose()));
    if !precision.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("assembled precision".into()));
    }
    Ok(PrecisionEstimate { precision, inv_vol: inv_vol.to_vec(), v_nn: v_nn.clone(), inv_eigenvalues: inv_eigenvalues.to_vec() })
}

/// `w = Σ⁻¹1 / 1ᵀΣ⁻¹1`.
pub fn gmv_weights(precision: &DMatrix<f64>) -> Result<PortfolioWeights> {
    let x: DVector<f64> = precision * DVector::from_element(precision.nrows(), 1.0);
    normalize_budget(x.as_slice())
}

/// GMV weights from a covariance matrix via a Cholesky solve.
pub fn gmv_weights_from_covariance(sigma: &DMatrix<f64>) -> Result<PortfolioWeights> {
    let x = linalg::spd_solve(sigma, &DVector::from_element(sigma.nrows(), 1.0))?;
    normalize_budget(x.as_slice())
}

fn normalize_budget(x: &[f64]) -> Result<PortfolioWeights> {
    let s: f64 = x.iter().sum();
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Singular(format!("1ᵀΣ⁻¹1 = {s} is not positive")));
    }
    Ok(PortfolioWeights { w: x.iter().map(|v| v / s).collect(), constraint: Constraint::Unconstrained })
}

/// `n·mean_t (wᵀ r_t)²` over the rows of `r_out`.
pub fn loss(w: &[f64], r_out: &DMatrix<f64>) -> f64 {
    let n = w.len() as f64;
    let t = r_out.nrows() as f64;
    let mut acc = 0.0;
    for row in r_out.row_iter() {
        let p: f64 = row.iter().zip(w).map(|(r, w)| r * w).sum();
        acc += p * p;
    }
    n * acc / t
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeContribution {
    pub c: f64,
    pub lambda: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct WeightDecomposition {
    pub modes: Vec<ModeContribution>,
    /// Budget-normalized weights rebuilt from the modes.
    pub weights: Vec<f64>,
}

/// Per-eigenmode contributions `cₖ/λₖ` to the GMV weights.
///
/// Without `inv_vol` the decomposition is of a covariance (`cₖ = uₖᵀ1`);
/// with it, of a correlation matrix (`cₖ = Σᵢ vᵢₖ/σᵢ`). Modes are reoriented
/// so that `cₖ ≥ 0`.
pub fn eigen_weight_decomposition(dec: &SpectralDecomp, inv_vol: Option<&[f64]>) -> WeightDecomposition {
    let n = dec.dim();
    let scale: Vec<f64> = match inv_vol {
        Some(s) => s.to_vec(),
        None => vec![1.0; n],
    };
    let mut modes = Vec::with_capacity(n);
    let mut x = vec![0.0; n];
    for k in 0..n {
        let col = dec.vectors.column(k);
        let mut c: f64 = (0..n).map(|i| col[i] * scale[i]).sum();
        let sign = if c < 0.0 { -1.0 } else { 1.0 };
        c *= sign;
        let lambda = dec.values[k];
        let ratio = c / lambda;
        for i in 0..n {
            x[i] += ratio * sign * col[i];
        }
        modes.push(ModeContribution { c, lambda, ratio });
    }
    for i in 0..n {
        x[i] *= scale[i];
    }
    let s: f64 = x.iter().sum();
    WeightDecomposition { modes, weights: x.iter().map(|v| v / s).collect() }
}

/// Standardized correlation `[n, n]` of a `[Δt, n]` tape matrix given its
/// column standard deviations `[n]`; the diagonal is exactly one.
pub fn correlation_tape<'t>(tape: &'t Tape, x: Var<'t>, std: Var<'t>) -> Result<Var<'t>> {
    let shape = x.shape();
    let (t, n) = (shape[0], shape[1]);
    let z = x.sub(x.mean_axis(0)?)?.div(std)?;
    let c = z.t()?.matmul(z)?.scale(1.0 / t as f64);
    let mut mask = vec![1.0; n * n];
    let mut eye = vec![0.0; n * n];
    for i in 0..n {
        mask[i * n + i] = 0.0;
        eye[i * n + i] = 1.0;
    }
    let mask = tape.constant(Tensor::matrix(n, n, mask)?);
    let eye = tape.constant(Tensor::matrix(n, n, eye)?);
    c.mul(mask)?.add(eye)
}

/// GMV weights `[n]` from the factored precision, without forming `Σ⁻¹`.
pub fn gmv_weights_tape<'t>(inv_vol: Var<'t>, vectors: Var<'t>, inv_eigenvalues: Var<'t>) -> Result<Var<'t>> {
    let n = inv_vol.shape()[0];
    let lambda = inv_eigenvalues.recip().reshape(&[n, 1])?;
    let diag = vectors.square().matmul(lambda)?;
    let v_nn = vectors.div(diag.sqrt())?;
    let s = inv_vol.reshape(&[n, 1])?;
    let coeffs = v_nn.t()?.matmul(s)?.mul(inv_eigenvalues.reshape(&[n, 1])?)?;
    let x = v_nn.matmul(coeffs)?.mul(s)?;
    x.div(x.sum())?.reshape(&[n])
}

/// `n·mean_t (wᵀ r_t)²` on the tape; `r_out` is `[Δt_out, n]`.
pub fn loss_tape<'t>(w: Var<'t>, r_out: Var<'t>) -> Result<Var<'t>> {
    let n = w.shape()[0];
    let p = r_out.matmul(w.reshape(&[n, 1])?)?;
    Ok(p.square().mean().scale(n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::stream(seed, rng::streams::MONTE_CARLO);
        let a = DMatrix::from_fn(n, n, |_, _| r.sample::<f64, _>(StandardNormal));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn perfectly_correlated_columns() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 6.0, -1.0, -2.0, 0.5, 1.0]);
        let (c, dec) = sample_correlation(&x).unwrap();
        assert!((c[(0, 1)] - 1.0).abs() < 1e-14);
        assert!(dec.values[0].abs() < 1e-14);
        assert_eq!(c[(0, 0)], 1.0);
    }

    #[test]
    fn projection_gives_unit_diagonal() {
        let dec = linalg::eigh(&random_spd(5, 1)).unwrap();
        let lambda = [0.3, 0.8, 1.1, 1.2, 1.6];
        let v_nn = project_eigvecs(&dec.vectors, &lambda).unwrap();
        let rebuilt = SpectralDecomp { values: lambda.to_vec(), vectors: v_nn.clone() }.reassemble(&lambda);
        for i in 0..5 {
            assert!((rebuilt[(i, i)] - 1.0).abs() < 1e-12);
        }
        // elementwise form of the same formula
        for i in 0..5 {
            let d: f64 = (0..5).map(|k| dec.vectors[(i, k)].powi(2) * lambda[k]).sum();
            for k in 0..5 {
                assert!((v_nn[(i, k)] - dec.vectors[(i, k)] / d.sqrt()).abs() < 1e-15);
            }
        }
        let same = project_eigvecs(&dec.vectors, &[1.0; 5]).unwrap();
        assert!((same - &dec.vectors).abs().max() < 1e-14);
    }

    #[test]
    fn assembly_cases() {
        let eye = DMatrix::identity(3, 3);
        let p = assemble_precision(&[1.0; 3], &eye, &[1.0; 3]).unwrap();
        assert_eq!(p.precision, eye);
        let p = assemble_precision(&[2.0, 0.5, 1.0], &eye, &[0.5, 2.0, 3.0]).unwrap();
        assert_eq!(p.precision[(0, 0)], 2.0);
        assert_eq!(p.precision[(1, 1)], 0.5);
        assert_eq!(p.precision[(2, 2)], 3.0);
    }

    #[test]
    fn closed_form_weights() {
        let w = gmv_weights(&DMatrix::identity(4, 4)).unwrap();
        assert!(w.w.iter().all(|&x| x == 0.25));
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let w = gmv_weights_from_covariance(&sigma).unwrap();
        assert!((w.w[0] - 0.8).abs() < 1e-15 && (w.w[1] - 0.2).abs() < 1e-15);
        let prec = linalg::spd_inverse(&random_spd(4, 2)).unwrap();
        let a = gmv_weights(&prec).unwrap();
        let b = gmv_weights(&(prec * 17.5)).unwrap();
        for (x, y) in a.w.iter().zip(&b.w) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn loss_cases() {
        let r = DMatrix::zeros(5, 3);
        assert_eq!(loss(&[0.2, 0.3, 0.5], &r), 0.0);
        let r = DMatrix::from_row_slice(1, 3, &[0.01, 0.5, -0.2]);
        assert!((loss(&[1.0, 0.0, 0.0], &r) - 3e-4).abs() < 1e-18);
    }

    #[test]
    fn decomposition_reconstructs_weights() {
        let sigma = random_spd(6, 4);
        let dec = linalg::eigh(&sigma).unwrap();
        let d = eigen_weight_decomposition(&dec, None);
        let w = gmv_weights_from_covariance(&sigma).unwrap();
        for (a, b) in d.weights.iter().zip(&w.w) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(d.modes.iter().all(|m| m.c >= 0.0));
        let d = eigen_weight_decomposition(&linalg::eigh(&DMatrix::identity(4, 4)).unwrap(), None);
        assert!(d.weights.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn correlation_basis_decomposition() {
        let sigma = random_spd(5, 6);
        let std: Vec<f64> = (0..5).map(|i| sigma[(i, i)].sqrt()).collect();
        let corr = linalg::to_unit_diagonal(&sigma).unwrap();
        let inv: Vec<f64> = std.iter().map(|s| 1.0 / s).collect();
        let d = eigen_weight_decomposition(&linalg::eigh(&corr).unwrap(), Some(&inv));
        let w = gmv_weights_from_covariance(&sigma).unwrap();
        for (a, b) in d.weights.iter().zip(&w.w) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn tape_weights_match_plain_assembly() {
        let mut r = rng::stream(8, rng::streams::MONTE_CARLO);
        let n = 5;
        let dec = linalg::eigh(&linalg::to_unit_diagonal(&random_spd(n, 7)).unwrap()).unwrap();
        let inv_eig: Vec<f64> = (0..n).map(|_| r.random_range(0.2..2.0)).collect();
        let inv_vol: Vec<f64> = (0..n).map(|_| r.random_range(0.5..1.5)).collect();
        let lambda: Vec<f64> = inv_eig.iter().map(|x| 1.0 / x).collect();
        let v_nn = project_eigvecs(&dec.vectors, &lambda).unwrap();
        let plain = gmv_weights(&assemble_precision(&inv_vol, &v_nn, &inv_eig).unwrap().precision).unwrap();

        let tape = Tape::new();
        let w = gmv_weights_tape(
            tape.constant(Tensor::vector(inv_vol)),
            tape.constant(Tensor::from_dmatrix(&dec.vectors)),
            tape.constant(Tensor::vector(inv_eig)),
        )
        .unwrap();
        for (a, b) in w.value().data().iter().zip(&plain.w) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tape_loss_matches_materialized_form() {
        let mut r = rng::stream(9, rng::streams::MONTE_CARLO);
        let w: Vec<f64> = (0..4).map(|_| r.random_range(-0.5..1.0)).collect();
        let rows = DMatrix::from_fn(5, 4, |_, _| r.random_range(-0.03..0.03));
        let s_out = rows.transpose() * &rows / 5.0;
        let wv = DVector::from_vec(w.clone());
        let materialized = 4.0 * (wv.transpose() * s_out * &wv)[(0, 0)];
        assert!((loss(&w, &rows) - materialized).abs() < 1e-12 * materialized.max(1e-300) + 1e-18);

        let tape = Tape::new();
        let l = loss_tape(tape.constant(Tensor::vector(w.clone())), tape.constant(Tensor::from_dmatrix(&rows))).unwrap();
        assert!((l.item() - loss(&w, &rows)).abs() < 1e-18);
    }
}
