//! Learnable per-lag rescaling and soft clipping of raw returns.
//!
//! Windows are handled in lag-major order: row 0 is the most recent day
//! (lag 1), row `Δt_in − 1` the oldest.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::autodiff::{softplus, softplus_inverse, Tensor, Var};
use crate::error::{Error, Result};

/// Annualization factor inside the transform.
pub const ANNUALIZATION: f64 = 252.0;
pub const INIT_ALPHA: f64 = 1.0;
pub const INIT_BETA: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct LagParams {
    /// Scale per lag, `[Δt_in]`.
    pub alpha: Tensor,
    /// Free parameter per lag; the saturation is `softplus(beta_raw)`, `[Δt_in]`.
    pub beta_raw: Tensor,
}

impl LagParams {
    pub fn init(dt_in: usize) -> Result<Self> {
        if dt_in == 0 {
            return Err(Error::InvalidInput("Δt_in must be at least 1".into()));
        }
        Ok(Self { alpha: Tensor::filled(&[dt_in], INIT_ALPHA), beta_raw: Tensor::filled(&[dt_in], softplus_inverse(INIT_BETA)) })
    }

    pub fn dt_in(&self) -> usize {
        self.alpha.len()
    }

    pub fn param_count(&self) -> usize {
        self.alpha.len() + self.beta_raw.len()
    }

    pub fn beta(&self) -> Vec<f64> {
        self.beta_raw.data().iter().map(|&b| softplus(b)).collect()
    }

    pub fn report(&self) -> LagReport {
        let alpha = self.alpha.data().to_vec();
        LagReport { half_mass_lag: half_mass_lag(&alpha), alpha, beta: self.beta() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LagReport {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub half_mass_lag: usize,
}

/// Smallest lag `L` (1-based) whose leading partial sum reaches half the total.
pub fn half_mass_lag(alpha: &[f64]) -> usize {
    let total: f64 = alpha.iter().sum();
    let mut acc = 0.0;
    for (k, a) in alpha.iter().enumerate() {
        acc += a;
        if acc >= 0.5 * total {
            return k + 1;
        }
    }
    alpha.len()
}

/// Reverses a chronological window (oldest row first) into lag-major order.
pub fn lag_major(window: &DMatrix<f64>) -> Tensor {
    let (rows, cols) = window.shape();
    let mut data = Vec::with_capacity(rows * cols);
    for i in (0..rows).rev() {
        for j in 0..cols {
            data.push(window[(i, j)]);
        }
    }
    Tensor::new(&[rows, cols], data).expect("matrix shape")
}

/// `r̃ = (α/β)·tanh(252·β·r)` on a lag-major `[Δt_in, n]` window.
pub fn transform<'t>(window: Var<'t>, alpha: Var<'t>, beta_raw: Var<'t>) -> Result<Var<'t>> {
    let shape = window.shape();
    let dt_in = alpha.shape().first().copied().unwrap_or(0);
    if shape.len() != 2 || shape[0] != dt_in {
        return Err(Error::Shape(format!("window {shape:?} does not match {dt_in} lag parameters")));
    }
    let alpha = alpha.reshape(&[dt_in, 1])?;
    let beta = beta_raw.softplus().reshape(&[dt_in, 1])?;
    let squashed = window.mul(beta)?.scale(ANNUALIZATION).tanh();
    squashed.mul(alpha.div(beta)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    fn apply(params: &LagParams, window: Tensor) -> Tensor {
        let tape = Tape::new();
        let w = tape.constant(window);
        let a = tape.param(params.alpha.clone());
        let b = tape.param(params.beta_raw.clone());
        (*transform(w, a, b).unwrap().value()).clone()
    }

    #[test]
    fn unit_parameters_at_one_percent() {
        let p = LagParams { alpha: Tensor::vector(vec![1.0]), beta_raw: Tensor::vector(vec![softplus_inverse(1.0)]) };
        let out = apply(&p, Tensor::matrix(1, 1, vec![0.01]).unwrap());
        assert!((out.item() - 2.52_f64.tanh()).abs() < 1e-12);
        assert!((out.item() - 0.9871).abs() < 1e-4);
    }

    #[test]
    fn saturates_at_alpha_over_beta() {
        let p = LagParams { alpha: Tensor::vector(vec![1.0]), beta_raw: Tensor::vector(vec![softplus_inverse(2.0)]) };
        let out = apply(&p, Tensor::matrix(1, 1, vec![0.9]).unwrap());
        assert!((out.item() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn small_beta_is_linear() {
        let p = LagParams { alpha: Tensor::vector(vec![0.7]), beta_raw: Tensor::vector(vec![softplus_inverse(1e-6)]) };
        let out = apply(&p, Tensor::matrix(1, 1, vec![0.003]).unwrap());
        assert!((out.item() - 252.0 * 0.7 * 0.003).abs() < 1e-8);
    }

    #[test]
    fn init_is_neutral() {
        let p = LagParams::init(1200).unwrap();
        assert_eq!(p.param_count(), 2400);
        assert!(p.beta().iter().all(|b| (b - 0.5).abs() < 1e-12));
        let out = apply(&p, Tensor::zeros(&[1200, 3]));
        assert!(out.data().iter().all(|&x| x == 0.0));

        let p = LagParams::init(3).unwrap();
        let out = apply(&p, Tensor::matrix(3, 2, vec![0.01, -0.02, 0.01, -0.02, 0.01, -0.02]).unwrap());
        assert_eq!(out.data()[0..2], out.data()[2..4]);
        assert_eq!(out.data()[2..4], out.data()[4..6]);
    }

    #[test]
    fn window_length_is_checked() {
        let p = LagParams::init(4).unwrap();
        let tape = Tape::new();
        let w = tape.constant(Tensor::zeros(&[5, 2]));
        let a = tape.param(p.alpha.clone());
        let b = tape.param(p.beta_raw.clone());
        assert!(transform(w, a, b).is_err());
    }

    #[test]
    fn half_mass_of_constant_and_power_law() {
        assert_eq!(half_mass_lag(&vec![1.0; 1200]), 600);
        assert_eq!(half_mass_lag(&vec![1.0; 7]), 4);
        let power: Vec<f64> = (1..=1200).map(|t| (t as f64).powf(-0.2)).collect();
        let frac = half_mass_lag(&power) as f64 / 1200.0;
        assert!((frac - 0.42).abs() < 0.01, "{frac}");
    }

    #[test]
    fn lag_major_reverses_rows() {
        let w = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert_eq!(lag_major(&w).data(), &[3.0, 2.0, 1.0]);
    }
}
