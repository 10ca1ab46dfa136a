//! Per-asset MLP from transformed-return volatility to inverse volatility.

use rand_distr::{Distribution, Uniform};

use crate::autodiff::{Tape, Tensor, Var, DEFAULT_LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const LAYER_SIZES: [usize; 5] = [1, 64, 32, 16, 1];

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `[in, out]`
    pub w: Tensor,
    /// `[out]`
    pub b: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VolMlpParams {
    pub layers: Vec<Dense>,
    pub slope: f64,
}

impl VolMlpParams {
    pub fn init(rng: &mut Rng) -> Self {
        let layers = LAYER_SIZES
            .windows(2)
            .map(|io| {
                let bound = 1.0 / (io[0] as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                let w = (0..io[0] * io[1]).map(|_| dist.sample(rng)).collect();
                Dense { w: Tensor::new(&[io[0], io[1]], w).unwrap(), b: Tensor::zeros(&[io[1]]) }
            })
            .collect();
        Self { layers, slope: DEFAULT_LEAKY_SLOPE }
    }

    /// All weights and biases zero.
    pub fn zeros() -> Self {
        let layers = LAYER_SIZES.windows(2).map(|io| Dense { w: Tensor::zeros(&[io[0], io[1]]), b: Tensor::zeros(&[io[1]]) }).collect();
        Self { layers, slope: DEFAULT_LEAKY_SLOPE }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn on_tape<'t>(&self, tape: &'t Tape) -> VolVars<'t> {
        VolVars { layers: self.layers.iter().map(|l| (tape.param(l.w.clone()), tape.param(l.b.clone()))).collect(), slope: self.slope }
    }

    /// Inference without gradient tracking.
    pub fn apply(&self, sigma: &[f64]) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let vars = self.on_tape(&tape);
        let s = tape.constant(Tensor::vector(sigma.to_vec()));
        Ok(inverse_vol(s, &vars)?.value().data().to_vec())
    }

    /// Un-normalized MLP output for each input scalar.
    pub fn raw_outputs(&self, sigma: &[f64]) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let vars = self.on_tape(&tape);
        let s = tape.constant(Tensor::vector(sigma.to_vec()));
        Ok(raw_inverse_vol(s, &vars)?.value().data().to_vec())
    }
}

#[derive(Clone, Debug)]
pub struct VolVars<'t> {
    pub layers: Vec<(Var<'t>, Var<'t>)>,
    pub slope: f64,
}

/// Population standard deviation of every column of `[Δt, n]` as `[n]`.
pub fn marginal_std<'t>(x: Var<'t>) -> Result<Var<'t>> {
    let shape = x.shape();
    if shape.len() != 2 || shape[0] < 2 {
        return Err(Error::Shape(format!("marginal_std needs at least 2 rows, got {shape:?}")));
    }
    let n = shape[1];
    let m1 = x.mean_axis(0)?;
    let m2 = x.square().mean_axis(0)?;
    let var = m2.sub(m1.square())?;
    let (vv, sv) = (var.value(), m2.value());
    for j in 0..n {
        if vv.data()[j] <= 1e-14 * sv.data()[j] {
            return Err(Error::ZeroVariance(j));
        }
    }
    var.sqrt().reshape(&[n])
}

fn raw_inverse_vol<'t>(sigma: Var<'t>, p: &VolVars<'t>) -> Result<Var<'t>> {
    let n = sigma.shape()[0];
    if sigma.value().data().iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidInput("volatility inputs must be positive and finite".into()));
    }
    let mut h = sigma.reshape(&[n, 1])?;
    let last = p.layers.len() - 1;
    for (k, (w, b)) in p.layers.iter().enumerate() {
        h = h.matmul(*w)?.add(*b)?;
        h = if k < last { h.leaky_relu(p.slope) } else { h.softplus() };
    }
    h.reshape(&[n])
}

/// Inverse volatilities `[n]` normalized to mean 1.
pub fn inverse_vol<'t>(sigma: Var<'t>, p: &VolVars<'t>) -> Result<Var<'t>> {
    let out = raw_inverse_vol(sigma, p)?;
    out.div(out.mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    #[test]
    fn parameter_count() {
        let mut r = rng::stream(0, rng::streams::INIT_VOL);
        assert_eq!(VolMlpParams::init(&mut r).param_count(), 2_753);
    }

    #[test]
    fn same_seed_same_params() {
        let a = VolMlpParams::init(&mut rng::stream(9, rng::streams::INIT_VOL));
        let b = VolMlpParams::init(&mut rng::stream(9, rng::streams::INIT_VOL));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_weights_output_softplus_zero() {
        let raw = VolMlpParams::zeros().raw_outputs(&[0.1, 2.0, 7.0]).unwrap();
        assert!(raw.iter().all(|&v| (v - std::f64::consts::LN_2).abs() < 1e-15));
    }

    #[test]
    fn identical_inputs_normalize_to_one() {
        let p = VolMlpParams::init(&mut rng::stream(1, rng::streams::INIT_VOL));
        let out = p.apply(&[0.4; 5]).unwrap();
        assert!(out.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let out = p.apply(&[0.1, 0.5, 1.3, 0.2]).unwrap();
        assert!((out.iter().sum::<f64>() / 4.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive() {
        let p = VolMlpParams::zeros();
        assert!(p.apply(&[0.1, 0.0]).is_err());
    }

    fn std_of(rows: usize, cols: usize, data: Vec<f64>) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let x = tape.constant(Tensor::matrix(rows, cols, data).unwrap());
        Ok(marginal_std(x)?.value().data().to_vec())
    }

    #[test]
    fn marginal_std_cases() {
        let s = std_of(4, 1, vec![0.3, -0.3, 0.3, -0.3]).unwrap();
        assert!((s[0] - 0.3).abs() < 1e-15);
        assert!(matches!(std_of(3, 2, vec![1.0, 0.2, 1.0, 0.1, 1.0, 0.3]), Err(Error::ZeroVariance(0))));

        let mut r = rng::stream(2, rng::streams::SYNTHETIC);
        let data: Vec<f64> = (0..300).map(|_| r.random_range(-0.05..0.05)).collect();
        let s = std_of(60, 5, data.clone()).unwrap();
        for j in 0..5 {
            let col: Vec<f64> = (0..60).map(|i| data[i * 5 + j]).collect();
            let mean = col.iter().sum::<f64>() / 60.0;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 60.0;
            assert!((s[j] - var.sqrt()).abs() < 1e-12);
        }
    }
}
