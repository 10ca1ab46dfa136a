//! The three trainable blocks wired into one inverse-covariance estimator.

use nalgebra::DMatrix;

use crate::autodiff::{Tape, Tensor, Var, DEFAULT_LEAKY_SLOPE};
use crate::cleaner::{self, BiLstmParams, CellVars, CleanerVars, LstmCell};
use crate::error::{Error, Result};
use crate::gmv;
use crate::lag::{self, LagParams};
use crate::linalg;
use crate::rng::{self, streams};
use crate::volnet::{self, Dense, VolMlpParams, VolVars};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub lag: LagParams,
    pub cleaner: BiLstmParams,
    pub vol: VolMlpParams,
}

/// Tape handles for every parameter, in canonical order.
#[derive(Clone, Debug)]
pub struct ModelVars<'t> {
    pub alpha: Var<'t>,
    pub beta_raw: Var<'t>,
    pub cleaner: CleanerVars<'t>,
    pub vol: VolVars<'t>,
}

impl<'t> ModelVars<'t> {
    /// Rebuilds the structure from leaves listed in canonical order.
    pub fn from_slice(vars: &[Var<'t>]) -> Result<Self> {
        let expected = 2 + 2 * 3 + 2 + 2 * (volnet::LAYER_SIZES.len() - 1);
        if vars.len() != expected {
            return Err(Error::Shape(format!("expected {expected} parameter tensors, got {}", vars.len())));
        }
        let cell = |k: usize| CellVars { w_x: vars[k], w_h: vars[k + 1], bias: vars[k + 2] };
        let layers = vars[10..].chunks(2).map(|c| (c[0], c[1])).collect();
        Ok(Self {
            alpha: vars[0],
            beta_raw: vars[1],
            cleaner: CleanerVars { forward: cell(2), backward: cell(5), head_a: vars[8], head_b: vars[9] },
            vol: VolVars { layers, slope: DEFAULT_LEAKY_SLOPE },
        })
    }
}

/// Intermediate and final quantities of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward<'t> {
    pub transformed: Var<'t>,
    pub eigenvalues: Var<'t>,
    pub eigenvectors: Var<'t>,
    pub inv_eigenvalues: Var<'t>,
    pub inv_vol: Var<'t>,
    pub weights: Var<'t>,
}

/// Plain-value outputs of [`ModelParams::predict`].
#[derive(Clone, Debug)]
pub struct Prediction {
    pub weights: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub inv_eigenvalues: Vec<f64>,
    pub inv_vol: Vec<f64>,
    pub sigma_tilde: Vec<f64>,
    /// Sample eigenvectors of the transformed window, as columns.
    pub eigenvectors: DMatrix<f64>,
}

impl Prediction {
    /// `Σ_NN⁻¹` assembled from the predicted blocks.
    pub fn precision(&self) -> Result<DMatrix<f64>> {
        let lambda: Vec<f64> = self.inv_eigenvalues.iter().map(|x| 1.0 / x).collect();
        let v_nn = gmv::project_eigvecs(&self.eigenvectors, &lambda)?;
        Ok(gmv::assemble_precision(&self.inv_vol, &v_nn, &self.inv_eigenvalues)?.precision)
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        linalg::spd_inverse(&self.precision()?)
    }
}

/// Runs the pipeline on a lag-major `[Δt_in, n]` window.
pub fn forward<'t>(tape: &'t Tape, p: &ModelVars<'t>, window: Tensor) -> Result<Forward<'t>> {
    let shape = window.shape().to_vec();
    if shape.len() != 2 || shape[1] < 2 {
        return Err(Error::Shape(format!("window must be [Δt_in, n ≥ 2], got {shape:?}")));
    }
    let (dt_in, n) = (shape[0], shape[1]);
    let x = tape.constant(window);
    let transformed = lag::transform(x, p.alpha, p.beta_raw)?;
    let sigma = volnet::marginal_std(transformed)?;
    let corr = gmv::correlation_tape(tape, transformed, sigma)?;
    let (eigenvalues, eigenvectors) = corr.eigh()?;
    let q = n as f64 / dt_in as f64;
    let inv_eigenvalues = cleaner::clean(tape, eigenvalues, q, &p.cleaner)?;
    let inv_vol = volnet::inverse_vol(sigma, &p.vol)?;
    let weights = gmv::gmv_weights_tape(inv_vol, eigenvectors, inv_eigenvalues)?;
    Ok(Forward { transformed, eigenvalues, eigenvectors, inv_eigenvalues, inv_vol, weights })
}

/// Training loss of one sample: lag-major input window and `[Δt_out, n]`
/// out-of-sample returns.
pub fn sample_loss<'t>(tape: &'t Tape, p: &ModelVars<'t>, window: Tensor, r_out: Tensor) -> Result<Var<'t>> {
    let f = forward(tape, p, window)?;
    gmv::loss_tape(f.weights, tape.constant(r_out))
}

impl ModelParams {
    /// Fresh parameters; each block draws from its own stream of `seed`.
    pub fn init(dt_in: usize, omega: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            lag: LagParams::init(dt_in)?,
            cleaner: BiLstmParams::init(omega, &mut rng::stream(seed, streams::INIT_CLEANER))?,
            vol: VolMlpParams::init(&mut rng::stream(seed, streams::INIT_VOL)),
        })
    }

    pub fn dt_in(&self) -> usize {
        self.lag.dt_in()
    }

    pub fn omega(&self) -> usize {
        self.cleaner.omega()
    }

    pub fn param_count(&self) -> usize {
        self.lag.param_count() + self.cleaner.param_count() + self.vol.param_count()
    }

    /// Canonical names, in the order used by `tensors` and checkpoints.
    pub fn names(&self) -> Vec<String> {
        Self::canonical_names()
    }

    /// Tensor names in serialization order.
    pub fn canonical_names() -> Vec<String> {
        let mut names = vec!["lag.alpha".to_string(), "lag.beta_raw".to_string()];
        for dir in ["forward", "backward"] {
            for part in ["w_x", "w_h", "bias"] {
                names.push(format!("cleaner.{dir}.{part}"));
            }
        }
        names.push("cleaner.head.a".into());
        names.push("cleaner.head.b".into());
        for k in 0..volnet::LAYER_SIZES.len() - 1 {
            names.push(format!("vol.layer{k}.w"));
            names.push(format!("vol.layer{k}.b"));
        }
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let c = &self.cleaner;
        let mut out = vec![&self.lag.alpha, &self.lag.beta_raw];
        for cell in [&c.forward, &c.backward] {
            out.extend([&cell.w_x, &cell.w_h, &cell.bias]);
        }
        out.extend([&c.head_a, &c.head_b]);
        for l in &self.vol.layers {
            out.extend([&l.w, &l.b]);
        }
        out
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        self.tensors().into_iter().cloned().collect()
    }

    /// Inverse of `to_tensors`; shapes are checked against a freshly shaped model.
    pub fn from_tensors(dt_in: usize, omega: usize, tensors: Vec<Tensor>) -> Result<Self> {
        let template = Self {
            lag: LagParams::init(dt_in)?,
            cleaner: BiLstmParams {
                forward: LstmCell::zeros(omega),
                backward: LstmCell::zeros(omega),
                head_a: Tensor::zeros(&[2 * omega]),
                head_b: Tensor::scalar(0.0),
            },
            vol: VolMlpParams::zeros(),
        };
        let expected = template.tensors();
        if tensors.len() != expected.len() {
            return Err(Error::Shape(format!("expected {} parameter tensors, got {}", expected.len(), tensors.len())));
        }
        for ((name, e), t) in template.names().iter().zip(&expected).zip(&tensors) {
            if e.shape() != t.shape() {
                return Err(Error::Shape(format!("{name}: expected {:?}, got {:?}", e.shape(), t.shape())));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked");
        let lag = LagParams { alpha: next(), beta_raw: next() };
        let mut cell = || LstmCell { w_x: next(), w_h: next(), bias: next() };
        let forward = cell();
        let backward = cell();
        let head_a = next();
        let head_b = next();
        let layers = (0..volnet::LAYER_SIZES.len() - 1).map(|_| Dense { w: next(), b: next() }).collect();
        Ok(Self {
            lag,
            cleaner: BiLstmParams { forward, backward, head_a, head_b },
            vol: VolMlpParams { layers, slope: DEFAULT_LEAKY_SLOPE },
        })
    }

    pub fn on_tape<'t>(&self, tape: &'t Tape) -> ModelVars<'t> {
        let leaves: Vec<Var<'t>> = self.tensors().into_iter().map(|t| tape.param(t.clone())).collect();
        ModelVars::from_slice(&leaves).expect("canonical layout")
    }

    /// Weights and intermediates for a chronological `[Δt_in, n]` window.
    pub fn predict(&self, window: &DMatrix<f64>) -> Result<Prediction> {
        let tape = Tape::new();
        let vars = self.on_tape(&tape);
        let f = forward(&tape, &vars, lag::lag_major(window))?;
        let sigma = volnet::marginal_std(f.transformed)?;
        let data = |v: Var<'_>| v.value().data().to_vec();
        Ok(Prediction {
            weights: data(f.weights),
            eigenvalues: data(f.eigenvalues),
            inv_eigenvalues: data(f.inv_eigenvalues),
            inv_vol: data(f.inv_vol),
            sigma_tilde: data(sigma),
            eigenvectors: f.eigenvectors.value().to_dmatrix()?,
        })
    }

    pub fn weights(&self, window: &DMatrix<f64>) -> Result<Vec<f64>> {
        Ok(self.predict(window)?.weights)
    }
}

/// Parameter group of a canonical tensor name, e.g. `cleaner.forward`.
pub fn group_of(name: &str) -> &str {
    match name.match_indices('.').nth(1) {
        Some((i, _)) => &name[..i],
        None => name,
    }
}
