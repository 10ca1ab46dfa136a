//! Bidirectional LSTM over the sorted sample spectrum.
//!
//! Each step sees the pair `(λ̂ₖ, q)`. The forward cell scans from the
//! smallest eigenvalue upwards, the backward cell downwards, both from zero
//! state. A shared dense head with a softplus maps the concatenated hidden
//! states to positive inverse eigenvalues which are then rescaled to sum to
//! `n`.
//!
//! Weights are stored input-major, so a gate pre-activation row is
//! `x·W_x + h·W_h + bias` with columns laid out as `[i | f | g | o]`.

use rand_distr::{Distribution, Uniform};
use serde::Serialize;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const INPUT_DIM: usize = 2;
pub const DEFAULT_HIDDEN: usize = 64;
pub const FORGET_BIAS_INIT: f64 = 1.0;

/// `8ω² + 26ω + 1`.
pub const fn param_count(omega: usize) -> usize {
    8 * omega * omega + 26 * omega + 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    /// `[2, 4ω]`
    pub w_x: Tensor,
    /// `[ω, 4ω]`
    pub w_h: Tensor,
    /// `[4ω]`
    pub bias: Tensor,
}

impl LstmCell {
    pub fn init(omega: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (omega as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let mut draw = |len: usize| (0..len).map(|_| dist.sample(rng)).collect::<Vec<_>>();
        let w_x = Tensor::new(&[INPUT_DIM, 4 * omega], draw(INPUT_DIM * 4 * omega)).unwrap();
        let w_h = Tensor::new(&[omega, 4 * omega], draw(omega * 4 * omega)).unwrap();
        let mut bias = vec![0.0; 4 * omega];
        bias[omega..2 * omega].fill(FORGET_BIAS_INIT);
        Self { w_x, w_h, bias: Tensor::vector(bias) }
    }

    pub fn zeros(omega: usize) -> Self {
        Self { w_x: Tensor::zeros(&[INPUT_DIM, 4 * omega]), w_h: Tensor::zeros(&[omega, 4 * omega]), bias: Tensor::zeros(&[4 * omega]) }
    }

    pub fn omega(&self) -> usize {
        self.w_h.shape()[0]
    }

    fn param_count(&self) -> usize {
        self.w_x.len() + self.w_h.len() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmParams {
    pub forward: LstmCell,
    pub backward: LstmCell,
    /// Dense head weights `[2ω]`, forward half first.
    pub head_a: Tensor,
    /// Dense head bias, rank 0.
    pub head_b: Tensor,
}

impl BiLstmParams {
    pub fn init(omega: usize, rng: &mut Rng) -> Result<Self> {
        if omega == 0 {
            return Err(Error::InvalidInput("hidden width must be at least 1".into()));
        }
        let forward = LstmCell::init(omega, rng);
        let backward = LstmCell::init(omega, rng);
        let bound = 1.0 / (omega as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let head_a = Tensor::vector((0..2 * omega).map(|_| dist.sample(rng)).collect());
        Ok(Self { forward, backward, head_a, head_b: Tensor::scalar(0.0) })
    }

    pub fn omega(&self) -> usize {
        self.forward.omega()
    }

    pub fn param_count(&self) -> usize {
        self.forward.param_count() + self.backward.param_count() + self.head_a.len() + 1
    }
}

/// One cell's weights as tape variables.
#[derive(Clone, Copy, Debug)]
pub struct CellVars<'t> {
    pub w_x: Var<'t>,
    pub w_h: Var<'t>,
    pub bias: Var<'t>,
}

#[derive(Clone, Copy, Debug)]
pub struct CleanerVars<'t> {
    pub forward: CellVars<'t>,
    pub backward: CellVars<'t>,
    pub head_a: Var<'t>,
    pub head_b: Var<'t>,
}

/// Splits a `[1, 4ω]` pre-activation row into gates and advances the state.
fn gate_update<'t>(pre: Var<'t>, m: Var<'t>, omega: usize) -> Result<(Var<'t>, Var<'t>)> {
    let i = pre.slice(1, 0, omega)?.sigmoid();
    let f = pre.slice(1, omega, omega)?.sigmoid();
    let g = pre.slice(1, 2 * omega, omega)?.tanh();
    let o = pre.slice(1, 3 * omega, omega)?.sigmoid();
    let m_next = f.mul(m)?.add(i.mul(g)?)?;
    let h_next = o.mul(m_next.tanh())?;
    Ok((h_next, m_next))
}

/// Single LSTM step on an input row `x` `[1, 2]` and states `h`, `m` `[1, ω]`.
pub fn lstm_cell<'t>(x: Var<'t>, h: Var<'t>, m: Var<'t>, cell: &CellVars<'t>) -> Result<(Var<'t>, Var<'t>)> {
    let omega = cell.w_h.shape()[0];
    let pre = x.matmul(cell.w_x)?.add(h.matmul(cell.w_h)?)?.add(cell.bias)?;
    gate_update(pre, m, omega)
}

/// Runs one direction over the rows of `x_proj` (input projection plus bias,
/// `[n, 4ω]`) in the given order; returns hidden states `[n, ω]` in row order.
fn scan<'t>(tape: &'t Tape, x_proj: Var<'t>, w_h: Var<'t>, reverse: bool) -> Result<Var<'t>> {
    let n = x_proj.shape()[0];
    let omega = w_h.shape()[0];
    let mut h = tape.constant(Tensor::zeros(&[1, omega]));
    let mut m = tape.constant(Tensor::zeros(&[1, omega]));
    let mut states = vec![h; n];
    let order: Box<dyn Iterator<Item = usize>> = if reverse { Box::new((0..n).rev()) } else { Box::new(0..n) };
    for (step, k) in order.enumerate() {
        let row = x_proj.slice(0, k, 1)?;
        // zero initial state contributes nothing through W_h
        let pre = if step == 0 { row } else { row.add(h.matmul(w_h)?)? };
        (h, m) = gate_update(pre, m, omega)?;
        states[k] = h;
    }
    tape.concat(&states, 0)
}

/// Ascending order of `values`, ties broken by index.
pub fn sort_permutation(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    order
}

/// Cleaned inverse eigenvalues `[n]`, aligned with the input ordering and
/// summing to `n`.
pub fn clean<'t>(tape: &'t Tape, eigenvalues: Var<'t>, q: f64, p: &CleanerVars<'t>) -> Result<Var<'t>> {
    let shape = eigenvalues.shape();
    if shape.len() != 1 || shape[0] < 2 {
        return Err(Error::InvalidInput(format!("cleaner needs n ≥ 2 eigenvalues, got {shape:?}")));
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::InvalidInput(format!("aspect ratio must be positive, got {q}")));
    }
    let n = shape[0];
    let raw = eigenvalues.value();
    if !raw.is_finite() {
        return Err(Error::NonFinite("cleaner input spectrum".into()));
    }
    let order = sort_permutation(raw.data());
    let mut inverse = vec![0; n];
    for (pos, &src) in order.iter().enumerate() {
        inverse[src] = pos;
    }

    let sorted = eigenvalues.gather(&order)?.reshape(&[n, 1])?;
    let q_col = tape.constant(Tensor::filled(&[n, 1], q));
    let x = tape.concat(&[sorted, q_col], 1)?;

    let fwd_proj = x.matmul(p.forward.w_x)?.add(p.forward.bias)?;
    let bwd_proj = x.matmul(p.backward.w_x)?.add(p.backward.bias)?;
    let h_fwd = scan(tape, fwd_proj, p.forward.w_h, false)?;
    let h_bwd = scan(tape, bwd_proj, p.backward.w_h, true)?;
    let hidden = tape.concat(&[h_fwd, h_bwd], 1)?;

    let two_omega = p.head_a.shape()[0];
    let logits = hidden.matmul(p.head_a.reshape(&[two_omega, 1])?)?.add(p.head_b)?;
    let positive = logits.softplus().reshape(&[n])?;
    let normalized = positive.div(positive.sum())?.scale(n as f64);
    normalized.gather(&inverse)
}

impl BiLstmParams {
    pub fn on_tape<'t>(&self, tape: &'t Tape) -> CleanerVars<'t> {
        let cell =
            |c: &LstmCell| CellVars { w_x: tape.param(c.w_x.clone()), w_h: tape.param(c.w_h.clone()), bias: tape.param(c.bias.clone()) };
        CleanerVars {
            forward: cell(&self.forward),
            backward: cell(&self.backward),
            head_a: tape.param(self.head_a.clone()),
            head_b: tape.param(self.head_b.clone()),
        }
    }

    /// Inference without gradient tracking.
    pub fn apply(&self, eigenvalues: &[f64], q: f64) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let vars = self.on_tape(&tape);
        let ev = tape.constant(Tensor::vector(eigenvalues.to_vec()));
        Ok(clean(&tape, ev, q, &vars)?.value().data().to_vec())
    }
}

/// Per-rank dispersion of a set of spectra.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumStability {
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub log_std: Vec<f64>,
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median, 95% band and standard deviation of log values per rank. Each
/// spectrum is sorted ascending before ranks are compared.
pub fn spectrum_stability_report(spectra: &[Vec<f64>]) -> Result<SpectrumStability> {
    if spectra.len() < 2 {
        return Err(Error::InvalidInput("stability report needs at least 2 spectra".into()));
    }
    let n = spectra[0].len();
    if spectra.iter().any(|s| s.len() != n) {
        return Err(Error::Shape("spectra of different lengths".into()));
    }
    let ranked: Vec<Vec<f64>> = spectra
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.sort_by(f64::total_cmp);
            s
        })
        .collect();
    let mut report = SpectrumStability {
        median: Vec::with_capacity(n),
        lower: Vec::with_capacity(n),
        upper: Vec::with_capacity(n),
        log_std: Vec::with_capacity(n),
    };
    let m = spectra.len() as f64;
    for k in 0..n {
        let mut col: Vec<f64> = ranked.iter().map(|s| s[k]).collect();
        col.sort_by(f64::total_cmp);
        report.median.push(quantile_sorted(&col, 0.5));
        report.lower.push(quantile_sorted(&col, 0.025));
        report.upper.push(quantile_sorted(&col, 0.975));
        let logs: Vec<f64> = col.iter().map(|x| x.ln()).collect();
        let mean = logs.iter().sum::<f64>() / m;
        let var = logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / m;
        report.log_std.push(var.sqrt());
    }
    Ok(report)
}
