use rayon::prelude::*;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter index, flat element index) of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
    pub checked: usize,
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Compares reverse-mode gradients of `f` with central differences of step `h`.
///
/// `f` rebuilds the graph from the supplied parameter leaves. `subset`, when
/// given, lists the flat element indices to probe for each parameter;
/// elements outside the subset are skipped.
pub fn grad_check<F>(f: F, params: &[Tensor], h: f64, subset: Option<&[Vec<usize>]>) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>> + Sync,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get_or_zeros(v)).collect();

    let eval = |pi: usize, ei: usize, delta: f64| -> Result<f64> {
        let mut shifted = params.to_vec();
        shifted[pi].data_mut()[ei] += delta;
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = shifted.into_iter().map(|p| tape.param(p)).collect();
        Ok(f(&tape, &vars)?.item())
    };

    let probes: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| {
            let all: Vec<usize> = match subset {
                Some(s) => s[pi].iter().copied().filter(|&e| e < p.len()).collect(),
                None => (0..p.len()).collect(),
            };
            all.into_iter().map(move |ei| (pi, ei))
        })
        .collect();

    let diffs: Vec<Result<f64>> = probes.par_iter().map(|&(pi, ei)| Ok((eval(pi, ei, h)? - eval(pi, ei, -h)?) / (2.0 * h))).collect();

    let mut numeric: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
    let mut max_rel_error = 0.0;
    let mut worst = None;
    for (&(pi, ei), d) in probes.iter().zip(diffs) {
        let d = d?;
        numeric[pi].data_mut()[ei] = d;
        let err = relative_error(analytic[pi].data()[ei], d);
        if err > max_rel_error || worst.is_none() {
            max_rel_error = err;
            worst = Some((pi, ei));
        }
    }
    Ok(GradCheckReport { max_rel_error, worst, analytic, numeric, checked: probes.len() })
}
