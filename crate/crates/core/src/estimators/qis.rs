use crate::error::{Error, Result};

/// Pool-adjacent-violators fit of a non-decreasing sequence.
pub fn isotonic_increasing(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a <= b {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().unwrap();
            *last = ((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb);
        }
    }
    blocks.into_iter().flat_map(|(v, k)| std::iter::repeat(v).take(k)).collect()
}

/// Quadratic-inverse shrinkage of an ascending sample spectrum with
/// concentration `c = n/Δt`. The output is rank-monotone and has the input trace.
///
/// Recipe: Ledoit & Wolf (2022), "Quadratic shrinkage for large covariance
/// matrices", Bernoulli 28(3), restricted to `c < 1`.
pub fn qis(eigenvalues: &[f64], c: f64) -> Result<Vec<f64>> {
    let p = eigenvalues.len();
    if p == 0 {
        return Err(Error::InvalidInput("empty spectrum".into()));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!("concentration must be positive, got {c}")));
    }
    if c >= 1.0 {
        return Err(Error::Unsupported(format!("quadratic-inverse shrinkage needs n < Δt (q = {c})")));
    }
    if eigenvalues.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("spectrum must be ascending".into()));
    }
    if !(eigenvalues[0] > 0.0) {
        return Err(Error::Singular("sample spectrum has a non-positive eigenvalue".into()));
    }
    let pf = p as f64;
    let h = (c * c).min(1.0 / (c * c)).powf(0.35) / pf.powf(0.35);
    let inv: Vec<f64> = eigenvalues.iter().map(|l| 1.0 / l).collect();

    let mut delta = Vec::with_capacity(p);
    for &lj in &inv {
        let mut theta = 0.0;
        let mut htheta = 0.0;
        for &li in &inv {
            let d = li - lj;
            let den = d * d + li * li * h * h;
            theta += li * d / den;
            htheta += li * li * h / den;
        }
        theta /= pf;
        htheta /= pf;
        let a2 = theta * theta + htheta * htheta;
        let denom = (1.0 - c).powi(2) * lj + 2.0 * c * (1.0 - c) * lj * theta + c * c * lj * a2;
        delta.push(1.0 / denom);
    }

    let mut out = isotonic_increasing(&delta);
    let trace: f64 = eigenvalues.iter().sum();
    let scale = trace / out.iter().sum::<f64>();
    for v in &mut out {
        *v *= scale;
    }
    if out.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::NonFinite("shrunk spectrum".into()));
    }
    Ok(out)
}
