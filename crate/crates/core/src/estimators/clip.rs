/// Upper Marchenko–Pastur edge `(1 + √q)²`.
pub fn marchenko_pastur_edge(q: f64) -> f64 {
    (1.0 + q.sqrt()).powi(2)
}

/// Eigenvalues at or below `edge` are replaced by their mean, which keeps
/// the trace.
pub fn clip_eigenvalues(eigenvalues: &[f64], edge: f64) -> Vec<f64> {
    let noise: Vec<f64> = eigenvalues.iter().copied().filter(|&l| l <= edge).collect();
    if noise.is_empty() {
        return eigenvalues.to_vec();
    }
    let mean = noise.iter().sum::<f64>() / noise.len() as f64;
    eigenvalues.iter().map(|&l| if l <= edge { mean } else { l }).collect()
}
